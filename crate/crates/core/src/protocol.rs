//! Downlink spectral efficiency, the frame-averaged efficiency when the
//! last `N_t` symbols of each frame are spent on sensing, and a phase
//! optimizer for the communication symbols.

use std::io::Write;

use num_complex::Complex64 as C64;

use crate::channel::{ChannelModel, PhaseConfig, TargetImage};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// `log₂(1 + snr)`.
pub fn se_from_snr(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Downlink efficiency with full channel knowledge,
/// `log₂(1 + P_t‖h_com(ω)‖²/σ²)`, in bits/s/Hz.
pub fn spectral_efficiency(channel: &ChannelModel, sigma: &TargetImage, omega: &PhaseConfig) -> Result<f64> {
    let h = channel.comm_channel(sigma, omega)?;
    let gain: f64 = h.iter().map(|c| c.norm_sqr()).sum();
    let scene = channel.scene();
    let noise = scene.ue_noise_watts();
    if noise <= 0.0 {
        return Err(Error::Usage("spectral efficiency needs positive UE noise power".into()));
    }
    Ok(se_from_snr(scene.tx_power_watts() * gain / noise))
}

/// Frame structure: `N₀ = 140·2^μ` OFDM symbols, of which the last
/// `sensing_symbols` carry sensing pilots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub mu: u32,
    pub sensing_symbols: usize,
    /// Frames (one sensing measurement each) per recognition decision.
    pub frames_per_decision: usize,
}

impl ProtocolConfig {
    pub fn new(mu: u32, sensing_symbols: usize, frames_per_decision: usize) -> Result<Self> {
        let p = Self {
            mu,
            sensing_symbols,
            frames_per_decision,
        };
        if mu > 16 {
            return Err(Error::Config(format!("numerology μ = {mu} is out of range")));
        }
        if sensing_symbols > p.n_symbols() {
            return Err(Error::Config(format!(
                "{sensing_symbols} sensing symbols exceed the {} symbols of a frame",
                p.n_symbols()
            )));
        }
        Ok(p)
    }

    /// `N₀`.
    pub fn n_symbols(&self) -> usize {
        140 << self.mu
    }

    /// Share of each frame spent on sensing, `N_t/N₀`.
    pub fn sensing_share(&self) -> f64 {
        self.sensing_symbols as f64 / self.n_symbols() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeReport {
    pub se_com: f64,
    pub se_sen: f64,
    pub se_avg: f64,
    /// `(se_com − se_avg)/se_com`, zero when `se_com` is zero.
    pub se_loss_fraction: f64,
}

pub fn average_se(se_com: f64, se_sen: f64, protocol: &ProtocolConfig) -> Result<SeReport> {
    if !(se_com >= 0.0 && se_sen >= 0.0) {
        return Err(Error::Usage(format!(
            "spectral efficiencies must be non-negative, got {se_com} and {se_sen}"
        )));
    }
    let share = protocol.sensing_share();
    let se_avg = (1.0 - share) * se_com + share * se_sen;
    let se_loss_fraction = if se_com > 0.0 { (se_com - se_avg) / se_com } else { 0.0 };
    Ok(SeReport {
        se_com,
        se_sen,
        se_avg,
        se_loss_fraction,
    })
}

/// `h_com(ω) = H_b·ω + h_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommObjective {
    /// `N_t × N_s`.
    pub h_b: CMatrix,
    /// Length `N_t`.
    pub h_a: Vec<C64>,
}

/// Splits the downlink channel of a fixed target into its
/// phase-dependent and phase-free parts.
pub fn build_comm_objective(channel: &ChannelModel, sigma: &TargetImage) -> Result<CommObjective> {
    channel.check(sigma, &PhaseConfig::ones(channel.scene().n_ris()))?;
    let s: Vec<C64> = sigma.as_slice().iter().map(|&v| C64::new(v, 0.0)).collect();
    let scattered: Vec<C64> = s.iter().zip(&channel.ue_roi).map(|(a, b)| a * b).collect();
    // UE → target → TX
    let via_target = channel.roi_tx.mul_vec(&scattered)?;
    let h_a = channel.ue_tx.iter().zip(&via_target).map(|(a, b)| a + b).collect();
    // UE → (target →) surface
    let into_ris = channel.roi_ris.mul_vec(&scattered)?;
    let h_c: Vec<C64> = channel.ue_ris.iter().zip(&into_ris).map(|(a, b)| a + b).collect();
    // surface → target → TX
    let bounce = channel.roi_tx.scale_cols(&s)?.matmul(&channel.ris_roi)?;
    let direct = channel.ris_tx.scale_cols(&h_c)?;
    let h_b = &direct + &bounce.scale_cols(&channel.ue_ris)?;
    Ok(CommObjective { h_b, h_a })
}

impl CommObjective {
    pub fn channel(&self, omega: &[C64]) -> Result<Vec<C64>> {
        Ok(self
            .h_b
            .mul_vec(omega)?
            .into_iter()
            .zip(&self.h_a)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// `‖H_b·ω + h_a‖²`.
    pub fn value(&self, omega: &[C64]) -> Result<f64> {
        Ok(self.channel(omega)?.iter().map(|c| c.norm_sqr()).sum())
    }

    fn column(&self, n: usize) -> Vec<C64> {
        (0..self.h_b.rows()).map(|r| self.h_b[(r, n)]).collect()
    }

    /// Element-wise ascent from all-ones. Each update sets one element to
    /// the unit phasor aligned with its column's projection on the
    /// residual of the others, which is optimal for that element.
    pub fn maximize(&self, tol: f64, max_iters: usize) -> Result<BcdOutcome> {
        if !(tol > 0.0) {
            return Err(Error::Usage(format!("tolerance must be positive, got {tol}")));
        }
        let n_s = self.h_b.cols();
        let columns: Vec<Vec<C64>> = (0..n_s).map(|n| self.column(n)).collect();
        let mut omega = vec![C64::new(1.0, 0.0); n_s];
        let mut value = self.value(&omega)?;
        let mut trace = vec![value];
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < max_iters {
            sweeps += 1;
            let previous = omega.clone();
            let mut residual = self.channel(&omega)?;
            for (n, b) in columns.iter().enumerate() {
                for (r, bi) in residual.iter_mut().zip(b) {
                    *r -= bi * omega[n];
                }
                let c: C64 = b.iter().zip(&residual).map(|(bi, ri)| bi.conj() * ri).sum();
                if c.norm() > 0.0 {
                    omega[n] = c / c.norm();
                }
                for (r, bi) in residual.iter_mut().zip(b) {
                    *r += bi * omega[n];
                }
            }
            let next = self.value(&omega)?;
            if next < value {
                // only rounding can lower the value; keep the better iterate
                omega = previous;
                converged = true;
                break;
            }
            trace.push(next);
            let gain = next - value;
            value = next;
            if gain <= tol * value.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        Ok(BcdOutcome {
            omega: PhaseConfig::relaxed(omega),
            objective: value,
            trace,
            sweeps,
            converged,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOutcome {
    pub omega: PhaseConfig,
    pub objective: f64,
    /// Objective at the start and after every sweep.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    /// False when `max_iters` sweeps ran without meeting the tolerance.
    pub converged: bool,
}

/// Phases maximizing the downlink gain for a known target.
pub fn optimize_comm_phase(
    channel: &ChannelModel,
    sigma: &TargetImage,
    tol: f64,
    max_iters: usize,
) -> Result<BcdOutcome> {
    build_comm_objective(channel, sigma)?.maximize(tol, max_iters)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeRow {
    pub ris_size: String,
    pub report: SeReport,
}

/// One table row: efficiency under the optimized phases, mean efficiency
/// under the sensing phases, and their frame average.
pub fn se_table_row(
    channel: &ChannelModel,
    sigma: &TargetImage,
    omega_sen: &[PhaseConfig],
    protocol: &ProtocolConfig,
) -> Result<SeRow> {
    if omega_sen.is_empty() {
        return Err(Error::Empty("sensing phase list"));
    }
    let omega_com = optimize_comm_phase(channel, sigma, 1e-10, 1000)?.omega;
    let se_com = spectral_efficiency(channel, sigma, &omega_com)?;
    let se_sen = omega_sen
        .iter()
        .map(|w| spectral_efficiency(channel, sigma, w))
        .sum::<Result<f64>>()?
        / omega_sen.len() as f64;
    let scene = channel.scene();
    Ok(SeRow {
        ris_size: format!("{}x{}", scene.ris_rows, scene.ris_cols),
        report: average_se(se_com, se_sen, protocol)?,
    })
}

pub const SE_HEADER: &str = "ris_size,se_com,se_sen,se_avg,se_loss_percent";

pub fn write_se_csv<W: Write>(mut out: W, rows: &[SeRow]) -> Result<()> {
    writeln!(out, "{SE_HEADER}")?;
    for r in rows {
        let p = &r.report;
        writeln!(
            out,
            "{},{},{},{},{}",
            r.ris_size,
            p.se_com,
            p.se_sen,
            p.se_avg,
            100.0 * p.se_loss_fraction
        )?;
    }
    Ok(())
}
