//! Communication and sensing channels of the surface-aided link.
//!
//! Every pairwise link uses the same free-space Green's function
//!
//! ```text
//! g(d) = exp(-j·2π·d/λ) / (√(4π)·d)
//! ```
//!
//! and the multi-hop channels are products of these matrices with
//! `diag(ω)` (surface phases) and `diag(σ)` (voxel scattering
//! coefficients) in between. Paths with more than two bounces are not
//! modeled.
//!
//! Matrix naming follows the path it carries: `tx_ris` is the propagation
//! matrix *from* the transmitter *into* the surface, so it has one row per
//! surface element and one column per transmit antenna.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::rng;
use crate::scene::{distance, ArrayKind, PointSet, SceneConfig};

/// Complex link gains between two point sets: rows index destinations,
/// columns index sources.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix(pub CMatrix);

impl PropagationMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// Green's function for one pair at distance `d`.
pub fn green(d: f64, wavelength: f64) -> C64 {
    C64::from_polar(1.0 / ((4.0 * PI).sqrt() * d), -2.0 * PI * d / wavelength)
}

pub fn propagation_matrix(dst: &PointSet, src: &PointSet, wavelength: f64) -> Result<PropagationMatrix> {
    let mut m = CMatrix::zeros(dst.len(), src.len());
    for (i, p) in dst.iter().enumerate() {
        for (j, q) in src.iter().enumerate() {
            let d = distance(p, q);
            if d == 0.0 {
                return Err(Error::Singularity { dst: i, src: j });
            }
            m[(i, j)] = green(d, wavelength);
        }
    }
    Ok(PropagationMatrix(m))
}

/// Voxel scattering coefficients of the target, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetImage {
    sigma: Vec<f64>,
}

impl TargetImage {
    /// Checks length and the `[0, 4πS²/λ²]` range against `scene`.
    pub fn new(sigma: Vec<f64>, scene: &SceneConfig) -> Result<Self> {
        if sigma.len() != scene.n_voxels() {
            return Err(Error::DimensionMismatch {
                what: "target image",
                expected: scene.n_voxels(),
                found: sigma.len(),
            });
        }
        let bound = scene.max_scattering() * (1.0 + 1e-12);
        if let Some(v) = sigma.iter().find(|v| !(**v >= 0.0 && **v <= bound)) {
            return Err(Error::Usage(format!(
                "scattering coefficient {v} outside [0, {}]",
                scene.max_scattering()
            )));
        }
        Ok(Self { sigma })
    }

    /// Skips the range check. Linear combinations of images (negative or
    /// above the physical bound) are still valid inputs to the channel maps.
    pub fn from_vec_unchecked(sigma: Vec<f64>) -> Self {
        Self { sigma }
    }

    pub fn zeros(n: usize) -> Self {
        Self { sigma: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    fn as_complex(&self) -> Vec<C64> {
        self.sigma.iter().map(|&s| C64::new(s, 0.0)).collect()
    }
}

/// Surface phase configuration `ω`, one unit-modulus entry per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    omega: Vec<C64>,
}

impl PhaseConfig {
    pub fn new(omega: Vec<C64>) -> Result<Self> {
        if let Some(v) = omega.iter().find(|v| (v.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::Usage(format!("phase entry {v} is not unit-modulus")));
        }
        Ok(Self { omega })
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self {
            omega: angles.iter().map(|&a| C64::new(a.cos(), a.sin())).collect(),
        }
    }

    pub fn ones(n: usize) -> Self {
        Self::from_angles(&vec![0.0; n])
    }

    /// Bypasses the unit-modulus check, e.g. an all-zero vector that
    /// switches the surface off when probing affinity in `ω`.
    pub fn relaxed(omega: Vec<C64>) -> Self {
        Self { omega }
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.omega.iter().map(|v| v.arg()).collect()
    }

    /// Largest deviation of any entry's modulus from one.
    pub fn max_modulus_error(&self) -> f64 {
        self.omega
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Estimated sensing channel for one surface configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// `vec(Ĥ_sen)`, column-major, length `N_t·N_r`.
    pub h_hat: Vec<C64>,
    pub omega_used: PhaseConfig,
}

impl Measurement {
    /// Real parts followed by imaginary parts.
    pub fn stacked_real(&self) -> Vec<f64> {
        stack_real(&self.h_hat)
    }
}

pub fn stack_real(v: &[C64]) -> Vec<f64> {
    v.iter().map(|c| c.re).chain(v.iter().map(|c| c.im)).collect()
}

/// Transmit pilot matrix used for least-squares estimation. Columns are
/// the per-symbol transmit vectors, each of unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PilotScheme {
    /// One antenna active per symbol.
    #[default]
    Identity,
    /// Unitary DFT matrix.
    Dft,
}

impl PilotScheme {
    pub fn matrix(self, n_tx: usize) -> CMatrix {
        match self {
            Self::Identity => CMatrix::identity(n_tx),
            Self::Dft => {
                let s = 1.0 / (n_tx as f64).sqrt();
                CMatrix::from_fn(n_tx, n_tx, |m, n| {
                    C64::from_polar(s, -2.0 * PI * (m * n) as f64 / n_tx as f64)
                })
            }
        }
    }
}

/// Least-squares channel estimate `(1/√P)·R·X⁻¹`.
pub fn ls_estimate(received: &CMatrix, pilots: &CMatrix, tx_power_linear: f64) -> Result<CMatrix> {
    if !(tx_power_linear > 0.0) {
        return Err(Error::Usage(format!(
            "transmit power must be positive, got {tx_power_linear}"
        )));
    }
    let inv = pilots.inverse()?;
    Ok(received.matmul(&inv)?.scale(C64::new(1.0 / tx_power_linear.sqrt(), 0.0)))
}

/// All pairwise propagation matrices of a scene, computed once.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    scene: SceneConfig,
    pub pilots: PilotScheme,
    /// TX ← UE line of sight, length `N_t`.
    pub ue_tx: Vec<C64>,
    /// TX ← RIS, `N_t × N_s`.
    pub ris_tx: CMatrix,
    /// RIS ← UE, length `N_s`.
    pub ue_ris: Vec<C64>,
    /// TX ← ROI, `N_t × N_i`.
    pub roi_tx: CMatrix,
    /// ROI ← UE, length `N_i`.
    pub ue_roi: Vec<C64>,
    /// ROI ← RIS, `N_i × N_s`.
    pub ris_roi: CMatrix,
    /// RIS ← ROI, `N_s × N_i`.
    pub roi_ris: CMatrix,
    /// RIS ← TX, `N_s × N_t`.
    pub tx_ris: CMatrix,
    /// RX ← RIS, `N_r × N_s`.
    pub ris_rx: CMatrix,
    /// ROI ← TX, `N_i × N_t`.
    pub tx_roi: CMatrix,
    /// RX ← ROI, `N_r × N_i`.
    pub roi_rx: CMatrix,
}

impl ChannelModel {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        scene.validate()?;
        let lambda = scene.wavelength;
        let tx = scene.element_positions(ArrayKind::Tx);
        let rx = scene.element_positions(ArrayKind::Rx);
        let ris = scene.element_positions(ArrayKind::Ris);
        let roi = scene.element_positions(ArrayKind::Roi);
        let ue = scene.element_positions(ArrayKind::Ue);
        let g = |dst: &PointSet, src: &PointSet| propagation_matrix(dst, src, lambda).map(|m| m.0);
        let column = |m: CMatrix| m.vec();
        Ok(Self {
            scene: scene.clone(),
            pilots: PilotScheme::default(),
            ue_tx: column(g(&tx, &ue)?),
            ris_tx: g(&tx, &ris)?,
            ue_ris: column(g(&ris, &ue)?),
            roi_tx: g(&tx, &roi)?,
            ue_roi: column(g(&roi, &ue)?),
            ris_roi: g(&roi, &ris)?,
            roi_ris: g(&ris, &roi)?,
            tx_ris: g(&ris, &tx)?,
            ris_rx: g(&rx, &ris)?,
            tx_roi: g(&roi, &tx)?,
            roi_rx: g(&rx, &roi)?,
        })
    }

    pub fn with_pilots(mut self, pilots: PilotScheme) -> Self {
        self.pilots = pilots;
        self
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub(crate) fn check(&self, sigma: &TargetImage, omega: &PhaseConfig) -> Result<()> {
        if sigma.len() != self.scene.n_voxels() {
            return Err(Error::DimensionMismatch {
                what: "target image",
                expected: self.scene.n_voxels(),
                found: sigma.len(),
            });
        }
        if omega.len() != self.scene.n_ris() {
            return Err(Error::DimensionMismatch {
                what: "phase configuration",
                expected: self.scene.n_ris(),
                found: omega.len(),
            });
        }
        Ok(())
    }

    /// Downlink channel `h_com` seen by the user, length `N_t`:
    /// line of sight, one bounce off the surface, one bounce off the
    /// target, and both two-bounce orders.
    pub fn comm_channel(&self, sigma: &TargetImage, omega: &PhaseConfig) -> Result<Vec<C64>> {
        self.check(sigma, omega)?;
        let w = omega.as_slice();
        let s = sigma.as_complex();
        let ris_tx_w = self.ris_tx.scale_cols(w)?;
        let roi_tx_s = self.roi_tx.scale_cols(&s)?;

        let via_ris = ris_tx_w.mul_vec(&self.ue_ris)?;
        let via_roi = roi_tx_s.mul_vec(&self.ue_roi)?;
        let w_ue = mul_elem(w, &self.ue_ris);
        let via_ris_roi = roi_tx_s.mul_vec(&self.ris_roi.mul_vec(&w_ue)?)?;
        let s_ue = mul_elem(&s, &self.ue_roi);
        let via_roi_ris = ris_tx_w.mul_vec(&self.roi_ris.mul_vec(&s_ue)?)?;

        Ok((0..self.scene.n_tx)
            .map(|t| self.ue_tx[t] + via_ris[t] + via_roi[t] + via_ris_roi[t] + via_roi_ris[t])
            .collect())
    }

    /// Sensing channel `H_sen`, `N_r × N_t`. The direct TX → RX path is
    /// assumed removed.
    pub fn sensing_channel(&self, sigma: &TargetImage, omega: &PhaseConfig) -> Result<CMatrix> {
        self.check(sigma, omega)?;
        let w = omega.as_slice();
        let s = sigma.as_complex();
        let ris_rx_w = self.ris_rx.scale_cols(w)?;
        let roi_rx_s = self.roi_rx.scale_cols(&s)?;

        let tx_ris_rx = ris_rx_w.matmul(&self.tx_ris)?;
        let tx_roi_rx = roi_rx_s.matmul(&self.tx_roi)?;
        let tx_ris_roi_rx = roi_rx_s.matmul(&self.ris_roi.scale_cols(w)?.matmul(&self.tx_ris)?)?;
        let tx_roi_ris_rx = ris_rx_w.matmul(&self.roi_ris.scale_cols(&s)?.matmul(&self.tx_roi)?)?;

        Ok(&(&(&tx_ris_rx + &tx_roi_rx) + &tx_ris_roi_rx) + &tx_roi_ris_rx)
    }

    /// The physical forward model: `vec(H_sen)` (column-major).
    pub fn f_phy(&self, sigma: &TargetImage, omega: &PhaseConfig) -> Result<Vec<C64>> {
        Ok(self.sensing_channel(sigma, omega)?.vec())
    }

    /// Decomposes `f_phy(σ, ·)` as the affine map `ω ↦ A·ω + c`.
    pub fn sensing_operator(&self, sigma: &TargetImage) -> Result<SensingOperator> {
        self.check(sigma, &PhaseConfig::ones(self.scene.n_ris()))?;
        let s = sigma.as_complex();
        let (n_t, n_r, n_s) = (self.scene.n_tx, self.scene.n_rx, self.scene.n_ris());
        // RX ← ROI ← RIS with the target in between, N_r × N_s
        let bounce_in = self.roi_rx.scale_cols(&s)?.matmul(&self.ris_roi)?;
        // RIS ← ROI ← TX, N_s × N_t
        let bounce_out = self.roi_ris.scale_cols(&s)?.matmul(&self.tx_roi)?;
        let a = CMatrix::from_fn(n_t * n_r, n_s, |row, e| {
            let (t, r) = (row / n_r, row % n_r);
            (self.ris_rx[(r, e)] + bounce_in[(r, e)]) * self.tx_ris[(e, t)]
                + self.ris_rx[(r, e)] * bounce_out[(e, t)]
        });
        let offset = self.roi_rx.scale_cols(&s)?.matmul(&self.tx_roi)?.vec();
        Ok(SensingOperator { a, offset })
    }

    /// Sensing map with the surface removed from the scene: only the
    /// TX → ROI → RX path remains, independent of any phase.
    pub fn sensing_operator_without_ris(&self, sigma: &TargetImage) -> Result<SensingOperator> {
        let op = self.sensing_operator(sigma)?;
        Ok(SensingOperator {
            a: CMatrix::zeros(op.a.rows(), op.a.cols()),
            offset: op.offset,
        })
    }

    /// Receiver signal for the pilot block: `√P·H_sen·X + N`.
    pub fn received_pilots<R: Rng + ?Sized>(
        &self,
        sigma: &TargetImage,
        omega: &PhaseConfig,
        rng: &mut R,
    ) -> Result<CMatrix> {
        let h = self.sensing_channel(sigma, omega)?;
        let x = self.pilots.matrix(self.scene.n_tx);
        let clean = h.matmul(&x)?.scale(C64::new(self.scene.tx_power_watts().sqrt(), 0.0));
        Ok(&clean + &self.receiver_noise(rng))
    }

    fn receiver_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let (n_r, n_t) = (self.scene.n_rx, self.scene.n_tx);
        let power = self.scene.rx_noise_watts();
        if power == 0.0 {
            return CMatrix::zeros(n_r, n_t);
        }
        let std = (power / 2.0).sqrt();
        CMatrix::from_fn(n_r, n_t, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(std * re, std * im)
        })
    }

    /// Error term of the LS estimate, `LS(N)`, vectorized. Adding it to
    /// `f_phy` gives the same estimate as running LS on the noisy received
    /// pilots, since the estimator is linear.
    pub fn estimation_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<C64>> {
        let n = self.receiver_noise(rng);
        if self.scene.rx_noise_watts() == 0.0 {
            return Ok(n.vec());
        }
        let x = self.pilots.matrix(self.scene.n_tx);
        Ok(ls_estimate(&n, &x, self.scene.tx_power_watts())?.vec())
    }

    /// Noisy LS estimate of the sensing channel. Deterministic in `seed`.
    pub fn simulate_measurement(
        &self,
        sigma: &TargetImage,
        omega: &PhaseConfig,
        seed: u64,
    ) -> Result<Measurement> {
        let clean = self.f_phy(sigma, omega)?;
        let noise = self.estimation_noise(&mut rng::stream(seed, &[]))?;
        Ok(Measurement {
            h_hat: clean.iter().zip(&noise).map(|(a, b)| a + b).collect(),
            omega_used: omega.clone(),
        })
    }
}

fn mul_elem(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `f_phy(σ, ω) = A·ω + c` for one fixed target.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    /// `N_t·N_r × N_s`.
    pub a: CMatrix,
    /// Phase-independent part (the TX → ROI → RX path).
    pub offset: Vec<C64>,
}

impl SensingOperator {
    pub fn apply(&self, omega: &PhaseConfig) -> Result<Vec<C64>> {
        Ok(self
            .a
            .mul_vec(omega.as_slice())?
            .into_iter()
            .zip(&self.offset)
            .map(|(a, c)| a + c)
            .collect())
    }

    /// Real form acting on `[cos θ; sin θ]`: returns the row-major
    /// `2m × 2n` matrix `[[Re A, -Im A], [Im A, Re A]]` and `[Re c; Im c]`,
    /// so that the product is `[Re f; Im f]`.
    pub fn stacked_real(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.a.rows(), self.a.cols());
        let mut mat = vec![0.0; 4 * m * n];
        for r in 0..m {
            for c in 0..n {
                let v = self.a[(r, c)];
                mat[r * 2 * n + c] = v.re;
                mat[r * 2 * n + n + c] = -v.im;
                mat[(m + r) * 2 * n + c] = v.im;
                mat[(m + r) * 2 * n + n + c] = v.re;
            }
        }
        (mat, stack_real(&self.offset))
    }
}
