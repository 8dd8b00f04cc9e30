//! Physics inputs for a mini-batch of episodes: each target's affine
//! sensing map in stacked real form, plus the measurement noise every
//! step will see.

use std::sync::Arc;

use crate::autodiff::{RowMaps, Tensor};
use crate::channel::{stack_real, ChannelModel, TargetImage};
use crate::error::{Error, Result};
use crate::rng;

/// Whether the surface takes part in the sensing path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    WithRis,
    WithoutRis,
}

/// A target's sensing map `θ ↦ A·e^{jθ} + c` in real form.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    /// Row-major `2m × 2N_s` acting on `[cos θ; sin θ]`; absent without
    /// the surface.
    pub operator: Option<Arc<[f64]>>,
    /// `[Re c; Im c]`, length `2m` with `m = N_t·N_r`.
    pub offset: Vec<f64>,
}

impl PreparedTarget {
    pub fn new(channel: &ChannelModel, sigma: &TargetImage, physics: Physics) -> Result<Self> {
        match physics {
            Physics::WithRis => {
                let (a, offset) = channel.sensing_operator(sigma)?.stacked_real();
                Ok(Self {
                    operator: Some(a.into()),
                    offset,
                })
            }
            Physics::WithoutRis => {
                let op = channel.sensing_operator_without_ris(sigma)?;
                Ok(Self {
                    operator: None,
                    offset: stack_real(&op.offset),
                })
            }
        }
    }
}

/// Seed of the measurement noise at step `k` of the episode keyed by
/// `episode_seed`. Shared by the batched graph and the step-by-step
/// episode runner so both see identical noise.
pub fn step_seed(episode_seed: u64, k: usize) -> u64 {
    rng::derive_seed(episode_seed, &[k as u64])
}

/// Stacked-real estimation noise for each of `steps` measurements.
pub fn episode_noise(channel: &ChannelModel, episode_seed: u64, steps: usize) -> Result<Vec<Vec<f64>>> {
    (0..steps)
        .map(|k| {
            let mut r = rng::stream(step_seed(episode_seed, k), &[]);
            Ok(stack_real(&channel.estimation_noise(&mut r)?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    /// Per-row sensing maps; `None` when no target has a surface path.
    pub maps: Option<RowMaps>,
    /// `B × 2m`.
    pub offsets: Tensor,
    /// One `B × 2m` tensor per step.
    pub noise: Vec<Tensor>,
}

impl EpisodeBatch {
    /// Stacks targets row-wise. With `seeds = None` the batch is noise-free.
    pub fn assemble(
        channel: &ChannelModel,
        targets: &[&PreparedTarget],
        seeds: Option<&[u64]>,
        steps: usize,
    ) -> Result<Self> {
        let first = targets.first().ok_or(Error::Empty("episode batch"))?;
        let width = first.offset.len();
        let in_dim = 2 * channel.scene().n_ris();
        if let Some(s) = seeds {
            if s.len() != targets.len() {
                return Err(Error::DimensionMismatch {
                    what: "noise seeds",
                    expected: targets.len(),
                    found: s.len(),
                });
            }
        }
        let with_ris = first.operator.is_some();
        if targets.iter().any(|t| t.operator.is_some() != with_ris || t.offset.len() != width) {
            return Err(Error::Usage("mixed target preparations in one batch".into()));
        }
        let maps = with_ris.then(|| RowMaps {
            out_dim: width,
            in_dim,
            maps: targets.iter().map(|t| t.operator.clone().unwrap()).collect(),
        });
        let rows = targets.len();
        let offsets = Tensor::new(rows, width, targets.iter().flat_map(|t| t.offset.iter().copied()).collect())?;
        let mut noise = vec![Tensor::zeros(rows, width); steps];
        if let Some(seeds) = seeds {
            for (i, &seed) in seeds.iter().enumerate() {
                for (k, n) in episode_noise(channel, seed, steps)?.into_iter().enumerate() {
                    noise[k].data_mut()[i * width..(i + 1) * width].copy_from_slice(&n);
                }
            }
        }
        Ok(Self { maps, offsets, noise })
    }

    pub fn len(&self) -> usize {
        self.offsets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> usize {
        self.noise.len()
    }

    /// Offset plus step-`k` noise, the constant part of that measurement.
    pub(crate) fn constant_part(&self, k: usize) -> Tensor {
        let mut t = self.offsets.clone();
        t.add_assign(&self.noise[k]);
        t
    }
}
