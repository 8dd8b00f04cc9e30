use rand::seq::SliceRandom;

use super::mnist::{to_target_image, MnistSet};
use crate::channel::TargetImage;
use crate::error::{Error, Result};
use crate::rng;
use crate::scene::SceneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: TargetImage,
    /// 0-based class index.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, n_classes: usize, split: Split) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= n_classes) {
            return Err(Error::Usage(format!("label {} outside 0..{n_classes}", s.label)));
        }
        Ok(Self {
            samples,
            n_classes,
            split,
        })
    }

    /// Keeps images whose digit is in `classes`, in file order, relabeled
    /// by position in `classes`, up to `limit` samples.
    pub fn from_mnist(
        set: &MnistSet,
        scene: &SceneConfig,
        classes: &[u8],
        limit: Option<usize>,
        split: Split,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("no classes selected".into()));
        }
        let limit = limit.unwrap_or(usize::MAX);
        let mut samples = Vec::new();
        for (raw, &digit) in set.images.iter().zip(&set.labels) {
            if samples.len() == limit {
                break;
            }
            if let Some(label) = classes.iter().position(|&c| c == digit) {
                samples.push(Sample {
                    image: to_target_image(raw, scene)?,
                    label,
                });
            }
        }
        Self::new(samples, classes.len(), split)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// The leading `ρ` fraction of the pool (at least one sample).
    pub fn take_fraction(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {rho}")));
        }
        let n = ((self.len() as f64 * rho).round() as usize).clamp(1, self.len().max(1));
        Ok(Self {
            samples: self.samples[..n.min(self.len())].to_vec(),
            ..self.clone()
        })
    }

    /// Splits off `fraction` of the samples as a validation set: the
    /// prefix of a seed-determined permutation. Both parts keep file order.
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("validation fraction must lie in [0, 1), got {fraction}")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));
        let n_val = (self.len() as f64 * fraction).floor() as usize;
        let mut val = order[..n_val].to_vec();
        let mut train = order[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        let pick = |idx: &[usize], split| Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            n_classes: self.n_classes,
            split,
        };
        Ok((pick(&train, Split::Train), pick(&val, Split::Validation)))
    }
}
