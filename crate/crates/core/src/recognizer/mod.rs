//! The adaptive sensing network and its non-adaptive baselines.
//!
//! An adaptive episode starts from the learned phases `ω₁`. Each step
//! measures the channel, embeds the measurement and the phases that
//! produced it, folds the embedding into an LSTM state and, until the
//! last step, maps that state to the next phases. The final state is
//! classified.
//!
//! Training runs many episodes at once through
//! [`RecognizerParams::episode_graph`]; the step-wise methods
//! ([`RecognizerParams::run_episode`] and friends) evaluate one target and
//! go through [`ChannelModel::simulate_measurement`](crate::channel::ChannelModel::simulate_measurement).
//! Both paths draw identical noise for equal seeds.

mod adaptive;
mod baseline;
mod batch;
mod checkpoint;
pub mod layers;

use std::fmt;
use std::str::FromStr;

pub use adaptive::{
    EpisodeGraph, EpisodeStep, EpisodeTrace, LstmState, PhaseEncoding, RecognizerConfig, RecognizerParams,
    RecognizerVars,
};
pub use baseline::{random_phase_set, MeasurementClassifier};
pub use batch::{episode_noise, step_seed, EpisodeBatch, Physics, PreparedTarget};
pub use checkpoint::Checkpoint;

use crate::autodiff::{Tape, Tensor, Var};
use crate::channel::{ChannelModel, TargetImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Adaptive,
    Lisp,
    /// Fixed phases, usually from [`random_phase_set`].
    Random,
    NoRis,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Adaptive, Self::Lisp, Self::Random, Self::NoRis];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adaptive => "adaptive",
            Self::Lisp => "lisp",
            Self::Random => "random",
            Self::NoRis => "no-ris",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}` (expected adaptive, lisp, random or no-ris)")))
    }
}

/// An ordered, named collection of parameter tensors.
pub trait ParamSet {
    fn named_tensors(&self) -> Vec<(String, &Tensor)>;

    /// Same order as [`named_tensors`](Self::named_tensors).
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    /// Which tensors the optimizer may update.
    fn trainable(&self) -> Vec<bool> {
        vec![true; self.named_tensors().len()]
    }

    /// Records every tensor as a leaf. With `train = false` all leaves are
    /// constants.
    fn bind(&self, tape: &mut Tape, train: bool) -> Result<Vec<Var>> {
        self.named_tensors()
            .into_iter()
            .zip(self.trainable())
            .map(|((_, t), trainable)| {
                if train && trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies tensors by name, checking shapes.
    fn load_tensors(&mut self, ck: &Checkpoint) -> Result<()> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        if ck.tensors.len() != names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                ck.tensors.len()
            )));
        }
        for (name, slot) in names.iter().zip(self.tensors_mut()) {
            let t = ck.tensor(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{name}` has non-finite entries")));
            }
            *slot = t.clone();
        }
        Ok(())
    }
}

/// A model the trainer can optimize.
pub trait Recognizer: ParamSet + Clone {
    fn kind(&self) -> ModelKind;
    fn physics(&self) -> Physics;
    /// Number of measurements the model is built for, if fixed.
    fn fixed_steps(&self) -> Option<usize>;
    fn n_classes(&self) -> usize;
    fn measurement_scale_mut(&mut self) -> &mut f64;
    /// `B × N_c` class scores for a batch of episodes.
    fn logits(&self, tape: &mut Tape, vars: &[Var], batch: &EpisodeBatch) -> Result<Var>;
    fn to_checkpoint(&self) -> Checkpoint;
}

/// Either model family, as loaded from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Adaptive(RecognizerParams),
    Baseline(MeasurementClassifier),
}

impl AnyModel {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind == ModelKind::Adaptive.to_string() {
            Ok(Self::Adaptive(RecognizerParams::from_checkpoint(ck)?))
        } else {
            Ok(Self::Baseline(MeasurementClassifier::from_checkpoint(ck)?))
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Adaptive(_) => ModelKind::Adaptive,
            Self::Baseline(m) => m.kind,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Self::Adaptive(p) => p.to_checkpoint(),
            Self::Baseline(m) => Recognizer::to_checkpoint(m),
        }
    }

    /// Class probabilities for one target; `k` is ignored by baselines.
    pub fn predict(&self, channel: &ChannelModel, sigma: &TargetImage, k: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            Self::Adaptive(p) => Ok(p.run_episode(channel, sigma, k, seed)?.probabilities),
            Self::Baseline(m) => m.run_episode(channel, sigma, seed),
        }
    }
}

/// Single-target baseline episode, see [`MeasurementClassifier::run_episode`].
pub fn run_lisp_episode(
    channel: &ChannelModel,
    sigma: &TargetImage,
    model: &MeasurementClassifier,
    seed: u64,
) -> Result<Vec<f64>> {
    model.run_episode(channel, sigma, seed)
}

#[cfg(test)]
mod tests;
