//! Data loading, the classification objective and the training loops.

mod adam;
mod dataset;
pub mod mnist;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

pub use adam::Adam;
pub use dataset::{Dataset, Sample, Split};
pub use mnist::{load_mnist, to_target_image, MnistFiles, MnistSet};

use crate::autodiff::{softmax_rows, Tape, Tensor};
use crate::channel::{ChannelModel, PhaseConfig};
use crate::error::{Error, Result};
use crate::recognizer::{
    EpisodeBatch, MeasurementClassifier, PhaseEncoding, PreparedTarget, Recognizer, RecognizerConfig,
    RecognizerParams,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the initial rate to zero over all epochs.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    /// Measurements per episode.
    pub k: usize,
    /// Fraction of the supplied pool that is used.
    pub rho: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Draw receiver noise for every training and validation episode.
    pub noise: bool,
    pub feature_dim: usize,
    pub state_dim: usize,
    pub head_hidden: usize,
    pub encoding: PhaseEncoding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 200,
            learning_rate: 1e-3,
            schedule: LrSchedule::Constant,
            k: 7,
            rho: 1.0,
            validation_fraction: 0.1,
            seed: 0,
            noise: true,
            feature_dim: 256,
            state_dim: 256,
            head_hidden: 256,
            encoding: PhaseEncoding::CosSin,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        // zero is allowed so a run can be checked to leave parameters intact
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Mean negative log-likelihood and how many true-class probabilities had
/// to be clamped away from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    pub clamped: usize,
}

pub const PROBABILITY_FLOOR: f64 = 1e-30;

/// Batch mean of `−ln p[label]`, from probabilities. Training itself
/// differentiates the fused logit form on the tape.
pub fn cross_entropy_loss(probs: &Tensor, labels: &[usize]) -> Result<CrossEntropy> {
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: probs.rows(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for (r, &c) in labels.iter().enumerate() {
        if c >= probs.cols() {
            return Err(Error::Usage(format!("label {c} outside 0..{}", probs.cols())));
        }
        let p = probs.get(r, c);
        if p < PROBABILITY_FLOOR {
            clamped += 1;
        }
        total -= p.max(PROBABILITY_FLOOR).ln();
    }
    Ok(CrossEntropy {
        value: total / labels.len() as f64,
        clamped,
    })
}

/// Mean cross-entropy computed stably from logits.
pub fn cross_entropy_from_logits(logits: &Tensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &c) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - row[c];
    }
    total / labels.len() as f64
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A dataset with every target's sensing map precomputed.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub targets: Vec<PreparedTarget>,
    pub labels: Vec<usize>,
}

impl PreparedSet {
    pub fn new<M: Recognizer>(channel: &ChannelModel, dataset: &Dataset, model: &M) -> Result<Self> {
        Ok(Self {
            targets: dataset
                .samples
                .iter()
                .map(|s| PreparedTarget::new(channel, &s.image, model.physics()))
                .collect::<Result<_>>()?,
            labels: dataset.labels(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `1 / rms` of the noise-free measurements under all-zero angles.
    pub fn measurement_scale(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for t in &self.targets {
            let n = t.offset.len();
            for (o, c) in t.offset.iter().enumerate() {
                let y = c + t.operator.as_ref().map_or(0.0, |a| {
                    let cols = a.len() / n;
                    a[o * cols..o * cols + cols / 2].iter().sum::<f64>()
                });
                sum += y * y;
                count += 1;
            }
        }
        let rms = (sum / count.max(1) as f64).sqrt();
        if rms > 0.0 && rms.is_finite() {
            1.0 / rms
        } else {
            1.0
        }
    }
}

/// Logits for every target of `set` without recording gradients, in
/// chunks of `chunk` episodes. `seeds = None` runs noise-free.
pub fn batched_logits<M: Recognizer>(
    model: &M,
    channel: &ChannelModel,
    set: &PreparedSet,
    seeds: Option<&[u64]>,
    steps: usize,
    chunk: usize,
) -> Result<Tensor> {
    let mut out = Vec::with_capacity(set.len() * model.n_classes());
    let chunk = chunk.max(1);
    for start in (0..set.len()).step_by(chunk) {
        let end = (start + chunk).min(set.len());
        let targets: Vec<&PreparedTarget> = set.targets[start..end].iter().collect();
        let batch = EpisodeBatch::assemble(channel, &targets, seeds.map(|s| &s[start..end]), steps)?;
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, false)?;
        let logits = model.logits(&mut tape, &vars, &batch)?;
        out.extend_from_slice(tape.value(logits).data());
    }
    Tensor::new(set.len(), model.n_classes(), out)
}

/// Noise seeds for evaluating `n` episodes under stream `tag`.
pub fn noise_seeds(seed: u64, tag: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| rng::derive_seed(seed, &[tag, i as u64])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_eta: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,val_eta,wall_seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.train_loss, self.val_loss, self.val_eta, self.wall_seconds
        )
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[EpochMetrics]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{METRICS_HEADER}")?;
    for m in history {
        writeln!(f, "{}", m.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: M,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
    /// Per-batch training losses, in order.
    pub batch_losses: Vec<Vec<f64>>,
}

/// Optimizes `model` on `train`, selecting the epoch with the highest
/// validation accuracy (lower validation loss breaks ties). Without a
/// validation set the last epoch is kept.
pub fn train_model<M: Recognizer>(
    mut model: M,
    channel: &ChannelModel,
    train: &PreparedSet,
    val: &PreparedSet,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let steps = match model.fixed_steps() {
        Some(s) if s != config.k => {
            return Err(Error::Config(format!(
                "{} model takes {s} measurements but K = {}",
                model.kind(),
                config.k
            )))
        }
        _ => config.k,
    };
    let trainable = model.trainable();
    let val_seeds = config.noise.then(|| noise_seeds(config.seed, rng::tag::VAL_NOISE, val.len()));
    let mut adam = Adam::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch_losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, f64, usize, M)> = None;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, &[rng::tag::SHUFFLE, epoch as u64]));
        let lr = config.learning_rate_at(epoch);
        let mut losses = Vec::with_capacity(order.len().div_ceil(config.batch_size));
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let diverged = |msg: String| Error::Diverged { epoch, batch: b, msg };
            let targets: Vec<&PreparedTarget> = idx.iter().map(|&i| &train.targets[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let seeds: Option<Vec<u64>> = config.noise.then(|| {
                idx.iter()
                    .map(|&i| rng::derive_seed(config.seed, &[rng::tag::TRAIN_NOISE, epoch as u64, i as u64]))
                    .collect()
            });
            let batch = EpisodeBatch::assemble(channel, &targets, seeds.as_deref(), steps)?;
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true)?;
            let step = (|| {
                let logits = model.logits(&mut tape, &vars, &batch)?;
                let loss = tape.softmax_cross_entropy(logits, &labels)?;
                let value = tape.value(loss).item();
                Ok((value, tape.backward(loss)?))
            })();
            let (value, grads) = match step {
                Ok(v) => v,
                Err(e @ Error::NonFinite { .. }) => return Err(diverged(e.to_string())),
                Err(e) => return Err(e),
            };
            if !value.is_finite() {
                return Err(diverged(format!("loss is {value}")));
            }
            let grads: Vec<Option<Tensor>> = vars
                .iter()
                .zip(&trainable)
                .map(|(&v, &t)| t.then(|| grads.wrt(v)))
                .collect();
            adam.step(&mut model.tensors_mut(), &grads, lr)?;
            losses.push(value);
        }
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let (val_loss, val_eta) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let logits = batched_logits(&model, channel, val, val_seeds.as_deref(), steps, config.batch_size)?;
            let correct = (0..val.len())
                .filter(|&i| argmax(logits.row(i)) == val.labels[i])
                .count();
            (
                cross_entropy_from_logits(&logits, &val.labels),
                correct as f64 / val.len() as f64,
            )
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_eta,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        let better = match &best {
            None => true,
            Some(_) if val.is_empty() => true,
            Some((eta, loss, _, _)) => val_eta > *eta || (val_eta == *eta && val_loss < *loss),
        };
        if better {
            best = Some((val_eta, val_loss, epoch, model.clone()));
        }
        history.push(metrics);
        batch_losses.push(losses);
    }
    let (best_epoch, model) = match best {
        Some((_, _, e, m)) => (e, m),
        None => (0, model),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
        batch_losses,
    })
}

/// Splits the `ρ` pool, calibrates the measurement gain on the training
/// part and runs [`train_model`].
fn fit<M: Recognizer>(
    mut model: M,
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    let pool = dataset.take_fraction(config.rho)?;
    let (train, val) = pool.split_validation(config.validation_fraction, config.seed)?;
    let train = PreparedSet::new(channel, &train, &model)?;
    let val = PreparedSet::new(channel, &val, &model)?;
    *model.measurement_scale_mut() = train.measurement_scale();
    train_model(model, channel, &train, &val, config, on_epoch)
}

/// Trains the adaptive network.
pub fn train(
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<RecognizerParams>> {
    let mut rc = RecognizerConfig::for_scene(channel.scene(), dataset.n_classes).with_widths(
        config.feature_dim,
        config.state_dim,
        config.head_hidden,
    );
    rc.encoding = config.encoding;
    let params = RecognizerParams::init(rc, config.seed)?;
    fit(params, dataset, channel, config, on_epoch)
}

/// Trains shared phases jointly with the classifier.
pub fn train_lisp(
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<MeasurementClassifier>> {
    let scene = channel.scene();
    let model = MeasurementClassifier::lisp(
        config.k,
        scene.n_links(),
        scene.n_ris(),
        dataset.n_classes,
        config.head_hidden,
        config.seed,
    )?;
    fit(model, dataset, channel, config, on_epoch)
}

/// Trains a classifier behind a fixed phase list, which sets `K`.
pub fn train_fixed_phase(
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    phases: &[PhaseConfig],
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<MeasurementClassifier>> {
    if phases.is_empty() {
        return Err(Error::Config("fixed-phase classifier needs K ≥ 1 measurements".into()));
    }
    let model = MeasurementClassifier::fixed(
        phases,
        channel.scene().n_links(),
        dataset.n_classes,
        config.head_hidden,
        config.seed,
    )?;
    let config = TrainConfig {
        k: phases.len(),
        ..config.clone()
    };
    fit(model, dataset, channel, &config, on_epoch)
}

/// Trains the classifier on a single measurement taken without the surface.
pub fn train_no_ris(
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<MeasurementClassifier>> {
    let scene = channel.scene();
    let model = MeasurementClassifier::no_ris(
        scene.n_links(),
        scene.n_ris(),
        dataset.n_classes,
        config.head_hidden,
        config.seed,
    )?;
    let config = TrainConfig {
        k: 1,
        ..config.clone()
    };
    fit(model, dataset, channel, &config, on_epoch)
}

/// Class probabilities for a whole set, one episode per target.
pub fn predict_set<M: Recognizer>(
    model: &M,
    channel: &ChannelModel,
    set: &PreparedSet,
    seeds: Option<&[u64]>,
    steps: usize,
) -> Result<Tensor> {
    Ok(softmax_rows(&batched_logits(model, channel, set, seeds, steps, 128)?))
}
