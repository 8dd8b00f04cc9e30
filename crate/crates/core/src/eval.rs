//! Accuracy, phase correlation and parameter sweeps.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use crate::autodiff::{Tape, Tensor};
use crate::channel::{ChannelModel, PhaseConfig};
use crate::error::{Error, Result};
use crate::recognizer::{
    random_phase_set, AnyModel, EpisodeBatch, EpisodeTrace, ModelKind, ParamSet, PreparedTarget, Recognizer,
    RecognizerParams,
};
use crate::rng;
use crate::scene::SceneConfig;
use crate::trainer::{
    argmax, noise_seeds, predict_set, train, train_fixed_phase, train_lisp, train_no_ris, Dataset, EpochMetrics,
    MnistSet, PreparedSet, Split, TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Fraction of correct top-1 predictions.
    pub eta: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Free-form description of the evaluated configuration.
    pub config: Vec<(String, String)>,
    pub wall_seconds: f64,
}

/// Top-1 accuracy and confusion matrix. Ties go to the lowest class index.
pub fn prediction_rate(probs: &[Vec<f64>], labels: &[usize]) -> Result<EvalReport> {
    if probs.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: probs.len(),
            found: labels.len(),
        });
    }
    let n_classes = probs[0].len();
    if let Some(p) = probs.iter().find(|p| p.len() != n_classes) {
        return Err(Error::DimensionMismatch {
            what: "probability row",
            expected: n_classes,
            found: p.len(),
        });
    }
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    for (p, &c) in probs.iter().zip(labels) {
        if c >= n_classes {
            return Err(Error::Usage(format!("label {c} outside 0..{n_classes}")));
        }
        confusion[c][argmax(p)] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        eta: correct as f64 / labels.len() as f64,
        confusion,
        config: Vec::new(),
        wall_seconds: 0.0,
    })
}

/// Runs one noisy episode per test target; noise streams are keyed by
/// `seed` and the target index, apart from any training stream.
pub fn evaluate<M: Recognizer>(
    model: &M,
    channel: &ChannelModel,
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let set = PreparedSet::new(channel, test, model)?;
    let steps = model.fixed_steps().unwrap_or(k);
    let seeds = noise_seeds(seed, rng::tag::EVAL_NOISE, set.len());
    let probs = predict_set(model, channel, &set, Some(&seeds), steps)?;
    let rows: Vec<Vec<f64>> = (0..set.len()).map(|i| probs.row(i).to_vec()).collect();
    let mut report = prediction_rate(&rows, &set.labels)?;
    report.config = vec![
        ("method".into(), model.kind().to_string()),
        ("k".into(), steps.to_string()),
        ("samples".into(), set.len().to_string()),
        ("seed".into(), seed.to_string()),
    ];
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn evaluate_any(model: &AnyModel, channel: &ChannelModel, test: &Dataset, k: usize, seed: u64) -> Result<EvalReport> {
    match model {
        AnyModel::Adaptive(p) => evaluate(p, channel, test, k, seed),
        AnyModel::Baseline(m) => evaluate(m, channel, test, k, seed),
    }
}

/// Symmetric `K × K` matrix of normalized phase inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub k: usize,
    /// Row-major.
    pub entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn has_unit_diagonal(&self, tol: f64) -> bool {
        (0..self.k).all(|i| (self.get(i, i) - 1.0).abs() <= tol)
    }

    /// Mean of the off-diagonal entries among steps `first..K` (0-based).
    pub fn mean_off_diagonal_from(&self, first: usize) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for i in first..self.k {
            for j in first..self.k {
                if i != j {
                    sum += self.get(i, j);
                    n += 1;
                }
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    /// Whitespace-separated rows, one per line.
    pub fn write_plain<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.k {
            let row: Vec<String> = (0..self.k).map(|j| self.get(i, j).to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Long format: `k1,k2,correlation` with 1-based step indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k1,k2,correlation")?;
        for i in 0..self.k {
            for j in 0..self.k {
                writeln!(out, "{},{},{}", i + 1, j + 1, self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Entry `(k₁, k₂)` is `|ω_{k₁}ᴴ ω_{k₂}| / (‖ω_{k₁}‖‖ω_{k₂}‖)`.
pub fn phase_correlation(omegas: &[PhaseConfig]) -> Result<CorrelationMatrix> {
    let first = omegas.first().ok_or(Error::Empty("phase list"))?;
    let n = first.len();
    if let Some(w) = omegas.iter().find(|w| w.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "phase configuration",
            expected: n,
            found: w.len(),
        });
    }
    let norms: Vec<f64> = omegas
        .iter()
        .map(|w| w.as_slice().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let k = omegas.len();
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let inner: num_complex::Complex64 = omegas[i]
                .as_slice()
                .iter()
                .zip(omegas[j].as_slice())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let v = if i == j { 1.0 } else { inner.norm() / (norms[i] * norms[j]) };
            entries[i * k + j] = v;
            entries[j * k + i] = v;
        }
    }
    Ok(CorrelationMatrix { k, entries })
}

/// Elementwise mean of per-episode correlation matrices.
pub fn averaged_correlation(traces: &[EpisodeTrace]) -> Result<CorrelationMatrix> {
    let lists: Vec<Vec<PhaseConfig>> = traces.iter().map(EpisodeTrace::omegas).collect();
    averaged_phase_correlation(&lists)
}

pub fn averaged_phase_correlation(phase_lists: &[Vec<PhaseConfig>]) -> Result<CorrelationMatrix> {
    let first = phase_lists.first().ok_or(Error::Empty("trace list"))?;
    let mut acc = phase_correlation(first)?;
    for list in &phase_lists[1..] {
        if list.len() != acc.k {
            return Err(Error::DimensionMismatch {
                what: "episode length",
                expected: acc.k,
                found: list.len(),
            });
        }
        for (a, b) in acc.entries.iter_mut().zip(phase_correlation(list)?.entries) {
            *a += b;
        }
    }
    let n = phase_lists.len() as f64;
    for a in &mut acc.entries {
        *a /= n;
    }
    Ok(acc)
}

/// Phase sequences the adaptive network emits for each test target,
/// computed in batches.
pub fn adaptive_phase_lists(
    params: &RecognizerParams,
    channel: &ChannelModel,
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<PhaseConfig>>> {
    let set = PreparedSet::new(channel, test, params)?;
    let seeds = noise_seeds(seed, rng::tag::EVAL_NOISE, set.len());
    let mut out = Vec::with_capacity(set.len());
    for start in (0..set.len()).step_by(128) {
        let end = (start + 128).min(set.len());
        let targets: Vec<&PreparedTarget> = set.targets[start..end].iter().collect();
        let batch = EpisodeBatch::assemble(channel, &targets, Some(&seeds[start..end]), k)?;
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false)?;
        let graph = params.episode_graph(&mut tape, &vars, &batch)?;
        let angles: Vec<&Tensor> = graph.angles.iter().map(|&v| tape.value(v)).collect();
        for i in 0..end - start {
            out.push(angles.iter().map(|a| PhaseConfig::from_angles(a.row(i))).collect());
        }
    }
    Ok(out)
}

/// Step-to-step phase correlation of a trained model: averaged over the
/// test episodes for the adaptive network, from the fixed phases otherwise.
pub fn model_correlation(
    model: &AnyModel,
    channel: &ChannelModel,
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<CorrelationMatrix> {
    match model {
        AnyModel::Adaptive(p) => averaged_phase_correlation(&adaptive_phase_lists(p, channel, test, k, seed)?),
        AnyModel::Baseline(m) => phase_correlation(&m.phase_configs()),
    }
}

/// Trains the requested method and returns it with its epoch history.
pub fn fit_method(
    kind: ModelKind,
    dataset: &Dataset,
    channel: &ChannelModel,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<(AnyModel, Vec<EpochMetrics>)> {
    Ok(match kind {
        ModelKind::Adaptive => {
            let o = train(dataset, channel, config, on_epoch)?;
            (AnyModel::Adaptive(o.model), o.history)
        }
        ModelKind::Lisp => {
            let o = train_lisp(dataset, channel, config, on_epoch)?;
            (AnyModel::Baseline(o.model), o.history)
        }
        ModelKind::Random => {
            let phases = random_phase_set(config.k, channel.scene().n_ris(), config.seed);
            let o = train_fixed_phase(dataset, channel, config, &phases, on_epoch)?;
            (AnyModel::Baseline(o.model), o.history)
        }
        ModelKind::NoRis => {
            let o = train_no_ris(dataset, channel, config, on_epoch)?;
            (AnyModel::Baseline(o.model), o.history)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: ModelKind,
    pub k: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Surface-to-target distance in wavelengths.
    pub distance: f64,
    pub pt_dbm: f64,
    pub rho: f64,
    pub seed: u64,
}

impl SweepPoint {
    fn key(&self) -> String {
        format!(
            "{},{},{}x{},{},{},{},{}",
            self.method, self.k, self.ris_rows, self.ris_cols, self.distance, self.pt_dbm, self.rho, self.seed
        )
    }

    pub fn scene(&self, base: &SceneConfig) -> SceneConfig {
        let mut s = base.clone().with_ris_size(self.ris_rows, self.ris_cols).with_roi_distance(self.distance);
        s.tx_power_dbm = self.pt_dbm;
        s
    }
}

/// Value ranges whose Cartesian product forms a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub methods: Vec<ModelKind>,
    pub ks: Vec<usize>,
    pub ris_sizes: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    pub pt_dbms: Vec<f64>,
    pub rhos: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let empty = [
            self.methods.is_empty(),
            self.ks.is_empty(),
            self.ris_sizes.is_empty(),
            self.distances.is_empty(),
            self.pt_dbms.is_empty(),
            self.rhos.is_empty(),
            self.seeds.is_empty(),
        ];
        if empty.contains(&true) {
            return Err(Error::Config("every sweep range needs at least one value".into()));
        }
        let mut out = Vec::new();
        for &method in &self.methods {
            for &k in &self.ks {
                for &(ris_rows, ris_cols) in &self.ris_sizes {
                    for &distance in &self.distances {
                        for &pt_dbm in &self.pt_dbms {
                            for &rho in &self.rhos {
                                for &seed in &self.seeds {
                                    out.push(SweepPoint {
                                        method,
                                        k,
                                        ris_rows,
                                        ris_cols,
                                        distance,
                                        pt_dbm,
                                        rho,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// MNIST source for a sweep: which digits, and how many train / test
/// images to take from the start of each file.
#[derive(Debug, Clone)]
pub struct SweepData<'a> {
    pub train: &'a MnistSet,
    pub test: &'a MnistSet,
    pub classes: Vec<u8>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

pub const SWEEP_HEADER: &str = "method,k,ris_size,distance,pt_dbm,rho,seed,eta";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub eta: f64,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!("{},{}", self.point.key(), self.eta)
    }
}

/// Trains and evaluates every point, appending one CSV row per point.
/// With `resume`, points already present in `csv` are skipped.
pub fn sweep(
    points: &[SweepPoint],
    base: &SceneConfig,
    data: &SweepData<'_>,
    train_config: &TrainConfig,
    csv: &Path,
    resume: bool,
    on_row: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let done: HashSet<String> = if resume && csv.exists() {
        BufReader::new(std::fs::File::open(csv)?)
            .lines()
            .skip(1)
            .map(|l| Ok(l?.rsplit_once(',').map(|(k, _)| k.to_string()).unwrap_or_default()))
            .collect::<Result<_>>()?
    } else {
        HashSet::new()
    };
    let fresh = !csv.exists() || !resume;
    let mut file = if fresh {
        std::fs::File::create(csv)?
    } else {
        OpenOptions::new().append(true).open(csv)?
    };
    if fresh {
        writeln!(file, "{SWEEP_HEADER}")?;
    }
    let mut rows = Vec::new();
    for p in points {
        if done.contains(&p.key()) {
            continue;
        }
        let scene = p.scene(base);
        let channel = ChannelModel::new(&scene)?;
        let pool = Dataset::from_mnist(data.train, &scene, &data.classes, data.train_limit, Split::Train)?;
        let test = Dataset::from_mnist(data.test, &scene, &data.classes, data.test_limit, Split::Test)?;
        let config = TrainConfig {
            k: p.k,
            rho: p.rho,
            seed: p.seed,
            ..train_config.clone()
        };
        let (model, _) = fit_method(p.method, &pool, &channel, &config, &mut |_| {})?;
        let report = evaluate_any(&model, &channel, &test, p.k, p.seed)?;
        let row = SweepRow {
            point: p.clone(),
            eta: report.eta,
        };
        writeln!(file, "{}", row.csv_row())?;
        file.flush()?;
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Small-scale recognition setup: 10×10 surface, 30×30 region at 40λ,
/// digits 0, 1 and 2.
pub fn desk_scene() -> SceneConfig {
    SceneConfig::default().with_ris_size(10, 10).with_roi_distance(40.0)
}

pub const DESK_CLASSES: [u8; 3] = [0, 1, 2];
pub const DESK_TRAIN: usize = 1500;
pub const DESK_TEST: usize = 300;

pub fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        epochs: 30,
        k: 4,
        seed,
        ..TrainConfig::default()
    }
}
