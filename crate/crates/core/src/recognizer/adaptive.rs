use std::f64::consts::TAU;

use rand::Rng;

use super::batch::{step_seed, EpisodeBatch, Physics};
use super::checkpoint::Checkpoint;
use super::layers::{self, Linear, LinearVars, LstmParams, LstmVars, Mlp, MlpVars, VarCursor};
use super::{ModelKind, ParamSet, Recognizer};
use crate::autodiff::{phase_map, softmax_rows, Tape, Tensor, Var};
use crate::channel::{ChannelModel, Measurement, PhaseConfig, TargetImage};
use crate::error::{Error, Result};
use crate::rng;
use crate::scene::SceneConfig;

/// How a phase configuration is presented to the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseEncoding {
    /// `[cos θ; sin θ]`, length `2N_s`.
    #[default]
    CosSin,
    /// Angles wrapped to `(-π, π]`, length `N_s`.
    RawAngle,
}

impl PhaseEncoding {
    fn width(self, n_ris: usize) -> usize {
        match self {
            Self::CosSin => 2 * n_ris,
            Self::RawAngle => n_ris,
        }
    }

    fn code(self) -> f64 {
        match self {
            Self::CosSin => 0.0,
            Self::RawAngle => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecognizerConfig {
    /// `N_t·N_r`.
    pub n_links: usize,
    /// `N_s`.
    pub n_ris: usize,
    /// `N_c`.
    pub n_classes: usize,
    /// `B₁`.
    pub feature_dim: usize,
    /// `B₂`.
    pub state_dim: usize,
    /// Hidden width of the classifier and generator heads.
    pub head_hidden: usize,
    pub encoding: PhaseEncoding,
}

impl RecognizerConfig {
    pub fn for_scene(scene: &SceneConfig, n_classes: usize) -> Self {
        Self {
            n_links: scene.n_links(),
            n_ris: scene.n_ris(),
            n_classes,
            feature_dim: 256,
            state_dim: 256,
            head_hidden: 256,
            encoding: PhaseEncoding::CosSin,
        }
    }

    pub fn with_widths(mut self, feature_dim: usize, state_dim: usize, head_hidden: usize) -> Self {
        self.feature_dim = feature_dim;
        self.state_dim = state_dim;
        self.head_hidden = head_hidden;
        self
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            self.n_links,
            self.n_ris,
            self.n_classes,
            self.feature_dim,
            self.state_dim,
            self.head_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("recognizer dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Parameters of the adaptive network: feature extraction, LSTM fusion,
/// classifier and phase generator heads, and the shared first phase.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerParams {
    pub config: RecognizerConfig,
    /// Fixed gain applied to measurements before feature extraction, so
    /// that path losses of order `10⁻⁴` reach the network at unit scale.
    pub measurement_scale: f64,
    pub feature_meas: Linear,
    pub feature_phase: Linear,
    pub lstm: LstmParams,
    pub classifier: Mlp,
    pub generator: Mlp,
    /// `1 × N_s`.
    pub omega1_angles: Tensor,
}

/// Tape handles for bound [`RecognizerParams`].
#[derive(Debug, Clone, Copy)]
pub struct RecognizerVars {
    pub feature_meas: LinearVars,
    pub feature_phase: LinearVars,
    pub lstm: LstmVars,
    pub classifier: MlpVars,
    pub generator: MlpVars,
    pub omega1_angles: Var,
}

/// `(s_k, c_k)`; the hidden vector is the state `s_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        Self {
            hidden: vec![0.0; n],
            cell: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub omega: PhaseConfig,
    pub measurement: Measurement,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<EpisodeStep>,
    pub probabilities: Vec<f64>,
}

impl EpisodeTrace {
    pub fn omegas(&self) -> Vec<PhaseConfig> {
        self.steps.iter().map(|s| s.omega.clone()).collect()
    }
}

/// Tape handles produced by one batched forward pass.
#[derive(Debug, Clone)]
pub struct EpisodeGraph {
    pub logits: Var,
    /// Phase angles used at each step, `B × N_s`.
    pub angles: Vec<Var>,
    /// Unscaled stacked-real measurements, `B × 2m`.
    pub measurements: Vec<Var>,
    /// LSTM hidden states, `B × B₂`.
    pub states: Vec<Var>,
}

impl RecognizerParams {
    /// Seed-deterministic initialization.
    pub fn init(config: RecognizerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, &[rng::tag::INIT]);
        let c = &config;
        Ok(Self {
            config,
            measurement_scale: 1.0,
            feature_meas: Linear::init(2 * c.n_links, c.feature_dim, &mut r),
            feature_phase: Linear::init(c.encoding.width(c.n_ris), c.feature_dim, &mut r),
            lstm: LstmParams::init(c.feature_dim, c.state_dim, &mut r),
            classifier: Mlp::init(c.state_dim, c.head_hidden, c.n_classes, &mut r),
            generator: Mlp::init(c.state_dim, c.head_hidden, c.n_ris, &mut r),
            omega1_angles: Tensor::from_fn(1, c.n_ris, |_, _| r.random_range(0.0..TAU)),
        })
    }

    pub fn zeros(config: RecognizerConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        Ok(Self {
            config,
            measurement_scale: 1.0,
            feature_meas: Linear::zeros(2 * c.n_links, c.feature_dim),
            feature_phase: Linear::zeros(c.encoding.width(c.n_ris), c.feature_dim),
            lstm: LstmParams::zeros(c.feature_dim, c.state_dim),
            classifier: Mlp::zeros(c.state_dim, c.head_hidden, c.n_classes),
            generator: Mlp::zeros(c.state_dim, c.head_hidden, c.n_ris),
            omega1_angles: Tensor::zeros(1, c.n_ris),
        })
    }

    pub fn view(&self, vars: &[Var]) -> RecognizerVars {
        let mut c = VarCursor::new(vars);
        RecognizerVars {
            feature_meas: c.linear(),
            feature_phase: c.linear(),
            lstm: c.lstm(self.config.state_dim),
            classifier: c.mlp(),
            generator: c.mlp(),
            omega1_angles: c.next(),
        }
    }

    /// Builds the unrolled `K`-step episode for a whole batch.
    pub fn episode_graph(&self, tape: &mut Tape, vars: &[Var], batch: &EpisodeBatch) -> Result<EpisodeGraph> {
        let steps = batch.steps();
        if steps == 0 {
            return Err(Error::Config("an episode needs K ≥ 1 measurements".into()));
        }
        let v = self.view(vars);
        let rows = batch.len();
        let n = self.config.state_dim;
        let ones = tape.constant(Tensor::filled(rows, 1, 1.0))?;
        let mut theta = tape.matmul(ones, v.omega1_angles)?;
        let mut hidden = tape.constant(Tensor::zeros(rows, n))?;
        let mut cell = tape.constant(Tensor::zeros(rows, n))?;
        let mut graph = EpisodeGraph {
            logits: hidden,
            angles: Vec::with_capacity(steps),
            measurements: Vec::with_capacity(steps),
            states: Vec::with_capacity(steps),
        };
        for k in 0..steps {
            graph.angles.push(theta);
            let (re, im) = phase_map(tape, theta)?;
            let unit = tape.concat(&[re, im])?;
            let y = measure(tape, batch, unit, k)?;
            graph.measurements.push(y);
            let rep = match self.config.encoding {
                PhaseEncoding::CosSin => unit,
                PhaseEncoding::RawAngle => wrap_angles(tape, theta)?,
            };
            let b = self.features(tape, &v, y, rep)?;
            (hidden, cell) = layers::lstm_cell(tape, b, hidden, cell, v.lstm)?;
            graph.states.push(hidden);
            if k + 1 < steps {
                theta = layers::mlp(tape, hidden, v.generator)?;
            }
        }
        graph.logits = layers::mlp(tape, hidden, v.classifier)?;
        Ok(graph)
    }

    fn features(&self, tape: &mut Tape, v: &RecognizerVars, y: Var, rep: Var) -> Result<Var> {
        let y = tape.scale(y, self.measurement_scale)?;
        let from_meas = layers::linear(tape, y, v.feature_meas)?;
        let from_phase = layers::linear(tape, rep, v.feature_phase)?;
        let sum = tape.add(from_meas, from_phase)?;
        tape.relu(sum)
    }

    /// `b_k` from one measurement and the phases that produced it.
    pub fn feature_extract(&self, measurement: &Measurement, omega: &PhaseConfig) -> Result<Vec<f64>> {
        check_len("measurement", 2 * self.config.n_links, 2 * measurement.h_hat.len())?;
        check_len("phase configuration", self.config.n_ris, omega.len())?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let v = self.view(&vars);
        let y = tape.constant(Tensor::row_vector(measurement.stacked_real()))?;
        let rep = match self.config.encoding {
            PhaseEncoding::CosSin => omega
                .as_slice()
                .iter()
                .map(|w| w.re)
                .chain(omega.as_slice().iter().map(|w| w.im))
                .collect(),
            PhaseEncoding::RawAngle => omega.angles(),
        };
        let rep = tape.constant(Tensor::row_vector(rep))?;
        let b = self.features(&mut tape, &v, y, rep)?;
        Ok(tape.value(b).data().to_vec())
    }

    pub fn lstm_step(&self, input: &[f64], state: &LstmState) -> Result<LstmState> {
        let n = self.config.state_dim;
        check_len("LSTM input", self.config.feature_dim, input.len())?;
        check_len("LSTM hidden state", n, state.hidden.len())?;
        check_len("LSTM cell state", n, state.cell.len())?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let v = self.view(&vars);
        let x = tape.constant(Tensor::row_vector(input.to_vec()))?;
        let h = tape.constant(Tensor::row_vector(state.hidden.clone()))?;
        let c = tape.constant(Tensor::row_vector(state.cell.clone()))?;
        let (h, c) = layers::lstm_cell(&mut tape, x, h, c, v.lstm)?;
        Ok(LstmState {
            hidden: tape.value(h).data().to_vec(),
            cell: tape.value(c).data().to_vec(),
        })
    }

    /// Class probabilities `p_K` from the final state.
    pub fn classify(&self, state: &[f64]) -> Result<Vec<f64>> {
        let logits = self.head(state, |v| v.classifier)?;
        Ok(softmax_rows(&Tensor::row_vector(logits)).into_data())
    }

    /// Next phase angles (unwrapped) from a state.
    pub fn generate_angles(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.head(state, |v| v.generator)
    }

    pub fn generate_phase(&self, state: &[f64]) -> Result<PhaseConfig> {
        Ok(PhaseConfig::from_angles(&self.generate_angles(state)?))
    }

    fn head(&self, state: &[f64], pick: impl Fn(&RecognizerVars) -> MlpVars) -> Result<Vec<f64>> {
        check_len("state vector", self.config.state_dim, state.len())?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let v = self.view(&vars);
        let s = tape.constant(Tensor::row_vector(state.to_vec()))?;
        let out = layers::mlp(&mut tape, s, pick(&v))?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Runs one `K`-step adaptive episode on a single target, measuring
    /// through the channel model at every step.
    pub fn run_episode(&self, channel: &ChannelModel, sigma: &TargetImage, k: usize, seed: u64) -> Result<EpisodeTrace> {
        if k == 0 {
            return Err(Error::Config("an episode needs K ≥ 1 measurements".into()));
        }
        let mut angles = self.omega1_angles.data().to_vec();
        let mut state = LstmState::zeros(self.config.state_dim);
        let mut steps = Vec::with_capacity(k);
        for step in 0..k {
            let omega = PhaseConfig::from_angles(&angles);
            let measurement = channel.simulate_measurement(sigma, &omega, step_seed(seed, step))?;
            let b = self.feature_extract(&measurement, &omega)?;
            state = self.lstm_step(&b, &state)?;
            if step + 1 < k {
                angles = self.generate_angles(&state.hidden)?;
            }
            steps.push(EpisodeStep {
                omega,
                measurement,
                state: state.hidden.clone(),
            });
        }
        let probabilities = self.classify(&state.hidden)?;
        Ok(EpisodeTrace { steps, probabilities })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint {
            kind: ModelKind::Adaptive.to_string(),
            meta: vec![
                ("n_links".into(), c.n_links as f64),
                ("n_ris".into(), c.n_ris as f64),
                ("n_classes".into(), c.n_classes as f64),
                ("feature_dim".into(), c.feature_dim as f64),
                ("state_dim".into(), c.state_dim as f64),
                ("head_hidden".into(), c.head_hidden as f64),
                ("encoding".into(), c.encoding.code()),
                ("measurement_scale".into(), self.measurement_scale),
            ],
            tensors: self
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Adaptive.to_string() {
            return Err(Error::Checkpoint(format!("expected an adaptive model, found `{}`", ck.kind)));
        }
        let encoding = match ck.meta("encoding")? {
            0.0 => PhaseEncoding::CosSin,
            1.0 => PhaseEncoding::RawAngle,
            other => return Err(Error::Checkpoint(format!("unknown phase encoding {other}"))),
        };
        let config = RecognizerConfig {
            n_links: ck.meta_usize("n_links")?,
            n_ris: ck.meta_usize("n_ris")?,
            n_classes: ck.meta_usize("n_classes")?,
            feature_dim: ck.meta_usize("feature_dim")?,
            state_dim: ck.meta_usize("state_dim")?,
            head_hidden: ck.meta_usize("head_hidden")?,
            encoding,
        };
        let mut params = Self::zeros(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        params.measurement_scale = ck.meta("measurement_scale")?;
        params.load_tensors(ck)?;
        Ok(params)
    }
}

/// Measurement of step `k`: the affine sensing map applied to the unit
/// phases, plus offset and noise constants.
pub(crate) fn measure(tape: &mut Tape, batch: &EpisodeBatch, unit: Var, k: usize) -> Result<Var> {
    let constant = tape.constant(batch.constant_part(k))?;
    match &batch.maps {
        Some(maps) => {
            let linear = tape.row_linear(maps.clone(), unit)?;
            tape.add(linear, constant)
        }
        None => Ok(constant),
    }
}

/// `θ − 2π·round(θ/2π)`, matching the argument of `e^{jθ}`. The shift is
/// piecewise constant, so the gradient passes through unchanged.
fn wrap_angles(tape: &mut Tape, theta: Var) -> Result<Var> {
    let shift = tape.value(theta).map(|t| TAU * (t / TAU).round());
    let shift = tape.constant(shift)?;
    tape.sub(theta, shift)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

impl ParamSet for RecognizerParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        fn push<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, names: &[&str], ts: &[&'a Tensor]) {
            for (n, t) in names.iter().zip(ts) {
                out.push((format!("{prefix}.{n}"), *t));
            }
        }
        let mut out = Vec::new();
        push(&mut out, "feature_meas", &["weight", "bias"], &self.feature_meas.tensors());
        push(&mut out, "feature_phase", &["weight", "bias"], &self.feature_phase.tensors());
        push(&mut out, "lstm", &["input_weight", "state_weight", "bias"], &self.lstm.tensors());
        let mlp = ["hidden.weight", "hidden.bias", "output.weight", "output.bias"];
        push(&mut out, "classifier", &mlp, &self.classifier.tensors());
        push(&mut out, "generator", &mlp, &self.generator.tensors());
        out.push(("omega1_angles".into(), &self.omega1_angles));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.feature_meas.tensors_mut());
        out.extend(self.feature_phase.tensors_mut());
        out.extend(self.lstm.tensors_mut());
        out.extend(self.classifier.tensors_mut());
        out.extend(self.generator.tensors_mut());
        out.push(&mut self.omega1_angles);
        out
    }
}

impl Recognizer for RecognizerParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Adaptive
    }

    fn physics(&self) -> Physics {
        Physics::WithRis
    }

    fn fixed_steps(&self) -> Option<usize> {
        None
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn measurement_scale_mut(&mut self) -> &mut f64 {
        &mut self.measurement_scale
    }

    fn logits(&self, tape: &mut Tape, vars: &[Var], batch: &EpisodeBatch) -> Result<Var> {
        Ok(self.episode_graph(tape, vars, batch)?.logits)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        RecognizerParams::to_checkpoint(self)
    }
}
