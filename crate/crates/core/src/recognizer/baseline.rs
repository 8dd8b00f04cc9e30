use std::f64::consts::TAU;

use rand::Rng;

use super::batch::{episode_noise, EpisodeBatch, Physics};
use super::checkpoint::Checkpoint;
use super::layers::{self, Mlp, VarCursor};
use super::{adaptive::measure, ModelKind, ParamSet, Recognizer};
use crate::autodiff::{phase_map, softmax_rows, Tape, Tensor, Var};
use crate::channel::{stack_real, ChannelModel, PhaseConfig, TargetImage};
use crate::error::{Error, Result};
use crate::rng;

/// `K` angle vectors, i.i.d. uniform on `[0, 2π)`.
pub fn random_phase_set(k: usize, n_ris: usize, seed: u64) -> Vec<PhaseConfig> {
    let mut r = rng::stream(seed, &[rng::tag::RANDOM_PHASES]);
    (0..k)
        .map(|_| {
            let angles: Vec<f64> = (0..n_ris).map(|_| r.random_range(0.0..TAU)).collect();
            PhaseConfig::from_angles(&angles)
        })
        .collect()
}

/// Non-adaptive recognizer: `K` measurements under phases shared by all
/// targets, concatenated and classified by one hidden layer.
///
/// The same shape serves three baselines. [`ModelKind::Lisp`] learns the
/// phases jointly with the classifier, [`ModelKind::Random`] keeps a given
/// phase list fixed, and [`ModelKind::NoRis`] takes a single measurement
/// of the scene with the surface removed.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementClassifier {
    pub kind: ModelKind,
    pub n_links: usize,
    pub n_ris: usize,
    pub n_classes: usize,
    pub measurement_scale: f64,
    /// `K × N_s` phase angles, one row per measurement.
    pub phases: Tensor,
    pub head: Mlp,
}

impl MeasurementClassifier {
    /// Trainable phases, initialized uniformly on `[0, 2π)`.
    pub fn lisp(k: usize, n_links: usize, n_ris: usize, n_classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[rng::tag::INIT]);
        let phases = Tensor::from_fn(k, n_ris, |_, _| r.random_range(0.0..TAU));
        Self::build(ModelKind::Lisp, phases, n_links, n_classes, hidden, &mut r)
    }

    /// Frozen phases taken from `phases`.
    pub fn fixed(phases: &[PhaseConfig], n_links: usize, n_classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let n_ris = phases.first().map_or(0, |p| p.len());
        if phases.iter().any(|p| p.len() != n_ris) {
            return Err(Error::Config("phase list entries differ in length".into()));
        }
        let data = phases.iter().flat_map(|p| p.angles()).collect();
        let phases = Tensor::new(phases.len(), n_ris, data)?;
        let mut r = rng::stream(seed, &[rng::tag::INIT]);
        Self::build(ModelKind::Random, phases, n_links, n_classes, hidden, &mut r)
    }

    /// One measurement without the surface.
    pub fn no_ris(n_links: usize, n_ris: usize, n_classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[rng::tag::INIT]);
        Self::build(ModelKind::NoRis, Tensor::zeros(1, n_ris), n_links, n_classes, hidden, &mut r)
    }

    fn build<R: Rng + ?Sized>(
        kind: ModelKind,
        phases: Tensor,
        n_links: usize,
        n_classes: usize,
        hidden: usize,
        r: &mut R,
    ) -> Result<Self> {
        let k = phases.rows();
        if k == 0 {
            return Err(Error::Config(format!("{kind} baseline needs K ≥ 1 measurements")));
        }
        if phases.cols() == 0 || n_links == 0 || n_classes == 0 || hidden == 0 {
            return Err(Error::Config(format!("{kind} baseline dimensions must be positive")));
        }
        Ok(Self {
            kind,
            n_links,
            n_ris: phases.cols(),
            n_classes,
            measurement_scale: 1.0,
            head: Mlp::init(2 * k * n_links, hidden, n_classes, r),
            phases,
        })
    }

    pub fn steps(&self) -> usize {
        self.phases.rows()
    }

    pub fn phase_configs(&self) -> Vec<PhaseConfig> {
        (0..self.steps())
            .map(|k| PhaseConfig::from_angles(self.phases.row(k)))
            .collect()
    }

    fn classify_stacked(&self, tape: &mut Tape, vars: &[Var], measurements: &[Var]) -> Result<Var> {
        let mut c = VarCursor::new(vars);
        let _phases = c.next();
        let head = c.mlp();
        let joined = tape.concat(measurements)?;
        let joined = tape.scale(joined, self.measurement_scale)?;
        layers::mlp(tape, joined, head)
    }

    /// Class probabilities for one target. Deterministic in `seed`, and
    /// the phases do not depend on the target.
    pub fn run_episode(&self, channel: &ChannelModel, sigma: &TargetImage, seed: u64) -> Result<Vec<f64>> {
        let noise = episode_noise(channel, seed, self.steps())?;
        let clean: Vec<Vec<f64>> = match self.kind {
            ModelKind::NoRis => vec![stack_real(&channel.sensing_operator_without_ris(sigma)?.offset)],
            _ => self
                .phase_configs()
                .iter()
                .map(|w| Ok(stack_real(&channel.f_phy(sigma, w)?)))
                .collect::<Result<_>>()?,
        };
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let ys = clean
            .into_iter()
            .zip(noise)
            .map(|(c, n)| {
                let y: Vec<f64> = c.iter().zip(&n).map(|(a, b)| a + b).collect();
                tape.constant(Tensor::row_vector(y))
            })
            .collect::<Result<Vec<_>>>()?;
        let logits = self.classify_stacked(&mut tape, &vars, &ys)?;
        Ok(softmax_rows(tape.value(logits)).into_data())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind: ModelKind = ck.kind.parse().map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
        if kind == ModelKind::Adaptive {
            return Err(Error::Checkpoint("expected a baseline model, found `adaptive`".into()));
        }
        let phases = ck.tensor("phases")?.clone();
        let hidden = ck.meta_usize("head_hidden")?;
        let n_links = ck.meta_usize("n_links")?;
        let n_classes = ck.meta_usize("n_classes")?;
        let mut model = Self {
            kind,
            n_links,
            n_ris: phases.cols(),
            n_classes,
            measurement_scale: ck.meta("measurement_scale")?,
            head: Mlp::zeros(2 * phases.rows() * n_links, hidden, n_classes),
            phases,
        };
        model.load_tensors(ck)?;
        Ok(model)
    }
}

impl ParamSet for MeasurementClassifier {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("phases".to_string(), &self.phases)];
        let names = ["hidden.weight", "hidden.bias", "output.weight", "output.bias"];
        for (n, t) in names.iter().zip(self.head.tensors()) {
            out.push((format!("head.{n}"), t));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.phases];
        out.extend(self.head.tensors_mut());
        out
    }

    fn trainable(&self) -> Vec<bool> {
        vec![self.kind == ModelKind::Lisp, true, true, true, true]
    }
}

impl Recognizer for MeasurementClassifier {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn physics(&self) -> Physics {
        match self.kind {
            ModelKind::NoRis => Physics::WithoutRis,
            _ => Physics::WithRis,
        }
    }

    fn fixed_steps(&self) -> Option<usize> {
        Some(self.steps())
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn measurement_scale_mut(&mut self) -> &mut f64 {
        &mut self.measurement_scale
    }

    fn logits(&self, tape: &mut Tape, vars: &[Var], batch: &EpisodeBatch) -> Result<Var> {
        if batch.steps() != self.steps() {
            return Err(Error::Config(format!(
                "{} baseline expects {} measurements, batch has {}",
                self.kind,
                self.steps(),
                batch.steps()
            )));
        }
        let phases = vars[0];
        let ones = tape.constant(Tensor::filled(batch.len(), 1, 1.0))?;
        let mut ys = Vec::with_capacity(self.steps());
        for k in 0..self.steps() {
            let unit = if batch.maps.is_some() {
                let pick = tape.constant(Tensor::from_fn(1, self.steps(), |_, j| f64::from(j == k)))?;
                let row = tape.matmul(pick, phases)?;
                let theta = tape.matmul(ones, row)?;
                let (re, im) = phase_map(tape, theta)?;
                tape.concat(&[re, im])?
            } else {
                ones
            };
            ys.push(measure(tape, batch, unit, k)?);
        }
        self.classify_stacked(tape, vars, &ys)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: self.kind.to_string(),
            meta: vec![
                ("n_links".into(), self.n_links as f64),
                ("n_classes".into(), self.n_classes as f64),
                ("head_hidden".into(), self.head.hidden.bias.cols() as f64),
                ("measurement_scale".into(), self.measurement_scale),
            ],
            tensors: self
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }
}
