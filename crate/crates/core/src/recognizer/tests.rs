use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::{Measurement, PhaseConfig};
use crate::scene::SceneConfig;

fn tiny_scene() -> SceneConfig {
    SceneConfig {
        ris_rows: 2,
        ris_cols: 2,
        roi_side_voxels: 3,
        ..SceneConfig::default()
    }
}

fn tiny_config(scene: &SceneConfig) -> RecognizerConfig {
    RecognizerConfig::for_scene(scene, 3).with_widths(5, 4, 6)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x·W + b` with `W` stored `in × out`.
fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|o| b.get(0, o) + x.iter().enumerate().map(|(i, xi)| xi * w.get(i, o)).sum::<f64>())
        .collect()
}

fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

fn randomize<P: ParamSet>(p: &mut P, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for t in p.tensors_mut() {
        *t = random_tensor(&mut r, t.rows(), t.cols());
    }
}

fn image(scene: &SceneConfig, seed: u64) -> TargetImage {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let max = scene.max_scattering();
    TargetImage::new((0..scene.n_voxels()).map(|_| r.random_range(0.0..max)).collect(), scene).unwrap()
}

#[test]
fn zero_features_and_branch_separation() {
    let scene = tiny_scene();
    let config = tiny_config(&scene);
    let zero = RecognizerParams::zeros(config).unwrap();
    let m = Measurement {
        h_hat: vec![C64::new(0.3, -0.2); 4],
        omega_used: PhaseConfig::ones(4),
    };
    assert_eq!(zero.feature_extract(&m, &PhaseConfig::ones(4)).unwrap(), vec![0.0; 5]);

    let mut p = RecognizerParams::zeros(config).unwrap();
    randomize(&mut p, 3);
    let silent = Measurement {
        h_hat: vec![C64::new(0.0, 0.0); 4],
        omega_used: PhaseConfig::ones(4),
    };
    let omega = PhaseConfig::from_angles(&[0.1, 1.2, -2.0, 3.0]);
    let rep: Vec<f64> = omega
        .as_slice()
        .iter()
        .map(|w| w.re)
        .chain(omega.as_slice().iter().map(|w| w.im))
        .collect();
    let only_phase = affine(&rep, &p.feature_phase.weight, &p.feature_phase.bias);
    let zero_meas = affine(&[0.0; 8], &p.feature_meas.weight, &p.feature_meas.bias);
    let expect: Vec<f64> = only_phase.iter().zip(&zero_meas).map(|(a, b)| (a + b).max(0.0)).collect();
    let got = p.feature_extract(&silent, &omega).unwrap();
    for (g, e) in got.iter().zip(&expect) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn features_match_two_branch_oracle() {
    let scene = tiny_scene();
    let mut p = RecognizerParams::zeros(tiny_config(&scene)).unwrap();
    randomize(&mut p, 5);
    p.measurement_scale = 2.5;
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let h: Vec<C64> = (0..4).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    let omega = PhaseConfig::from_angles(&[0.4, -0.7, 2.2, 5.9]);
    let m = Measurement {
        h_hat: h.clone(),
        omega_used: omega.clone(),
    };
    let stacked: Vec<f64> = h.iter().map(|c| 2.5 * c.re).chain(h.iter().map(|c| 2.5 * c.im)).collect();
    let rep: Vec<f64> = omega
        .as_slice()
        .iter()
        .map(|w| w.re)
        .chain(omega.as_slice().iter().map(|w| w.im))
        .collect();
    let a = affine(&stacked, &p.feature_meas.weight, &p.feature_meas.bias);
    let c = affine(&rep, &p.feature_phase.weight, &p.feature_phase.bias);
    let got = p.feature_extract(&m, &omega).unwrap();
    for i in 0..5 {
        assert!((got[i] - (a[i] + c[i]).max(0.0)).abs() < 1e-12);
    }
    let short = Measurement {
        h_hat: h[..2].to_vec(),
        omega_used: omega.clone(),
    };
    assert!(matches!(p.feature_extract(&short, &omega), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn lstm_zero_fixed_point_and_saturation() {
    let scene = tiny_scene();
    let mut p = RecognizerParams::zeros(tiny_config(&scene)).unwrap();
    let s = p.lstm_step(&[0.0; 5], &LstmState::zeros(4)).unwrap();
    assert_eq!(s, LstmState::zeros(4));

    // forget gate pinned open, input gate pinned shut
    let n = 4;
    let mut r = ChaCha8Rng::seed_from_u64(1);
    p.lstm.state_weight = random_tensor(&mut r, n, 4 * n);
    for j in 0..n {
        p.lstm.bias.data_mut()[j] = -1e3;
        p.lstm.bias.data_mut()[n + j] = 1e3;
    }
    let state = LstmState {
        hidden: vec![0.3, -0.1, 0.8, 0.0],
        cell: vec![1.5, -2.25, 0.125, 7.0],
    };
    let next = p.lstm_step(&[0.0; 5], &state).unwrap();
    assert_eq!(next.cell, state.cell);
}

#[test]
fn lstm_matches_gate_oracle() {
    let scene = tiny_scene();
    let mut p = RecognizerParams::zeros(tiny_config(&scene)).unwrap();
    randomize(&mut p, 11);
    let x = [0.2, -0.4, 0.9, 0.0, 1.1];
    let state = LstmState {
        hidden: vec![0.5, -0.3, 0.1, 0.7],
        cell: vec![-1.0, 0.4, 0.0, 2.0],
    };
    let next = p.lstm_step(&x, &state).unwrap();
    let n = 4;
    let lstm = &p.lstm;
    for j in 0..n {
        let gate = |g: usize| {
            let col = g * n + j;
            let mut z = lstm.bias.get(0, col);
            for (i, xi) in x.iter().enumerate() {
                z += xi * lstm.input_weight.get(i, col);
            }
            for (i, hi) in state.hidden.iter().enumerate() {
                z += hi * lstm.state_weight.get(i, col);
            }
            z
        };
        let (i, f, g, o) = (sigmoid(gate(0)), sigmoid(gate(1)), gate(2).tanh(), sigmoid(gate(3)));
        let c = f * state.cell[j] + i * g;
        assert!((next.cell[j] - c).abs() < 1e-12);
        assert!((next.hidden[j] - o * c.tanh()).abs() < 1e-12);
    }
}

#[test]
fn heads() {
    let scene = tiny_scene();
    let mut p = RecognizerParams::zeros(tiny_config(&scene)).unwrap();
    let s = [0.3, -1.0, 2.0, 0.5];
    for q in p.classify(&s).unwrap() {
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(p.generate_phase(&s).unwrap(), PhaseConfig::ones(4));

    p.classifier.output.bias.data_mut()[1] = 20.0;
    assert!(p.classify(&s).unwrap()[1] > 0.9999);

    randomize(&mut p, 21);
    let probs = p.classify(&s).unwrap();
    let logits = {
        let h: Vec<f64> = affine(&s, &p.classifier.hidden.weight, &p.classifier.hidden.bias)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        affine(&h, &p.classifier.output.weight, &p.classifier.output.bias)
    };
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    for (q, l) in probs.iter().zip(&logits) {
        assert!((q - l.exp() / z).abs() < 1e-14);
    }
    let a = p.generate_phase(&s).unwrap();
    let b = p.generate_phase(&[-0.2, 0.4, 0.0, 1.0]).unwrap();
    assert!(a.max_modulus_error() < 1e-15);
    assert_ne!(a, b);
}

#[test]
fn episodes() {
    let scene = tiny_scene();
    let channel = ChannelModel::new(&scene).unwrap();
    let sigma = image(&scene, 2);
    let zero = RecognizerParams::zeros(tiny_config(&scene)).unwrap();
    let t = zero.run_episode(&channel, &sigma, 3, 7).unwrap();
    assert_eq!(t.steps.len(), 3);
    for q in &t.probabilities {
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!(zero.run_episode(&channel, &sigma, 0, 7).is_err());

    let p = RecognizerParams::init(tiny_config(&scene), 4).unwrap();
    let one = p.run_episode(&channel, &sigma, 1, 7).unwrap();
    assert_eq!(one.steps.len(), 1);
    assert_eq!(one.steps[0].omega, PhaseConfig::from_angles(p.omega1_angles.data()));
    let a = p.run_episode(&channel, &sigma, 4, 7).unwrap();
    let b = p.run_episode(&channel, &sigma, 4, 7).unwrap();
    assert_eq!(a, b);
    assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for s in &a.steps {
        assert!(s.omega.max_modulus_error() < 1e-15);
    }
}

#[test]
fn batched_graph_matches_stepwise_episode() {
    let scene = tiny_scene();
    let channel = ChannelModel::new(&scene).unwrap();
    for encoding in [PhaseEncoding::CosSin, PhaseEncoding::RawAngle] {
        let mut config = tiny_config(&scene);
        config.encoding = encoding;
        let mut p = RecognizerParams::init(config, 8).unwrap();
        p.measurement_scale = 1e4;
        let sigmas: Vec<TargetImage> = (0..3).map(|i| image(&scene, 40 + i)).collect();
        let prepared: Vec<PreparedTarget> = sigmas
            .iter()
            .map(|s| PreparedTarget::new(&channel, s, Physics::WithRis).unwrap())
            .collect();
        let refs: Vec<&PreparedTarget> = prepared.iter().collect();
        let seeds = [5, 6, 7];
        let batch = EpisodeBatch::assemble(&channel, &refs, Some(&seeds), 3).unwrap();
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, true).unwrap();
        let g = p.episode_graph(&mut tape, &vars, &batch).unwrap();
        let logits = tape.value(g.logits).clone();
        let probs = crate::autodiff::softmax_rows(&logits);
        for (i, sigma) in sigmas.iter().enumerate() {
            let t = p.run_episode(&channel, sigma, 3, seeds[i]).unwrap();
            for (a, b) in t.probabilities.iter().zip(probs.row(i)) {
                assert!((a - b).abs() < 1e-12, "{encoding:?}");
            }
            for (k, step) in t.steps.iter().enumerate() {
                let y = tape.value(g.measurements[k]).row(i);
                for (a, b) in step.measurement.stacked_real().iter().zip(y) {
                    assert!((a - b).abs() < 1e-15 + 1e-9 * a.abs());
                }
            }
        }
    }
}

#[test]
fn baselines() {
    let scene = tiny_scene();
    let channel = ChannelModel::new(&scene).unwrap();
    let sigma = image(&scene, 3);
    let mut m = MeasurementClassifier::lisp(1, 4, 4, 3, 6, 0).unwrap();
    for t in m.head.tensors_mut() {
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    for q in run_lisp_episode(&channel, &sigma, &m, 1).unwrap() {
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
    }

    let lisp = MeasurementClassifier::lisp(3, 4, 4, 3, 6, 2).unwrap();
    let a = lisp.run_episode(&channel, &sigma, 9).unwrap();
    assert_eq!(a, lisp.run_episode(&channel, &sigma, 9).unwrap());
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    assert!(MeasurementClassifier::fixed(&[], 4, 3, 6, 0).is_err());
    let fixed = MeasurementClassifier::fixed(&random_phase_set(2, 4, 1), 4, 3, 6, 0).unwrap();
    assert_eq!(fixed.trainable(), vec![false, true, true, true, true]);
    assert!(lisp.trainable()[0]);
    for (x, y) in fixed.phase_configs().iter().zip(random_phase_set(2, 4, 1)) {
        for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    // batched and stepwise paths agree for every baseline
    let no_ris = MeasurementClassifier::no_ris(4, 4, 3, 6, 3).unwrap();
    for model in [&lisp, &fixed, &no_ris] {
        let prepared = PreparedTarget::new(&channel, &sigma, model.physics()).unwrap();
        let batch = EpisodeBatch::assemble(&channel, &[&prepared], Some(&[9]), model.steps()).unwrap();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, true).unwrap();
        let logits = model.logits(&mut tape, &vars, &batch).unwrap();
        let probs = crate::autodiff::softmax_rows(tape.value(logits));
        for (a, b) in model.run_episode(&channel, &sigma, 9).unwrap().iter().zip(probs.row(0)) {
            assert!((a - b).abs() < 1e-12, "{}", model.kind);
        }
    }
}

#[test]
fn random_phases() {
    let set = random_phase_set(5, 7, 3);
    assert_eq!(set.len(), 5);
    assert_eq!(set, random_phase_set(5, 7, 3));
    assert_ne!(set, random_phase_set(5, 7, 4));
    for w in &set {
        assert!(w.max_modulus_error() < 1e-15);
    }
    let many = random_phase_set(100, 100, 0);
    let mean: C64 = many.iter().flat_map(|w| w.as_slice().iter()).sum::<C64>() / 1e4;
    assert!(mean.norm() < 0.05);
}

#[test]
fn checkpoints_round_trip() {
    let scene = tiny_scene();
    let mut p = RecognizerParams::init(tiny_config(&scene), 1).unwrap();
    p.measurement_scale = 123.5;
    let ck = Checkpoint::from_bytes(&p.to_checkpoint().to_bytes()).unwrap();
    assert_eq!(RecognizerParams::from_checkpoint(&ck).unwrap(), p);
    assert!(MeasurementClassifier::from_checkpoint(&ck).is_err());

    let lisp = MeasurementClassifier::lisp(3, 4, 4, 3, 6, 2).unwrap();
    let ck = Checkpoint::from_bytes(&Recognizer::to_checkpoint(&lisp).to_bytes()).unwrap();
    assert_eq!(AnyModel::from_checkpoint(&ck).unwrap(), AnyModel::Baseline(lisp));

    let mut bad = p.to_checkpoint();
    bad.tensors[0].1 = Tensor::zeros(1, 1);
    assert!(matches!(RecognizerParams::from_checkpoint(&bad), Err(Error::Checkpoint(_))));
}

#[test]
fn model_kind_names() {
    for k in ModelKind::ALL {
        assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
    }
    assert!("cnn".parse::<ModelKind>().is_err());
}
