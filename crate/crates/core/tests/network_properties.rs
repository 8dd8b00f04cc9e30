use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_recognizer::autodiff::{Tape, Tensor};
use ris_recognizer::channel::{ChannelModel, TargetImage};
use ris_recognizer::recognizer::{
    EpisodeBatch, MeasurementClassifier, ParamSet, PreparedTarget, Recognizer, RecognizerConfig, RecognizerParams,
};
use ris_recognizer::scene::SceneConfig;
use ris_recognizer::trainer::{Adam, Dataset, PreparedSet, Sample, Split};

fn scene() -> SceneConfig {
    SceneConfig {
        ris_rows: 2,
        ris_cols: 2,
        roi_side_voxels: 3,
        ..SceneConfig::default()
    }
}

fn image(r: &mut ChaCha8Rng, scene: &SceneConfig) -> TargetImage {
    let max = scene.max_scattering();
    TargetImage::new((0..scene.n_voxels()).map(|_| r.random_range(0.0..max)).collect(), scene).unwrap()
}

fn network(seed: u64, gain: f64) -> RecognizerParams {
    let s = scene();
    let mut p = RecognizerParams::init(RecognizerConfig::for_scene(&s, 3).with_widths(8, 8, 8), seed).unwrap();
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v *= gain;
        }
    }
    p.measurement_scale = 1e4;
    p
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn outputs_are_distributions_and_phases_unit_modulus(seed in any::<u64>(), gain in 0.0f64..20.0, k in 1usize..5) {
        let s = scene();
        let ch = ChannelModel::new(&s).unwrap();
        let p = network(seed, gain);
        let sigma = image(&mut ChaCha8Rng::seed_from_u64(seed), &s);
        let trace = p.run_episode(&ch, &sigma, k, seed).unwrap();
        prop_assert!(trace.probabilities.iter().all(|&x| x >= 0.0));
        prop_assert!((trace.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(trace.steps.len(), k);
        for w in trace.omegas() {
            prop_assert!(w.max_modulus_error() <= 4.0 * f64::EPSILON);
        }
        prop_assert_eq!(&trace, &p.run_episode(&ch, &sigma, k, seed).unwrap());
    }

    #[test]
    fn initialization_follows_the_declared_law(seed in any::<u64>()) {
        let s = scene();
        let cfg = RecognizerConfig::for_scene(&s, 3).with_widths(8, 8, 8);
        let p = RecognizerParams::init(cfg, seed).unwrap();
        prop_assert_eq!(&p, &RecognizerParams::init(cfg, seed).unwrap());
        for (name, t) in p.named_tensors() {
            if name == "omega1_angles" {
                prop_assert!(t.data().iter().all(|&a| (0.0..TAU).contains(&a)));
            } else if name.ends_with("bias") {
                prop_assert!(t.data().iter().all(|&b| b == 0.0), "{} not zero", name);
            } else {
                let bound = 1.0 / (t.rows() as f64).sqrt();
                prop_assert!(t.data().iter().all(|w| w.abs() <= bound), "{} outside ±{}", name, bound);
            }
        }
    }
}

#[test]
fn surface_phases_depend_on_the_target_only_for_the_adaptive_network() {
    let s = scene();
    let ch = ChannelModel::new(&s).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let (a, b) = (image(&mut r, &s), image(&mut r, &s));
    let p = network(3, 1.0);
    let wa = &p.run_episode(&ch, &a, 2, 0).unwrap().steps[1].omega;
    let wb = &p.run_episode(&ch, &b, 2, 0).unwrap().steps[1].omega;
    let dist: f64 = wa.as_slice().iter().zip(wb.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum();
    assert!(dist > 0.0);

    let lisp = MeasurementClassifier::lisp(2, s.n_links(), s.n_ris(), 3, 8, 0).unwrap();
    assert_eq!(lisp.phase_configs().len(), 2);
    // the same two configurations are used whatever the target
    let cfgs = lisp.phase_configs();
    assert_eq!(cfgs, lisp.phase_configs());
}

#[test]
fn tape_grows_linearly_with_episode_length() {
    let s = scene();
    let ch = ChannelModel::new(&s).unwrap();
    let p = network(1, 1.0);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<Sample> = (0..3).map(|i| Sample { image: image(&mut r, &s), label: i }).collect();
    let data = Dataset::new(samples, 3, Split::Train).unwrap();
    let set = PreparedSet::new(&ch, &data, &p).unwrap();
    let targets: Vec<&PreparedTarget> = set.targets.iter().collect();
    let size = |k: usize| {
        let batch = EpisodeBatch::assemble(&ch, &targets, None, k).unwrap();
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, true).unwrap();
        let logits = p.logits(&mut tape, &vars, &batch).unwrap();
        tape.softmax_cross_entropy(logits, &set.labels).unwrap();
        tape.len()
    };
    let (a, b, c, d) = (size(1), size(2), size(3), size(6));
    assert_eq!(c - b, b - a);
    assert_eq!(d - a, 5 * (b - a));
}

#[test]
fn optimizer_leaves_zero_gradient_entries_alone() {
    let mut a = Tensor::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
    let mut b = Tensor::new(2, 1, vec![4.0, 5.0]).unwrap();
    let ga = Tensor::new(1, 3, vec![0.0, 0.5, 0.0]).unwrap();
    let mut adam = Adam::default();
    for _ in 0..3 {
        adam.step(&mut [&mut a, &mut b], &[Some(ga.clone()), None], 0.1).unwrap();
    }
    assert_eq!(a.data()[0], 1.0);
    assert_eq!(a.data()[2], 3.0);
    assert!(a.data()[1] < 2.0);
    assert_eq!(b.data(), &[4.0, 5.0]);
}
