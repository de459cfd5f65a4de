//! Special cases of the dynamic loss that must collapse onto simpler
//! objectives, and bounds on the logged weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dkdhtl_core::data::{apply_shift, make_blobs, ShiftOptions, ShiftSpec, ShiftedData};
use dkdhtl_core::distill::{dynamic_weights, instance_loss_and_grad, static_kd_loss_and_grad};
use dkdhtl_core::hypothesis::ProbabilityBackend;
use dkdhtl_core::model::init_network;
use dkdhtl_core::trainer::train;
use dkdhtl_core::{DistillConfig, LogitVector, Method, ProbVector, SourceHypothesis, TrainConfig};

/// Static distillation written out from the formulas, sharing no code with
/// the library.
fn static_kd_oracle(z: &[f64], y: &[f64], ps: &[f64], lambda: f64, t: f64, floor: f64) -> (f64, Vec<f64>) {
    fn softmax(z: &[f64], t: f64) -> Vec<f64> {
        let mut max = f64::NEG_INFINITY;
        for &v in z {
            max = max.max(v);
        }
        let e: Vec<f64> = z.iter().map(|&v| ((v - max) / t).exp()).collect();
        let mut s = 0.0;
        for &v in &e {
            s += v;
        }
        e.iter().map(|v| v / s).collect()
    }
    fn ce(target: &[f64], pred: &[f64], floor: f64) -> f64 {
        let mut s = 0.0;
        for (&a, &b) in target.iter().zip(pred) {
            s += a * b.max(floor).ln();
        }
        -s
    }
    let p = softmax(z, 1.0);
    let st = softmax(z, t);
    let clamped: Vec<f64> = ps.iter().map(|v| v.max(floor)).collect();
    let mut max = 0.0;
    for &v in &clamped {
        max = f64::max(max, v);
    }
    let powered: Vec<f64> = clamped.iter().map(|v| (v / max).powf(1.0 / t)).collect();
    let mut sum = 0.0;
    for &v in &powered {
        sum += v;
    }
    let ss: Vec<f64> = powered.iter().map(|v| v / sum).collect();
    let (alpha, beta) = (lambda, 1.0 - lambda);
    let total = alpha * ce(y, &p, floor) + beta * ce(&ss, &st, floor);
    let grad = (0..z.len())
        .map(|j| alpha * (p[j] - y[j]) + beta * ((st[j] - ss[j]) / t))
        .collect();
    (total, grad)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn zero_delta_matches_independent_static_kd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5000 {
        let c = rng.random_range(2..=10);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-10.0..10.0)).collect();
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(-8.0..2.0_f64).exp()).collect();
        let s: f64 = raw.iter().sum();
        let ps = ProbVector::new(raw.iter().map(|v| v / s).collect()).unwrap();
        let y = ProbVector::one_hot(rng.random_range(0..c), c).unwrap();
        let lambda = rng.random_range(0.0..=1.0);
        let t = rng.random_range(0.5..6.0);
        let cfg = DistillConfig::new(lambda, 0.0, t).unwrap();
        let zl = LogitVector::new(z.clone()).unwrap();

        let (dyn_loss, dyn_grad) = instance_loss_and_grad(&zl, &y, &ps, &cfg).unwrap();
        let (want_loss, want_grad) = static_kd_oracle(&z, y.values(), ps.values(), lambda, t, cfg.prob_floor);
        assert_eq!(dyn_loss.total.to_bits(), want_loss.to_bits());
        assert_eq!(bits(&dyn_grad), bits(&want_grad));

        let (lib_loss, lib_grad) = static_kd_loss_and_grad(&zl, &y, &ps, lambda, t, cfg.prob_floor).unwrap();
        assert_eq!(lib_loss.total.to_bits(), want_loss.to_bits());
        assert_eq!(bits(&lib_grad), bits(&want_grad));
    }
}

fn shifted(seed: u64) -> ShiftedData {
    let pool = make_blobs(120, 4, 6, 1.0, seed).unwrap();
    apply_shift(&pool, &ShiftSpec::new([2], 0.3, seed), &ShiftOptions::default()).unwrap()
}

fn source_for(data: &ShiftedData) -> SourceHypothesis {
    let cfg = TrainConfig::new(Method::TargetOnly).with_seed(1);
    let (net, _) = train(init_network(&[6, 16, 4], 1).unwrap(), None, &data.source, &cfg).unwrap();
    SourceHypothesis::in_process(net).unwrap()
}

#[test]
fn unit_lambda_zero_delta_training_is_cross_entropy_training() {
    let data = shifted(8);
    let source = source_for(&data);
    for seed in [0, 1, 2] {
        let net = init_network(&[6, 16, 4], seed).unwrap();
        let td = TrainConfig::new(Method::TargetOnly).with_seed(seed);
        let dkd = TrainConfig::new(Method::DynamicKd)
            .with_distill(DistillConfig::new(1.0, 0.0, 2.0).unwrap())
            .with_seed(seed);
        let (net_td, rep_td) = train(net.clone(), None, &data.target, &td).unwrap();
        let (net_dkd, rep_dkd) = train(net, Some(&source), &data.target, &dkd).unwrap();
        let losses = |r: &dkdhtl_core::TrainReport| r.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>();
        assert!(rep_td.epochs.len() > 1);
        assert_eq!(bits(&losses(&rep_td)), bits(&losses(&rep_dkd)));
        assert_eq!(net_td, net_dkd);
        assert_eq!(rep_td.best_epoch, rep_dkd.best_epoch);
        assert_eq!(rep_td.metrics, rep_dkd.metrics);
    }
}

#[test]
fn zero_delta_training_is_static_training() {
    let data = shifted(9);
    let source = source_for(&data);
    let distill = DistillConfig::new(0.5, 0.0, 2.0).unwrap();
    let skd = TrainConfig::new(Method::StaticKd).with_distill(distill).with_seed(4);
    let dkd = TrainConfig::new(Method::DynamicKd).with_distill(distill).with_seed(4);
    let net = init_network(&[6, 16, 4], 4).unwrap();
    let (a, ra) = train(net.clone(), Some(&source), &data.target, &skd).unwrap();
    let (b, rb) = train(net, Some(&source), &data.target, &dkd).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);
}

#[test]
fn logged_alpha_stays_within_bounds() {
    let data = shifted(10);
    let source = source_for(&data);
    for (lambda, delta) in [(0.1, 0.9), (0.3, 0.5), (0.0, 1.0), (0.5, 0.2)] {
        let cfg = TrainConfig::new(Method::DynamicKd)
            .with_distill(DistillConfig::new(lambda, delta, 3.0).unwrap())
            .with_seed(2);
        let (_, report) = train(init_network(&[6, 16, 4], 2).unwrap(), Some(&source), &data.target, &cfg).unwrap();
        for e in &report.epochs {
            let (lo, hi) = (e.min_alpha.unwrap(), e.max_alpha.unwrap());
            assert!(lo >= lambda && hi <= lambda + delta, "{lo} {hi} for ({lambda}, {delta})");
            assert!(lo <= e.mean_alpha.unwrap() && e.mean_alpha.unwrap() <= hi);
        }
    }
}

#[test]
fn alpha_endpoints() {
    let cfg = DistillConfig::new(0.2, 0.7, 2.0).unwrap();
    assert_eq!(dynamic_weights(1.0, &cfg).unwrap().alpha, 0.2);
    assert_eq!(dynamic_weights(0.0, &cfg).unwrap().alpha, 0.2 + 0.7);
    let z = LogitVector::new(vec![0.3, -0.1, 0.4]).unwrap();
    let y = ProbVector::one_hot(1, 3).unwrap();
    // a source certain of the true class
    let (loss, _) = instance_loss_and_grad(&z, &y, &ProbVector::one_hot(1, 3).unwrap(), &cfg).unwrap();
    assert_eq!(loss.consistency, 1.0);
    assert_eq!(loss.weights.alpha, 0.2);
    // a source that rules the true class out
    let (loss, _) = instance_loss_and_grad(&z, &y, &ProbVector::one_hot(0, 3).unwrap(), &cfg).unwrap();
    assert!((loss.consistency - cfg.prob_floor).abs() < 1e-20);
    assert!((loss.weights.alpha - 0.9).abs() < 1e-11);
}

/// Answers with the one-hot vector of the recorded label.
struct Oracle {
    rows: Vec<(Vec<f64>, usize)>,
    classes: usize,
}

impl ProbabilityBackend for Oracle {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_raw(&self, x: &[f64]) -> dkdhtl_core::Result<Vec<f64>> {
        let label = self.rows.iter().find(|(f, _)| f.as_slice() == x).map_or(0, |r| r.1);
        Ok(ProbVector::one_hot(label, self.classes)?.into_vec())
    }
}

#[test]
fn perfect_teacher_pins_alpha_to_lambda() {
    let data = shifted(11);
    let train_split = &data.target.train;
    let rows = train_split
        .features()
        .iter()
        .cloned()
        .zip(train_split.labels().iter().copied())
        .collect();
    let backend = Oracle { rows, classes: 4 };
    let source = SourceHypothesis::register(Box::new(backend), &[0.0; 6]).unwrap();
    let cfg = TrainConfig::new(Method::DynamicKd)
        .with_distill(DistillConfig::new(0.1, 0.9, 2.0).unwrap())
        .with_seed(0);
    let (_, report) = train(init_network(&[6, 16, 4], 0).unwrap(), Some(&source), &data.target, &cfg).unwrap();
    for e in &report.epochs {
        assert_eq!(e.min_alpha, Some(0.1));
        assert_eq!(e.max_alpha, Some(0.1));
    }
}

#[test]
fn training_is_deterministic() {
    let data = shifted(12);
    let source = source_for(&data);
    let cfg = TrainConfig::new(Method::DynamicKd).with_seed(6);
    let run = || train(init_network(&[6, 16, 4], 6).unwrap(), Some(&source), &data.target, &cfg).unwrap();
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}
