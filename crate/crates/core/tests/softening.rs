//! Temperature softening identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dkdhtl_core::distill::{soften_logits, soften_probs, DEFAULT_PROB_FLOOR};
use dkdhtl_core::{LogitVector, ProbVector};

fn random_logits(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(2..=10);
    let scale = rng.random_range(0.1..8.0);
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn unit_temperature_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = soften_logits(&LogitVector::new(random_logits(&mut rng)).unwrap(), 1.0).unwrap();
        let q = soften_probs(&p, 1.0, DEFAULT_PROB_FLOOR).unwrap();
        assert!(max_abs_diff(p.values(), q.values()) < 1e-12);
    }
}

#[test]
fn closed_form_two_class_case() {
    let p = ProbVector::new(vec![0.9, 0.1]).unwrap();
    let q = soften_probs(&p, 2.0, DEFAULT_PROB_FLOOR).unwrap();
    assert!(max_abs_diff(q.values(), &[0.75, 0.25]) < 1e-12, "{q:?}");
    let z = LogitVector::new(vec![9f64.ln(), 0.0]).unwrap();
    let q = soften_logits(&z, 2.0).unwrap();
    assert!(max_abs_diff(q.values(), &[0.75, 0.25]) < 1e-12, "{q:?}");
}

#[test]
fn normalizing_constant_cancels() {
    // probabilities are logits minus a log-partition constant; softening the
    // probabilities must equal softening the logits, and shifting the logits
    // by any constant changes nothing
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let z = random_logits(&mut rng);
        let t = rng.random_range(0.5..6.0);
        let c = rng.random_range(-50.0..50.0);
        let from_logits = soften_logits(&LogitVector::new(z.clone()).unwrap(), t).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let from_shifted = soften_logits(&LogitVector::new(shifted).unwrap(), t).unwrap();
        let p = soften_logits(&LogitVector::new(z).unwrap(), 1.0).unwrap();
        let from_probs = soften_probs(&p, t, 0.0).unwrap();
        assert!(max_abs_diff(from_logits.values(), from_shifted.values()) < 1e-12);
        assert!(max_abs_diff(from_logits.values(), from_probs.values()) < 1e-12);
    }
}

#[test]
fn temperatures_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let p = soften_logits(&LogitVector::new(random_logits(&mut rng)).unwrap(), 1.0).unwrap();
        let (a, b) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let twice = soften_probs(&soften_probs(&p, a, 0.0).unwrap(), b, 0.0).unwrap();
        let once = soften_probs(&p, a * b, 0.0).unwrap();
        assert!(max_abs_diff(twice.values(), once.values()) < 1e-12);
    }
}

#[test]
fn uniform_is_fixed_point_and_order_is_kept() {
    let u = ProbVector::uniform(4).unwrap();
    for t in [0.3, 1.0, 2.0, 10.0] {
        assert_eq!(soften_probs(&u, t, DEFAULT_PROB_FLOOR).unwrap(), u);
    }
    let p = ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap();
    let q = soften_probs(&p, 3.0, DEFAULT_PROB_FLOOR).unwrap();
    assert!(q.values()[0] > q.values()[1] && q.values()[1] > q.values()[2]);
    assert!(q.values()[0] < 0.6 && q.values()[2] > 0.1);
    assert!(soften_probs(&p, 0.0, DEFAULT_PROB_FLOOR).is_err());
    assert!(soften_probs(&p, -1.0, DEFAULT_PROB_FLOOR).is_err());
}
