//! Analytic parameter gradients of the combined loss against central finite
//! differences.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dkdhtl_core::distill::instance_loss_and_grad;
use dkdhtl_core::model::{Activation, Layer};
use dkdhtl_core::{DistillConfig, LogitVector, ProbVector, TargetNetwork};

const DRAWS: usize = 200;
const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
// hidden pre-activations closer than this to zero put a ReLU kink inside the
// finite-difference stencil, where the derivative does not exist
const KINK_MARGIN: f64 = 1e-3;

struct Draw {
    net: TargetNetwork,
    x: Vec<f64>,
    label: ProbVector,
    source: ProbVector,
    cfg: DistillConfig,
}

fn random_probs(rng: &mut ChaCha8Rng, classes: usize) -> ProbVector {
    // occasionally sharp, occasionally near uniform
    let scale = rng.random_range(0.1..6.0);
    let raw: Vec<f64> = (0..classes).map(|_| (scale * rng.random_range(-1.0..1.0_f64)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    ProbVector::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
}

fn random_net(rng: &mut ChaCha8Rng, sizes: &[usize]) -> TargetNetwork {
    let n = sizes.len() - 1;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let weights = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let biases = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            let act = if k + 1 == n { Activation::Identity } else { Activation::Relu };
            Layer::new(w[0], w[1], weights, biases, act).unwrap()
        })
        .collect();
    TargetNetwork::from_layers(layers).unwrap()
}

fn hidden_pre_activations(net: &TargetNetwork, x: &[f64]) -> Vec<f64> {
    let mut current = x.to_vec();
    let mut pres = Vec::new();
    for layer in net.layers() {
        let pre: Vec<f64> = layer
            .weights()
            .chunks(layer.inputs())
            .zip(layer.biases())
            .map(|(row, b)| b + row.iter().zip(&current).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        if layer.activation() == Activation::Relu {
            pres.extend(&pre);
            current = pre.iter().map(|v| v.max(0.0)).collect();
        } else {
            current = pre;
        }
    }
    pres
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    loop {
        let input = rng.random_range(1..=6);
        let classes = rng.random_range(2..=6);
        let mut sizes = vec![input];
        for _ in 0..rng.random_range(0..=2) {
            sizes.push(rng.random_range(2..=8));
        }
        sizes.push(classes);
        let net = random_net(rng, &sizes);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        if hidden_pre_activations(&net, &x).iter().any(|v| v.abs() < KINK_MARGIN) {
            continue;
        }
        let lambda = rng.random_range(0.0..1.0);
        let delta = rng.random_range(0.0..=(1.0 - lambda));
        let temperature = rng.random_range(0.5..5.0);
        let cfg = DistillConfig::new(lambda, delta, temperature).unwrap();
        let label = ProbVector::one_hot(rng.random_range(0..classes), classes).unwrap();
        let source = random_probs(rng, classes);
        return Draw { net, x, label, source, cfg };
    }
}

fn loss_at(d: &Draw, net: &TargetNetwork) -> f64 {
    let z = net.logits(&d.x).unwrap();
    instance_loss_and_grad(&z, &d.label, &d.source, &d.cfg).unwrap().0.total
}

/// Rebuilds `net` with flat parameter `index` shifted by `by`. Parameters are
/// ordered layer by layer, weights before biases.
fn nudge(net: &TargetNetwork, index: usize, by: f64) -> TargetNetwork {
    let mut offset = 0;
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let mut params: Vec<f64> = l.weights().iter().chain(l.biases()).copied().collect();
            if (offset..offset + params.len()).contains(&index) {
                params[index - offset] += by;
            }
            offset += params.len();
            let biases = params.split_off(l.weights().len());
            Layer::new(l.inputs(), l.outputs(), params, biases, l.activation()).unwrap()
        })
        .collect();
    TargetNetwork::from_layers(layers).unwrap()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

#[test]
fn parameter_gradients_match_central_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut worst: f64 = 0.0;
    for k in 0..DRAWS {
        let d = draw(&mut rng);
        let (z, cache) = d.net.forward(&d.x).unwrap();
        let (_, dz) = instance_loss_and_grad(&z, &d.label, &d.source, &d.cfg).unwrap();
        let analytic: Vec<f64> = d.net.backward(&cache, &dz).unwrap().values().collect();
        let numeric: Vec<f64> = (0..d.net.num_parameters())
            .map(|i| {
                let up = loss_at(&d, &nudge(&d.net, i, STEP));
                let down = loss_at(&d, &nudge(&d.net, i, -STEP));
                (up - down) / (2.0 * STEP)
            })
            .collect();
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOLERANCE, "draw {k}: relative error {err:e}, cfg {:?}", d.cfg);
        worst = worst.max(err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!("{DRAWS} draws, worst relative error {worst:.3e}, {elapsed:.2}s");
    assert!(elapsed < 30.0, "gradient check took {elapsed:.1}s");
}

#[test]
fn logit_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let d = draw(&mut rng);
        let z = d.net.logits(&d.x).unwrap();
        let (_, analytic) = instance_loss_and_grad(&z, &d.label, &d.source, &d.cfg).unwrap();
        let numeric: Vec<f64> = (0..z.len())
            .map(|j| {
                let shifted = |by: f64| {
                    let mut v = z.values().to_vec();
                    v[j] += by;
                    let z = LogitVector::new(v).unwrap();
                    instance_loss_and_grad(&z, &d.label, &d.source, &d.cfg).unwrap().0.total
                };
                (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP)
            })
            .collect();
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOLERANCE, "relative error {err:e}");
    }
}
