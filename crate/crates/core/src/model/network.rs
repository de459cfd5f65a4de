use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distill::soften_logits;
use crate::error::{Error, Result};
use crate::prob::{LogitVector, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer. Weights are stored row-major with shape `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || biases.len() != outputs {
            return Err(Error::invalid(format!(
                "layer {inputs}->{outputs} given {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            biases,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        pre.clear();
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let z = row.iter().zip(x).fold(b, |acc, (w, v)| acc + w * v);
            pre.push(z);
            out.push(self.activation.apply(z));
        }
    }
}

/// Fully-connected classifier. Hidden layers use ReLU; the last layer is
/// linear and emits logits.
#[derive(Debug, Clone)]
pub struct TargetNetwork {
    layers: Vec<Layer>,
    // bumped on every parameter update so stale forward caches are detected
    version: u64,
}

impl PartialEq for TargetNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

/// Gradient of a scalar loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &TargetNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::invalid("gradient shapes differ"));
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Gradients) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.len() == b.weights.len() && a.biases.len() == b.biases.len()
            })
    }

    /// All gradient entries, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

/// Builds a network for `layer_sizes = [input, hidden.., classes]` with
/// weights drawn from `U(-b, b)`, `b = sqrt(6 / (fan_in + fan_out))`, and
/// zero biases.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<TargetNetwork> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be positive: {layer_sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = layer_sizes.len() - 1;
    let layers = layer_sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let activation = if k + 1 == n {
                Activation::Identity
            } else {
                Activation::Relu
            };
            Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], activation)
        })
        .collect::<Result<Vec<_>>>()?;
    TargetNetwork::from_layers(layers)
}

impl TargetNetwork {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(TargetNetwork { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward pass returning logits and the cache needed by [`backward`].
    ///
    /// [`backward`]: TargetNetwork::backward
    pub fn forward(&self, x: &[f64]) -> Result<(LogitVector, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.outputs);
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&current, &mut pre, &mut out);
            inputs.push(current);
            pre_activations.push(pre);
            current = out;
        }
        let logits = LogitVector::new(current)?;
        Ok((
            logits,
            ForwardCache {
                version: self.version,
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without recording a cache.
    pub fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let (mut pre, mut out) = (Vec::new(), Vec::new());
        for layer in &self.layers {
            layer.forward_into(&current, &mut pre, &mut out);
            std::mem::swap(&mut current, &mut out);
        }
        LogitVector::new(current)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        soften_logits(&self.logits(x)?, 1.0)
    }

    pub fn backward(&self, cache: &ForwardCache, dloss_dlogits: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(cache, dloss_dlogits, &mut grads)?;
        Ok(grads)
    }

    /// Backpropagates `dloss_dlogits` and adds the parameter gradients into
    /// `grads`.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        dloss_dlogits: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::invalid("forward cache does not belong to this network state"));
        }
        if dloss_dlogits.len() != self.num_classes() {
            return Err(Error::invalid(format!(
                "logit gradient has length {}, network emits {}",
                dloss_dlogits.len(),
                self.num_classes()
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::invalid("gradient buffer shaped for another network"));
        }

        let mut delta = dloss_dlogits.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[k];
            let pre = &cache.pre_activations[k];
            let g = &mut grads.layers[k];
            if g.weights.len() != layer.weights.len() || pre.len() != layer.outputs {
                return Err(Error::invalid("gradient or cache shape mismatch"));
            }
            for (d, &z) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(z);
            }
            for (i, &d) in delta.iter().enumerate() {
                g.biases[i] += d;
                let row = &mut g.weights[i * layer.inputs..(i + 1) * layer.inputs];
                for (gw, &v) in row.iter_mut().zip(input) {
                    *gw += d * v;
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (i, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[i * layer.inputs..(i + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &mut Vec<f64>)> {
        self.version += 1;
        self.layers
            .iter_mut()
            .map(|l| (&mut l.weights, &mut l.biases))
    }
}
