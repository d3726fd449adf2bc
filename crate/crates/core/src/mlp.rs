//! Dense neural-network core shared by both classification stages.
//!
//! Deliberately small: fully-connected layers, relu/elu/gelu activations, a
//! softmax head trained with cross-entropy, and plain mini-batch SGD. All
//! arithmetic is f64 and every training run is a pure function of its seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::Label;

const GELU_TANH_COEFF: f64 = 0.044_715;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Elu,
    Gelu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Elu, Activation::Gelu];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            // tanh approximation of x * Phi(x)
            Activation::Gelu => {
                let u = (2.0 / std::f64::consts::PI).sqrt() * (x + GELU_TANH_COEFF * x.powi(3));
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                let u = c * (x + GELU_TANH_COEFF * x.powi(3));
                let t = u.tanh();
                let du = c * (1.0 + 3.0 * GELU_TANH_COEFF * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Gelu => "gelu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected relu, elu or gelu)"
            ))),
        }
    }
}

/// Network shape. Depth 0 is a single fully-connected layer straight into
/// the softmax; hidden layers, when present, all share `hidden_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_len: usize,
    pub hidden_depth: usize,
    pub hidden_len: usize,
    pub activation: Activation,
    pub output_len: usize,
}

impl MlpConfig {
    pub fn new(input_len: usize, hidden_depth: usize, hidden_len: usize, activation: Activation) -> Self {
        MlpConfig {
            input_len,
            hidden_depth,
            hidden_len,
            activation,
            output_len: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::Config("input_len must be positive".into()));
        }
        if self.output_len == 0 {
            return Err(Error::Config("output_len must be positive".into()));
        }
        if self.hidden_depth > 4 {
            return Err(Error::Config(format!(
                "hidden_depth {} out of range [0, 4]",
                self.hidden_depth
            )));
        }
        if self.hidden_depth >= 1 && !(5..=20).contains(&self.hidden_len) {
            return Err(Error::Config(format!(
                "hidden_len {} out of range [5, 20]",
                self.hidden_len
            )));
        }
        Ok(())
    }

    /// Layer dimensions from input to output, e.g. depth 2 gives
    /// `[input, hidden, hidden, output]`.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_depth + 2);
        dims.push(self.input_len);
        dims.extend(std::iter::repeat_n(self.hidden_len, self.hidden_depth));
        dims.push(self.output_len);
        dims
    }
}

/// Hyperparameters for one SGD training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

/// One labelled training example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Sample { features, label }
    }
}

/// One fully-connected layer; weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.bias[row];
            for (wi, xi) in w.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Parameter gradients, mirroring the layer layout of an [`MlpModel`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.bias {
                *b *= factor;
            }
        }
    }
}

/// Intermediate activations from a forward pass, sufficient for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input fed to layer `l`; `inputs[0]` is the sample.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of every layer, final layer included.
    pre_activations: Vec<Vec<f64>>,
}

/// A feed-forward network with a softmax output head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<DenseLayer>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, drawn from a ChaCha stream so
    /// identical seeds give identical parameters.
    pub fn init(config: &MlpConfig, seed: u64) -> Result<MlpModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(config, &mut rng)
    }

    pub fn init_with_rng(config: &MlpConfig, rng: &mut impl Rng) -> Result<MlpModel> {
        config.validate()?;
        let dims = config.layer_dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                weights,
                bias: vec![0.0; out_dim],
            });
        }
        Ok(MlpModel {
            config: config.clone(),
            layers,
        })
    }

    /// All-zero parameters; the softmax head then outputs a uniform
    /// distribution for every input.
    pub fn zeros(config: &MlpConfig) -> Result<MlpModel> {
        config.validate()?;
        let dims = config.layer_dims();
        Ok(MlpModel {
            config: config.clone(),
            layers: dims
                .windows(2)
                .map(|p| DenseLayer::zeros(p[0], p[1]))
                .collect(),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Forward pass returning class probabilities and the cache needed by
    /// [`MlpModel::loss_and_grad`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.config.input_len {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.config.input_len
            )));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut current = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine(&current, &mut z);
            inputs.push(std::mem::take(&mut current));
            if idx + 1 < n_layers {
                current = z.iter().map(|&v| self.config.activation.apply(v)).collect();
            } else {
                current = softmax(&z);
            }
            pre_activations.push(z);
        }
        Ok((
            current,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Class probabilities only.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Predicted label for a binary head; exact ties go to abnormal.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let probs = self.predict_proba(x)?;
        Ok(if probs[Label::Abnormal.class_index()] >= probs[Label::Normal.class_index()] {
            Label::Abnormal
        } else {
            Label::Normal
        })
    }

    /// Mean softmax cross-entropy over the batch plus an optional L2 weight
    /// penalty, together with exact analytic gradients.
    pub fn loss_and_grad(&self, batch: &[Sample], l2: f64) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for sample in batch {
            let (probs, cache) = self.forward(&sample.features)?;
            let class = sample.label.class_index();
            if class >= self.config.output_len {
                return Err(Error::Shape(format!(
                    "label index {class} out of range for output_len {}",
                    self.config.output_len
                )));
            }
            loss += -log_softmax(&cache.pre_activations[self.layers.len() - 1])[class];
            self.backprop(&probs, class, &cache, &mut grads);
        }
        let inv_n = 1.0 / batch.len() as f64;
        loss *= inv_n;
        grads.scale(inv_n);
        if l2 > 0.0 {
            for (layer, grad) in self.layers.iter().zip(&mut grads.layers) {
                for (w, g) in layer.weights.iter().zip(&mut grad.weights) {
                    loss += 0.5 * l2 * w * w;
                    *g += l2 * w;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Accumulates one sample's gradient contribution into `grads`.
    fn backprop(&self, probs: &[f64], class: usize, cache: &ForwardCache, grads: &mut Gradients) {
        let n_layers = self.layers.len();
        // softmax + cross-entropy: dL/dz = p - onehot
        let mut delta: Vec<f64> = probs.to_vec();
        delta[class] -= 1.0;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let grad = &mut grads.layers[l];
            for (row, &d) in delta.iter().enumerate() {
                grad.bias[row] += d;
                let gw = &mut grad.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (g, xi) in gw.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let mut upstream = vec![0.0; layer.in_dim];
            for (row, &d) in delta.iter().enumerate() {
                let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (u, wi) in upstream.iter_mut().zip(w) {
                    *u += d * wi;
                }
            }
            let z_prev = &cache.pre_activations[l - 1];
            delta = upstream
                .iter()
                .zip(z_prev)
                .map(|(&u, &z)| u * self.config.activation.derivative(z))
                .collect();
        }
    }

    /// One SGD update: `theta <- theta - lr * g`, elementwise.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "gradient has {} layers, model has {}",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        for (layer, grad) in self.layers.iter_mut().zip(&grads.layers) {
            if layer.weights.len() != grad.weights.len() || layer.bias.len() != grad.bias.len() {
                return Err(Error::Shape("gradient layer shape differs from model".into()));
            }
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                *w -= learning_rate * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                *b -= learning_rate * g;
            }
        }
        Ok(())
    }

    /// Fraction of samples whose predicted label matches.
    pub fn accuracy(&self, data: &[Sample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let mut correct = 0usize;
        for sample in data {
            if self.predict(&sample.features)? == sample.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Trains a fresh model with mini-batch SGD. Initialization and the
/// per-epoch shuffle both come from `tcfg.seed`, so the result is a pure
/// function of `(config, tcfg, data)`.
pub fn train(config: &MlpConfig, tcfg: &TrainConfig, data: &[Sample]) -> Result<MlpModel> {
    config.validate()?;
    tcfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    for sample in data {
        if sample.features.len() != config.input_len {
            return Err(Error::Shape(format!(
                "training sample has {} features, model expects {}",
                sample.features.len(),
                config.input_len
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut model = MlpModel::init_with_rng(config, &mut rng)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(tcfg.batch_size);
    for _ in 0..tcfg.epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, grads) = model.loss_and_grad(&batch, tcfg.l2)?;
            model.sgd_step(&grads, tcfg.learning_rate)?;
        }
    }
    Ok(model)
}

/// Fisher-Yates shuffle driven by the training stream.
fn shuffle(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

/// Numerically stable softmax via max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - max - log_sum).collect()
}

// --- text persistence -------------------------------------------------------
//
// Header line: `mlp <input_len> <hidden_depth> <hidden_len> <activation>
// <output_len>`, then one line per layer holding the row-major weights
// followed by the biases, each printed with 17 significant digits so the
// round trip is exact.

impl MlpModel {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "mlp {} {} {} {} {}\n",
            c.input_len, c.hidden_depth, c.hidden_len, c.activation, c.output_len
        );
        for layer in &self.layers {
            let mut first = true;
            for v in layer.weights.iter().chain(&layer.bias) {
                if !first {
                    out.push(' ');
                }
                out.push_str(&format!("{v:.16e}"));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MlpModel> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty model text".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "mlp" {
            return Err(Error::InvalidInput(format!(
                "bad model header `{header}` (expected `mlp <input> <depth> <hidden> <activation> <output>`)"
            )));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::InvalidInput(format!("bad {what} `{s}` in model header")))
        };
        let config = MlpConfig {
            input_len: parse_usize(fields[1], "input_len")?,
            hidden_depth: parse_usize(fields[2], "hidden_depth")?,
            hidden_len: parse_usize(fields[3], "hidden_len")?,
            activation: fields[4].parse()?,
            output_len: parse_usize(fields[5], "output_len")?,
        };
        config.validate()?;
        let dims = config.layer_dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (idx, pair) in dims.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let line = lines.next().ok_or_else(|| {
                Error::InvalidInput(format!("model text ends before layer {idx}"))
            })?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad parameter `{s}` in layer {idx}")))
                })
                .collect::<Result<_>>()?;
            let expected = in_dim * out_dim + out_dim;
            if values.len() != expected {
                return Err(Error::InvalidInput(format!(
                    "layer {idx} has {} parameters, expected {expected}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "layer {idx} contains non-finite parameters"
                )));
            }
            let (weights, bias) = values.split_at(in_dim * out_dim);
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                weights: weights.to_vec(),
                bias: bias.to_vec(),
            });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::InvalidInput("trailing data after final layer".into()));
        }
        Ok(MlpModel { config, layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_config(input_len: usize, depth: usize, hidden: usize, act: Activation) -> MlpConfig {
        MlpConfig::new(input_len, depth, hidden, act)
    }

    /// Flattens all parameters so finite differences can perturb them one
    /// at a time.
    fn get_params(model: &MlpModel) -> Vec<f64> {
        model
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).cloned())
            .collect()
    }

    fn set_params(model: &mut MlpModel, params: &[f64]) {
        let mut it = params.iter();
        for layer in &mut model.layers {
            for w in &mut layer.weights {
                *w = *it.next().unwrap();
            }
            for b in &mut layer.bias {
                *b = *it.next().unwrap();
            }
        }
        assert!(it.next().is_none());
    }

    /// Independent oracle: central finite differences of the batch loss with
    /// respect to every parameter.
    fn finite_difference_grad(model: &MlpModel, batch: &[Sample], l2: f64, step: f64) -> Vec<f64> {
        let base = get_params(model);
        let mut scratch = model.clone();
        let mut grads = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            set_params(&mut scratch, &plus);
            let (loss_plus, _) = scratch.loss_and_grad(batch, l2).unwrap();
            let mut minus = base.clone();
            minus[i] -= step;
            set_params(&mut scratch, &minus);
            let (loss_minus, _) = scratch.loss_and_grad(batch, l2).unwrap();
            grads.push((loss_plus - loss_minus) / (2.0 * step));
        }
        grads
    }

    fn flatten_grads(grads: &Gradients) -> Vec<f64> {
        grads
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).cloned())
            .collect()
    }

    pub(crate) fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    fn random_batch(rng: &mut ChaCha8Rng, input_len: usize, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let features = (0..input_len).map(|_| rng.random_range(-2.0..2.0)).collect();
                let label = if rng.random_range(0..2) == 0 {
                    Label::Normal
                } else {
                    Label::Abnormal
                };
                Sample::new(features, label)
            })
            .collect()
    }

    #[test]
    fn zero_model_outputs_uniform_probabilities() {
        let config = binary_config(7, 0, 10, Activation::Relu);
        let model = MlpModel::zeros(&config).unwrap();
        let x = vec![1.5, -0.3, 0.0, 2.0, -1.0, 0.25, 4.0];
        let probs = model.predict_proba(&x).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn identity_logits_recover_softmax_arithmetic() {
        // depth-0 identity weights turn the input into the logits directly
        let config = binary_config(2, 0, 10, Activation::Relu);
        let mut model = MlpModel::zeros(&config).unwrap();
        model.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        let probs = model.predict_proba(&[3f64.ln(), 1f64.ln()]).unwrap();
        assert!((probs[0] - 0.75).abs() < 1e-12);
        assert!((probs[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_for_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..200 {
            let config = binary_config(5, i % 3, 8, Activation::ALL[i % 3]);
            let model = MlpModel::init_with_rng(&config, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let probs = model.predict_proba(&x).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} off at iteration {i}");
            assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn uniform_model_loss_is_ln_two() {
        let config = binary_config(3, 0, 10, Activation::Relu);
        let model = MlpModel::zeros(&config).unwrap();
        let batch = vec![
            Sample::new(vec![1.0, 2.0, 3.0], Label::Normal),
            Sample::new(vec![-1.0, 0.0, 4.0], Label::Abnormal),
        ];
        let (loss, _) = model.loss_and_grad(&batch, 0.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_model_has_near_zero_loss() {
        let config = binary_config(1, 0, 10, Activation::Relu);
        let mut model = MlpModel::zeros(&config).unwrap();
        // logit gap of 60 in favour of the true class
        model.layers[0].weights = vec![-30.0, 30.0];
        let batch = vec![Sample::new(vec![1.0], Label::Abnormal)];
        let (loss, _) = model.loss_and_grad(&batch, 0.0).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
    }

    #[test]
    fn loss_and_grad_rejects_empty_batch() {
        let config = binary_config(2, 0, 10, Activation::Relu);
        let model = MlpModel::zeros(&config).unwrap();
        assert!(matches!(
            model.loss_and_grad(&[], 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let config = binary_config(4, 1, 6, Activation::Relu);
        let model = MlpModel::init(&config, 1).unwrap();
        assert!(matches!(model.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..30 {
            let depth = trial % 3;
            let activation = Activation::ALL[trial % 3];
            let config = binary_config(6, depth, 5 + trial % 4, activation);
            let model = MlpModel::init_with_rng(&config, &mut rng).unwrap();
            let batch = random_batch(&mut rng, 6, 4);
            let l2 = if trial % 2 == 0 { 0.0 } else { 0.01 };
            let (_, grads) = model.loss_and_grad(&batch, l2).unwrap();
            let numeric = finite_difference_grad(&model, &batch, l2, 1e-5);
            let err = max_relative_error(&flatten_grads(&grads), &numeric);
            let tol = if activation == Activation::Gelu { 1e-3 } else { 1e-4 };
            assert!(
                err < tol,
                "trial {trial}: gradient error {err} exceeds {tol} (depth {depth}, {activation})"
            );
        }
    }

    #[test]
    fn activation_values_match_their_definitions() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Elu.apply(0.0), 0.0);
        assert!((Activation::Elu.apply(-30.0) + 1.0).abs() < 1e-12);
        assert_eq!(Activation::Gelu.apply(0.0), 0.0);
        // gelu approaches identity for large x, zero for very negative x
        assert!((Activation::Gelu.apply(10.0) - 10.0).abs() < 1e-9);
        assert!(Activation::Gelu.apply(-10.0).abs() < 1e-9);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let points = [-2.5, -1.0, -0.1, 0.1, 0.7, 1.9, 3.0];
        let h = 1e-6;
        for act in Activation::ALL {
            for &x in &points {
                let numeric = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let analytic = act.derivative(x);
                assert!(
                    (numeric - analytic).abs() < 1e-6,
                    "{act} derivative mismatch at {x}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn sgd_step_with_zero_rate_is_identity() {
        let config = binary_config(3, 1, 5, Activation::Elu);
        let mut model = MlpModel::init(&config, 3).unwrap();
        let before = model.clone();
        let batch = vec![Sample::new(vec![1.0, -1.0, 0.5], Label::Normal)];
        let (_, grads) = model.loss_and_grad(&batch, 0.0).unwrap();
        model.sgd_step(&grads, 0.0).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn sgd_step_applies_the_update_rule() {
        let config = binary_config(1, 0, 10, Activation::Relu);
        let mut model = MlpModel::zeros(&config).unwrap();
        model.layers[0].weights = vec![1.0, 1.0];
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].weights = vec![2.0, 0.0];
        model.sgd_step(&grads, 0.1).unwrap();
        assert!((model.layers[0].weights[0] - 0.8).abs() < 1e-15);
        assert_eq!(model.layers[0].weights[1], 1.0);
    }

    #[test]
    fn two_steps_equal_one_summed_step_when_gradients_are_fixed() {
        let config = binary_config(2, 0, 10, Activation::Relu);
        let mut a = MlpModel::zeros(&config).unwrap();
        let mut g1 = Gradients::zeros_like(&a);
        g1.layers[0].weights = vec![1.0, -2.0, 0.5, 3.0];
        let mut g2 = Gradients::zeros_like(&a);
        g2.layers[0].weights = vec![-0.5, 1.0, 2.0, 0.0];
        let mut b = a.clone();
        a.sgd_step(&g1, 0.1).unwrap();
        a.sgd_step(&g2, 0.1).unwrap();
        let mut summed = Gradients::zeros_like(&b);
        for i in 0..4 {
            summed.layers[0].weights[i] = g1.layers[0].weights[i] + g2.layers[0].weights[i];
        }
        b.sgd_step(&summed, 0.1).unwrap();
        for i in 0..4 {
            assert!((a.layers[0].weights[i] - b.layers[0].weights[i]).abs() < 1e-15);
        }
    }

    /// Brute-force separability check, independent of the MLP: a perceptron
    /// run on the same data must find a separating line.
    fn perceptron_separates(data: &[Sample]) -> bool {
        let mut w = [0.0f64; 3];
        for _ in 0..1000 {
            let mut clean = true;
            for s in data {
                let x = [s.features[0], s.features[1], 1.0];
                let y = if s.label == Label::Abnormal { 1.0 } else { -1.0 };
                let pred = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
                if y * pred <= 0.0 {
                    for i in 0..3 {
                        w[i] += y * x[i];
                    }
                    clean = false;
                }
            }
            if clean {
                return true;
            }
        }
        false
    }

    #[test]
    fn training_fits_a_separable_toy_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut data = Vec::new();
        for _ in 0..60 {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            data.push(Sample::new(vec![x + 2.0, y], Label::Abnormal));
            data.push(Sample::new(vec![x - 2.0, y], Label::Normal));
        }
        assert!(perceptron_separates(&data), "toy set should be separable");
        let config = binary_config(2, 0, 10, Activation::Relu);
        let model = train(&config, &TrainConfig::default(), &data).unwrap();
        assert!(model.accuracy(&data).unwrap() >= 0.95);
    }

    #[test]
    fn zero_epochs_returns_the_initialized_model() {
        let config = binary_config(3, 1, 6, Activation::Relu);
        let tcfg = TrainConfig {
            epochs: 0,
            seed: 99,
            ..TrainConfig::default()
        };
        let data = vec![
            Sample::new(vec![0.0, 1.0, 2.0], Label::Normal),
            Sample::new(vec![1.0, 0.0, 2.0], Label::Abnormal),
        ];
        let trained = train(&config, &tcfg, &data).unwrap();
        let fresh = MlpModel::init(&config, 99).unwrap();
        assert_eq!(trained, fresh);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_batch(&mut rng, 4, 40);
        let config = binary_config(4, 1, 8, Activation::Gelu);
        let tcfg = TrainConfig {
            epochs: 5,
            seed: 1234,
            ..TrainConfig::default()
        };
        let a = train(&config, &tcfg, &data).unwrap();
        let b = train(&config, &tcfg, &data).unwrap();
        assert_eq!(a, b);
        let c = train(&config, &tcfg.with_seed(4321), &data).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_batch_convex_loss_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = random_batch(&mut rng, 3, 32);
        let config = binary_config(3, 0, 10, Activation::Relu);
        let mut model = MlpModel::init(&config, 0).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let (loss, grads) = model.loss_and_grad(&data, 0.01).unwrap();
            assert!(loss <= last + 1e-12, "loss rose from {last} to {loss}");
            last = loss;
            model.sgd_step(&grads, 0.05).unwrap();
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let config = binary_config(4, 2, 7, Activation::Elu);
        let model = MlpModel::init(&config, 8).unwrap();
        let text = model.to_text();
        let restored = MlpModel::from_text(&text).unwrap();
        assert_eq!(model, restored);
        assert_eq!(restored.to_text(), text);
    }

    #[test]
    fn from_text_rejects_malformed_input() {
        assert!(MlpModel::from_text("").is_err());
        assert!(MlpModel::from_text("mlp 2 0 10 relu").is_err());
        assert!(MlpModel::from_text("mlp 2 0 10 swish 2\n0 0 0 0 0 0\n").is_err());
        // wrong parameter count for a 2->2 layer
        assert!(MlpModel::from_text("mlp 2 0 10 relu 2\n1.0 2.0\n").is_err());
        let good = "mlp 2 0 10 relu 2\n1.0 2.0 3.0 4.0 0.0 0.0\n";
        assert!(MlpModel::from_text(good).is_ok());
        let trailing = format!("{good}5.0\n");
        assert!(MlpModel::from_text(&trailing).is_err());
    }

    #[test]
    fn config_validation_rejects_out_of_range_shapes() {
        assert!(binary_config(0, 0, 10, Activation::Relu).validate().is_err());
        assert!(binary_config(3, 5, 10, Activation::Relu).validate().is_err());
        assert!(binary_config(3, 1, 4, Activation::Relu).validate().is_err());
        assert!(binary_config(3, 1, 21, Activation::Relu).validate().is_err());
        assert!(binary_config(3, 0, 1, Activation::Relu).validate().is_ok());
    }
}
