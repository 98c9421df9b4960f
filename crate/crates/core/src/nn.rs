//! Minimal dense feed-forward network: forward/backward passes, inverted
//! dropout, Adam, mini-batch training and a versioned flat serialization.
//!
//! Weights of layer `l` are stored as an `(inputs, outputs)` matrix so a
//! batch `X` (rows are samples) maps to `X · W + b`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::converter::N_PARAMS;
use crate::rng;
use crate::{Error, Result};

pub const NETWORK_FORMAT: &str = "pec-mlp";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean binary cross-entropy; requires a sigmoid output layer.
    BinaryCrossEntropy,
    /// `mean_rows( sum_outputs 0.5 * (o - y)^2 )`.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Layer widths, input first.
    pub sizes: Vec<usize>,
    /// One activation per weight layer.
    pub activations: Vec<Activation>,
    /// Dropout rate applied to the output of each weight layer. The output
    /// layer must have rate 0.
    pub dropout: Vec<f64>,
    pub loss: LossKind,
}

impl NetworkSpec {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>, dropout: Vec<f64>, loss: LossKind) -> Result<Self> {
        let spec = NetworkSpec {
            sizes,
            activations,
            dropout,
            loss,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fully connected stack with one activation for every hidden layer and
    /// a shared hidden dropout rate.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        hidden_dropout: f64,
        loss: LossKind,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut activations = vec![hidden_activation; hidden.len()];
        activations.push(output_activation);
        let mut dropout = vec![hidden_dropout; hidden.len()];
        dropout.push(0.0);
        Self::new(sizes, activations, dropout, loss)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::domain("a network needs at least an input and an output layer"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::domain("layer sizes must be positive"));
        }
        let layers = self.sizes.len() - 1;
        if self.activations.len() != layers || self.dropout.len() != layers {
            return Err(Error::domain(format!(
                "expected {layers} activations and dropout rates"
            )));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::domain("dropout rates must lie in [0, 1)"));
        }
        if self.dropout[layers - 1] != 0.0 {
            return Err(Error::domain("the output layer cannot use dropout"));
        }
        if self.loss == LossKind::BinaryCrossEntropy && self.activations[layers - 1] != Activation::Sigmoid {
            return Err(Error::domain("binary cross-entropy needs a sigmoid output"));
        }
        Ok(())
    }

    /// Extra constraints for networks that consume design points: nine
    /// inputs and at least one hidden layer.
    pub fn validate_design_model(&self) -> Result<()> {
        self.validate()?;
        if self.sizes[0] != N_PARAMS {
            return Err(Error::domain(format!("design models take {N_PARAMS} inputs")));
        }
        if self.sizes.len() < 3 {
            return Err(Error::domain("design models need at least one hidden layer"));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Deterministic inference, dropout disabled.
    Infer,
    /// Training pass with inverted dropout.
    Train,
    /// Inference with dropout kept active (Monte Carlo dropout).
    McSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Activations retained by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer (after dropout of the previous layer).
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    /// Scaled keep-masks of every layer output that used dropout.
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }

    /// Input of layer `l` (activation of layer `l - 1` after dropout).
    pub fn layer_input(&self, l: usize) -> &Array2<f64> {
        &self.inputs[l]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Gradient tensors in parameter order `w0, b0, w1, b1, ...`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl Network {
    /// Kaiming-style uniform initialisation `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`,
    /// zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::seeded(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.num_layers() {
            let (fan_in, fan_out) = (spec.sizes[l], spec.sizes[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || r.random_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Network { spec, weights, biases })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let weights = (0..spec.num_layers())
            .map(|l| Array2::zeros((spec.sizes[l], spec.sizes[l + 1])))
            .collect();
        let biases = (0..spec.num_layers())
            .map(|l| Array1::zeros(spec.sizes[l + 1]))
            .collect();
        Ok(Network { spec, weights, biases })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameter tensors in the order `w0, b0, w1, b1, ...`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter();
        for p in self.parameters_mut() {
            for v in p.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode, rng: &mut impl Rng) -> Result<ForwardCache> {
        if x.ncols() != self.spec.input_size() {
            return Err(Error::domain(format!(
                "network expects {} inputs, got {}",
                self.spec.input_size(),
                x.ncols()
            )));
        }
        let layers = self.spec.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers);
        let mut masks = Vec::with_capacity(layers);
        let mut a = x.to_owned();
        for l in 0..layers {
            let z = a.dot(&self.weights[l]) + &self.biases[l];
            let act = self.spec.activations[l];
            let mut h = z.mapv(|v| act.apply(v));
            let p = self.spec.dropout[l];
            let mask = if p > 0.0 && mode != Mode::Infer {
                let keep = 1.0 / (1.0 - p);
                let m = Array2::from_shape_simple_fn(h.raw_dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
                h *= &m;
                Some(m)
            } else {
                None
            };
            inputs.push(a);
            pre_activations.push(z);
            masks.push(mask);
            a = h;
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
            masks,
            output: a,
        })
    }

    /// Deterministic inference (dropout disabled).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        // No randomness is drawn in inference mode.
        let mut r = rng::seeded(0);
        Ok(self.forward(x, Mode::Infer, &mut r)?.into_output())
    }

    fn check_targets(&self, cache: &ForwardCache, targets: ArrayView2<f64>) -> Result<()> {
        if cache.inputs.len() != self.spec.num_layers() {
            return Err(Error::Usage("forward cache does not belong to this network".into()));
        }
        if targets.dim() != cache.output.dim() {
            return Err(Error::Usage(format!(
                "targets shape {:?} does not match cached output {:?}",
                targets.dim(),
                cache.output.dim()
            )));
        }
        Ok(())
    }

    /// Mean loss of a cached forward pass.
    pub fn loss(&self, cache: &ForwardCache, targets: ArrayView2<f64>) -> Result<f64> {
        self.check_targets(cache, targets)?;
        let n = targets.nrows() as f64;
        let total = match self.spec.loss {
            LossKind::BinaryCrossEntropy => {
                let z = &cache.pre_activations[self.spec.num_layers() - 1];
                // softplus(z) - y * z, the stable form of -[y ln p + (1 - y) ln(1 - p)]
                z.iter()
                    .zip(targets.iter())
                    .map(|(&z, &y)| z.max(0.0) - y * z + (-z.abs()).exp().ln_1p())
                    .sum::<f64>()
            }
            LossKind::SquaredError => cache
                .output
                .iter()
                .zip(targets.iter())
                .map(|(o, y)| 0.5 * (o - y) * (o - y))
                .sum::<f64>(),
        };
        Ok(total / n)
    }

    pub fn backward(&self, cache: &ForwardCache, targets: ArrayView2<f64>) -> Result<Gradients> {
        self.check_targets(cache, targets)?;
        let layers = self.spec.num_layers();
        let n = targets.nrows() as f64;
        let last = layers - 1;
        let mut delta = match self.spec.loss {
            LossKind::BinaryCrossEntropy => (&cache.output - &targets) / n,
            LossKind::SquaredError => {
                let act = self.spec.activations[last];
                let mut d = (&cache.output - &targets) / n;
                d.zip_mut_with(&cache.pre_activations[last], |g, &z| *g *= act.derivative(z));
                d
            }
        };
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = cache.inputs[l].t().dot(&delta).as_standard_layout().into_owned();
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut da = delta.dot(&self.weights[l].t());
                if let Some(m) = &cache.masks[l - 1] {
                    da *= m;
                }
                let act = self.spec.activations[l - 1];
                da.zip_mut_with(&cache.pre_activations[l - 1], |g, &z| *g *= act.derivative(z));
                delta = da;
            }
        }
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            spec: self.spec.clone(),
            params: self.flat_params(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk layout: format tag, version, spec, then every parameter tensor
/// in the order `w0, b0, w1, b1, ...`, weights row-major `(inputs, outputs)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
}

impl NetworkFile {
    pub fn from_network(net: &Network) -> Self {
        NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            spec: net.spec.clone(),
            params: net.flat_params(),
        }
    }

    pub fn into_network(self) -> Result<Network> {
        if self.format != NETWORK_FORMAT || self.version != NETWORK_VERSION {
            return Err(Error::domain(format!(
                "unsupported network file {} v{}",
                self.format, self.version
            )));
        }
        let mut net = Network::zeros(self.spec)?;
        net.set_flat_params(&self.params)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// State for parameter tensors with the given lengths.
    pub fn new(config: AdamConfig, lengths: impl IntoIterator<Item = usize>) -> Self {
        let lengths: Vec<usize> = lengths.into_iter().collect();
        AdamState {
            config,
            first_moment: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_network(net: &Network, config: AdamConfig) -> Self {
        let lengths = net
            .weights
            .iter()
            .zip(&net.biases)
            .flat_map(|(w, b)| [w.len(), b.len()]);
        Self::new(config, lengths)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every tensor.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::domain("parameter, gradient and moment tensor counts differ"));
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::domain("parameter and gradient shapes differ"));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let g = grads.slices();
    state.step(net.parameters_mut(), g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            lr: 0.001,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

/// Loss and (for single-output BCE networks) accuracy at threshold 0.5 in
/// inference mode.
pub fn evaluate(net: &Network, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Option<f64>)> {
    let mut r = rng::seeded(0);
    let cache = net.forward(x, Mode::Infer, &mut r)?;
    let loss = net.loss(&cache, y)?;
    let acc = if net.spec.loss == LossKind::BinaryCrossEntropy && net.spec.output_size() == 1 {
        let hits = cache
            .output
            .iter()
            .zip(y.iter())
            .filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5))
            .count();
        Some(hits as f64 / y.nrows() as f64)
    } else {
        None
    };
    Ok((loss, acc))
}

/// Mini-batch Adam training, reshuffling rows every epoch. Returns per-epoch
/// statistics measured after each epoch.
pub fn train(
    net: &mut Network,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
    valid: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
) -> Result<Vec<EpochStats>> {
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(Error::domain(
            "feature and target row counts must match and be non-zero",
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    let mut r = rng::seeded(cfg.seed);
    let mut adam = AdamState::for_network(net, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let cache = net.forward(xb.view(), Mode::Train, &mut r)?;
            let grads = net.backward(&cache, yb.view())?;
            adam_step(net, &grads, &mut adam)?;
        }
        let (train_loss, train_accuracy) = evaluate(net, x, y)?;
        let (valid_loss, valid_accuracy) = match valid {
            Some((vx, vy)) => {
                let (l, a) = evaluate(net, vx, vy)?;
                (Some(l), a)
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            valid_loss,
            valid_accuracy,
        });
    }
    Ok(history)
}
