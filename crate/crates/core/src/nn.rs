//! Dense networks with manual backpropagation, label-smoothed cross-entropy
//! and a clipped, step-scheduled Adam optimizer. Everything runs in `f64`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer `a = act(W · drop(x) + b)`.
///
/// Dropout acts on the layer input, so a rate on the first layer drops raw
/// features and a rate on a later layer drops the previous layer's output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
            dropout_rate: 0.0,
        }
    }

    /// He-style uniform init: `W ~ U(-√(6/in), √(6/in))`, zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weights,
            ..Self::zeros(in_dim, out_dim, activation)
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::Dimension(format!(
                "layer {}→{} has {} weights and {} biases",
                self.in_dim,
                self.out_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(())
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Intermediate values of one forward pass, consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input of each layer after dropout.
    inputs: Vec<Vec<f64>>,
    /// Dropout scale per input element (0 or 1/(1-p)); `None` when inactive.
    masks: Vec<Option<Vec<f64>>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// Gradient with respect to the model input.
    pub input: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            input: vec![0.0; model.input_dim()],
        }
    }

    /// `self += scale * other`.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(&mut a.weights, &b.weights, scale);
            axpy(&mut a.bias, &b.bias, scale);
        }
        axpy(&mut self.input, &other.input, scale);
    }

    /// Parameter gradient slices in the order of [`MlpModel::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    pub mode: Mode,
    /// Bumped on every parameter mutation so stale caches can be detected.
    generation: u64,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for (k, w) in layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    w[0].out_dim,
                    k + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(Self {
            layers,
            mode: Mode::Train,
            generation: 0,
        })
    }

    /// Builds a chain of He-initialised layers. `dims` has one more entry
    /// than `activations`; `dropout[k]` applies to the input of layer `k`.
    pub fn build<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        dropout: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() != activations.len() + 1 || dropout.len() != activations.len() {
            return Err(Error::Dimension(format!(
                "{} dims, {} activations, {} dropout rates",
                dims.len(),
                activations.len(),
                dropout.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .zip(dropout)
            .map(|((d, &act), &p)| DenseLayer::he_uniform(d[0], d[1], act, rng).with_dropout(p))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Mutable parameter tensors, `[W0, b0, W1, b1, ...]`.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut DenseLayer {
        self.generation += 1;
        &mut self.layers[k]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    /// Forward pass honouring `self.mode`; the RNG is only drawn from for
    /// dropout in training mode.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            generation: self.generation,
            inputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut a = x.to_vec();
        for layer in &self.layers {
            let p = layer.dropout_rate;
            let mask = if self.mode == Mode::Train && p > 0.0 {
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..a.len())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            } else {
                None
            };
            let z = layer.affine(&a);
            let out: Vec<f64> = z.iter().map(|&z| layer.activation.apply(z)).collect();
            cache.inputs.push(std::mem::replace(&mut a, out.clone()));
            cache.masks.push(mask);
            cache.pre.push(z);
            cache.post.push(out);
        }
        Ok((a, cache))
    }

    /// Deterministic evaluation-mode forward pass, independent of `self.mode`.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer
                .affine(&a)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(a)
    }

    /// Reverse-mode gradients of a scalar loss given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Gradients> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from generation {} used with model generation {}",
                cache.generation, self.generation
            )));
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "gradient has {} entries, model outputs {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta_a = grad_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz: Vec<f64> = delta_a
                .iter()
                .zip(&cache.pre[k])
                .zip(&cache.post[k])
                .map(|((g, &z), &a)| g * layer.activation.derivative(z, a))
                .collect();
            let x = &cache.inputs[k];
            let mut gw = vec![0.0; layer.weights.len()];
            for (row, &d) in gw.chunks_exact_mut(layer.in_dim).zip(&dz) {
                row.iter_mut().zip(x).for_each(|(g, x)| *g = d * x);
            }
            let mut dx = vec![0.0; layer.in_dim];
            for (row, &d) in layer.weights.chunks_exact(layer.in_dim).zip(&dz) {
                axpy(&mut dx, row, d);
            }
            if let Some(mask) = &cache.masks[k] {
                dx.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            grads.push(LayerGrad {
                weights: gw,
                bias: dz,
            });
            delta_a = dx;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta_a,
        })
    }

    /// Writes every tensor as `name rows cols v...` with the given prefix.
    pub fn write_tensors(&self, prefix: &str, out: &mut String) {
        for (k, l) in self.layers.iter().enumerate() {
            write_tensor(out, &format!("{prefix}{k}.weight"), l.out_dim, l.in_dim, &l.weights);
            write_tensor(out, &format!("{prefix}{k}.bias"), l.out_dim, 1, &l.bias);
        }
    }

    /// Loads parameters written by [`write_tensors`](Self::write_tensors)
    /// into a model of identical shape.
    pub fn read_tensors(&mut self, prefix: &str, tensors: &[Tensor]) -> Result<()> {
        let n = self.layers.len();
        for k in 0..n {
            let (rows, cols) = (self.layers[k].out_dim, self.layers[k].in_dim);
            let w = find_tensor(tensors, &format!("{prefix}{k}.weight"), rows, cols)?;
            let b = find_tensor(tensors, &format!("{prefix}{k}.bias"), rows, 1)?;
            let layer = self.layer_mut(k);
            layer.weights.copy_from_slice(&w.values);
            layer.bias.copy_from_slice(&b.values);
            layer.validate()?;
        }
        Ok(())
    }
}

/// A named matrix from a parameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Appends `name rows cols v...`; `{:.16e}` keeps 17 significant digits, so
/// values round-trip exactly.
pub fn write_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    debug_assert_eq!(rows * cols, values.len());
    let _ = write!(out, "{name} {rows} {cols}");
    for v in values {
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

pub fn parse_tensors(text: &str) -> Result<Vec<Tensor>> {
    let mut tensors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
        let mut fields = line.split_ascii_whitespace();
        let name = fields.next().ok_or_else(|| bad("missing name"))?.to_string();
        let rows: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad row count"))?;
        let cols: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad column count"))?;
        let values = fields
            .map(|s| s.parse::<f64>().map_err(|_| bad(&format!("bad value {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != rows * cols {
            return Err(bad(&format!(
                "{name} declares {rows}x{cols} but has {} values",
                values.len()
            )));
        }
        tensors.push(Tensor {
            name,
            rows,
            cols,
            values,
        });
    }
    Ok(tensors)
}

pub fn find_tensor<'a>(tensors: &'a [Tensor], name: &str, rows: usize, cols: usize) -> Result<&'a Tensor> {
    let t = tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Parse(format!("missing tensor {name}")))?;
    if t.rows != rows || t.cols != cols {
        return Err(Error::Dimension(format!(
            "tensor {name} is {}x{}, expected {rows}x{cols}",
            t.rows, t.cols
        )));
    }
    Ok(t)
}

/// `ỹ_k = (1−ε)·[k = label] + ε/K`.
pub fn smoothed_targets(label: usize, k: usize, eps: f64) -> Result<Vec<f64>> {
    if label >= k {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {k} classes")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("smoothing {eps} outside [0, 1)")));
    }
    let off = eps / k as f64;
    let mut y = vec![off; k];
    y[label] = 1.0 - eps + off;
    Ok(y)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `−Σ ỹ log p` and its gradient `p − ỹ` with respect to the logits.
pub fn ce_loss(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::Dimension(format!(
            "{} logits, {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (z, y) in logits.iter().zip(targets) {
        let log_p = z - max - log_total;
        loss -= y * log_p;
        grad.push(log_p.exp() - y);
    }
    Ok((loss, grad))
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Adam with global-norm clipping and a step learning-rate schedule.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    /// Epochs (0-based) at which the rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
}

/// Diagnostics from one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub lr: f64,
}

impl AdamState {
    /// Creates zeroed moments for tensors of the given lengths.
    pub fn new(shapes: &[usize], lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        Ok(Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            milestones: vec![30, 60],
            decay: 0.1,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr * self.decay.powi(passed as i32)
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], epoch: usize) -> Result<StepInfo> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Dimension(format!(
                    "tensor {i}: expected {} values, got {} params and {} grads",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        let sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum();
        if !sq.is_finite() {
            return Err(Error::NonFinite("gradient; optimizer step refused".into()));
        }
        let grad_norm = sq.sqrt();
        let scale = if grad_norm > self.clip_norm {
            self.clip_norm / grad_norm
        } else {
            1.0
        };
        self.step += 1;
        let lr = self.lr_at(epoch);
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let g = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(StepInfo { grad_norm, lr })
    }
}

/// Max relative error `|a−n| / max(|a|, |n|, 1e-6)` between analytic
/// gradients and central differences of the cross-entropy loss, over every
/// parameter. The model is evaluated with dropout off.
pub fn gradient_check(model: &MlpModel, x: &[f64], targets: &[f64], h: f64) -> Result<f64> {
    let mut probe = model.clone();
    probe.mode = Mode::Eval;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let (logits, cache) = probe.forward(x, &mut rng)?;
    let (_, g) = ce_loss(&logits, targets)?;
    let analytic = probe.backward(&cache, &g)?;
    let loss = |m: &MlpModel| -> Result<f64> { Ok(ce_loss(&m.infer(x)?, targets)?.0) };
    let mut worst = 0.0f64;
    for (t, grad) in analytic.tensors().iter().enumerate() {
        for i in 0..grad.len() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = loss(&probe)?;
            probe.tensors_mut()[t][i] = orig - h;
            let down = loss(&probe)?;
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grad[i], numeric));
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
