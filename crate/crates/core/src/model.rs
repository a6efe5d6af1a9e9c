//! Feed-forward classifiers built from `Linear` and `ReLU` layers, with a
//! hand-written reverse pass.
//!
//! Weight matrices are stored `[out, in]`. A "layer id" always refers to the
//! position of a `Linear` layer among the linear layers of the model, which is
//! how masks, partitions and checkpoints address weights.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use crate::error::{GapError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub type LayerId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Kaiming-uniform (fan-in) weights and zero bias.
    pub fn kaiming(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weight.data_mut() {
            *w = dist.sample(rng);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossHead {
    /// Mean softmax cross-entropy over integer class labels.
    SoftmaxCrossEntropy,
    /// Mean over the batch of the summed squared error.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concat(parts: &[&Targets]) -> Result<Self> {
        match parts.first() {
            Some(Targets::Labels(_)) => {
                let mut out = Vec::new();
                for p in parts {
                    match p {
                        Targets::Labels(l) => out.extend_from_slice(l),
                        Targets::Values(_) => {
                            return Err(GapError::Usage("mixed target kinds".into()))
                        }
                    }
                }
                Ok(Targets::Labels(out))
            }
            Some(Targets::Values(_)) => {
                let mut tensors = Vec::new();
                for p in parts {
                    match p {
                        Targets::Values(v) => tensors.push(v),
                        Targets::Labels(_) => {
                            return Err(GapError::Usage("mixed target kinds".into()))
                        }
                    }
                }
                Ok(Targets::Values(Tensor::concat_rows(&tensors)?))
            }
            None => Err(GapError::Usage("no targets to concatenate".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// One gradient pair per linear layer, in layer-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LinearGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .linears()
                .map(|l| LinearGrad {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weight.data().iter().chain(g.bias.data()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Activations recorded by [`Model::forward`] and consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_shapes: Vec<Option<(usize, usize)>>,
    inputs: Vec<Tensor>,
    output_grad: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub head: LossHead,
}

impl Model {
    pub fn new(layers: Vec<Layer>, head: LossHead) -> Result<Self> {
        let mut width: Option<usize> = None;
        let mut any_linear = false;
        for layer in &layers {
            if let Layer::Linear(l) = layer {
                if l.weight.shape().len() != 2 || l.bias.shape() != [l.outputs()] {
                    return Err(GapError::Shape(
                        "linear layer needs [out,in] weight and [out] bias".into(),
                    ));
                }
                if let Some(w) = width {
                    if w != l.inputs() {
                        return Err(GapError::Shape(format!(
                            "layer expects {} inputs but previous layer produces {w}",
                            l.inputs()
                        )));
                    }
                }
                width = Some(l.outputs());
                any_linear = true;
            }
        }
        if !any_linear {
            return Err(GapError::Shape("model has no linear layer".into()));
        }
        Ok(Self { layers, head })
    }

    /// `Linear -> ReLU -> ... -> Linear` with Kaiming-uniform weights.
    pub fn mlp(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::mlp_with(sizes, |i, o| Linear::kaiming(i, o, rng))
    }

    pub fn mlp_zeros(sizes: &[usize]) -> Result<Self> {
        Self::mlp_with(sizes, Linear::zeros)
    }

    fn mlp_with(sizes: &[usize], mut make: impl FnMut(usize, usize) -> Linear) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(GapError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut layers = Vec::new();
        for (k, pair) in sizes.windows(2).enumerate() {
            if k > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(Layer::Linear(make(pair[0], pair[1])));
        }
        Self::new(layers, LossHead::SoftmaxCrossEntropy)
    }

    pub fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Linear(lin) => Some(lin),
            Layer::Relu => None,
        })
    }

    pub fn linears_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Linear(lin) => Some(lin),
            Layer::Relu => None,
        })
    }

    pub fn num_linear(&self) -> usize {
        self.linears().count()
    }

    pub fn linear(&self, id: LayerId) -> Option<&Linear> {
        self.linears().nth(id)
    }

    pub fn linear_mut(&mut self, id: LayerId) -> Option<&mut Linear> {
        self.linears_mut().nth(id)
    }

    pub fn input_dim(&self) -> usize {
        self.linears().next().map(Linear::inputs).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.linears().last().map(Linear::outputs).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.linears().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn layer_shapes(&self) -> Vec<Option<(usize, usize)>> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Linear(lin) => Some((lin.outputs(), lin.inputs())),
                Layer::Relu => None,
            })
            .collect()
    }

    /// Runs the network and returns raw outputs (logits) for a `[batch, in]` input.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, None)
    }

    fn run(&self, x: &Tensor, mut record: Option<&mut Vec<Tensor>>) -> Result<Tensor> {
        if x.shape().len() != 2 || x.row_len() != self.input_dim() {
            return Err(GapError::Shape(format!(
                "input {:?} does not match model input width {}",
                x.shape(),
                self.input_dim()
            )));
        }
        let mut act = x.clone();
        for layer in &self.layers {
            if let Some(rec) = record.as_deref_mut() {
                rec.push(act.clone());
            }
            act = match layer {
                Layer::Linear(l) => linear_forward(l, &act),
                Layer::Relu => {
                    let mut out = act;
                    for v in out.data_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    out
                }
            };
        }
        if !act.is_finite() {
            return Err(GapError::Numeric("non-finite activation".into()));
        }
        Ok(act)
    }

    /// Mean loss over the batch plus the activation record for [`Model::backward`].
    pub fn forward(&self, x: &Tensor, targets: &Targets) -> Result<(f64, ForwardCache)> {
        if x.shape().is_empty() || x.rows() != targets.len() {
            return Err(GapError::Shape(format!(
                "batch has {} rows but {} targets",
                x.shape().first().copied().unwrap_or(0),
                targets.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let out = self.run(x, Some(&mut inputs))?;
        let (loss, output_grad) = loss_and_grad(self.head, &out, targets)?;
        if !loss.is_finite() {
            return Err(GapError::Numeric("non-finite loss".into()));
        }
        Ok((
            loss,
            ForwardCache {
                layer_shapes: self.layer_shapes(),
                inputs,
                output_grad,
            },
        ))
    }

    pub fn loss(&self, x: &Tensor, targets: &Targets) -> Result<f64> {
        let out = self.predict(x)?;
        if out.rows() != targets.len() {
            return Err(GapError::Shape("target count mismatch".into()));
        }
        let (loss, _) = loss_and_grad(self.head, &out, targets)?;
        Ok(loss)
    }

    /// Exact gradients of the mean loss recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache) -> Result<Gradients> {
        if cache.layer_shapes != self.layer_shapes() || cache.inputs.len() != self.layers.len() {
            return Err(GapError::Usage(
                "forward cache does not belong to this model".into(),
            ));
        }
        let mut upstream = cache.output_grad.clone();
        let mut grads = Vec::new();
        for (layer, input) in self.layers.iter().zip(&cache.inputs).rev() {
            match layer {
                Layer::Relu => {
                    for (g, &a) in upstream.data_mut().iter_mut().zip(input.data()) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Layer::Linear(l) => {
                    let (grad, down) = linear_backward(l, input, &upstream);
                    grads.push(grad);
                    upstream = down;
                }
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn loss_and_gradients(&self, x: &Tensor, targets: &Targets) -> Result<(f64, Gradients)> {
        let (loss, cache) = self.forward(x, targets)?;
        Ok((loss, self.backward(&cache)?))
    }
}

fn linear_forward(l: &Linear, x: &Tensor) -> Tensor {
    let (batch, inp, out) = (x.rows(), l.inputs(), l.outputs());
    let w = l.weight.data();
    let b = l.bias.data();
    let mut z = vec![0.0; batch * out];
    for r in 0..batch {
        let xr = x.row(r);
        let zr = &mut z[r * out..(r + 1) * out];
        for o in 0..out {
            let wr = &w[o * inp..(o + 1) * inp];
            let mut acc = 0.0;
            for i in 0..inp {
                acc += xr[i] * wr[i];
            }
            zr[o] = acc + b[o];
        }
    }
    Tensor::new(vec![batch, out], z).expect("linear output shape")
}

fn linear_backward(l: &Linear, x: &Tensor, dz: &Tensor) -> (LinearGrad, Tensor) {
    let (batch, inp, out) = (x.rows(), l.inputs(), l.outputs());
    let w = l.weight.data();
    let mut dw = vec![0.0; out * inp];
    let mut db = vec![0.0; out];
    let mut dx = vec![0.0; batch * inp];
    for r in 0..batch {
        let xr = x.row(r);
        let dzr = dz.row(r);
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for o in 0..out {
            let g = dzr[o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let dwr = &mut dw[o * inp..(o + 1) * inp];
            let wr = &w[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    (
        LinearGrad {
            weight: Tensor::new(vec![out, inp], dw).expect("weight grad shape"),
            bias: Tensor::new(vec![out], db).expect("bias grad shape"),
        },
        Tensor::new(vec![batch, inp], dx).expect("input grad shape"),
    )
}

/// Mean loss and its gradient with respect to the network outputs.
fn loss_and_grad(head: LossHead, out: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    let batch = out.rows();
    let width = out.row_len();
    let scale = 1.0 / batch as f64;
    let mut grad = vec![0.0; batch * width];
    let mut total = 0.0;
    match (head, targets) {
        (LossHead::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
            for (r, &y) in labels.iter().enumerate() {
                if y >= width {
                    return Err(GapError::Shape(format!(
                        "label {y} outside {width} classes"
                    )));
                }
                let z = out.row(r);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let log_sum = max + sum.ln();
                total += log_sum - z[y];
                let g = &mut grad[r * width..(r + 1) * width];
                for c in 0..width {
                    g[c] = (z[c] - log_sum).exp() * scale;
                }
                g[y] -= scale;
            }
        }
        (LossHead::SquaredError, Targets::Values(t)) => {
            if t.shape() != out.shape() {
                return Err(GapError::Shape(format!(
                    "targets {:?} vs outputs {:?}",
                    t.shape(),
                    out.shape()
                )));
            }
            for (k, (&o, &y)) in out.data().iter().zip(t.data()).enumerate() {
                let d = o - y;
                total += d * d;
                grad[k] = 2.0 * d * scale;
            }
        }
        _ => return Err(GapError::Usage("targets do not match the loss head".into())),
    }
    Ok((total * scale, Tensor::new(vec![batch, width], grad)?))
}

/// Central-difference estimate of every parameter's gradient.
pub fn finite_diff_grad(
    model: &Model,
    x: &Tensor,
    targets: &Targets,
    epsilon: f64,
) -> Result<Gradients> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(GapError::Usage("epsilon must be positive".into()));
    }
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    for id in 0..model.num_linear() {
        for which in 0..2 {
            let n = {
                let l = probe.linear(id).expect("layer id");
                if which == 0 {
                    l.weight.len()
                } else {
                    l.bias.len()
                }
            };
            for k in 0..n {
                let orig = *param_mut(&mut probe, id, which, k);
                *param_mut(&mut probe, id, which, k) = orig + epsilon;
                let up = probe.loss(x, targets)?;
                *param_mut(&mut probe, id, which, k) = orig - epsilon;
                let down = probe.loss(x, targets)?;
                *param_mut(&mut probe, id, which, k) = orig;
                *param_mut_grad(&mut grads, id, which, k) = (up - down) / (2.0 * epsilon);
            }
        }
    }
    Ok(grads)
}

fn param_mut(m: &mut Model, id: LayerId, which: usize, k: usize) -> &mut f64 {
    let l = m.linear_mut(id).expect("layer id");
    let t = if which == 0 {
        &mut l.weight
    } else {
        &mut l.bias
    };
    &mut t.data_mut()[k]
}

fn param_mut_grad(g: &mut Gradients, id: LayerId, which: usize, k: usize) -> &mut f64 {
    let l = &mut g.layers[id];
    let t = if which == 0 {
        &mut l.weight
    } else {
        &mut l.bias
    };
    &mut t.data_mut()[k]
}

/// Fraction of rows whose arg-max output equals the label.
pub fn accuracy(model: &Model, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let out = model.predict(x)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, &y)| argmax(out.row(*r)) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Draws a random label vector; used by tests and examples.
pub fn random_labels(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}
