//! Masked SGD with momentum and weight decay, plus learning-rate schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::model::{Gradients, Model};
use crate::sparsity::MaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant,
    /// Linear warm-up over `warmup_epochs`, then cosine annealing towards zero.
    Cosine {
        warmup_epochs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(GapError::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(GapError::Config(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(GapError::Config(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Learning rate for `epoch` of a phase lasting `total_epochs`.
pub fn lr_at(opt: &OptimizerConfig, epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(GapError::Usage("schedule needs at least one epoch".into()));
    }
    if epoch >= total_epochs {
        return Err(GapError::Usage(format!(
            "epoch {epoch} outside 0..{total_epochs}"
        )));
    }
    match opt.schedule {
        LrSchedule::Constant => Ok(opt.lr),
        LrSchedule::Cosine { warmup_epochs } => {
            if epoch < warmup_epochs {
                return Ok(opt.lr * (epoch + 1) as f64 / warmup_epochs as f64);
            }
            let span = total_epochs - warmup_epochs;
            let progress = (epoch - warmup_epochs) as f64 / span as f64;
            Ok(opt.lr * 0.5 * (1.0 + (PI * progress).cos()))
        }
    }
}

/// Momentum buffers, one pair per linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    weight: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(model: &Model) -> Self {
        Self {
            weight: model.linears().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: model.linears().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            v.fill(0.0);
        }
    }

    pub fn weight_buffer(&self, id: usize) -> &[f64] {
        &self.weight[id]
    }
}

/// One masked update. Entries with a zero mask end the step with weight,
/// momentum and update all exactly zero; biases are never masked or decayed.
pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    masks: &MaskSet,
    opt: &OptimizerConfig,
    lr_now: f64,
    state: &mut SgdState,
) -> Result<()> {
    if masks.len() != model.num_linear() {
        return Err(GapError::Usage(format!(
            "{} masks for {} linear layers",
            masks.len(),
            model.num_linear()
        )));
    }
    step_impl(model, grads, Some(masks), opt, lr_now, state)
}

/// Plain (unmasked) SGD with the same update rule.
pub fn sgd_step_dense(
    model: &mut Model,
    grads: &Gradients,
    opt: &OptimizerConfig,
    lr_now: f64,
    state: &mut SgdState,
) -> Result<()> {
    step_impl(model, grads, None, opt, lr_now, state)
}

fn step_impl(
    model: &mut Model,
    grads: &Gradients,
    masks: Option<&MaskSet>,
    opt: &OptimizerConfig,
    lr_now: f64,
    state: &mut SgdState,
) -> Result<()> {
    if lr_now.is_nan() || lr_now <= 0.0 {
        return Err(GapError::Usage(format!(
            "learning rate must be positive, got {lr_now}"
        )));
    }
    if grads.layers.len() != model.num_linear() || state.weight.len() != model.num_linear() {
        return Err(GapError::Usage(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    let mu = opt.momentum;
    let wd = opt.weight_decay;
    for (id, layer) in model.linears_mut().enumerate() {
        let g = &grads.layers[id];
        if g.weight.shape() != layer.weight.shape() || g.bias.shape() != layer.bias.shape() {
            return Err(GapError::Usage(format!(
                "gradient shape mismatch in layer {id}"
            )));
        }
        let mask = match masks {
            Some(ms) => {
                let m = &ms.masks()[id];
                if m.len() != layer.weight.len() {
                    return Err(GapError::Usage(format!(
                        "mask shape mismatch in layer {id}"
                    )));
                }
                Some(m.bits())
            }
            None => None,
        };
        let w = layer.weight.data_mut();
        let v = &mut state.weight[id];
        for k in 0..w.len() {
            if let Some(bits) = mask {
                if !bits[k] {
                    w[k] = 0.0;
                    v[k] = 0.0;
                    continue;
                }
            }
            let d = g.weight.data()[k] + wd * w[k];
            v[k] = mu * v[k] + d;
            w[k] -= lr_now * v[k];
        }
        let b = layer.bias.data_mut();
        let vb = &mut state.bias[id];
        for k in 0..b.len() {
            vb[k] = mu * vb[k] + g.bias.data()[k];
            b[k] -= lr_now * vb[k];
        }
    }
    Ok(())
}
