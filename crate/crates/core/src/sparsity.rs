//! Binary masks and the magnitude prune / grow operators.
//!
//! Every linear layer of a model carries a mask congruent with its weight
//! matrix. Layers listed in [`SparsityPolicy::exempt_layers`] keep an all-ones
//! mask and are skipped by every pruning operator. Biases are never masked.
//!
//! Pruning works on *units*: single weights for [`Granularity::Element`], or
//! runs of up to `width` consecutive weights within a row for
//! [`Granularity::Block`] (a row whose length is not a multiple of the width
//! ends in one short block). A unit's score is the L1 norm of its weights.
//! The `k = round(r * units)` lowest-scoring units are pruned, where ties go
//! to units that are already inactive and then to the lower flat index.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::model::{LayerId, Model};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl Mask {
    pub fn dense(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            bits: vec![true; n],
        }
    }

    pub fn from_bits(shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != bits.len() {
            return Err(GapError::Shape(format!(
                "mask shape {shape:?} does not hold {} bits",
                bits.len()
            )));
        }
        Ok(Self { shape, bits })
    }

    /// Builds a mask from 0/1 integers, mostly for tests and examples.
    pub fn from_ones(shape: Vec<usize>, values: &[u8]) -> Result<Self> {
        Self::from_bits(shape, values.iter().map(|&v| v != 0).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn active(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn zeros(&self) -> usize {
        self.len() - self.active()
    }

    pub fn is_dense(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn sparsity(&self) -> f64 {
        self.zeros() as f64 / self.len() as f64
    }

    pub fn as_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }
}

/// One mask per linear layer, indexed by layer id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    masks: Vec<Mask>,
}

impl MaskSet {
    pub fn new(masks: Vec<Mask>) -> Self {
        Self { masks }
    }

    pub fn dense_for(model: &Model) -> Self {
        Self {
            masks: model
                .linears()
                .map(|l| Mask::dense(l.weight.shape().to_vec()))
                .collect(),
        }
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn mask(&self, id: LayerId) -> &Mask {
        &self.masks[id]
    }

    pub fn mask_mut(&mut self, id: LayerId) -> &mut Mask {
        &mut self.masks[id]
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Checks that every mask is congruent with the matching weight matrix.
    pub fn check_aligned(&self, model: &Model) -> Result<()> {
        if self.masks.len() != model.num_linear() {
            return Err(GapError::Shape(format!(
                "{} masks for {} linear layers",
                self.masks.len(),
                model.num_linear()
            )));
        }
        for (id, (m, l)) in self.masks.iter().zip(model.linears()).enumerate() {
            if m.shape() != l.weight.shape() {
                return Err(GapError::Shape(format!(
                    "mask {id} has shape {:?}, weight has {:?}",
                    m.shape(),
                    l.weight.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Every scoped layer is pruned to the same ratio.
    Uniform,
    /// One magnitude cutoff across all scoped layers.
    NonUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Element,
    /// Runs of `width` consecutive weights along a row (1 x width blocks).
    Block(usize),
}

pub const DEFAULT_BLOCK_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPolicy {
    pub ratio: f64,
    pub distribution: Distribution,
    pub granularity: Granularity,
    pub exempt_layers: BTreeSet<LayerId>,
}

impl SparsityPolicy {
    pub fn uniform(ratio: f64) -> Self {
        Self {
            ratio,
            distribution: Distribution::Uniform,
            granularity: Granularity::Element,
            exempt_layers: BTreeSet::new(),
        }
    }

    pub fn non_uniform(ratio: f64) -> Self {
        Self {
            distribution: Distribution::NonUniform,
            ..Self::uniform(ratio)
        }
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn with_exempt(mut self, layers: impl IntoIterator<Item = LayerId>) -> Self {
        self.exempt_layers = layers.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(GapError::Config(format!(
                "sparsity ratio {} outside [0,1)",
                self.ratio
            )));
        }
        if self.granularity == Granularity::Block(0) {
            return Err(GapError::Config("block width must be positive".into()));
        }
        Ok(())
    }

    /// Layer ids that pruning may touch.
    pub fn prunable_layers(&self, model: &Model) -> Vec<LayerId> {
        (0..model.num_linear())
            .filter(|id| !self.exempt_layers.contains(id))
            .collect()
    }

    pub fn is_exempt(&self, id: LayerId) -> bool {
        self.exempt_layers.contains(&id)
    }
}

/// `round(r * n)` with halves rounded up.
pub fn prune_count(ratio: f64, n: usize) -> usize {
    let k = (ratio * n as f64 + 0.5).floor() as usize;
    k.min(n)
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    layer: LayerId,
    start: usize,
    end: usize,
}

fn layer_units(id: LayerId, shape: &[usize], granularity: Granularity) -> Vec<Unit> {
    let (rows, cols) = (shape[0], shape[1..].iter().product::<usize>());
    let width = match granularity {
        Granularity::Element => 1,
        Granularity::Block(w) => w,
    };
    let mut units = Vec::with_capacity(rows * cols.div_ceil(width));
    for r in 0..rows {
        let mut c = 0;
        while c < cols {
            let end = (c + width).min(cols);
            units.push(Unit {
                layer: id,
                start: r * cols + c,
                end: r * cols + end,
            });
            c = end;
        }
    }
    units
}

/// Number of prune units in a layer of the given shape.
pub fn unit_count(shape: &[usize], granularity: Granularity) -> usize {
    let cols: usize = shape[1..].iter().product();
    let width = match granularity {
        Granularity::Element => 1,
        Granularity::Block(w) => w,
    };
    shape[0] * cols.div_ceil(width)
}

fn scoped_layers(
    model: &Model,
    masks: &MaskSet,
    policy: &SparsityPolicy,
    scope: &[LayerId],
) -> Result<Vec<LayerId>> {
    policy.validate()?;
    masks.check_aligned(model)?;
    if scope.is_empty() {
        return Err(GapError::Config("empty pruning scope".into()));
    }
    let mut ids: Vec<LayerId> = scope.to_vec();
    ids.sort_unstable();
    ids.dedup();
    for &id in &ids {
        if id >= model.num_linear() {
            return Err(GapError::Config(format!("layer {id} not in model")));
        }
    }
    ids.retain(|id| !policy.is_exempt(*id));
    Ok(ids)
}

/// Outcome of one [`arg_prune_to`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub layers: Vec<LayerId>,
    pub pruned_weights: usize,
    /// Relative squared error of the new mask against the pre-prune weights
    /// of the scope; `None` when those weights were all zero.
    pub delta_sq: Option<f64>,
}

/// Magnitude pruning of the scoped layers to `policy.ratio`: pruned weights
/// are set to exactly zero, kept weights are left untouched, and the scoped
/// masks are rewritten.
pub fn arg_prune_to(
    model: &mut Model,
    masks: &mut MaskSet,
    policy: &SparsityPolicy,
    scope: &[LayerId],
) -> Result<PruneReport> {
    let ids = scoped_layers(model, masks, policy, scope)?;
    let mut groups: Vec<Vec<(f64, bool, Unit)>> = Vec::new();
    let mut current = Vec::new();
    for &id in &ids {
        let layer = model.linear(id).expect("checked layer id");
        let w = layer.weight.data();
        if !layer.weight.is_finite() {
            return Err(GapError::Numeric(format!(
                "non-finite weight in layer {id}"
            )));
        }
        let bits = masks.mask(id).bits();
        for u in layer_units(id, layer.weight.shape(), policy.granularity) {
            let score: f64 = w[u.start..u.end].iter().map(|v| v.abs()).sum();
            let active = bits[u.start..u.end].iter().any(|&b| b);
            current.push((score, active, u));
        }
        if policy.distribution == Distribution::Uniform {
            groups.push(std::mem::take(&mut current));
        }
    }
    if policy.distribution == Distribution::NonUniform {
        groups.push(current);
    }

    let mut before_sq = 0.0;
    for &id in &ids {
        before_sq += model.linear(id).expect("checked").weight.squared_norm();
    }
    let mut removed_sq = 0.0;
    let mut pruned_weights = 0;
    for group in groups {
        let k = prune_count(policy.ratio, group.len());
        // stable sort keeps flat-index order among equal keys
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, aa, _) = group[a];
            let (sb, ab, _) = group[b];
            sa.total_cmp(&sb).then(aa.cmp(&ab))
        });
        let mut prune = vec![false; group.len()];
        for &idx in &order[..k] {
            prune[idx] = true;
        }
        for (unit_idx, &(_, _, u)) in group.iter().enumerate() {
            let keep = !prune[unit_idx];
            let w = model
                .linear_mut(u.layer)
                .expect("checked")
                .weight
                .data_mut();
            if !keep {
                for v in &mut w[u.start..u.end] {
                    removed_sq += *v * *v;
                    *v = 0.0;
                }
                pruned_weights += u.end - u.start;
            }
            masks.mask_mut(u.layer).bits_mut()[u.start..u.end].fill(keep);
        }
    }
    // summation order differs, so clamp rounding above 1
    let delta_sq = (before_sq > 0.0).then(|| (removed_sq / before_sq).min(1.0));
    Ok(PruneReport {
        layers: ids,
        pruned_weights,
        delta_sq,
    })
}

/// Sets the scoped (non-exempt) masks to all ones. Weights are not touched.
pub fn arg_grow_to(masks: &mut MaskSet, policy: &SparsityPolicy, scope: &[LayerId]) -> Result<()> {
    for &id in scope {
        if id >= masks.len() {
            return Err(GapError::Config(format!("layer {id} not in mask set")));
        }
        if !policy.is_exempt(id) {
            masks.mask_mut(id).bits_mut().fill(true);
        }
    }
    Ok(())
}

/// Random masks meeting the exact per-layer (uniform) or global (non-uniform)
/// prune counts; pruned weights are zeroed.
pub fn random_masks(model: &mut Model, policy: &SparsityPolicy, rng: &mut Rng) -> Result<MaskSet> {
    policy.validate()?;
    let mut masks = MaskSet::dense_for(model);
    let ids = policy.prunable_layers(model);
    let mut groups: Vec<Vec<Unit>> = Vec::new();
    let mut current = Vec::new();
    for &id in &ids {
        let shape = model.linear(id).expect("layer").weight.shape().to_vec();
        current.extend(layer_units(id, &shape, policy.granularity));
        if policy.distribution == Distribution::Uniform {
            groups.push(std::mem::take(&mut current));
        }
    }
    if policy.distribution == Distribution::NonUniform {
        groups.push(current);
    }
    for group in groups {
        let k = prune_count(policy.ratio, group.len());
        if k == 0 {
            continue;
        }
        for idx in sample(rng, group.len(), k) {
            let u = group[idx];
            masks.mask_mut(u.layer).bits_mut()[u.start..u.end].fill(false);
            model.linear_mut(u.layer).expect("layer").weight.data_mut()[u.start..u.end].fill(0.0);
        }
    }
    Ok(masks)
}

/// `weights ⊙ mask`; kept entries are copied bit for bit.
pub fn apply_mask(weights: &Tensor, mask: &Mask) -> Result<Tensor> {
    if weights.shape() != mask.shape() {
        return Err(GapError::Shape(format!(
            "weights {:?} vs mask {:?}",
            weights.shape(),
            mask.shape()
        )));
    }
    let data = weights
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&w, &m)| if m { w } else { 0.0 })
        .collect();
    Tensor::new(weights.shape().to_vec(), data)
}

/// Zeroes every masked-out weight of the model in place.
pub fn apply_masks(model: &mut Model, masks: &MaskSet) -> Result<()> {
    masks.check_aligned(model)?;
    for (layer, mask) in model.linears_mut().zip(masks.masks()) {
        for (w, &m) in layer.weight.data_mut().iter_mut().zip(mask.bits()) {
            if !m {
                *w = 0.0;
            }
        }
    }
    Ok(())
}

/// Fraction of zero mask entries over the scoped layers.
pub fn sparsity_of(masks: &MaskSet, scope: &[LayerId]) -> f64 {
    let (zeros, total) = scope.iter().fold((0, 0), |(z, t), &id| {
        let m = masks.mask(id);
        (z + m.zeros(), t + m.len())
    });
    if total == 0 {
        0.0
    } else {
        zeros as f64 / total as f64
    }
}

/// Sparsity over every layer of the set.
pub fn global_sparsity(masks: &MaskSet) -> f64 {
    let all: Vec<LayerId> = (0..masks.len()).collect();
    sparsity_of(masks, &all)
}

/// Fraction of 1 x `width` blocks of a layer that are entirely zero.
pub fn block_sparsity(mask: &Mask, width: usize) -> f64 {
    let units = layer_units(0, mask.shape(), Granularity::Block(width));
    let empty = units
        .iter()
        .filter(|u| mask.bits()[u.start..u.end].iter().all(|&b| !b))
        .count();
    empty as f64 / units.len() as f64
}

/// True when every block of the layer is all-zero or all-one.
pub fn is_block_structured(mask: &Mask, width: usize) -> bool {
    layer_units(0, mask.shape(), Granularity::Block(width))
        .iter()
        .all(|u| {
            let b = &mask.bits()[u.start..u.end];
            b.iter().all(|&x| x) || b.iter().all(|&x| !x)
        })
}

/// `‖Θ − Θ⊙m‖² / ‖Θ‖²`, or `None` when `Θ` is all zero.
pub fn mask_relative_error(weights: &[f64], mask: &[bool]) -> Result<Option<f64>> {
    if weights.len() != mask.len() {
        return Err(GapError::Shape(format!(
            "{} weights vs {} mask bits",
            weights.len(),
            mask.len()
        )));
    }
    let total: f64 = weights.iter().map(|w| w * w).sum();
    if total == 0.0 {
        return Ok(None);
    }
    let removed: f64 = weights
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(w, _)| w * w)
        .sum();
    Ok(Some(removed / total))
}

/// Per-sample forward FLOPs: a multiply-add counts as two operations, so a
/// linear layer costs `2 * active_weights + out` (bias adds stay dense).
pub fn flops_estimate(model: &Model, masks: &MaskSet) -> Result<u64> {
    masks.check_aligned(model)?;
    Ok(model
        .linears()
        .zip(masks.masks())
        .map(|(l, m)| 2 * m.active() as u64 + l.outputs() as u64)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, Linear, LossHead};

    fn model_of(rows: &[Vec<f64>]) -> Model {
        let layers = rows
            .iter()
            .map(|w| {
                Layer::Linear(Linear {
                    weight: Tensor::new(vec![1, w.len()], w.clone()).unwrap(),
                    bias: Tensor::zeros(&[1]),
                })
            })
            .collect();
        // single-row layers do not chain; build the model unchecked for operator tests
        Model {
            layers,
            head: LossHead::SquaredError,
        }
    }

    #[test]
    fn uniform_prune_example() {
        let mut m = model_of(&[vec![0.3, -0.1, 0.4, 0.2, -0.05, 0.25]]);
        let mut masks = MaskSet::dense_for(&m);
        let r = arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(0.5), &[0]).unwrap();
        assert_eq!(masks.mask(0).as_u8(), vec![1, 0, 1, 0, 0, 1]);
        assert_eq!(
            m.linear(0).unwrap().weight.data(),
            &[0.3, 0.0, 0.4, 0.0, 0.0, 0.25]
        );
        assert_eq!(r.pruned_weights, 3);
    }

    #[test]
    fn non_uniform_prune_example() {
        let mut m = model_of(&[vec![1.0, 0.9], vec![0.2, 0.1]]);
        let mut masks = MaskSet::dense_for(&m);
        arg_prune_to(
            &mut m,
            &mut masks,
            &SparsityPolicy::non_uniform(0.5),
            &[0, 1],
        )
        .unwrap();
        assert_eq!(masks.mask(0).as_u8(), vec![1, 1]);
        assert_eq!(masks.mask(1).as_u8(), vec![0, 0]);
        assert_eq!(sparsity_of(&masks, &[0]), 0.0);
        assert_eq!(sparsity_of(&masks, &[1]), 1.0);
    }

    #[test]
    fn block_prune_example() {
        let mut row = vec![0.1; 8];
        row.push(1.0);
        row.extend([0.0; 7]);
        let mut m = model_of(&[row]);
        let mut masks = MaskSet::dense_for(&m);
        let policy = SparsityPolicy::uniform(0.5).with_granularity(Granularity::Block(8));
        arg_prune_to(&mut m, &mut masks, &policy, &[0]).unwrap();
        let bits = masks.mask(0).as_u8();
        assert!(bits[..8].iter().all(|&b| b == 0));
        assert!(bits[8..].iter().all(|&b| b == 1));
        assert_eq!(block_sparsity(masks.mask(0), 8), 0.5);
    }

    #[test]
    fn short_trailing_block() {
        let shape = vec![2, 10];
        assert_eq!(unit_count(&shape, Granularity::Block(8)), 4);
        let mask = Mask::from_ones(
            shape,
            &[1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
        )
        .unwrap();
        assert_eq!(block_sparsity(&mask, 8), 0.25);
        assert!(is_block_structured(&mask, 8));
    }

    #[test]
    fn zero_ratio_is_identity() {
        let w = vec![0.5, -0.2, 0.0, 3.0];
        let mut m = model_of(std::slice::from_ref(&w));
        let mut masks = MaskSet::dense_for(&m);
        arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(0.0), &[0]).unwrap();
        assert!(masks.mask(0).is_dense());
        assert_eq!(m.linear(0).unwrap().weight.data(), w.as_slice());
    }

    #[test]
    fn ties_prefer_inactive_then_low_index() {
        let mut m = model_of(&[vec![0.0, 0.0, 0.0, 1.0]]);
        let mut masks = MaskSet::new(vec![Mask::from_ones(vec![1, 4], &[1, 1, 0, 1]).unwrap()]);
        arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(0.5), &[0]).unwrap();
        assert_eq!(masks.mask(0).as_u8(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn config_errors() {
        let mut m = model_of(&[vec![1.0]]);
        let mut masks = MaskSet::dense_for(&m);
        assert!(matches!(
            arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(1.0), &[0]),
            Err(GapError::Config(_))
        ));
        assert!(matches!(
            arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(-0.1), &[0]),
            Err(GapError::Config(_))
        ));
        assert!(matches!(
            arg_prune_to(&mut m, &mut masks, &SparsityPolicy::uniform(0.5), &[]),
            Err(GapError::Config(_))
        ));
    }

    #[test]
    fn exempt_layers_are_untouched() {
        let mut m = model_of(&[vec![0.1, 0.2], vec![0.3, 0.4]]);
        let mut masks = MaskSet::dense_for(&m);
        let policy = SparsityPolicy::uniform(0.5).with_exempt([1]);
        arg_prune_to(&mut m, &mut masks, &policy, &[0, 1]).unwrap();
        assert!(masks.mask(1).is_dense());
        assert_eq!(masks.mask(0).as_u8(), vec![0, 1]);
    }

    #[test]
    fn grow_sets_mask_only() {
        let mut m = model_of(&[vec![2.0, 0.0, 0.0, 5.0]]);
        let mut masks = MaskSet::new(vec![Mask::from_ones(vec![1, 4], &[1, 0, 0, 1]).unwrap()]);
        arg_grow_to(&mut masks, &SparsityPolicy::uniform(0.5), &[0]).unwrap();
        assert_eq!(masks.mask(0).as_u8(), vec![1, 1, 1, 1]);
        let before = masks.clone();
        arg_grow_to(&mut masks, &SparsityPolicy::uniform(0.5), &[0]).unwrap();
        assert_eq!(masks, before);
        apply_masks(&mut m, &masks).unwrap();
        assert_eq!(m.linear(0).unwrap().weight.data(), &[2.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn apply_mask_examples() {
        let w = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let mask = Mask::from_ones(vec![2], &[1, 0]).unwrap();
        let once = apply_mask(&w, &mask).unwrap();
        assert_eq!(once.data(), &[3.0, 0.0]);
        assert_eq!(apply_mask(&once, &mask).unwrap(), once);
        assert_eq!(apply_mask(&w, &Mask::dense(vec![2])).unwrap(), w);
        assert!(apply_mask(&w, &Mask::dense(vec![3])).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let a = MaskSet::new(vec![Mask::from_ones(vec![4], &[1, 0, 1, 0]).unwrap()]);
        assert_eq!(sparsity_of(&a, &[0]), 0.5);
        let b = MaskSet::new(vec![
            Mask::from_ones(vec![2], &[1, 1]).unwrap(),
            Mask::from_ones(vec![2], &[0, 0]).unwrap(),
        ]);
        assert_eq!(global_sparsity(&b), 0.5);
        assert_eq!(sparsity_of(&b, &[0]), 0.0);
        assert_eq!(sparsity_of(&b, &[1]), 1.0);
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(
            mask_relative_error(&[3.0, 4.0], &[true, false]).unwrap(),
            Some(0.64)
        );
        assert_eq!(
            mask_relative_error(&[3.0, 4.0], &[true, true]).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            mask_relative_error(&[0.0, 0.0], &[true, false]).unwrap(),
            None
        );
        assert_eq!(
            mask_relative_error(&[3.0, 4.0], &[false, false]).unwrap(),
            Some(1.0)
        );
    }

    #[test]
    fn flops_examples() {
        let mut rng = crate::rng::rng_for(0, 0, 0, 0);
        let m = Model::mlp(&[100, 10], &mut rng).unwrap();
        let dense = MaskSet::dense_for(&m);
        assert_eq!(flops_estimate(&m, &dense).unwrap(), 2010);
        let mut sparse = dense.clone();
        sparse.mask_mut(0).bits_mut()[..800].fill(false);
        assert_eq!(flops_estimate(&m, &sparse).unwrap(), 410);
        let two = Model::mlp(&[100, 10, 5], &mut rng).unwrap();
        assert_eq!(
            flops_estimate(&two, &MaskSet::dense_for(&two)).unwrap(),
            2010 + 105
        );
    }

    #[test]
    fn random_masks_hit_exact_counts() {
        let mut rng = crate::rng::rng_for(3, 0, 0, 0);
        let mut m = Model::mlp(&[10, 1, 10], &mut rng).unwrap();
        let masks = random_masks(&mut m, &SparsityPolicy::uniform(0.8), &mut rng).unwrap();
        assert_eq!(masks.mask(0).zeros(), 8);
        assert_eq!(masks.mask(1).zeros(), 8);
        for (l, mask) in m.linears().zip(masks.masks()) {
            for (w, b) in l.weight.data().iter().zip(mask.bits()) {
                if !b {
                    assert_eq!(*w, 0.0);
                }
            }
        }
        let mut m2 = Model::mlp(&[10, 1, 10], &mut rng).unwrap();
        let dense = random_masks(&mut m2, &SparsityPolicy::uniform(0.0), &mut rng).unwrap();
        assert!(dense.masks().iter().all(Mask::is_dense));
    }

    #[test]
    fn prune_count_rounds_half_up() {
        assert_eq!(prune_count(0.5, 5), 3);
        assert_eq!(prune_count(0.8, 10), 8);
        assert_eq!(prune_count(0.8, 64), 51);
        assert_eq!(prune_count(0.0, 7), 0);
    }
}
