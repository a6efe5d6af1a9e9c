use gapsparse::model::{Layer, Linear, LossHead, Model};
use gapsparse::sparsity::{
    arg_grow_to, arg_prune_to, is_block_structured, mask_relative_error, prune_count, Granularity,
    MaskSet, SparsityPolicy,
};
use gapsparse::tensor::Tensor;
use proptest::prelude::*;

fn chain(shapes: &[(usize, usize)], values: &[f64]) -> Model {
    let mut it = values.iter().copied();
    let mut layers = Vec::new();
    for (k, &(out, inp)) in shapes.iter().enumerate() {
        if k > 0 {
            layers.push(Layer::Relu);
        }
        let w: Vec<f64> = (0..out * inp).map(|_| it.next().unwrap()).collect();
        layers.push(Layer::Linear(Linear {
            weight: Tensor::new(vec![out, inp], w).unwrap(),
            bias: Tensor::zeros(&[out]),
        }));
    }
    Model::new(layers, LossHead::SoftmaxCrossEntropy).unwrap()
}

fn shapes_and_values() -> impl Strategy<Value = (Vec<(usize, usize)>, Vec<f64>)> {
    (1usize..4, 1usize..6, 1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(depth, a, b, c, d)| {
        let widths = [a, b, c, d];
        let shapes: Vec<(usize, usize)> = (0..depth).map(|k| (widths[k + 1], widths[k])).collect();
        let n: usize = shapes.iter().map(|(o, i)| o * i).sum();
        (Just(shapes), prop::collection::vec(-4.0f64..4.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn uniform_prune_invariants((shapes, values) in shapes_and_values(), ratio in 0.0f64..0.99) {
        let mut model = chain(&shapes, &values);
        let before = model.clone();
        let mut masks = MaskSet::dense_for(&model);
        let policy = SparsityPolicy::uniform(ratio);
        let scope: Vec<usize> = (0..model.num_linear()).collect();
        let report = arg_prune_to(&mut model, &mut masks, &policy, &scope).unwrap();
        for id in 0..model.num_linear() {
            let m = masks.mask(id);
            let w = model.linear(id).unwrap().weight.data();
            let orig = before.linear(id).unwrap().weight.data();
            // exact count
            prop_assert_eq!(m.zeros(), prune_count(ratio, m.len()));
            let kept: Vec<f64> = (0..m.len()).filter(|&k| m.bits()[k]).map(|k| orig[k].abs()).collect();
            let pruned: Vec<f64> = (0..m.len()).filter(|&k| !m.bits()[k]).map(|k| orig[k].abs()).collect();
            // magnitude dominance
            if let (Some(lo), Some(hi)) = (kept.iter().cloned().reduce(f64::min), pruned.iter().cloned().reduce(f64::max)) {
                prop_assert!(hi <= lo);
            }
            for k in 0..m.len() {
                if m.bits()[k] {
                    // kept weights are bit-identical
                    prop_assert_eq!(w[k].to_bits(), orig[k].to_bits());
                } else {
                    prop_assert_eq!(w[k], 0.0);
                }
            }
        }
        if let Some(d) = report.delta_sq {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn non_uniform_uses_one_cutoff((shapes, values) in shapes_and_values(), ratio in 0.0f64..0.99) {
        let mut model = chain(&shapes, &values);
        let before = model.clone();
        let mut masks = MaskSet::dense_for(&model);
        let scope: Vec<usize> = (0..model.num_linear()).collect();
        arg_prune_to(&mut model, &mut masks, &SparsityPolicy::non_uniform(ratio), &scope).unwrap();
        let total: usize = masks.masks().iter().map(|m| m.len()).sum();
        let zeros: usize = masks.masks().iter().map(|m| m.zeros()).sum();
        prop_assert_eq!(zeros, prune_count(ratio, total));
        let mut kept_min = f64::INFINITY;
        let mut pruned_max = f64::NEG_INFINITY;
        for id in scope {
            let orig = before.linear(id).unwrap().weight.data();
            for (k, &b) in masks.mask(id).bits().iter().enumerate() {
                if b { kept_min = kept_min.min(orig[k].abs()) } else { pruned_max = pruned_max.max(orig[k].abs()) }
            }
        }
        prop_assert!(pruned_max <= kept_min);
    }

    #[test]
    fn block_masks_are_structured(rows in 1usize..5, cols in 1usize..30, width in 1usize..9, ratio in 0.0f64..0.99,
                                 seed in any::<u64>()) {
        let vals: Vec<f64> = (0..rows * cols).map(|k| (((k as u64 + 1).wrapping_mul(seed | 1) % 1000) as f64) - 500.0).collect();
        let mut model = chain(&[(rows, cols)], &vals);
        let mut masks = MaskSet::dense_for(&model);
        let policy = SparsityPolicy::uniform(ratio).with_granularity(Granularity::Block(width));
        arg_prune_to(&mut model, &mut masks, &policy, &[0]).unwrap();
        prop_assert!(is_block_structured(masks.mask(0), width));
        let units = rows * cols.div_ceil(width);
        let mut empty = 0;
        for r in 0..rows {
            let mut c = 0;
            while c < cols {
                let end = (c + width).min(cols);
                if masks.mask(0).bits()[r * cols + c..r * cols + end].iter().all(|&b| !b) { empty += 1; }
                c = end;
            }
        }
        prop_assert_eq!(empty, prune_count(ratio, units));
    }

    #[test]
    fn grow_then_prune_is_prune((shapes, values) in shapes_and_values(), ratio in 0.0f64..0.99) {
        let scope: Vec<usize> = (0..shapes.len()).collect();
        let policy = SparsityPolicy::uniform(ratio);
        let mut a = chain(&shapes, &values);
        let mut ma = MaskSet::dense_for(&a);
        arg_prune_to(&mut a, &mut ma, &policy, &scope).unwrap();
        let mut b = a.clone();
        let mut mb = ma.clone();
        arg_grow_to(&mut mb, &policy, &scope).unwrap();
        prop_assert!(mb.masks().iter().all(|m| m.is_dense()));
        arg_prune_to(&mut b, &mut mb, &policy, &scope).unwrap();
        prop_assert_eq!(ma, mb);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relative_error_in_unit_interval(w in prop::collection::vec(-10.0f64..10.0, 1..30), bits in prop::collection::vec(any::<bool>(), 30)) {
        let m = &bits[..w.len()];
        if let Some(d) = mask_relative_error(&w, m).unwrap() {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}

#[test]
fn relative_error_hand_values() {
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
}

/// Exhaustive check: over every mask with the same number of kept weights, the
/// magnitude mask has the smallest relative error.
#[test]
fn magnitude_mask_minimises_error_brute_force() {
    let w = [0.3, -2.0, 1.1, -0.05, 0.7, -1.4];
    for keep in 1..=w.len() {
        let ratio = 1.0 - keep as f64 / w.len() as f64;
        let mut model = chain(&[(1, 6)], &w);
        let mut masks = MaskSet::dense_for(&model);
        let report = arg_prune_to(
            &mut model,
            &mut masks,
            &SparsityPolicy::uniform(ratio),
            &[0],
        )
        .unwrap();
        let ours = mask_relative_error(&w, masks.mask(0).bits())
            .unwrap()
            .unwrap();
        assert_eq!(report.delta_sq, Some(ours));
        let mut best = f64::INFINITY;
        for bitsint in 0u32..64 {
            if bitsint.count_ones() as usize != masks.mask(0).active() {
                continue;
            }
            let m: Vec<bool> = (0..6).map(|k| bitsint >> k & 1 == 1).collect();
            best = best.min(mask_relative_error(&w, &m).unwrap().unwrap());
        }
        assert!((ours - best).abs() < 1e-15, "keep {keep}: {ours} vs {best}");
    }
}
