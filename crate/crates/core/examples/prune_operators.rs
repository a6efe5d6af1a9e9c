//! Magnitude pruning and growing on a small model: uniform, non-uniform and
//! 1x8 block masks, with the relative error each prune introduces.

use gapsparse::rng::{rng_for, stream};
use gapsparse::sparsity::{
    arg_grow_to, arg_prune_to, block_sparsity, global_sparsity, Granularity, MaskSet,
};
use gapsparse::{Model, SparsityPolicy};

fn main() -> gapsparse::Result<()> {
    let base = Model::mlp(&[16, 32, 32, 4], &mut rng_for(1, stream::INIT, 0, 0))?;
    let scope = [0, 1, 2];
    let policies = [
        ("uniform", SparsityPolicy::uniform(0.75)),
        ("non-uniform", SparsityPolicy::non_uniform(0.75)),
        (
            "block 1x8",
            SparsityPolicy::uniform(0.75).with_granularity(Granularity::Block(8)),
        ),
    ];
    for (name, policy) in policies {
        let mut model = base.clone();
        let mut masks = MaskSet::dense_for(&model);
        let report = arg_prune_to(&mut model, &mut masks, &policy, &scope)?;
        let per_layer: Vec<String> = masks
            .masks()
            .iter()
            .map(|m| format!("{:.3}", m.sparsity()))
            .collect();
        println!(
            "{name:>11}: layers [{}] global {:.3} delta_sq {:.4}",
            per_layer.join(", "),
            global_sparsity(&masks),
            report.delta_sq.unwrap_or(0.0)
        );
        if let Granularity::Block(w) = policy.granularity {
            println!(
                "{:>11}  empty 1x{w} blocks in layer 1: {:.3}",
                "",
                block_sparsity(masks.mask(1), w)
            );
        }
        // growing reopens the masks but leaves pruned weights at zero
        arg_grow_to(&mut masks, &policy, &scope)?;
        let zeros = model
            .linear(1)
            .unwrap()
            .weight
            .data()
            .iter()
            .filter(|v| **v == 0.0)
            .count();
        println!(
            "{:>11}  after grow: global {:.3}, layer 1 zero weights {zeros}",
            "",
            global_sparsity(&masks)
        );
    }
    Ok(())
}
