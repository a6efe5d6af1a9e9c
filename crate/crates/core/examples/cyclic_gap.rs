//! Cyclic grow-and-prune on a synthetic teacher task. Prints every mask event,
//! the coverage reached in each round and the final held-out accuracy.

use gapsparse::rng::{rng_for, stream};
use gapsparse::{
    make_synthetic, run_cgap, GapConfig, Model, OptimizerConfig, SparsityPolicy, SyntheticSpec,
    TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let data = make_synthetic(&SyntheticSpec {
        teacher: vec![10, 16, 3],
        samples: 1200,
        noise: 0.0,
        seed: 4,
        val_fraction: 0.25,
    })?
    .dataset;
    let model = Model::mlp(&[10, 32, 32, 32, 3], &mut rng_for(4, stream::INIT, 0, 0))?;
    let train = TrainSettings {
        opt: OptimizerConfig {
            momentum: 0.9,
            ..OptimizerConfig::sgd(0.05)
        },
        batch_size: 32,
        max_batches_per_epoch: None,
    };
    // four weight layers in two partitions; the classifier stays dense
    let policy = SparsityPolicy::uniform(0.8).with_exempt([3]);
    let config = GapConfig::new(2, 6, 2, 4, policy, train, 4);
    println!(
        "partitions: {:?}",
        config.partition_for_round(&model, 0)?.groups()
    );
    let out = run_cgap(&config, model, &data)?;
    let rec = &out.record;
    for e in &rec.events {
        println!(
            "step {} {:?} layers {:?}: sparsity {:.3} -> {:.3}",
            e.step, e.kind, e.layers, e.sparsity_before, e.sparsity_after
        );
    }
    println!("coverage per round: {:?}", rec.round_coverage);
    println!(
        "{} epochs, val accuracy {:.2}%",
        rec.epochs_trained,
        100.0 * rec.final_eval.accuracy
    );
    Ok(())
}
