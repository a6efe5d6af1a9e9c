//! Saves a sparse model as a GAPCKPT1 checkpoint, loads it back and checks the
//! bytes and the held-out accuracy survive unchanged.

use gapsparse::checkpoint::{load_checkpoint, save_checkpoint, to_bytes};
use gapsparse::rng::{rng_for, stream};
use gapsparse::sparsity::{flops_estimate, global_sparsity};
use gapsparse::train::evaluate;
use gapsparse::{
    make_synthetic, run_cgap, GapConfig, Model, OptimizerConfig, SparsityPolicy, SyntheticSpec,
    TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let data = make_synthetic(&SyntheticSpec {
        teacher: vec![8, 12, 3],
        samples: 600,
        noise: 0.0,
        seed: 9,
        val_fraction: 0.25,
    })?
    .dataset;
    let train = TrainSettings {
        opt: OptimizerConfig {
            momentum: 0.9,
            ..OptimizerConfig::sgd(0.05)
        },
        batch_size: 32,
        max_batches_per_epoch: None,
    };
    let config = GapConfig::new(2, 4, 2, 4, SparsityPolicy::non_uniform(0.7), train, 9);
    let model = Model::mlp(&[8, 24, 24, 3], &mut rng_for(9, stream::INIT, 0, 0))?;
    let out = run_cgap(&config, model, &data)?;

    let dir = std::env::temp_dir().join(format!("gapsparse-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    save_checkpoint(&out.model, &out.masks, &path)?;
    let (model, masks) = load_checkpoint(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("{} bytes written", bytes.len());
    println!("bit-exact re-save: {}", to_bytes(&model, &masks)? == bytes);
    println!(
        "sparsity {:.4}, flops {} (dense {})",
        global_sparsity(&masks),
        flops_estimate(&model, &masks)?,
        flops_estimate(&model, &gapsparse::sparsity::MaskSet::dense_for(&model))?
    );
    println!(
        "val accuracy before {:.4}, after {:.4}",
        out.record.final_eval.accuracy,
        evaluate(&model, &data.validation)?.accuracy
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
