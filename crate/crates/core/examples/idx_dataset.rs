//! Writes a dataset as an IDX image/label pair, reads it back the way an
//! MNIST download would be read, and trains a dense baseline on it.

use gapsparse::data::{encode_idx, load_idx};
use gapsparse::rng::{rng_for, stream};
use gapsparse::{
    make_synthetic, run_baseline, BaselineConfig, BaselineMethod, Model, OptimizerConfig,
    SparsityPolicy, SyntheticSpec, TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let task = make_synthetic(&SyntheticSpec {
        teacher: vec![16, 8, 4],
        samples: 800,
        noise: 0.0,
        seed: 10,
        val_fraction: 0.0,
    })?;
    let dir = std::env::temp_dir().join(format!("gapsparse-idx-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (images, labels) = encode_idx(&task.dataset.train);
    let (img_path, lbl_path) = (dir.join("images.idx3-ubyte"), dir.join("labels.idx1-ubyte"));
    std::fs::write(&img_path, &images)?;
    std::fs::write(&lbl_path, &labels)?;

    let data = load_idx(&img_path, &lbl_path, 0.25)?;
    println!(
        "{} train / {} validation samples, {} features, {} classes",
        data.train.len(),
        data.validation.len(),
        data.input_dim(),
        data.num_classes
    );
    let train = TrainSettings {
        opt: OptimizerConfig {
            momentum: 0.9,
            ..OptimizerConfig::sgd(0.05)
        },
        batch_size: 32,
        max_batches_per_epoch: None,
    };
    let cfg = BaselineConfig::new(
        BaselineMethod::Dense,
        20,
        SparsityPolicy::uniform(0.0),
        train,
        10,
    );
    let model = Model::mlp(
        &[data.input_dim(), 32, data.num_classes],
        &mut rng_for(10, stream::INIT, 0, 0),
    )?;
    let out = run_baseline(&cfg, model, &data)?;
    println!(
        "val accuracy {:.2}%",
        100.0 * out.record.final_eval.accuracy
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
