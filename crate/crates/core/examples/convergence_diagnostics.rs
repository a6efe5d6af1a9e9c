//! Probe gradient norms, mask-induced errors and gradient variance of a
//! cyclic run, written as the convergence CSV.

use gapsparse::metrics::{convergence_rows, write_convergence};
use gapsparse::rng::{rng_for, stream};
use gapsparse::{
    make_synthetic, run_cgap, GapConfig, Model, OptimizerConfig, SparsityPolicy, SyntheticSpec,
    TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let sizes = [12, 32, 32, 2];
    let data = make_synthetic(&SyntheticSpec {
        teacher: sizes.to_vec(),
        samples: 1000,
        noise: 0.0,
        seed: 8,
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
    for ratio in [0.0, 0.8] {
        let mut config = GapConfig::new(3, 12, 1, 0, SparsityPolicy::uniform(ratio), train, 8);
        config.diagnostics = true;
        let model = Model::mlp(&sizes, &mut rng_for(8, stream::INIT, 0, 0))?;
        let out = run_cgap(&config, model, &data)?;
        println!("# sparsity {ratio}");
        if let Some(report) = &out.record.convergence {
            write_convergence(std::io::stdout(), &convergence_rows(report))?;
        }
    }
    Ok(())
}
