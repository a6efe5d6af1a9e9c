//! The comparison methods at one epoch budget: dense, one-shot, gradual
//! magnitude pruning, a static random mask and random mask exploration.

use gapsparse::rng::{rng_for, stream};
use gapsparse::train::EventKind;
use gapsparse::{
    make_synthetic, run_baseline, BaselineConfig, BaselineMethod, GmpSchedule, Model,
    OptimizerConfig, SparsityPolicy, SyntheticSpec, TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let data = make_synthetic(&SyntheticSpec {
        teacher: vec![10, 16, 3],
        samples: 1000,
        noise: 0.0,
        seed: 6,
        val_fraction: 0.25,
    })?
    .dataset;
    let train = TrainSettings {
        opt: OptimizerConfig::sgd(0.05),
        batch_size: 32,
        max_batches_per_epoch: None,
    };
    let policy = SparsityPolicy::uniform(0.8);
    let budget = 12;
    for method in [
        BaselineMethod::Dense,
        BaselineMethod::OneShot,
        BaselineMethod::Gmp,
        BaselineMethod::StaticRandom,
        BaselineMethod::RandomExplore,
    ] {
        let mut cfg = BaselineConfig::new(method, budget, policy.clone(), train, 6);
        cfg.gmp = GmpSchedule {
            start_epoch: 1,
            end_epoch: 9,
            interval: 2,
        };
        let model = Model::mlp(&[10, 32, 32, 3], &mut rng_for(6, stream::INIT, 0, 0))?;
        let out = run_baseline(&cfg, model, &data)?;
        let rec = &out.record;
        let trace: Vec<String> = rec
            .events
            .iter()
            .filter(|e| e.kind != EventKind::Explore)
            .map(|e| format!("{}:{:.3}", e.step, e.sparsity_after))
            .collect();
        println!(
            "{:>14}: val {:.2}%, final coverage {:.3}, prune events [{}]",
            rec.method.name(),
            100.0 * rec.final_eval.accuracy,
            rec.coverage.last().copied().unwrap_or(0.0),
            trace.join(" ")
        );
    }
    Ok(())
}
