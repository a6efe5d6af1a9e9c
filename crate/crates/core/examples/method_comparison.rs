//! Trains C-GaP, P-GaP and the baselines on the same synthetic teacher task
//! at an equal epoch budget and prints held-out accuracy per method.
//!
//! `cargo run --release --example method_comparison -- [seeds] [lr] [label_noise]`

use gapsparse::rng::{rng_for, stream};
use gapsparse::{
    make_synthetic, run_baseline, run_cgap, run_pgap, BaselineConfig, BaselineMethod, GapConfig,
    LrSchedule, Model, OptimizerConfig, ParallelOptions, SparsityPolicy, SyntheticSpec,
    TrainSettings,
};

fn main() -> gapsparse::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let noise: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let sizes = [20, 64, 64, 2];
    let train = TrainSettings {
        opt: OptimizerConfig {
            lr,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: LrSchedule::Cosine { warmup_epochs: 0 },
        },
        batch_size: 64,
        max_batches_per_epoch: None,
    };
    let policy = SparsityPolicy::uniform(0.8).with_exempt([2]);
    let mut totals = [0.0f64; 6];
    let names = ["cgap", "pgap", "static", "one-shot", "gmp", "dense"];
    for seed in 0..seeds {
        let data = make_synthetic(&SyntheticSpec {
            teacher: sizes.to_vec(),
            samples: 8000,
            noise,
            seed: 100 + seed,
            val_fraction: 0.2,
        })?
        .dataset;
        let model = || Model::mlp(&sizes, &mut rng_for(seed, stream::INIT, 0, 0));
        let gap = GapConfig::new(2, 6, 5, 10, policy.clone(), train, seed);
        let budget = gap.epoch_budget();
        let base = |m| BaselineConfig::new(m, budget, policy.clone(), train, seed);
        let acc = [
            run_cgap(&gap, model()?, &data)?.record.final_eval.accuracy,
            run_pgap(&gap, model()?, &data, &ParallelOptions::default())?
                .record
                .final_eval
                .accuracy,
            run_baseline(&base(BaselineMethod::StaticRandom), model()?, &data)?
                .record
                .final_eval
                .accuracy,
            run_baseline(&base(BaselineMethod::OneShot), model()?, &data)?
                .record
                .final_eval
                .accuracy,
            run_baseline(&base(BaselineMethod::Gmp), model()?, &data)?
                .record
                .final_eval
                .accuracy,
            run_baseline(&base(BaselineMethod::Dense), model()?, &data)?
                .record
                .final_eval
                .accuracy,
        ];
        println!(
            "seed {seed}: {}",
            names
                .iter()
                .zip(acc)
                .map(|(n, a)| format!("{n}={:.2}%", 100.0 * a))
                .collect::<Vec<_>>()
                .join(" ")
        );
        for (t, a) in totals.iter_mut().zip(acc) {
            *t += a;
        }
    }
    for (n, t) in names.iter().zip(totals) {
        println!("{n:>9}: {:.2}%", 100.0 * t / seeds as f64);
    }
    Ok(())
}
