//! Parallel grow-and-prune: one worker thread per partition, the byte codec
//! on the channels and a forced completion order. The result does not depend
//! on the order in which workers report back.

use gapsparse::rng::{rng_for, stream};
use gapsparse::{
    make_synthetic, run_pgap, GapConfig, Model, OptimizerConfig, ParallelOptions, SparsityPolicy,
    SyntheticSpec, TrainSettings, Transport,
};

fn main() -> gapsparse::Result<()> {
    let data = make_synthetic(&SyntheticSpec {
        teacher: vec![10, 16, 3],
        samples: 1000,
        noise: 0.0,
        seed: 5,
        val_fraction: 0.25,
    })?
    .dataset;
    let model = || Model::mlp(&[10, 32, 32, 3], &mut rng_for(5, stream::INIT, 0, 0));
    let train = TrainSettings {
        opt: OptimizerConfig::sgd(0.05),
        batch_size: 32,
        max_batches_per_epoch: None,
    };
    let config = GapConfig::new(3, 4, 2, 2, SparsityPolicy::uniform(0.7), train, 5);

    let mut finals = Vec::new();
    for order in [vec![0, 1, 2], vec![2, 0, 1]] {
        let opts = ParallelOptions {
            transport: Transport::Wire,
            completion_order: Some(vec![order]),
            ..ParallelOptions::default()
        };
        let out = run_pgap(&config, model()?, &data, &opts)?;
        let rec = &out.record;
        println!("arrival order per step: {:?}", rec.arrival_orders);
        for (step, m) in rec.messages.iter().enumerate() {
            println!(
                "  step {step}: {} distribute, {} results",
                m.distribute, m.results
            );
        }
        println!("  val accuracy {:.2}%", 100.0 * rec.final_eval.accuracy);
        finals.push(out.model);
    }
    println!("identical final models: {}", finals[0] == finals[1]);
    Ok(())
}
