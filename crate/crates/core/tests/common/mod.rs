#![allow(dead_code)]

pub mod gradcheck;

use gapsparse::rng::{rng_for, stream};
use gapsparse::{make_synthetic, Dataset, Model, OptimizerConfig, SyntheticSpec, TrainSettings};

pub fn task(teacher: &[usize], samples: usize, seed: u64) -> Dataset {
    make_synthetic(&SyntheticSpec {
        teacher: teacher.to_vec(),
        samples,
        noise: 0.0,
        seed,
        val_fraction: 0.25,
    })
    .expect("synthetic task")
    .dataset
}

pub fn mlp(sizes: &[usize], seed: u64) -> Model {
    Model::mlp(sizes, &mut rng_for(seed, stream::INIT, 0, 0)).expect("model")
}

pub fn sgd(lr: f64, batch_size: usize) -> TrainSettings {
    TrainSettings {
        opt: OptimizerConfig::sgd(lr),
        batch_size,
        max_batches_per_epoch: None,
    }
}

pub fn momentum(lr: f64, batch_size: usize) -> TrainSettings {
    TrainSettings {
        opt: OptimizerConfig {
            momentum: 0.9,
            weight_decay: 1e-4,
            ..OptimizerConfig::sgd(lr)
        },
        batch_size,
        max_batches_per_epoch: None,
    }
}

/// Every weight and bias as raw bits, for exact comparisons.
pub fn weight_bits(model: &Model) -> Vec<u64> {
    model
        .linears()
        .flat_map(|l| {
            l.weight
                .data()
                .iter()
                .chain(l.bias.data())
                .map(|v| v.to_bits())
        })
        .collect()
}
