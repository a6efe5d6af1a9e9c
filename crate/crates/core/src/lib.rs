//! Grow-and-prune sparse training for small feed-forward classifiers.
//!
//! Layers are split into partitions that take turns being trained densely
//! while the rest of the model stays at the target sparsity. The cyclic
//! variant visits partitions one after another; the parallel variant trains
//! every partition's dense version on its own worker and merges them.
//! Dense, one-shot, gradual magnitude, static-mask and random-exploration
//! baselines share the same training loop, metrics and checkpoints.

pub mod analysis;
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cyclic;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod partition;
pub mod rng;
pub mod sparsity;
pub mod tensor;
pub mod train;

pub use baselines::{run_baseline, BaselineConfig, BaselineMethod, BaselineOutcome, GmpSchedule};
pub use cyclic::{init_sparse, run_cgap, GapConfig, GapOutcome};
pub use data::{make_synthetic, Dataset, SyntheticSpec};
pub use error::{GapError, Result};
pub use model::Model;
pub use optim::{LrSchedule, OptimizerConfig};
pub use parallel::{run_pgap, ParallelOptions, Transport};
pub use partition::PartitionStrategy;
pub use sparsity::{arg_grow_to, arg_prune_to, Distribution, Granularity, MaskSet, SparsityPolicy};
pub use train::{Method, RunRecord, TrainSettings};
