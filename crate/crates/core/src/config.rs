//! Experiment configuration: a sectioned TOML file. Unknown keys are
//! rejected, and every value is checked before a run starts.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::baselines::{BaselineConfig, BaselineMethod, GmpSchedule};
use crate::cyclic::{GapConfig, DEFAULT_PROBE_SAMPLES};
use crate::data::{load_idx, make_synthetic, Dataset, SyntheticSpec};
use crate::error::{io_at, GapError, Result};
use crate::model::Model;
use crate::optim::{LrSchedule, OptimizerConfig};
use crate::parallel::{ParallelOptions, Transport};
use crate::partition::PartitionStrategy;
use crate::rng::{rng_for, stream};
use crate::sparsity::{Distribution, Granularity, SparsityPolicy};
use crate::train::{Method, TrainSettings};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub model: Option<ModelSection>,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub sparsity: SparsitySection,
    pub optimizer: Option<OptimizerSection>,
    pub gap: Option<GapSection>,
    pub baseline: Option<BaselineSection>,
    pub coverage: Option<CoverageSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Training regime; analysis-only files may leave it out.
    pub method: Option<Method>,
    pub seed: u64,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_run_id() -> String {
    "run".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Layer widths, input first.
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    pub teacher: Option<Vec<usize>>,
    pub samples: Option<usize>,
    #[serde(default)]
    pub noise: f64,
    /// Seed of the synthetic task; defaults to the run seed.
    pub seed: Option<u64>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

fn default_val_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySection {
    #[serde(default)]
    pub ratio: f64,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    /// Width of 1 x w blocks; absent means element-wise masks.
    pub block_width: Option<usize>,
    #[serde(default)]
    pub exempt_layers: Vec<usize>,
}

fn default_distribution() -> Distribution {
    Distribution::Uniform
}

impl Default for SparsitySection {
    fn default() -> Self {
        Self {
            ratio: 0.0,
            distribution: Distribution::Uniform,
            block_width: None,
            exempt_layers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub max_batches_per_epoch: Option<usize>,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Constant
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    InProcess,
    Wire,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSection {
    pub partitions: usize,
    pub steps: usize,
    pub epochs_per_step: usize,
    pub finetune_epochs: usize,
    #[serde(default = "default_strategy")]
    pub strategy: PartitionStrategy,
    #[serde(default = "default_probe")]
    pub probe_samples: usize,
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    #[serde(default = "default_transport")]
    pub transport: TransportKind,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_strategy() -> PartitionStrategy {
    PartitionStrategy::CyclicContiguous
}

fn default_probe() -> usize {
    DEFAULT_PROBE_SAMPLES
}

fn default_true() -> bool {
    true
}

fn default_transport() -> TransportKind {
    TransportKind::InProcess
}

fn default_timeout() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub epochs: usize,
    pub gmp_start: Option<usize>,
    pub gmp_end: Option<usize>,
    #[serde(default = "default_interval")]
    pub gmp_interval: usize,
    #[serde(default = "default_explore")]
    pub explore_fraction: f64,
    #[serde(default = "default_dense_fraction")]
    pub one_shot_dense_fraction: f64,
    pub lr_cycle_epochs: Option<usize>,
}

fn default_interval() -> usize {
    1
}

fn default_explore() -> f64 {
    0.3
}

fn default_dense_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub n: usize,
    #[serde(default = "default_interval")]
    pub per_step: usize,
    pub trials: usize,
}

/// The run a config resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum RunPlan {
    Gap(GapConfig),
    Parallel(GapConfig, ParallelOptions),
    Baseline(BaselineConfig),
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| GapError::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_at(path))?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.coverage {
            if c.n == 0 || c.per_step == 0 || c.per_step > c.n || c.trials == 0 {
                return Err(GapError::Config(
                    "coverage needs 0 < per_step <= n and trials > 0".into(),
                ));
            }
        }
        let Some(method) = self.run.method else {
            if self.coverage.is_none() {
                return Err(GapError::Config(
                    "run.method is required unless a [coverage] section is given".into(),
                ));
            }
            return Ok(());
        };
        let layers = &self.model_section()?.layers;
        if layers.len() < 2 || layers.contains(&0) {
            return Err(GapError::Config(format!(
                "model.layers {layers:?} needs at least two positive widths"
            )));
        }
        self.policy()?.validate()?;
        self.train_settings()?.validate()?;
        if let Some(&bad) = self
            .sparsity
            .exempt_layers
            .iter()
            .find(|&&l| l + 1 >= layers.len())
        {
            return Err(GapError::Config(format!(
                "exempt layer {bad} does not exist"
            )));
        }
        let data = self.data_section()?;
        match data.source {
            DataSource::Synthetic => {
                let teacher = data.teacher.as_ref().ok_or_else(|| {
                    GapError::Config("data.teacher is required for synthetic data".into())
                })?;
                if data.samples.is_none() {
                    return Err(GapError::Config(
                        "data.samples is required for synthetic data".into(),
                    ));
                }
                if teacher.first() != layers.first() {
                    return Err(GapError::Config(
                        "teacher and model input widths differ".into(),
                    ));
                }
            }
            DataSource::Idx => {
                if data.images.is_none() || data.labels.is_none() {
                    return Err(GapError::Config(
                        "data.images and data.labels are required for idx data".into(),
                    ));
                }
            }
        }
        match method {
            Method::Cgap | Method::Pgap => {
                if self.gap.is_none() {
                    return Err(GapError::Config(format!(
                        "method {} needs a [gap] section",
                        method.name()
                    )));
                }
            }
            _ => {
                if self.baseline.is_none() {
                    return Err(GapError::Config(format!(
                        "method {} needs a [baseline] section",
                        method.name()
                    )));
                }
            }
        }
        let model = Model::mlp_zeros(layers)?;
        match self.plan()? {
            RunPlan::Gap(g) | RunPlan::Parallel(g, _) => g.validate(&model)?,
            RunPlan::Baseline(b) => b.validate()?,
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Method> {
        self.run
            .method
            .ok_or_else(|| GapError::Config("run.method is not set".into()))
    }

    fn model_section(&self) -> Result<&ModelSection> {
        self.model
            .as_ref()
            .ok_or_else(|| GapError::Config("missing [model] section".into()))
    }

    fn data_section(&self) -> Result<&DataSection> {
        self.data
            .as_ref()
            .ok_or_else(|| GapError::Config("missing [data] section".into()))
    }

    pub fn policy(&self) -> Result<SparsityPolicy> {
        let granularity = match self.sparsity.block_width {
            None => Granularity::Element,
            Some(w) => Granularity::Block(w),
        };
        let policy = SparsityPolicy {
            ratio: self.sparsity.ratio,
            distribution: self.sparsity.distribution,
            granularity,
            exempt_layers: self.sparsity.exempt_layers.iter().copied().collect(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn train_settings(&self) -> Result<TrainSettings> {
        let o = self
            .optimizer
            .as_ref()
            .ok_or_else(|| GapError::Config("missing [optimizer] section".into()))?;
        Ok(TrainSettings {
            opt: OptimizerConfig {
                lr: o.lr,
                momentum: o.momentum,
                weight_decay: o.weight_decay,
                schedule: match o.schedule {
                    ScheduleKind::Constant => LrSchedule::Constant,
                    ScheduleKind::Cosine => LrSchedule::Cosine {
                        warmup_epochs: o.warmup_epochs,
                    },
                },
            },
            batch_size: o.batch_size,
            max_batches_per_epoch: o.max_batches_per_epoch,
        })
    }

    pub fn plan(&self) -> Result<RunPlan> {
        let policy = self.policy()?;
        let train = self.train_settings()?;
        let seed = self.run.seed;
        let method = self.method()?;
        if let Some(g) = self
            .gap
            .as_ref()
            .filter(|_| matches!(method, Method::Cgap | Method::Pgap))
        {
            let mut cfg = GapConfig::new(
                g.partitions,
                g.steps,
                g.epochs_per_step,
                g.finetune_epochs,
                policy,
                train,
                seed,
            );
            cfg.strategy = g.strategy;
            cfg.run_id = self.run.run_id.clone();
            cfg.probe_samples = g.probe_samples;
            cfg.diagnostics = g.diagnostics;
            if method == Method::Pgap {
                let opts = ParallelOptions {
                    transport: match g.transport {
                        TransportKind::InProcess => Transport::InProcess,
                        TransportKind::Wire => Transport::Wire,
                    },
                    timeout: Duration::from_secs(g.timeout_s),
                    completion_order: None,
                };
                return Ok(RunPlan::Parallel(cfg, opts));
            }
            return Ok(RunPlan::Gap(cfg));
        }
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| GapError::Config("missing [baseline] section".into()))?;
        let method = match method {
            Method::Dense => BaselineMethod::Dense,
            Method::OneShot => BaselineMethod::OneShot,
            Method::Gmp => BaselineMethod::Gmp,
            Method::StaticRandom => BaselineMethod::StaticRandom,
            Method::RandomExplore => BaselineMethod::RandomExplore,
            m => {
                return Err(GapError::Config(format!(
                    "method {} needs a [gap] section",
                    m.name()
                )))
            }
        };
        let mut cfg = BaselineConfig::new(method, b.epochs, policy, train, seed);
        cfg.run_id = self.run.run_id.clone();
        cfg.gmp = GmpSchedule {
            start_epoch: b.gmp_start.unwrap_or(cfg.gmp.start_epoch),
            end_epoch: b.gmp_end.unwrap_or(cfg.gmp.end_epoch),
            interval: b.gmp_interval,
        };
        cfg.explore_fraction = b.explore_fraction;
        cfg.one_shot_dense_fraction = b.one_shot_dense_fraction;
        cfg.lr_cycle_epochs = b.lr_cycle_epochs;
        Ok(RunPlan::Baseline(cfg))
    }

    /// Loads or generates the dataset; relative IDX paths resolve against `base`.
    pub fn dataset(&self, base: &Path) -> Result<Dataset> {
        let d = self.data_section()?;
        match d.source {
            DataSource::Synthetic => Ok(make_synthetic(&SyntheticSpec {
                teacher: d.teacher.clone().unwrap_or_default(),
                samples: d.samples.unwrap_or(0),
                noise: d.noise,
                seed: d.seed.unwrap_or(self.run.seed),
                val_fraction: d.val_fraction,
            })?
            .dataset),
            DataSource::Idx => {
                let images = base.join(d.images.as_ref().expect("validated"));
                let labels = base.join(d.labels.as_ref().expect("validated"));
                load_idx(&images, &labels, d.val_fraction)
            }
        }
    }

    /// Initial model, seeded from the run seed.
    pub fn model(&self) -> Result<Model> {
        Model::mlp(
            &self.model_section()?.layers,
            &mut rng_for(self.run.seed, stream::INIT, 0, 0),
        )
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
