//! The epoch loop shared by every training regime, plus the run record and
//! metrics rows it produces.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::{ConvergenceReport, CoverageTracker};
use crate::data::{Dataset, Split};
use crate::error::{GapError, Result};
use crate::model::{accuracy, Model};
use crate::optim::{lr_at, sgd_step, sgd_step_dense, OptimizerConfig, SgdState};
use crate::partition::PartitionScheme;
use crate::rng::Rng;
use crate::sparsity::{flops_estimate, global_sparsity, sparsity_of, MaskSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub opt: OptimizerConfig,
    pub batch_size: usize,
    /// Caps optimizer steps per epoch; `Some(0)` disables parameter updates.
    pub max_batches_per_epoch: Option<usize>,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if self.batch_size == 0 {
            return Err(GapError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Eval {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and accuracy over a split, evaluated in chunks.
pub fn evaluate(model: &Model, split: &Split) -> Result<Eval> {
    if split.is_empty() {
        return Ok(Eval::default());
    }
    let mut loss = 0.0;
    let mut correct = 0.0;
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(1024) {
        let (x, y) = split.batch(chunk)?;
        loss += model.loss(&x, &y)? * chunk.len() as f64;
        correct += accuracy(model, &x, &split.labels()[chunk[0]..chunk[0] + chunk.len()])?
            * chunk.len() as f64;
    }
    let n = split.len() as f64;
    Ok(Eval {
        loss: loss / n,
        accuracy: correct / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub phase_epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
}

/// Owns the momentum buffers and the data-order stream of one run.
pub struct Trainer<'d> {
    data: &'d Dataset,
    settings: TrainSettings,
    state: SgdState,
    rng: Rng,
    order: Vec<usize>,
}

impl<'d> Trainer<'d> {
    pub fn new(
        data: &'d Dataset,
        model: &Model,
        settings: TrainSettings,
        rng: Rng,
    ) -> Result<Self> {
        settings.validate()?;
        if data.input_dim() != model.input_dim() {
            return Err(GapError::Shape(format!(
                "dataset width {} vs model input {}",
                data.input_dim(),
                model.input_dim()
            )));
        }
        if data.num_classes > model.output_dim() {
            return Err(GapError::Shape(format!(
                "{} classes but model has {} outputs",
                data.num_classes,
                model.output_dim()
            )));
        }
        Ok(Self {
            data,
            settings,
            state: SgdState::new(model),
            rng,
            order: (0..data.train.len()).collect(),
        })
    }

    pub fn reset_momentum(&mut self) {
        self.state.reset();
    }

    pub fn data(&self) -> &'d Dataset {
        self.data
    }

    /// Trains `epochs` epochs with a learning-rate schedule spanning exactly
    /// this phase. With `masks == None` plain SGD is used.
    pub fn train_phase(
        &mut self,
        model: &mut Model,
        masks: Option<&MaskSet>,
        epochs: usize,
        mut on_epoch: impl FnMut(&Model, EpochStats) -> Result<()>,
    ) -> Result<()> {
        for e in 0..epochs {
            self.train_epoch(model, masks, e, epochs, &mut on_epoch)?;
        }
        Ok(())
    }

    /// Trains epoch `epoch` of a phase of `phase_len` epochs.
    pub fn train_epoch(
        &mut self,
        model: &mut Model,
        masks: Option<&MaskSet>,
        epoch: usize,
        phase_len: usize,
        mut on_epoch: impl FnMut(&Model, EpochStats) -> Result<()>,
    ) -> Result<()> {
        let lr = lr_at(&self.settings.opt, epoch, phase_len)?;
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        let cap = self.settings.max_batches_per_epoch.unwrap_or(usize::MAX);
        for batch in self.order.chunks(self.settings.batch_size).take(cap) {
            let (x, y) = self.data.train.batch(batch)?;
            let (loss, grads) = model.loss_and_gradients(&x, &y)?;
            match masks {
                Some(m) => sgd_step(model, &grads, m, &self.settings.opt, lr, &mut self.state)?,
                None => sgd_step_dense(model, &grads, &self.settings.opt, lr, &mut self.state)?,
            }
            total += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = if seen == 0 { 0.0 } else { total / seen as f64 };
        on_epoch(
            model,
            EpochStats {
                phase_epoch: epoch,
                lr,
                train_loss,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cgap,
    Pgap,
    Dense,
    OneShot,
    Gmp,
    StaticRandom,
    RandomExplore,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cgap => "cgap",
            Method::Pgap => "pgap",
            Method::Dense => "dense",
            Method::OneShot => "one-shot",
            Method::Gmp => "gmp",
            Method::StaticRandom => "static-random",
            Method::RandomExplore => "random-explore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Epoch,
    Grow,
    Prune,
    FinalPrune,
    Combine,
    Explore,
}

/// One metrics CSV row: one per epoch plus one per mask event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: Method,
    pub event: EventKind,
    pub step: Option<usize>,
    pub round: Option<usize>,
    pub epoch: Option<usize>,
    pub lr: Option<f64>,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub global_sparsity: f64,
    pub partition_sparsity: String,
    pub coverage: f64,
    pub delta_sq: Option<f64>,
    pub flops: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskEvent {
    pub step: usize,
    pub kind: EventKind,
    pub partition: Option<usize>,
    pub layers: Vec<usize>,
    pub sparsity_before: f64,
    pub sparsity_after: f64,
    pub delta_sq: Option<f64>,
}

/// Messages exchanged with workers during one parallel step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMessages {
    pub distribute: usize,
    pub results: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub model: Model,
    pub masks: MaskSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub method: Method,
    pub rows: Vec<MetricsRow>,
    pub events: Vec<MaskEvent>,
    /// Cumulative coverage after each mask update (and the initial mask).
    pub coverage: Vec<f64>,
    /// Coverage reached within each completed round, counted from that
    /// round's first grow.
    pub round_coverage: Vec<f64>,
    pub epochs_trained: usize,
    /// Validation metrics at the end of each grow/train step, before any
    /// fine-tuning.
    pub step_evals: Vec<Eval>,
    pub best_step: Option<usize>,
    pub final_eval: Eval,
    pub convergence: Option<ConvergenceReport>,
    pub messages: Vec<StepMessages>,
    pub arrival_orders: Vec<Vec<usize>>,
    pub snapshots: Vec<Snapshot>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, method: Method) -> Self {
        Self {
            run_id: run_id.into(),
            method,
            rows: Vec::new(),
            events: Vec::new(),
            coverage: Vec::new(),
            round_coverage: Vec::new(),
            epochs_trained: 0,
            step_evals: Vec::new(),
            best_step: None,
            final_eval: Eval::default(),
            convergence: None,
            messages: Vec::new(),
            arrival_orders: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &MaskEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// Builds rows and events for a run; tracks wall clock and coverage.
pub(crate) struct Recorder {
    pub record: RunRecord,
    pub tracker: CoverageTracker,
    pub scope: Vec<usize>,
    started: Instant,
    pub step: Option<usize>,
    pub round: Option<usize>,
    pub partition: Option<PartitionScheme>,
}

impl Recorder {
    pub fn new(run_id: &str, method: Method, masks: &MaskSet, scope: Vec<usize>) -> Self {
        Self {
            record: RunRecord::new(run_id, method),
            tracker: CoverageTracker::new(masks, &scope),
            scope,
            started: Instant::now(),
            step: None,
            round: None,
            partition: None,
        }
    }

    pub fn track(&mut self, masks: &MaskSet) {
        let f = self.tracker.track(masks);
        self.record.coverage.push(f);
    }

    pub fn scoped_sparsity(&self, masks: &MaskSet) -> f64 {
        sparsity_of(masks, &self.scope)
    }

    fn partition_column(&self, masks: &MaskSet) -> String {
        match &self.partition {
            Some(p) => p
                .groups()
                .iter()
                .map(|g| format!("{:.6}", sparsity_of(masks, g)))
                .collect::<Vec<_>>()
                .join(";"),
            None => String::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push_row(
        &mut self,
        event: EventKind,
        model: &Model,
        masks: &MaskSet,
        data: &Dataset,
        lr: Option<f64>,
        train_loss: Option<f64>,
        delta_sq: Option<f64>,
    ) -> Result<Eval> {
        let eval = evaluate(model, &data.validation)?;
        let epoch =
            (event == EventKind::Epoch).then(|| self.record.epochs_trained.saturating_sub(1));
        let row = MetricsRow {
            run_id: self.record.run_id.clone(),
            method: self.record.method,
            event,
            step: self.step,
            round: self.round,
            epoch,
            lr,
            train_loss,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
            global_sparsity: global_sparsity(masks),
            partition_sparsity: self.partition_column(masks),
            coverage: self.tracker.fraction(),
            delta_sq,
            flops: flops_estimate(model, masks)?,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        self.record.rows.push(row);
        Ok(eval)
    }

    pub fn epoch_row(
        &mut self,
        model: &Model,
        masks: &MaskSet,
        data: &Dataset,
        stats: EpochStats,
    ) -> Result<Eval> {
        self.record.epochs_trained += 1;
        self.push_row(
            EventKind::Epoch,
            model,
            masks,
            data,
            Some(stats.lr),
            Some(stats.train_loss),
            None,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn event(
        &mut self,
        kind: EventKind,
        model: &Model,
        masks: &MaskSet,
        data: &Dataset,
        partition: Option<usize>,
        layers: Vec<usize>,
        sparsity_before: f64,
        delta_sq: Option<f64>,
    ) -> Result<()> {
        let after = self.scoped_sparsity(masks);
        self.record.events.push(MaskEvent {
            step: self.step.unwrap_or(0),
            kind,
            partition,
            layers,
            sparsity_before,
            sparsity_after: after,
            delta_sq,
        });
        self.push_row(kind, model, masks, data, None, None, delta_sq)?;
        Ok(())
    }

    pub fn finish(mut self, model: &Model, data: &Dataset) -> Result<RunRecord> {
        self.record.final_eval = evaluate(model, &data.validation)?;
        Ok(self.record)
    }
}
