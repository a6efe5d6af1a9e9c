//! Cyclic grow-and-prune: partitions take turns being dense while the rest
//! of the model trains at the target sparsity.

use crate::analysis::{
    estimate_grad_variance, probe_gradient_norm, ConvergenceReport, CoverageTracker, ProbeSet,
};
use crate::data::Dataset;
use crate::error::{GapError, Result};
use crate::model::{LayerId, Model};
use crate::partition::{
    make_contiguous_partitions, make_random_partition, schedule_indices, PartitionScheme,
    PartitionStrategy,
};
use crate::rng::{rng_for, stream};
use crate::sparsity::{arg_grow_to, arg_prune_to, random_masks, MaskSet, SparsityPolicy};
use crate::train::RunRecord;
use crate::train::{EventKind, Method, Recorder, Snapshot, TrainSettings, Trainer};

pub const DEFAULT_PROBE_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct GapConfig {
    /// Number of partitions (κ).
    pub partitions: usize,
    /// Grow/prune steps (K). Zero degenerates to training a static random mask.
    pub steps: usize,
    /// Epochs trained after each grow (T).
    pub epochs_per_step: usize,
    /// Epochs of fine-tuning after the final prune (T').
    pub finetune_epochs: usize,
    pub policy: SparsityPolicy,
    pub train: TrainSettings,
    pub strategy: PartitionStrategy,
    pub seed: u64,
    pub run_id: String,
    pub probe_samples: usize,
    /// Record per-round gradient diagnostics.
    pub diagnostics: bool,
    /// Keep a copy of the model after every step.
    pub snapshot_steps: bool,
}

impl GapConfig {
    pub fn new(
        partitions: usize,
        steps: usize,
        epochs_per_step: usize,
        finetune_epochs: usize,
        policy: SparsityPolicy,
        train: TrainSettings,
        seed: u64,
    ) -> Self {
        Self {
            partitions,
            steps,
            epochs_per_step,
            finetune_epochs,
            policy,
            train,
            strategy: PartitionStrategy::CyclicContiguous,
            seed,
            run_id: "run".into(),
            probe_samples: DEFAULT_PROBE_SAMPLES,
            diagnostics: true,
            snapshot_steps: false,
        }
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        self.policy.validate()?;
        self.train.validate()?;
        let prunable = self.policy.prunable_layers(model).len();
        if self.partitions == 0 || self.partitions > prunable {
            return Err(GapError::Config(format!(
                "partition count {} must be between 1 and {prunable} prunable layers",
                self.partitions
            )));
        }
        if self.steps > 0 && self.epochs_per_step == 0 {
            return Err(GapError::Config(
                "epochs per step must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Total epochs a run consumes: `K * T + T'`.
    pub fn epoch_budget(&self) -> usize {
        self.steps * self.epochs_per_step + self.finetune_epochs
    }

    /// Number of complete rounds, `K / κ`.
    pub fn rounds(&self) -> usize {
        self.steps / self.partitions
    }

    /// Partition used during `round`. Contiguous schemes never change; random
    /// schemes are redrawn once per round so each round still grows every layer.
    pub fn partition_for_round(&self, model: &Model, round: usize) -> Result<PartitionScheme> {
        let prunable = self.policy.prunable_layers(model);
        match self.strategy {
            PartitionStrategy::CyclicContiguous => {
                let sizes: Vec<(LayerId, usize)> = prunable
                    .iter()
                    .map(|&id| (id, model.linear(id).expect("layer").weight.len()))
                    .collect();
                make_contiguous_partitions(&sizes, self.partitions)
            }
            PartitionStrategy::Random => {
                let mut rng = rng_for(self.seed, stream::PARTITION, round as u64, 0);
                make_random_partition(&prunable, self.partitions, &mut rng)
            }
        }
    }
}

/// Random initial masks at the target sparsity; pruned weights are zeroed.
pub fn init_sparse(model: &mut Model, policy: &SparsityPolicy, seed: u64) -> Result<MaskSet> {
    let mut rng = rng_for(seed, stream::MASK, 0, 0);
    random_masks(model, policy, &mut rng)
}

#[derive(Debug, Clone)]
pub struct GapOutcome {
    pub model: Model,
    pub masks: MaskSet,
    pub record: RunRecord,
}

pub(crate) fn probe_for(
    config_seed: u64,
    data: &Dataset,
    samples: usize,
    batch: usize,
) -> Result<ProbeSet> {
    ProbeSet::from_split(&data.train, samples, batch, config_seed)
}

pub fn run_cgap(config: &GapConfig, mut model: Model, data: &Dataset) -> Result<GapOutcome> {
    config.validate(&model)?;
    let policy = &config.policy;
    let kappa = config.partitions;
    let prunable = policy.prunable_layers(&model);

    let mut masks = init_sparse(&mut model, policy, config.seed)?;
    let mut rec = Recorder::new(&config.run_id, Method::Cgap, &masks, prunable.clone());
    rec.track(&masks);
    let mut trainer = Trainer::new(
        data,
        &model,
        config.train,
        rng_for(config.seed, stream::DATA, 0, 0),
    )?;
    let probe = if config.diagnostics {
        Some(probe_for(
            config.seed,
            data,
            config.probe_samples,
            config.train.batch_size,
        )?)
    } else {
        None
    };
    let mut round_tracker = CoverageTracker::new(&masks, &prunable);
    let mut report = ConvergenceReport::default();
    let mut round_delta = 0.0f64;
    let mut scheme = config.partition_for_round(&model, 0)?;
    rec.partition = Some(scheme.clone());
    let mut dense: Option<(usize, Vec<LayerId>)> = None;

    for step in 0..config.steps {
        let round = step / kappa;
        rec.step = Some(step);
        rec.round = Some(round);
        if step % kappa == 0 {
            if step > 0 && config.strategy == PartitionStrategy::Random {
                scheme = config
                    .partition_for_round(&model, round)
                    .map_err(|e| e.at_step(step))?;
                rec.partition = Some(scheme.clone());
            }
            round_tracker.reset();
            round_delta = 0.0;
        }
        let (grow, prune) = schedule_indices(step, kappa)?;
        let masks_before = masks.clone();

        if prune.is_some() {
            let (pid, layers) = dense.take().expect("a partition is dense after step 0");
            let before = rec.scoped_sparsity(&masks);
            let report_prune = arg_prune_to(&mut model, &mut masks, policy, &layers)
                .map_err(|e| e.at_step(step))?;
            round_delta = round_delta.max(report_prune.delta_sq.unwrap_or(0.0));
            rec.event(
                EventKind::Prune,
                &model,
                &masks,
                data,
                Some(pid),
                layers,
                before,
                report_prune.delta_sq,
            )?;
        }

        let grown: Vec<LayerId> = scheme.group(grow).to_vec();
        let before = rec.scoped_sparsity(&masks);
        arg_grow_to(&mut masks, policy, &grown)?;
        rec.event(
            EventKind::Grow,
            &model,
            &masks,
            data,
            Some(grow),
            grown.clone(),
            before,
            None,
        )?;
        if masks != masks_before {
            trainer.reset_momentum();
        }
        rec.track(&masks);
        round_tracker.track(&masks);

        let mut last = None;
        trainer
            .train_phase(
                &mut model,
                Some(&masks),
                config.epochs_per_step,
                |m, stats| {
                    last = Some(rec.epoch_row(m, &masks, data, stats)?);
                    Ok(())
                },
            )
            .map_err(|e| e.at_step(step))?;
        rec.record.step_evals.push(last.unwrap_or_default());
        if config.snapshot_steps {
            rec.record.snapshots.push(Snapshot {
                step,
                model: model.clone(),
                masks: masks.clone(),
            });
        }
        dense = Some((grow, grown));

        if step % kappa == kappa - 1 {
            rec.record.round_coverage.push(round_tracker.fraction());
            if let Some(p) = &probe {
                report
                    .grad_norm_sq
                    .push(probe_gradient_norm(&model, &masks, &p.x, &p.y)?);
                report.delta_sq.push(round_delta);
            }
        }
    }

    rec.round = None;
    if let Some((pid, layers)) = dense.take() {
        let masks_before = masks.clone();
        let before = rec.scoped_sparsity(&masks);
        let r = arg_prune_to(&mut model, &mut masks, policy, &layers)?;
        rec.event(
            EventKind::FinalPrune,
            &model,
            &masks,
            data,
            Some(pid),
            layers,
            before,
            r.delta_sq,
        )?;
        if masks != masks_before {
            trainer.reset_momentum();
        }
        rec.track(&masks);
    }
    rec.step = None;
    trainer.train_phase(
        &mut model,
        Some(&masks),
        config.finetune_epochs,
        |m, stats| {
            rec.epoch_row(m, &masks, data, stats)?;
            Ok(())
        },
    )?;

    rec.record.best_step = best_index(&rec.record.step_evals);
    if let Some(p) = &probe {
        report.rounds = report.grad_norm_sq.len();
        report.grad_variance = estimate_grad_variance(&model, &masks, &p.batches)?;
        rec.record.convergence = Some(report);
    }
    let record = rec.finish(&model, data)?;
    Ok(GapOutcome {
        model,
        masks,
        record,
    })
}

pub(crate) fn best_index(evals: &[crate::train::Eval]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        if best.is_none_or(|b| e.accuracy > evals[b].accuracy) {
            best = Some(i);
        }
    }
    best
}
