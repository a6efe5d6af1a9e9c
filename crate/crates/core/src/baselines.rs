//! Comparator regimes run at the same epoch budget as a GaP run: dense
//! training, one-shot and gradual magnitude pruning from dense, a static
//! random mask, and random mask exploration (magnitude drop, random regrow).

use rand::seq::index::sample;

use crate::cyclic::init_sparse;
use crate::data::Dataset;
use crate::error::{GapError, Result};
use crate::model::Model;
use crate::rng::{rng_for, stream};
use crate::sparsity::{arg_prune_to, prune_count, Granularity, MaskSet, SparsityPolicy};
use crate::train::{EventKind, Method, Recorder, RunRecord, Snapshot, TrainSettings, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Dense,
    OneShot,
    Gmp,
    StaticRandom,
    RandomExplore,
}

impl BaselineMethod {
    fn method(self) -> Method {
        match self {
            BaselineMethod::Dense => Method::Dense,
            BaselineMethod::OneShot => Method::OneShot,
            BaselineMethod::Gmp => Method::Gmp,
            BaselineMethod::StaticRandom => Method::StaticRandom,
            BaselineMethod::RandomExplore => Method::RandomExplore,
        }
    }
}

/// Cubic sparsity ramp `s(t) = s_f * (1 - (1 - (t - t0)/(t1 - t0))^3)`,
/// applied at epoch boundaries `t0, t0 + interval, ...` and at `t1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmpSchedule {
    pub start_epoch: usize,
    pub end_epoch: usize,
    pub interval: usize,
}

impl GmpSchedule {
    pub fn validate(&self, budget: usize) -> Result<()> {
        if self.start_epoch >= self.end_epoch || self.end_epoch > budget || self.interval == 0 {
            return Err(GapError::Config(format!(
                "GMP schedule needs start < end <= {budget} and interval > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn sparsity_at(&self, final_sparsity: f64, epoch: usize) -> f64 {
        if epoch <= self.start_epoch {
            return 0.0;
        }
        if epoch >= self.end_epoch {
            return final_sparsity;
        }
        let progress =
            (epoch - self.start_epoch) as f64 / (self.end_epoch - self.start_epoch) as f64;
        final_sparsity * (1.0 - (1.0 - progress).powi(3))
    }

    /// Epoch boundaries at which pruning happens (boundary `e` precedes epoch `e`).
    pub fn event_epochs(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (self.start_epoch..self.end_epoch)
            .step_by(self.interval)
            .collect();
        out.push(self.end_epoch);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub epochs: usize,
    pub policy: SparsityPolicy,
    pub train: TrainSettings,
    pub seed: u64,
    pub run_id: String,
    pub gmp: GmpSchedule,
    /// Fraction of active weights swapped per update (random exploration).
    pub explore_fraction: f64,
    /// Share of the budget trained dense before a one-shot prune.
    pub one_shot_dense_fraction: f64,
    /// Restart the learning-rate schedule every this many epochs.
    pub lr_cycle_epochs: Option<usize>,
    /// Keep a copy of the model and masks after every mask event.
    pub snapshot_events: bool,
}

impl BaselineConfig {
    pub fn new(
        method: BaselineMethod,
        epochs: usize,
        policy: SparsityPolicy,
        train: TrainSettings,
        seed: u64,
    ) -> Self {
        Self {
            method,
            epochs,
            policy,
            train,
            seed,
            run_id: "run".into(),
            gmp: GmpSchedule {
                start_epoch: 0,
                end_epoch: (epochs * 3 / 4).max(1),
                interval: 1,
            },
            explore_fraction: 0.3,
            one_shot_dense_fraction: 0.5,
            lr_cycle_epochs: None,
            snapshot_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.train.validate()?;
        if self.epochs == 0 {
            return Err(GapError::Config("epoch budget must be positive".into()));
        }
        if self.lr_cycle_epochs == Some(0) {
            return Err(GapError::Config(
                "learning-rate cycle must be positive".into(),
            ));
        }
        match self.method {
            BaselineMethod::Gmp => self.gmp.validate(self.epochs)?,
            BaselineMethod::RandomExplore => {
                if !(self.explore_fraction > 0.0 && self.explore_fraction < 1.0) {
                    return Err(GapError::Config(format!(
                        "explore fraction {} outside (0,1)",
                        self.explore_fraction
                    )));
                }
                if self.policy.granularity != Granularity::Element {
                    return Err(GapError::Config(
                        "random exploration only supports element granularity".into(),
                    ));
                }
            }
            BaselineMethod::OneShot if !(0.0..=1.0).contains(&self.one_shot_dense_fraction) => {
                return Err(GapError::Config(
                    "one-shot dense fraction outside [0,1]".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn segments(&self, total: usize) -> Vec<usize> {
        match self.lr_cycle_epochs {
            None => vec![total],
            Some(c) => {
                let mut out = vec![c; total / c];
                if !total.is_multiple_of(c) {
                    out.push(total % c);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub model: Model,
    pub masks: MaskSet,
    pub record: RunRecord,
}

pub fn run_baseline(
    config: &BaselineConfig,
    model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    match config.method {
        BaselineMethod::Dense => run_dense(config, model, data),
        BaselineMethod::OneShot => run_one_shot(config, model, data),
        BaselineMethod::Gmp => run_gmp(config, model, data),
        BaselineMethod::StaticRandom => run_static_random(config, model, data),
        BaselineMethod::RandomExplore => run_random_explore(config, model, data),
    }
}

struct Run<'d> {
    trainer: Trainer<'d>,
    rec: Recorder,
    data: &'d Dataset,
    snapshots: bool,
}

impl<'d> Run<'d> {
    fn start(
        config: &BaselineConfig,
        model: &Model,
        masks: &MaskSet,
        data: &'d Dataset,
    ) -> Result<Self> {
        config.validate()?;
        let scope = config.policy.prunable_layers(model);
        let mut rec = Recorder::new(&config.run_id, config.method.method(), masks, scope);
        rec.track(masks);
        let trainer = Trainer::new(
            data,
            model,
            config.train,
            rng_for(config.seed, stream::DATA, 0, 0),
        )?;
        Ok(Self {
            trainer,
            rec,
            data,
            snapshots: config.snapshot_events,
        })
    }

    fn train(
        &mut self,
        model: &mut Model,
        masks: &MaskSet,
        epochs: usize,
        dense: bool,
    ) -> Result<()> {
        let (rec, data) = (&mut self.rec, self.data);
        let opt_masks = if dense { None } else { Some(masks) };
        self.trainer
            .train_phase(model, opt_masks, epochs, |m, stats| {
                rec.epoch_row(m, masks, data, stats)?;
                Ok(())
            })
    }

    fn prune(
        &mut self,
        kind: EventKind,
        model: &mut Model,
        masks: &mut MaskSet,
        policy: &SparsityPolicy,
    ) -> Result<()> {
        let before_masks = masks.clone();
        let before = self.rec.scoped_sparsity(masks);
        let scope = policy.prunable_layers(model);
        let report = arg_prune_to(model, masks, policy, &scope)?;
        self.rec.event(
            kind,
            model,
            masks,
            self.data,
            None,
            report.layers,
            before,
            report.delta_sq,
        )?;
        if *masks != before_masks {
            self.trainer.reset_momentum();
        }
        self.rec.track(masks);
        self.snapshot(model, masks);
        Ok(())
    }

    fn snapshot(&mut self, model: &Model, masks: &MaskSet) {
        if self.snapshots {
            self.rec.record.snapshots.push(Snapshot {
                step: self.rec.step.unwrap_or(0),
                model: model.clone(),
                masks: masks.clone(),
            });
        }
    }

    fn finish(self, model: Model, masks: MaskSet) -> Result<BaselineOutcome> {
        let record = self.rec.finish(&model, self.data)?;
        Ok(BaselineOutcome {
            model,
            masks,
            record,
        })
    }
}

/// Unmasked training for the whole budget.
pub fn run_dense(
    config: &BaselineConfig,
    mut model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    let masks = MaskSet::dense_for(&model);
    let mut run = Run::start(config, &model, &masks, data)?;
    for seg in config.segments(config.epochs) {
        run.train(&mut model, &masks, seg, true)?;
    }
    run.finish(model, masks)
}

/// Dense training, a single magnitude prune to the target, then fine-tuning.
pub fn run_one_shot(
    config: &BaselineConfig,
    mut model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    let mut masks = MaskSet::dense_for(&model);
    let mut run = Run::start(config, &model, &masks, data)?;
    let dense_epochs = (config.one_shot_dense_fraction * config.epochs as f64).round() as usize;
    for seg in config.segments(dense_epochs) {
        run.train(&mut model, &masks, seg, true)?;
    }
    run.prune(EventKind::Prune, &mut model, &mut masks, &config.policy)?;
    for seg in config.segments(config.epochs - dense_epochs) {
        run.train(&mut model, &masks, seg, false)?;
    }
    run.finish(model, masks)
}

/// Gradual magnitude pruning along the cubic ramp; masks only ever shrink.
pub fn run_gmp(
    config: &BaselineConfig,
    mut model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    let mut masks = MaskSet::dense_for(&model);
    let mut run = Run::start(config, &model, &masks, data)?;
    let events = config.gmp.event_epochs();
    let segments = config.segments(config.epochs);
    let mut boundary = 0;
    for seg in segments {
        // one schedule per segment, but prune events can fall inside it
        let mut done = 0;
        while done < seg {
            if events.contains(&boundary) {
                let mut policy = config.policy.clone();
                policy.ratio = config.gmp.sparsity_at(config.policy.ratio, boundary);
                run.rec.step = Some(boundary);
                run.prune(EventKind::Prune, &mut model, &mut masks, &policy)?;
            }
            let (rec, d) = (&mut run.rec, run.data);
            let m = &masks;
            run.trainer
                .train_epoch(&mut model, Some(m), done, seg, |mm, stats| {
                    rec.epoch_row(mm, m, d, stats)?;
                    Ok(())
                })?;
            done += 1;
            boundary += 1;
        }
    }
    if events.contains(&boundary) {
        let mut policy = config.policy.clone();
        policy.ratio = config.gmp.sparsity_at(config.policy.ratio, boundary);
        run.rec.step = Some(boundary);
        run.prune(EventKind::Prune, &mut model, &mut masks, &policy)?;
    }
    run.finish(model, masks)
}

/// The initial random mask is kept for the whole budget.
pub fn run_static_random(
    config: &BaselineConfig,
    mut model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    let masks = init_sparse(&mut model, &config.policy, config.seed)?;
    let mut run = Run::start(config, &model, &masks, data)?;
    for seg in config.segments(config.epochs) {
        run.train(&mut model, &masks, seg, false)?;
    }
    run.finish(model, masks)
}

/// After every epoch but the last, each prunable layer drops its
/// `round(p * active)` smallest active weights and activates as many weights
/// drawn uniformly from those inactive before the update. Regrown weights
/// start at zero.
pub fn run_random_explore(
    config: &BaselineConfig,
    mut model: Model,
    data: &Dataset,
) -> Result<BaselineOutcome> {
    let mut masks = init_sparse(&mut model, &config.policy, config.seed)?;
    let mut run = Run::start(config, &model, &masks, data)?;
    let scope = config.policy.prunable_layers(&model);
    for &id in &scope {
        let m = masks.mask(id);
        let swap = prune_count(config.explore_fraction, m.active());
        if swap >= m.active() || swap > m.zeros() {
            return Err(GapError::Config(format!(
                "explore fraction {} swaps {swap} of {} active weights in layer {id} ({} inactive)",
                config.explore_fraction,
                m.active(),
                m.zeros()
            )));
        }
    }
    let mut rng = rng_for(config.seed, stream::EXPLORE, 0, 0);
    let segments = config.segments(config.epochs);
    let mut epoch = 0;
    for seg in segments {
        for e in 0..seg {
            {
                let (rec, d) = (&mut run.rec, run.data);
                let m = &masks;
                run.trainer
                    .train_epoch(&mut model, Some(m), e, seg, |mm, stats| {
                        rec.epoch_row(mm, m, d, stats)?;
                        Ok(())
                    })?;
            }
            epoch += 1;
            if epoch < config.epochs {
                let before = run.rec.scoped_sparsity(&masks);
                for &id in &scope {
                    explore_layer(
                        &mut model,
                        &mut masks,
                        id,
                        config.explore_fraction,
                        &mut rng,
                    );
                }
                run.rec.step = Some(epoch);
                run.rec.event(
                    EventKind::Explore,
                    &model,
                    &masks,
                    data,
                    None,
                    scope.clone(),
                    before,
                    None,
                )?;
                run.trainer.reset_momentum();
                run.rec.track(&masks);
                run.snapshot(&model, &masks);
            }
        }
    }
    run.finish(model, masks)
}

fn explore_layer(
    model: &mut Model,
    masks: &mut MaskSet,
    id: usize,
    fraction: f64,
    rng: &mut crate::rng::Rng,
) {
    let weights = model
        .linear_mut(id)
        .expect("prunable layer")
        .weight
        .data_mut();
    let bits = masks.mask_mut(id).bits_mut();
    let mut active: Vec<usize> = (0..bits.len()).filter(|&k| bits[k]).collect();
    let inactive: Vec<usize> = (0..bits.len()).filter(|&k| !bits[k]).collect();
    let swap = prune_count(fraction, active.len());
    active.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(a.cmp(&b))
    });
    for &k in &active[..swap] {
        bits[k] = false;
        weights[k] = 0.0;
    }
    for pick in sample(rng, inactive.len(), swap) {
        let k = inactive[pick];
        bits[k] = true;
        weights[k] = 0.0;
    }
}
