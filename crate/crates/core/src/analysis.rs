//! Exploration coverage, the coupon-collector comparison between scheduled
//! and random weight selection, and gradient diagnostics for sparse runs.

use std::collections::BTreeMap;

use rand::seq::index::sample;

use crate::data::Split;
use crate::error::{GapError, Result};
use crate::model::{Gradients, LayerId, Model, Targets};
use crate::rng::{rng_for, stream};
use crate::sparsity::MaskSet;
use crate::tensor::Tensor;

/// Records which prunable weights have ever been active.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTracker {
    scope: Vec<LayerId>,
    ever: Vec<Vec<bool>>,
    covered: usize,
    total: usize,
    history: Vec<f64>,
    full_at: Option<usize>,
}

impl CoverageTracker {
    pub fn new(masks: &MaskSet, scope: &[LayerId]) -> Self {
        let ever: Vec<Vec<bool>> = scope
            .iter()
            .map(|&id| vec![false; masks.mask(id).len()])
            .collect();
        let total = ever.iter().map(Vec::len).sum();
        Self {
            scope: scope.to_vec(),
            ever,
            covered: 0,
            total,
            history: Vec::new(),
            full_at: None,
        }
    }

    /// OR-accumulates the active entries of `masks` and appends the new fraction.
    pub fn track(&mut self, masks: &MaskSet) -> f64 {
        for (flags, &id) in self.ever.iter_mut().zip(&self.scope) {
            for (f, &b) in flags.iter_mut().zip(masks.mask(id).bits()) {
                if b && !*f {
                    *f = true;
                    self.covered += 1;
                }
            }
        }
        let frac = self.fraction();
        if self.full_at.is_none() && self.covered == self.total {
            self.full_at = Some(self.history.len());
        }
        self.history.push(frac);
        frac
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.covered as f64 / self.total as f64
        }
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Index of the first `track` call that reached full coverage.
    pub fn full_at(&self) -> Option<usize> {
        self.full_at
    }

    /// Forgets everything seen so far (used for per-round coverage).
    pub fn reset(&mut self) {
        for f in &mut self.ever {
            f.fill(false);
        }
        self.covered = 0;
        self.full_at = None;
        self.history.clear();
    }
}

/// Expected draws to see all `n` items when drawing one at a time with
/// replacement: `n * H_n`.
pub fn coupon_expected_steps(n: usize, per_step: usize) -> Result<f64> {
    if n == 0 {
        return Err(GapError::Usage("need at least one weight".into()));
    }
    if per_step != 1 {
        return Err(GapError::Usage(
            "closed form only covers one draw per step; use simulate_random_coverage".into(),
        ));
    }
    let harmonic: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    Ok(n as f64 * harmonic)
}

/// Steps a without-replacement (scheduled) sweep needs to touch `n` weights.
pub fn scheduled_coverage_steps(n: usize, per_step: usize) -> Result<usize> {
    if n == 0 || per_step == 0 {
        return Err(GapError::Usage("n and per_step must be positive".into()));
    }
    Ok(n.div_ceil(per_step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub mean: f64,
    pub std: f64,
    /// steps-to-full-coverage -> number of trials
    pub histogram: BTreeMap<usize, usize>,
    pub trials: usize,
}

impl CoverageStats {
    fn from_samples(samples: &[usize]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<usize>() as f64 / n;
        let var = if samples.len() > 1 {
            samples
                .iter()
                .map(|&s| (s as f64 - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        let mut histogram = BTreeMap::new();
        for &s in samples {
            *histogram.entry(s).or_insert(0) += 1;
        }
        Self {
            mean,
            std: var.sqrt(),
            histogram,
            trials: samples.len(),
        }
    }

    /// Smallest step count by which at least `level` of the trials were fully covered.
    pub fn quantile(&self, level: f64) -> usize {
        let need = (level * self.trials as f64).ceil() as usize;
        let mut seen = 0;
        for (&steps, &count) in &self.histogram {
            seen += count;
            if seen >= need {
                return steps;
            }
        }
        *self.histogram.keys().last().unwrap_or(&0)
    }
}

/// Monte-Carlo steps-to-full-coverage when each step trains `per_step`
/// distinct weights picked uniformly at random (with replacement across steps).
pub fn simulate_random_coverage(
    n: usize,
    per_step: usize,
    trials: usize,
    seed: u64,
) -> Result<CoverageStats> {
    if n == 0 || per_step == 0 || per_step > n || trials == 0 {
        return Err(GapError::Usage(
            "need 0 < per_step <= n and trials > 0".into(),
        ));
    }
    let mut rng = rng_for(seed, stream::PROBE, n as u64, per_step as u64);
    let mut samples = Vec::with_capacity(trials);
    let mut seen = vec![false; n];
    for _ in 0..trials {
        seen.fill(false);
        let mut covered = 0;
        let mut steps = 0;
        while covered < n {
            steps += 1;
            for i in sample(&mut rng, n, per_step) {
                if !seen[i] {
                    seen[i] = true;
                    covered += 1;
                }
            }
        }
        samples.push(steps);
    }
    Ok(CoverageStats::from_samples(&samples))
}

/// Steps-to-full-coverage of a cyclic sweep, as a distribution (it is a point mass).
pub fn simulate_scheduled_coverage(
    n: usize,
    per_step: usize,
    trials: usize,
) -> Result<CoverageStats> {
    let steps = scheduled_coverage_steps(n, per_step)?;
    if trials == 0 {
        return Err(GapError::Usage("trials must be positive".into()));
    }
    Ok(CoverageStats::from_samples(&vec![steps; trials]))
}

/// Exact law of random mask exploration on one layer of `n` weights with
/// `active` weights kept: every update grows `swap` weights drawn uniformly
/// from the `n - active` weights inactive before that update. Returns the
/// distribution of the number of never-active weights after `updates`
/// updates, indexed by that number.
pub fn random_explore_uncovered_law(
    n: usize,
    active: usize,
    swap: usize,
    updates: usize,
) -> Result<Vec<f64>> {
    if active > n || swap > n - active {
        return Err(GapError::Usage(
            "swap count exceeds the inactive pool".into(),
        ));
    }
    let pool = n - active;
    let mut law = vec![0.0; pool + 1];
    law[pool] = 1.0;
    for _ in 0..updates {
        let mut next = vec![0.0; pool + 1];
        for (u, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            // hits ~ Hypergeometric(pool, u, swap)
            for hits in 0..=swap.min(u) {
                let prob = hypergeom(pool, u, swap, hits);
                next[u - hits] += p * prob;
            }
        }
        law = next;
    }
    Ok(law)
}

/// Expected coverage fraction after `updates` random-explore updates.
pub fn random_explore_expected_coverage(
    n: usize,
    active: usize,
    swap: usize,
    updates: usize,
) -> Result<f64> {
    let law = random_explore_uncovered_law(n, active, swap, updates)?;
    let mean_uncovered: f64 = law.iter().enumerate().map(|(u, p)| u as f64 * p).sum();
    Ok((n as f64 - mean_uncovered) / n as f64)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

fn hypergeom(pool: usize, marked: usize, draws: usize, hits: usize) -> f64 {
    if hits > marked || draws - hits > pool - marked {
        return 0.0;
    }
    (ln_choose(marked, hits) + ln_choose(pool - marked, draws - hits) - ln_choose(pool, draws))
        .exp()
}

/// Gradient restricted to active coordinates: weights with a zero mask are
/// dropped, biases always count.
fn masked_grad_vector(g: &Gradients, masks: &MaskSet) -> Vec<f64> {
    let mut out = Vec::new();
    for (lg, m) in g.layers.iter().zip(masks.masks()) {
        out.extend(
            lg.weight
                .data()
                .iter()
                .zip(m.bits())
                .filter(|(_, &b)| b)
                .map(|(v, _)| *v),
        );
        out.extend_from_slice(lg.bias.data());
    }
    out
}

/// `‖∇F(Θ⊙m)‖²` over the probe set, restricted to active coordinates.
pub fn probe_gradient_norm(
    model: &Model,
    masks: &MaskSet,
    x: &Tensor,
    targets: &Targets,
) -> Result<f64> {
    masks.check_aligned(model)?;
    let (_, g) = model.loss_and_gradients(x, targets)?;
    Ok(masked_grad_vector(&g, masks).iter().map(|v| v * v).sum())
}

/// Mean over batches of `‖∇f_batch − ∇f_probe‖²`, where the probe gradient
/// is taken over the union of all batches.
pub fn estimate_grad_variance(
    model: &Model,
    masks: &MaskSet,
    batches: &[(Tensor, Targets)],
) -> Result<f64> {
    masks.check_aligned(model)?;
    if batches.is_empty() {
        return Err(GapError::Usage("need at least one batch".into()));
    }
    let xs: Vec<&Tensor> = batches.iter().map(|(x, _)| x).collect();
    let ys: Vec<&Targets> = batches.iter().map(|(_, y)| y).collect();
    let all_x = Tensor::concat_rows(&xs)?;
    let all_y = Targets::concat(&ys)?;
    let (_, probe) = model.loss_and_gradients(&all_x, &all_y)?;
    let probe = masked_grad_vector(&probe, masks);
    let mut total = 0.0;
    for (x, y) in batches {
        let (_, g) = model.loss_and_gradients(x, y)?;
        let g = masked_grad_vector(&g, masks);
        total += g
            .iter()
            .zip(&probe)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / batches.len() as f64)
}

/// Fixed, seeded subset of training samples used for gradient diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub x: Tensor,
    pub y: Targets,
    /// The same samples cut into training-sized batches.
    pub batches: Vec<(Tensor, Targets)>,
}

impl ProbeSet {
    pub fn from_split(split: &Split, samples: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if split.is_empty() || samples == 0 || batch_size == 0 {
            return Err(GapError::Usage(
                "probe set needs samples and a batch size".into(),
            ));
        }
        let mut rng = rng_for(seed, stream::PROBE, 0, 0);
        let mut idx = sample(&mut rng, split.len(), samples.min(split.len())).into_vec();
        idx.sort_unstable();
        let (x, y) = split.batch(&idx)?;
        let batches = idx
            .chunks(batch_size)
            .map(|c| split.batch(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { x, y, batches })
    }
}

/// Per-round diagnostics of a sparse run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    /// Probe gradient norm of the masked model at the end of each round.
    pub grad_norm_sq: Vec<f64>,
    /// Largest mask relative error among the prune events of each round
    /// (0 when every prune in the round saw only zero weights).
    pub delta_sq: Vec<f64>,
    /// Gradient variance estimate at the end of the run.
    pub grad_variance: f64,
    pub rounds: usize,
}
