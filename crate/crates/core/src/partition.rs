//! Grouping prunable layers into the partitions that are grown and pruned as
//! a unit, and the cyclic grow/prune index schedule.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::model::LayerId;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionStrategy {
    CyclicContiguous,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionScheme {
    groups: Vec<Vec<LayerId>>,
    strategy: PartitionStrategy,
}

impl PartitionScheme {
    /// Validates that `groups` are nonempty, disjoint and cover `layers`.
    pub fn new(
        groups: Vec<Vec<LayerId>>,
        layers: &[LayerId],
        strategy: PartitionStrategy,
    ) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(Vec::is_empty) {
            return Err(GapError::Config("partitions must be nonempty".into()));
        }
        let mut seen: Vec<LayerId> = groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        let mut expected = layers.to_vec();
        expected.sort_unstable();
        if seen != expected {
            return Err(GapError::Config(format!(
                "partitions {groups:?} do not exactly cover layers {layers:?}"
            )));
        }
        Ok(Self { groups, strategy })
    }

    pub fn kappa(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<LayerId>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[LayerId] {
        &self.groups[i]
    }

    pub fn strategy(&self) -> PartitionStrategy {
        self.strategy
    }

    /// Partition index owning `layer`, if any.
    pub fn owner_of(&self, layer: LayerId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&layer))
    }
}

fn check_kappa(n_layers: usize, kappa: usize) -> Result<()> {
    if kappa == 0 || kappa > n_layers {
        return Err(GapError::Config(format!(
            "partition count {kappa} must be between 1 and {n_layers} prunable layers"
        )));
    }
    Ok(())
}

/// Contiguous groups of layers with balanced parameter counts: among all ways
/// to cut the layer sequence into `kappa` runs, picks one minimising the
/// largest group (earliest cut on ties).
///
/// `sizes` pairs each prunable layer id with its weight count, in model order.
pub fn make_contiguous_partitions(
    sizes: &[(LayerId, usize)],
    kappa: usize,
) -> Result<PartitionScheme> {
    let n = sizes.len();
    check_kappa(n, kappa)?;
    let mut prefix = vec![0usize; n + 1];
    for (i, &(_, s)) in sizes.iter().enumerate() {
        prefix[i + 1] = prefix[i] + s;
    }
    // best[g][i]: minimal max-group size covering the first i layers with g groups
    let inf = usize::MAX;
    let mut best = vec![vec![inf; n + 1]; kappa + 1];
    let mut cut = vec![vec![0usize; n + 1]; kappa + 1];
    best[0][0] = 0;
    for g in 1..=kappa {
        for i in g..=n {
            for j in (g - 1)..i {
                if best[g - 1][j] == inf {
                    continue;
                }
                let cand = best[g - 1][j].max(prefix[i] - prefix[j]);
                if cand < best[g][i] {
                    best[g][i] = cand;
                    cut[g][i] = j;
                }
            }
        }
    }
    let mut bounds = vec![n];
    let mut i = n;
    for g in (1..=kappa).rev() {
        i = cut[g][i];
        bounds.push(i);
    }
    bounds.reverse();
    let groups = bounds
        .windows(2)
        .map(|w| sizes[w[0]..w[1]].iter().map(|&(id, _)| id).collect())
        .collect();
    let ids: Vec<LayerId> = sizes.iter().map(|&(id, _)| id).collect();
    PartitionScheme::new(groups, &ids, PartitionStrategy::CyclicContiguous)
}

/// Uniformly random assignment of layers to `kappa` nonempty labelled groups.
pub fn make_random_partition(
    layers: &[LayerId],
    kappa: usize,
    rng: &mut Rng,
) -> Result<PartitionScheme> {
    check_kappa(layers.len(), kappa)?;
    // rejection sampling keeps every surjective assignment equally likely
    loop {
        let assign: Vec<usize> = layers.iter().map(|_| rng.random_range(0..kappa)).collect();
        let mut groups = vec![Vec::new(); kappa];
        for (&layer, &g) in layers.iter().zip(&assign) {
            groups[g].push(layer);
        }
        if groups.iter().all(|g| !g.is_empty()) {
            for g in &mut groups {
                g.sort_unstable();
            }
            return PartitionScheme::new(groups, layers, PartitionStrategy::Random);
        }
    }
}

/// `(step mod κ, (step − 1) mod κ)`; the prune index is `None` at step 0
/// because no partition is dense yet.
pub fn schedule_indices(step: usize, kappa: usize) -> Result<(usize, Option<usize>)> {
    if kappa == 0 {
        return Err(GapError::Config(
            "partition count must be at least 1".into(),
        ));
    }
    let grow = step % kappa;
    let prune = (step > 0).then(|| (step - 1) % kappa);
    Ok((grow, prune))
}
