mod common;

use common::{mlp, momentum, sgd, task, weight_bits};
use gapsparse::baselines::{
    run_dense, run_gmp, run_one_shot, run_random_explore, run_static_random,
};
use gapsparse::sparsity::{prune_count, sparsity_of};
use gapsparse::train::EventKind;
use gapsparse::{
    init_sparse, run_cgap, BaselineConfig, BaselineMethod, GapConfig, GapError, GmpSchedule,
    PartitionStrategy, SparsityPolicy,
};

const SIZES: [usize; 5] = [6, 10, 10, 10, 3];

#[test]
fn dense_baseline_equals_cgap_without_sparsity() {
    let data = task(&[6, 8, 3], 200, 1);
    let train = momentum(0.05, 16);
    let gap = GapConfig::new(2, 3, 2, 1, SparsityPolicy::uniform(0.0), train, 4);
    let mut base = BaselineConfig::new(
        BaselineMethod::Dense,
        gap.epoch_budget(),
        SparsityPolicy::uniform(0.0),
        train,
        4,
    );
    base.lr_cycle_epochs = Some(2);
    let a = run_cgap(&gap, mlp(&SIZES, 4), &data).unwrap();
    let b = run_dense(&base, mlp(&SIZES, 4), &data).unwrap();
    assert_eq!(weight_bits(&a.model), weight_bits(&b.model));
    assert_eq!(a.record.epochs_trained, b.record.epochs_trained);
}

#[test]
fn static_random_equals_cgap_with_no_steps() {
    let data = task(&[6, 8, 3], 200, 2);
    let policy = SparsityPolicy::uniform(0.7);
    let gap = GapConfig::new(1, 0, 1, 6, policy.clone(), momentum(0.05, 16), 9);
    let base = BaselineConfig::new(
        BaselineMethod::StaticRandom,
        6,
        policy,
        momentum(0.05, 16),
        9,
    );
    let a = run_cgap(&gap, mlp(&SIZES, 9), &data).unwrap();
    let b = run_static_random(&base, mlp(&SIZES, 9), &data).unwrap();
    assert_eq!(weight_bits(&a.model), weight_bits(&b.model));
    assert_eq!(a.masks, b.masks);
    // the mask never changes, so coverage stays at the density
    let mut m0 = mlp(&SIZES, 9);
    assert_eq!(init_sparse(&mut m0, &base.policy, 9).unwrap(), b.masks);
    assert!(b
        .record
        .coverage
        .iter()
        .all(|&c| (c - b.record.coverage[0]).abs() < 1e-15));
}

#[test]
fn every_regime_spends_the_budget() {
    let data = task(&[6, 8, 3], 160, 3);
    let policy = SparsityPolicy::uniform(0.5);
    let gap = GapConfig::new(2, 4, 2, 3, policy.clone(), sgd(0.05, 32), 1);
    let budget = gap.epoch_budget();
    assert_eq!(
        run_cgap(&gap, mlp(&SIZES, 1), &data)
            .unwrap()
            .record
            .epochs_trained,
        budget
    );
    for method in [
        BaselineMethod::Dense,
        BaselineMethod::OneShot,
        BaselineMethod::Gmp,
        BaselineMethod::StaticRandom,
        BaselineMethod::RandomExplore,
    ] {
        let cfg = BaselineConfig::new(method, budget, policy.clone(), sgd(0.05, 32), 1);
        let out = gapsparse::run_baseline(&cfg, mlp(&SIZES, 1), &data).unwrap();
        assert_eq!(out.record.epochs_trained, budget, "{method:?}");
        let epoch_rows = out
            .record
            .rows
            .iter()
            .filter(|r| r.event == EventKind::Epoch)
            .count();
        assert_eq!(epoch_rows, budget);
    }
}

#[test]
fn one_shot_prunes_bottom_magnitudes_of_the_dense_model() {
    let data = task(&[6, 8, 3], 160, 4);
    let policy = SparsityPolicy::uniform(0.6);
    let mut cfg = BaselineConfig::new(BaselineMethod::OneShot, 4, policy.clone(), sgd(0.05, 32), 2);
    cfg.snapshot_events = true;
    let out = run_one_shot(&cfg, mlp(&SIZES, 2), &data).unwrap();
    // replay the dense half and compare the pruned set
    let dense_cfg = BaselineConfig::new(BaselineMethod::Dense, 2, policy.clone(), sgd(0.05, 32), 2);
    let dense = run_dense(&dense_cfg, mlp(&SIZES, 2), &data).unwrap();
    let snap = &out.record.snapshots[0];
    for id in 0..4 {
        let w = dense.model.linear(id).unwrap().weight.data();
        let m = snap.masks.mask(id);
        assert_eq!(m.zeros(), prune_count(0.6, m.len()));
        let kept_min = (0..m.len())
            .filter(|&k| m.bits()[k])
            .map(|k| w[k].abs())
            .fold(f64::INFINITY, f64::min);
        let pruned_max = (0..m.len())
            .filter(|&k| !m.bits()[k])
            .map(|k| w[k].abs())
            .fold(0.0, f64::max);
        assert!(pruned_max <= kept_min);
    }
    assert_eq!(snap.masks, out.masks);
}

#[test]
fn gmp_masks_nest_and_follow_the_ramp() {
    let data = task(&[6, 8, 3], 160, 5);
    let mut cfg = BaselineConfig::new(
        BaselineMethod::Gmp,
        8,
        SparsityPolicy::uniform(0.75),
        sgd(0.05, 32),
        3,
    );
    cfg.gmp = GmpSchedule {
        start_epoch: 1,
        end_epoch: 7,
        interval: 2,
    };
    cfg.snapshot_events = true;
    let out = run_gmp(&cfg, mlp(&SIZES, 3), &data).unwrap();
    let snaps = &out.record.snapshots;
    assert_eq!(
        snaps.iter().map(|s| s.step).collect::<Vec<_>>(),
        vec![1, 3, 5, 7]
    );
    for pair in snaps.windows(2) {
        for (a, b) in pair[0].masks.masks().iter().zip(pair[1].masks.masks()) {
            assert!(
                a.bits().iter().zip(b.bits()).all(|(&x, &y)| x || !y),
                "kept sets must shrink"
            );
        }
    }
    for s in snaps {
        let p = (s.step as f64 - 1.0) / 6.0;
        let target = 0.75 * (1.0 - (1.0 - p).powi(3));
        for m in s.masks.masks() {
            assert_eq!(m.zeros(), prune_count(target, m.len()));
        }
    }
}

#[test]
fn gmp_schedule_errors() {
    let data = task(&[6, 8, 3], 60, 5);
    let mut cfg = BaselineConfig::new(
        BaselineMethod::Gmp,
        4,
        SparsityPolicy::uniform(0.5),
        sgd(0.05, 32),
        3,
    );
    cfg.gmp = GmpSchedule {
        start_epoch: 3,
        end_epoch: 3,
        interval: 1,
    };
    assert!(matches!(
        run_gmp(&cfg, mlp(&SIZES, 3), &data),
        Err(GapError::Config(_))
    ));
    cfg.gmp.end_epoch = 5;
    assert!(matches!(
        run_gmp(&cfg, mlp(&SIZES, 3), &data),
        Err(GapError::Config(_))
    ));
}

#[test]
fn random_explore_conserves_sparsity_and_swaps_exactly() {
    let data = task(&[10, 2], 80, 6);
    // one 20-weight layer at 50%: p = 0.2 swaps round(0.2 * 10) = 2 weights
    let mut cfg = BaselineConfig::new(
        BaselineMethod::RandomExplore,
        6,
        SparsityPolicy::uniform(0.5),
        sgd(0.05, 16),
        8,
    );
    cfg.explore_fraction = 0.2;
    cfg.snapshot_events = true;
    let out = run_random_explore(&cfg, mlp(&[10, 2], 8), &data).unwrap();
    let explores: Vec<_> = out.record.events_of(EventKind::Explore).collect();
    assert_eq!(explores.len(), 5);
    for e in &explores {
        assert_eq!(e.sparsity_before, e.sparsity_after);
    }
    let mut prev = init_sparse(&mut mlp(&[10, 2], 8), &cfg.policy, 8).unwrap();
    for s in &out.record.snapshots {
        let (a, b) = (prev.mask(0).bits(), s.masks.mask(0).bits());
        let dropped = a.iter().zip(b).filter(|(&x, &y)| x && !y).count();
        let grown = a.iter().zip(b).filter(|(&x, &y)| !x && y).count();
        assert_eq!((dropped, grown), (2, 2));
        for k in 0..b.len() {
            if !a[k] && b[k] {
                assert_eq!(s.model.linear(0).unwrap().weight.data()[k], 0.0);
            }
        }
        prev = s.masks.clone();
    }
}

#[test]
fn random_explore_rejects_oversized_swaps() {
    let data = task(&[10, 2], 40, 6);
    let mut cfg = BaselineConfig::new(
        BaselineMethod::RandomExplore,
        3,
        SparsityPolicy::uniform(0.9),
        sgd(0.05, 16),
        8,
    );
    cfg.explore_fraction = 0.99;
    assert!(matches!(
        run_random_explore(&cfg, mlp(&[10, 2], 8), &data),
        Err(GapError::Config(_))
    ));
}

#[test]
fn cgap_schedule_and_coverage_for_random_partitions() {
    let data = task(&[6, 8, 3], 120, 7);
    for kappa in [1, 2, 4] {
        let mut gap = GapConfig::new(
            kappa,
            3 * kappa,
            1,
            1,
            SparsityPolicy::uniform(0.8),
            sgd(0.05, 32),
            10 + kappa as u64,
        );
        gap.strategy = PartitionStrategy::Random;
        gap.snapshot_steps = true;
        let out = run_cgap(&gap, mlp(&SIZES, 5), &data).unwrap();
        assert_eq!(out.record.round_coverage, vec![1.0; 3]);
        assert_eq!(out.record.coverage[kappa], 1.0);
        // at most one partition is dense after any step
        for s in &out.record.snapshots {
            let prunable: Vec<usize> = (0..4).collect();
            let dense = s.masks.masks().iter().filter(|m| m.is_dense()).count();
            assert!(dense >= 1 && sparsity_of(&s.masks, &prunable) < 0.8);
        }
        assert!((sparsity_of(&out.masks, &[0, 1, 2, 3]) - 0.8).abs() < 0.01);
    }
}

#[test]
fn cgap_is_deterministic() {
    let data = task(&[6, 8, 3], 120, 8);
    let gap = GapConfig::new(
        2,
        4,
        1,
        1,
        SparsityPolicy::non_uniform(0.6),
        momentum(0.05, 32),
        3,
    );
    let a = run_cgap(&gap, mlp(&SIZES, 5), &data).unwrap();
    let b = run_cgap(&gap, mlp(&SIZES, 5), &data).unwrap();
    assert_eq!(weight_bits(&a.model), weight_bits(&b.model));
    assert_eq!(a.masks, b.masks);
}
