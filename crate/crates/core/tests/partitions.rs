use std::collections::BTreeMap;

use gapsparse::partition::{make_contiguous_partitions, make_random_partition, schedule_indices};
use gapsparse::rng::rng_for;
use rand::Rng as _;

#[test]
fn random_partition_is_uniform_over_surjections() {
    // 3 layers into 2 labelled nonempty groups: 2^3 - 2 = 6 assignments
    let layers = [0, 1, 2];
    let draws = 10_000;
    let mut rng = rng_for(11, 4, 0, 0);
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for _ in 0..draws {
        let p = make_random_partition(&layers, 2, &mut rng).unwrap();
        let key: Vec<usize> = layers.iter().map(|&l| p.owner_of(l).unwrap()).collect();
        *counts.entry(key).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = draws as f64 / 6.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 5 degrees of freedom, p = 0.001 critical value
    assert!(chi2 < 20.515, "chi-square {chi2}");
}

#[test]
fn contiguous_balances_the_example() {
    let sizes = [(0, 100), (1, 100), (2, 300), (3, 100)];
    let p = make_contiguous_partitions(&sizes, 2).unwrap();
    assert_eq!(p.groups(), &[vec![0, 1], vec![2, 3]]);
}

/// Oracle: every way to place `kappa - 1` cuts, minimising the largest group.
fn exhaustive_best(sizes: &[usize], kappa: usize) -> usize {
    fn rec(sizes: &[usize], kappa: usize) -> usize {
        if kappa == 1 {
            return sizes.iter().sum();
        }
        (1..=sizes.len() - (kappa - 1))
            .map(|i| {
                sizes[..i]
                    .iter()
                    .sum::<usize>()
                    .max(rec(&sizes[i..], kappa - 1))
            })
            .min()
            .unwrap()
    }
    rec(sizes, kappa)
}

#[test]
fn contiguous_is_optimal_against_exhaustive_search() {
    let mut rng = rng_for(5, 4, 1, 0);
    for _ in 0..300 {
        let n = rng.random_range(1..=7);
        let kappa = rng.random_range(1..=n);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=400)).collect();
        let pairs: Vec<(usize, usize)> = sizes.iter().copied().enumerate().collect();
        let p = make_contiguous_partitions(&pairs, kappa).unwrap();
        assert_eq!(p.kappa(), kappa);
        let flat: Vec<usize> = p.groups().iter().flatten().copied().collect();
        assert_eq!(
            flat,
            (0..n).collect::<Vec<_>>(),
            "groups must be contiguous and in order"
        );
        let largest = p
            .groups()
            .iter()
            .map(|g| g.iter().map(|&l| sizes[l]).sum::<usize>())
            .max()
            .unwrap();
        assert_eq!(largest, exhaustive_best(&sizes, kappa));
    }
}

#[test]
fn partition_count_bounds() {
    let sizes = [(0, 10), (1, 10)];
    assert!(make_contiguous_partitions(&sizes, 0).is_err());
    assert!(make_contiguous_partitions(&sizes, 3).is_err());
    let mut rng = rng_for(0, 4, 0, 0);
    assert!(make_random_partition(&[0, 1], 3, &mut rng).is_err());
}

#[test]
fn schedule_examples() {
    assert_eq!(schedule_indices(0, 3).unwrap(), (0, None));
    assert_eq!(schedule_indices(1, 3).unwrap(), (1, Some(0)));
    assert_eq!(schedule_indices(3, 3).unwrap(), (0, Some(2)));
    assert_eq!(schedule_indices(7, 1).unwrap(), (0, Some(0)));
    assert!(schedule_indices(2, 0).is_err());
}
