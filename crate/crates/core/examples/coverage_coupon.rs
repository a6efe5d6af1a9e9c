//! How long random exploration takes to touch every weight, against a
//! scheduled sweep, and the exact coverage law of random mask exploration.

use gapsparse::analysis::{
    coupon_expected_steps, random_explore_expected_coverage, random_explore_uncovered_law,
    simulate_random_coverage, simulate_scheduled_coverage,
};

fn main() -> gapsparse::Result<()> {
    for n in [10, 50, 200] {
        let random = simulate_random_coverage(n, 1, 2000, 7)?;
        let scheduled = simulate_scheduled_coverage(n, 1, 2000)?;
        println!(
            "n={n:>3}: random mean {:>7.2} (n*H_n {:>7.2}, p95 {:>4}), scheduled {}",
            random.mean,
            coupon_expected_steps(n, 1)?,
            random.quantile(0.95),
            scheduled.quantile(1.0)
        );
    }
    // a 64-weight layer at 80% sparsity keeps 13 weights and swaps 3 per update
    for updates in [4, 16, 32, 64] {
        let law = random_explore_uncovered_law(64, 13, 3, updates)?;
        println!(
            "random explore, {updates:>2} updates: expected coverage {:.3}, P(full) {:.3}",
            random_explore_expected_coverage(64, 13, 3, updates)?,
            law[0]
        );
    }
    Ok(())
}
