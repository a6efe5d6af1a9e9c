//! Layer partitions: balanced contiguous groups, random groups and the cyclic
//! grow/prune schedule that walks through them.

use gapsparse::partition::{make_contiguous_partitions, make_random_partition, schedule_indices};
use gapsparse::rng::{rng_for, stream};

fn main() -> gapsparse::Result<()> {
    let sizes = [(0, 100), (1, 100), (2, 300), (3, 100)];
    for kappa in 1..=4 {
        let p = make_contiguous_partitions(&sizes, kappa)?;
        println!("contiguous kappa={kappa}: {:?}", p.groups());
    }
    let mut rng = rng_for(12, stream::PARTITION, 0, 0);
    for round in 0..3 {
        let p = make_random_partition(&[0, 1, 2, 3, 4, 5], 3, &mut rng)?;
        println!("random round {round}: {:?}", p.groups());
    }
    for step in 0..6 {
        let (grow, prune) = schedule_indices(step, 3)?;
        println!("step {step}: grow {grow}, prune {prune:?}");
    }
    Ok(())
}
