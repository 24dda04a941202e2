//! Best-subset search on a design with a few real effects among noise
//! columns, checked against full enumeration.
//!
//! ```text
//! cargo run --release --example best_subset
//! ```

use lobsurv::select::{best_subset_per_size, exhaustive_subsets};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn run() -> lobsurv::Result<()> {
    let (n, p) = (400, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        0.8 * x[(i, 1)] - 0.5 * x[(i, 4)] + 0.3 * x[(i, 7)] + rng.sample::<f64, _>(StandardNormal)
    });

    let bb = best_subset_per_size(&x, &y, 30)?;
    let ex = exhaustive_subsets(&x, &y)?;
    println!(
        "branch and bound visited {} of {} subsets and rescored {} candidates",
        bb.nodes_evaluated,
        ex.nodes_evaluated,
        bb.evaluated_by_size.iter().sum::<u64>()
    );
    for b in &bb.per_size {
        let adj = 1.0 - (1.0 - b.r2) * (n - 1) as f64 / (n - b.size - 1) as f64;
        println!("  size {:>2}: {:?} R^2 {:.4} adjusted {:.4}", b.size, b.subset.indices(), b.r2, adj);
    }
    assert_eq!(bb.per_size, ex.per_size);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lobsurv::Result<()> {
    run()
}
