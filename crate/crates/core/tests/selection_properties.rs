mod common;

use common::simulate_aft;
use lobsurv::aft::{fit_mle, FitOptions};
use lobsurv::covariates::DesignMatrix;
use lobsurv::pipeline::select_model;
use lobsurv::select::{
    best_subset_per_size, canonical_r2, exhaustive_subsets, overall_best, Subset, SubsetResult,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn instance(seed: u64, n: usize, p: usize, rho: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, p, |i, _| rho * common[i] + rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0) * f64::from(rng.random::<u8>() % 2)).collect();
    let y = DVector::from_fn(n, |i, _| (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn branch_and_bound_equals_enumeration(seed in any::<u64>(), p in 1usize..10, extra in 0usize..40, rho in 0.0f64..2.0) {
        let (x, y) = instance(seed, p + 2 + extra, p, rho);
        let bb = best_subset_per_size(&x, &y, 30).unwrap();
        let ex = exhaustive_subsets(&x, &y).unwrap();
        prop_assert_eq!(bb.per_size.len(), p);
        for (a, b) in bb.per_size.iter().zip(&ex.per_size) {
            prop_assert_eq!(a.subset, b.subset);
            prop_assert_eq!(a.r2.to_bits(), b.r2.to_bits());
            prop_assert_eq!(a.r2.to_bits(), canonical_r2(&x, &y, a.subset).unwrap().to_bits());
        }
        prop_assert!(bb.nodes_evaluated < (1u64 << p));
        for w in bb.per_size.windows(2) {
            prop_assert!(w[1].r2 >= w[0].r2);
        }
        let again = best_subset_per_size(&x, &y, 30).unwrap();
        prop_assert_eq!(again.per_size, bb.per_size);
    }

    #[test]
    fn duplicated_columns_break_ties_lexicographically(seed in any::<u64>(), p in 2usize..7) {
        let (mut x, y) = instance(seed, 60, p, 0.5);
        // the last column copies the first
        let first = x.column(0).clone_owned();
        x = x.insert_column(p, 0.0);
        x.set_column(p, &first);
        let bb = best_subset_per_size(&x, &y, 30).unwrap();
        let ex = exhaustive_subsets(&x, &y).unwrap();
        prop_assert!(bb.rank_deficient);
        for (a, b) in bb.per_size.iter().zip(&ex.per_size) {
            prop_assert_eq!(a.subset, b.subset);
        }
        // the copy never wins over the original it duplicates
        for b in &bb.per_size {
            prop_assert!(!(b.subset.contains(p) && !b.subset.contains(0)));
        }
    }
}

#[test]
fn strong_incumbent_prunes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200;
    let p = 12;
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| 5.0 * x[(i, 0)] + 3.0 * x[(i, 1)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
    let bb = best_subset_per_size(&x, &y, 30).unwrap();
    assert!(bb.nodes_evaluated < (1 << p) - 1, "{} nodes", bb.nodes_evaluated);
}

#[test]
fn single_covariate_gives_one_subset() {
    let (x, y) = instance(3, 30, 1, 0.0);
    let bb = best_subset_per_size(&x, &y, 30).unwrap();
    assert_eq!(bb.per_size.len(), 1);
    assert_eq!(bb.per_size[0].subset, Subset::from_indices(&[0]));
}

#[test]
fn too_many_covariates_is_an_error() {
    let (x, y) = instance(3, 40, 6, 0.0);
    assert!(best_subset_per_size(&x, &y, 5).is_err());
}

fn result_with_adj(size: usize, adj: Option<f64>, converged: bool) -> SubsetResult {
    let sim = simulate_aft(size as u64, 20, &[0.0], 1.0, 0.0);
    let mut fit = fit_mle(&sim.data, None, FitOptions::default()).unwrap();
    fit.adj_r2 = adj;
    fit.converged = converged;
    SubsetResult {
        size,
        mask: Vec::new(),
        columns: (0..size).collect(),
        ls_r2: 0.0,
        fit,
    }
}

#[test]
fn equal_adjusted_r2_prefers_the_smaller_model() {
    let all_equal: Vec<_> = (1..=4).map(|s| result_with_adj(s, Some(0.25), true)).collect();
    assert_eq!(overall_best(&all_equal), Some(1));
    let mixed = vec![
        result_with_adj(1, Some(0.1), true),
        result_with_adj(2, Some(0.3), true),
        result_with_adj(3, Some(0.3), true),
        result_with_adj(4, Some(0.9), false),
        result_with_adj(5, None, true),
    ];
    assert_eq!(overall_best(&mixed), Some(2));
    assert_eq!(overall_best(&[]), None);
}

fn design(x: DMatrix<f64>, y: Vec<f64>, censored: Vec<bool>) -> DesignMatrix {
    let p = x.ncols();
    DesignMatrix {
        names: (0..p).map(|j| format!("x{j}")).collect(),
        x,
        response: y,
        censored,
        means: vec![0.0; p],
        sds: vec![1.0; p],
        degenerate: vec![false; p],
        standardized: true,
        dropped_rows: 0,
    }
}

#[test]
fn three_true_covariates_of_ten_are_recovered() {
    let truth = [0.0, 0.0, 0.12, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, 0.08];
    let mut beta = vec![1.0];
    beta.extend(truth);
    let mut hits = 0;
    for seed in 0..100 {
        let sim = simulate_aft(5000 + seed, 5000, &beta, 1.0, 0.2);
        let x = sim.data.x().columns(1, 10).clone_owned();
        let m = design(x, sim.data.y().iter().copied().collect(), sim.data.censored().to_vec());
        let report = select_model(&m, 30, FitOptions::default()).unwrap();
        let best = report.best().expect("a converged model");
        hits += usize::from([2, 5, 9].iter().all(|c| best.columns.contains(c)));
    }
    assert!(hits >= 95, "true covariates recovered in {hits} of 100 runs");
}

#[test]
fn constant_response_ties_everything_to_the_first_columns() {
    let (x, _) = instance(8, 40, 8, 0.3);
    let y = DVector::from_element(40, 2.5);
    let bb = best_subset_per_size(&x, &y, 30).unwrap();
    let ex = exhaustive_subsets(&x, &y).unwrap();
    for (k, b) in bb.per_size.iter().enumerate() {
        assert_eq!(b.subset.indices(), (0..=k).collect::<Vec<_>>());
        assert_eq!(b.r2, 0.0);
        assert_eq!(b.subset, ex.per_size[k].subset);
    }
}
