mod common;

use common::lasso_by_sign_patterns;
use lpm::bound::{
    bound_trial, byrne_max_eig_bound, kkt_violation, lasso_objective, lasso_solve, success_probability,
    two_step_latent, LassoOptions, VerifyConfig,
};
use lpm::sampler::substream;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

fn sparse_matrix<R: Rng>(rows: usize, cols: usize, density: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < density { rng.sample::<f64, _>(StandardNormal) } else { 0.0 }
    })
}

#[test]
fn byrne_bound_dominates_largest_eigenvalue() {
    let mut rng = substream(1, 0);
    for _ in 0..1000 {
        let rows = rng.random_range(1..=30);
        let cols = rng.random_range(1..=10);
        let density = rng.random_range(0.1..=1.0);
        let f = sparse_matrix(rows, cols, density, &mut rng);
        let top = SymmetricEigen::new(f.transpose() * &f).eigenvalues.max();
        let bound = byrne_max_eig_bound(&f);
        assert!(bound >= top * (1.0 - 1e-12) - 1e-12, "{bound} < {top}");
    }
}

#[test]
fn byrne_bound_is_tight_on_identity_and_single_entry() {
    for n in 1..6 {
        assert_eq!(byrne_max_eig_bound(&DMatrix::identity(n, n)), 1.0);
        let mut f = DMatrix::zeros(n + 2, n);
        f[(n, n - 1)] = 3.0;
        let top = SymmetricEigen::new(f.transpose() * &f).eigenvalues.max();
        assert_eq!(byrne_max_eig_bound(&f), top);
    }
}

fn random_lasso<R: Rng>(p: usize, n: usize, rng: &mut R) -> (DMatrix<f64>, DVector<f64>, f64) {
    let psi = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = DVector::from_fn(p, |j, _| if j % 2 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 });
    let z = psi.tr_mul(&w) + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = rng.random_range(0.01..0.5);
    (psi, z, r)
}

#[test]
fn lasso_satisfies_kkt_conditions() {
    let mut rng = substream(2, 0);
    for case in 0..100 {
        let p = rng.random_range(2..=12);
        let (psi, z, r) = random_lasso(p, 60, &mut rng);
        let sol = lasso_solve(&psi, &z, r, &LassoOptions::default()).unwrap();
        assert!(sol.converged);
        let v = kkt_violation(&psi, &z, r, &sol.w);
        assert!(v < 1e-8, "case {case}: violation {v}");
    }
}

#[test]
fn lasso_matches_sign_pattern_enumeration() {
    let mut rng = substream(3, 0);
    for case in 0..20 {
        let (psi, z, r) = random_lasso(3, 40, &mut rng);
        let sol = lasso_solve(&psi, &z, r, &LassoOptions::default()).unwrap();
        let (_, best) = lasso_by_sign_patterns(&psi, &z, r);
        let ours = lasso_objective(&psi, &z, r, &sol.w);
        assert!((ours - best).abs() < 1e-8, "case {case}: {ours} vs {best}");
    }
}

#[test]
fn two_step_inverts_noiseless_transform() {
    let mut rng = substream(4, 0);
    let f = DMatrix::from_fn(9, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = DMatrix::from_fn(4, 30, |_, _| rng.sample::<f64, _>(StandardNormal));
    let back = two_step_latent(&f, &(&f * &s)).unwrap();
    assert!((back - s).amax() < 1e-10);
}

#[test]
fn success_probability_at_reference_setting() {
    assert!((success_probability(4.0, 8).unwrap() - 0.875).abs() < 1e-15);
}

#[test]
fn frozen_bound_trial_fixture() {
    // Recorded from the first verified build; guards the whole bound pipeline.
    let report = bound_trial(&VerifyConfig::default(), 0).unwrap();
    assert_eq!(report.n_t, 1000);
    assert!((report.rhs - FROZEN_RHS).abs() < 1e-9 * FROZEN_RHS, "rhs {:e}", report.rhs);
    assert!((report.delta_norm - FROZEN_DELTA).abs() < 1e-9 * FROZEN_DELTA, "delta {:e}", report.delta_norm);
}

const FROZEN_RHS: f64 = 1.2998429523149951e4;
const FROZEN_DELTA: f64 = 1.3899342575839596e-1;
