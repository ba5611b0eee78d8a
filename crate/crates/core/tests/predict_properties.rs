mod common;

use common::{condition_on_features, phi_cdf, random_params};
use lpm::em::FitOptions;
use lpm::sampler::{sample_task, substream};
use lpm::predict::predict_batch;
use lpm::{auc, fit, fit_stl, predict, Execution, Hyperparams, Init, Label, LpmParams};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn prediction_matches_monte_carlo_over_latent_posterior() {
    let mut rng = substream(11, 0);
    let eta = 0.4;
    let params = random_params(3, &[5], &mut rng);
    let (data, _) = sample_task(&params, eta, 0, 10, 0.0, &mut rng).unwrap();
    for i in 0..data.n() {
        let x = data.x().column(i).into_owned();
        let (mean, cov) = condition_on_features(&params, eta, 0, &x);
        let l = cov.cholesky().unwrap().l();
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let e = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            total += phi_cdf(params.w.dot(&(&mean + &l * e)) + params.b);
        }
        let mc = total / n as f64;
        let p = predict(&params, eta, 0, &x).unwrap().prob_positive;
        assert!((p - mc).abs() < 0.005, "example {i}: {p} vs {mc}");
    }
}

fn shared_pair(seed: u64) -> LpmParams {
    let mut rng = substream(seed, 0);
    let mut params = random_params(3, &[5], &mut rng);
    params.tasks.push(params.tasks[0].clone());
    params
}

#[test]
fn sharing_an_identical_task_does_not_hurt_on_average() {
    let eta = 0.3;
    let hyper = Hyperparams::from_regularizers(0.1, 0.5, eta, 3).unwrap();
    let options = FitOptions { max_iters: 150, exec: Execution::Sequential, ..FitOptions::default() };
    let mut diffs = Vec::new();
    for seed in 0..20u64 {
        let params = shared_pair(1000 + seed);
        let mut rng = substream(1000 + seed, 1);
        let (a, _) = sample_task(&params, eta, 0, 120, 0.1, &mut rng).unwrap();
        let (b, _) = sample_task(&params, eta, 1, 120, 0.1, &mut rng).unwrap();
        let (test, hidden) = sample_task(&params, eta, 0, 400, 0.0, &mut rng).unwrap();
        if a.n_labeled() == 0 || !hidden.y.contains(&Label::Positive) || !hidden.y.contains(&Label::Negative) {
            continue;
        }
        let score = |p: &LpmParams| {
            let s: Vec<f64> = predict_batch(p, eta, 0, test.x(), Execution::Sequential)
                .unwrap()
                .iter()
                .map(|q| q.zeta / q.rho.sqrt())
                .collect();
            auc(&s, &hidden.y).unwrap()
        };
        let (stl, _) = fit_stl(&a, &hyper, seed, &options).unwrap();
        let (mtl, _) = fit(&[a, b], &hyper, Init::Seed(seed), &options).unwrap();
        diffs.push(score(&mtl) - score(&stl));
    }
    assert!(diffs.len() >= 15);
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean >= 0.0, "mean paired AUC difference {mean} over {} seeds", diffs.len());
}

#[test]
fn fits_are_deterministic_under_a_fixed_seed() {
    let params = shared_pair(5);
    let mut rng = substream(5, 1);
    let (a, _) = sample_task(&params, 0.3, 0, 80, 0.3, &mut rng).unwrap();
    let hyper = Hyperparams::from_regularizers(0.1, 0.5, 0.3, 3).unwrap();
    let options = FitOptions { max_iters: 50, ..FitOptions::default() };
    let first = fit_stl(&a, &hyper, 9, &options).unwrap();
    let second = fit_stl(&a, &hyper, 9, &options).unwrap();
    assert_eq!(first.0, second.0);
    assert_eq!(first.1.to_csv(), second.1.to_csv());
}
