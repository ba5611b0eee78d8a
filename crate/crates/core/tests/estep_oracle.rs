mod common;

use common::{condition_on_features, qmc_label_posterior, random_params, truncated_moments_quadrature};
use lpm::em::{e_step_task, truncated_normal_moments};
use lpm::sampler::{sample_task, substream};
use lpm::{Hyperparams, Label};

#[test]
fn truncated_moments_match_quadrature_over_grid() {
    let rhos: [f64; 5] = [0.01, 0.3, 1.0, 4.0, 50.0];
    let ts: Vec<f64> = (0..20).map(|k| -40.0 + 80.0 * k as f64 / 19.0).collect();
    let mut worst: f64 = 0.0;
    for &rho in &rhos {
        for &t in &ts {
            for y in [Label::Positive, Label::Negative] {
                let zeta = t * rho.sqrt();
                let (xi, beta) = truncated_normal_moments(zeta, rho, y).unwrap();
                let (mean, var) = truncated_moments_quadrature(zeta, rho, y);
                assert!(xi.is_finite() && beta.is_finite(), "zeta={zeta} rho={rho}");
                worst = worst.max((xi - mean).abs()).max((beta - var).abs());
                assert!((xi - mean).abs() < 1e-9, "mean zeta={zeta} rho={rho} {y:?}: {xi} vs {mean}");
                assert!((beta - var).abs() < 1e-9, "var zeta={zeta} rho={rho} {y:?}: {beta} vs {var}");
            }
        }
    }
    assert!(worst < 1e-9);
}

#[test]
fn quadrature_oracle_reproduces_half_normal() {
    let (m, v) = truncated_moments_quadrature(0.0, 1.0, Label::Positive);
    assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    assert!((v - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-12);
}

#[test]
fn e_step_matches_dense_conditioning_and_qmc() {
    let eta = 0.5;
    for instance in 0..3u64 {
        let mut rng = substream(100 + instance, 0);
        let params = random_params(3, &[4], &mut rng);
        let hyper = Hyperparams::from_rates(1.0, 1.0, eta, 3).unwrap();
        let (data, _) = sample_task(&params, eta, 0, 6, 0.67, &mut rng).unwrap();
        let moments = e_step_task(&params, &hyper, 0, &data).unwrap();
        for i in 0..data.n() {
            let x = data.x().column(i).into_owned();
            let (mean, cov) = condition_on_features(&params, eta, 0, &x);
            let (post_mean, post_cov) =
                qmc_label_posterior(&mean, &cov, &params.w, params.b, data.labels()[i], 1 << 18, &mut rng);
            let scale = post_cov.diagonal().map(f64::sqrt).max();
            let phi = moments.phi.column(i);
            let err = (phi - &post_mean).amax();
            assert!(err < 1e-3 * scale.max(phi.amax()), "instance {instance} example {i}: mean error {err}");
            let cov_err = (moments.latent_cov(i, &params.w) - &post_cov).amax();
            assert!(cov_err < 1e-3 * scale * scale, "instance {instance} example {i}: cov error {cov_err}");
        }
    }
}
