use super::OpCount;
use crate::error::{LpmError, Result};
use crate::model::{Hyperparams, LpmParams, TaskDataset};
use crate::normal;
use crate::par::Execution;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log posterior of the parameters with the latent features, responses and
/// prior scales integrated out.
///
/// Each example contributes `ln N(x | F mu + d, eta I + F Sigma Fᵀ)`; labeled
/// examples add `ln Φ(y·zeta/sqrt(rho))`. The Laplacian priors contribute
/// `ln(r/2) − r|v|` per entry with rate `r = sqrt(gamma)` or `sqrt(lambda)`; a
/// zero rate is a flat prior and contributes nothing.
pub fn log_posterior(params: &LpmParams, hyper: &Hyperparams, data: &[TaskDataset]) -> Result<f64> {
    Ok(log_posterior_counted(params, hyper, data, Execution::Sequential)?.0)
}

pub(crate) fn log_posterior_counted(
    params: &LpmParams,
    hyper: &Hyperparams,
    data: &[TaskDataset],
    exec: Execution,
) -> Result<(f64, u64)> {
    if data.len() != params.tasks.len() {
        return Err(LpmError::Dimension(format!(
            "{} datasets for {} tasks",
            data.len(),
            params.tasks.len()
        )));
    }
    let sigma_chol = params
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| LpmError::Numerical("sigma is not positive definite".into()))?;
    let logdet_sigma = 2.0 * sigma_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let sigma_inv = sigma_chol.inverse();

    let per_task = exec.map(data, |m, ds| -> Result<(f64, u64)> {
        let task = &params.tasks[m];
        let (d, n, f0) = (ds.dim(), ds.n(), params.f0());
        if task.dim() != d {
            return Err(LpmError::Dimension(format!("task {m}: data dimension {d}, transform rows {}", task.dim())));
        }
        let eta = hyper.eta();
        let mut ops = OpCount::default();
        // Woodbury: C = eta I + F Sigma Fᵀ, C⁻¹ = (I − F Q Fᵀ/eta)/eta,
        // det C = eta^D det Sigma det(Q⁻¹), with Q⁻¹ = Sigma⁻¹ + FᵀF/eta.
        let q_prec = &sigma_inv + task.f.tr_mul(&task.f) / eta;
        ops.product(f0, d, f0);
        let q_chol = q_prec.cholesky().ok_or_else(|| {
            LpmError::Numerical(format!("marginal covariance of task {m} is not positive definite"))
        })?;
        ops.factor(f0);
        let logdet_c = d as f64 * eta.ln()
            + logdet_sigma
            + 2.0 * q_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let q = q_chol.inverse();
        let qw = &q * &params.w;
        let rho_sd = (1.0 + params.w.dot(&qw)).sqrt();
        let zeta_base = params.w.dot(&params.mu) + params.b;

        let offset = &task.f * &params.mu + &task.d;
        let mut resid = ds.x().clone();
        for mut col in resid.column_iter_mut() {
            col -= &offset;
        }
        let proj = task.f.tr_mul(&resid);
        ops.product(f0, d, n);
        let q_proj = &q * &proj;
        ops.product(f0, f0, n);

        let mut total = 0.0;
        for i in 0..n {
            let r2 = resid.column(i).norm_squared();
            let quad = (r2 - proj.column(i).dot(&q_proj.column(i)) / eta) / eta;
            total -= 0.5 * (d as f64 * LN_2PI + logdet_c + quad);
            if let Some(y) = ds.labels()[i] {
                let zeta = zeta_base + qw.dot(&proj.column(i)) / eta;
                total += normal::ln_cdf(y.sign() * zeta / rho_sd);
            }
        }
        ops.add(n * (d + 2 * f0));
        total += laplace_log_density(task.f.iter(), hyper.transform_rate());
        Ok((total, ops.total()))
    });

    let mut total = laplace_log_density(params.w.iter(), hyper.classifier_rate());
    let mut ops = 0;
    for t in per_task {
        let (v, o) = t?;
        total += v;
        ops += o;
    }
    Ok((total, ops))
}

fn laplace_log_density<'a>(values: impl Iterator<Item = &'a f64>, rate: f64) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    let ln_norm = (rate / 2.0).ln();
    values.map(|v| ln_norm - rate * v.abs()).sum()
}
