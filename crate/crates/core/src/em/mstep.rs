use nalgebra::{DMatrix, DVector};

use super::{symmetrize, EStepMoments, OpCount};
use crate::error::{LpmError, Result};
use crate::model::{Hyperparams, TaskDataset, TaskParams};

/// Maximizer of `-½ xᵀ Γ x + xᵀ c − reg·‖x‖₁` majorized at `current`:
/// `x = V (reg·I + V Γ V)⁻¹ V c` with `V = diag(sqrt|current|)`.
///
/// Coordinates where `current` is exactly zero stay zero. The solve is
/// restricted to the remaining support; a singular system (possible only when
/// `reg == 0`) falls back to the SVD pseudo-inverse.
pub fn reweighted_solve(gram: &DMatrix<f64>, c: &DVector<f64>, current: &DVector<f64>, reg: f64) -> DVector<f64> {
    let support: Vec<usize> = (0..current.len()).filter(|&j| current[j] != 0.0).collect();
    let mut out = DVector::zeros(current.len());
    if support.is_empty() {
        return out;
    }
    let k = support.len();
    let v = DVector::from_fn(k, |a, _| current[support[a]].abs().sqrt());
    let mut system = DMatrix::from_fn(k, k, |a, b| v[a] * gram[(support[a], support[b])] * v[b]);
    for a in 0..k {
        system[(a, a)] += reg;
    }
    symmetrize(&mut system);
    let rhs = DVector::from_fn(k, |a, _| v[a] * c[support[a]]);
    let y = match system.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => system
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(k)),
    };
    for a in 0..k {
        out[support[a]] = v[a] * y[a];
    }
    out
}

/// Updated `(mu, Sigma)` from moments over every example of every task.
///
/// A jitter of `1e-10·trace/F0` (growing tenfold per retry) is added to the
/// diagonal only if the covariance fails to factor.
pub fn m_step_latent(moments: &[EStepMoments], w: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n_a: usize = moments.iter().map(EStepMoments::n).sum();
    if n_a == 0 {
        return Err(LpmError::InvalidInput("no examples".into()));
    }
    let f0 = w.len();
    let mut mu = DVector::zeros(f0);
    for m in moments {
        mu += m.phi.column_sum();
    }
    mu /= n_a as f64;

    let mut sigma = DMatrix::zeros(f0, f0);
    for m in moments {
        let mut centered = m.phi.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mu;
        }
        sigma += &centered * centered.transpose();
        let rw = &m.r * w;
        sigma += &m.r * m.n() as f64 + &rw * rw.transpose() * m.beta.sum();
    }
    sigma /= n_a as f64;
    symmetrize(&mut sigma);

    if sigma.clone().cholesky().is_none() {
        let trace = sigma.trace();
        let mut jitter = if trace > 0.0 { 1e-10 * trace / f0 as f64 } else { 1e-10 };
        loop {
            let candidate = &sigma + DMatrix::identity(f0, f0) * jitter;
            if candidate.clone().cholesky().is_some() {
                sigma = candidate;
                break;
            }
            jitter *= 10.0;
            if !jitter.is_finite() {
                return Err(LpmError::Numerical("latent covariance cannot be made PD".into()));
            }
        }
    }
    Ok((mu, sigma))
}

/// `Γ_m1 = Σ_i (φφᵀ + R + β_i R w wᵀ R)` over all examples of one task.
pub fn domain_gram(moments: &EStepMoments, w: &DVector<f64>) -> DMatrix<f64> {
    let rw = &moments.r * w;
    let mut g = &moments.phi * moments.phi.transpose()
        + &moments.r * moments.n() as f64
        + &rw * rw.transpose() * moments.beta.sum();
    symmetrize(&mut g);
    g
}

/// Updated `(F_m, d_m)`: first the translation from the current transform,
/// then each transform row from the new translation.
pub fn m_step_domain(
    moments: &EStepMoments,
    data: &TaskDataset,
    current: &TaskParams,
    w: &DVector<f64>,
    hyper: &Hyperparams,
) -> Result<(TaskParams, u64)> {
    let (d, n, f0) = (data.dim(), data.n(), w.len());
    if n == 0 {
        return Err(LpmError::InvalidInput("task has no examples".into()));
    }
    let mut ops = OpCount::default();
    let fitted = &current.f * &moments.phi;
    ops.product(d, f0, n);
    let d_hat = (data.x() - fitted).column_sum() / n as f64;

    let gram = domain_gram(moments, w);
    ops.product(f0, n, f0);
    let mut residual = data.x().clone();
    for mut col in residual.column_iter_mut() {
        col -= &d_hat;
    }
    // column k holds Σ_i φ_i (x_ik − d_k)
    let targets = &moments.phi * residual.transpose();
    ops.product(f0, n, d);

    let mut f = DMatrix::zeros(d, f0);
    for k in 0..d {
        let row = current.f.row(k).transpose();
        let updated = reweighted_solve(&gram, &targets.column(k).into_owned(), &row, hyper.alpha());
        ops.factor(f0);
        f.set_row(k, &updated.transpose());
    }
    Ok((TaskParams { f, d: d_hat }, ops.total()))
}

/// Sufficient statistics of the classifier block over labeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWork {
    /// `Γ_2 = Σ_{labeled} (φφᵀ + R + β R w wᵀ R)`.
    pub gram: DMatrix<f64>,
    /// `Σ_{labeled} E[s (z − b)] = Σ φ (ξ − b) + β R w`.
    pub cross: DVector<f64>,
    pub n_labeled: usize,
}

pub fn classifier_work(
    moments: &[EStepMoments],
    data: &[TaskDataset],
    w: &DVector<f64>,
    b: f64,
) -> ClassifierWork {
    let f0 = w.len();
    let mut gram = DMatrix::zeros(f0, f0);
    let mut cross = DVector::zeros(f0);
    let mut n_labeled = 0;
    for (m, ds) in moments.iter().zip(data) {
        let labeled = ds.labeled_indices();
        if labeled.is_empty() {
            continue;
        }
        n_labeled += labeled.len();
        let phi = m.phi.select_columns(&labeled);
        let beta_sum: f64 = labeled.iter().map(|&i| m.beta[i]).sum();
        let rw = &m.r * w;
        gram += &phi * phi.transpose() + &m.r * labeled.len() as f64 + &rw * rw.transpose() * beta_sum;
        for (a, &i) in labeled.iter().enumerate() {
            cross += phi.column(a) * (m.xi[i] - b);
        }
        cross += rw * beta_sum;
    }
    symmetrize(&mut gram);
    ClassifierWork { gram, cross, n_labeled }
}

/// Updated `(w, b)`: reweighted-ℓ1 step for `w`, then the mean residual for `b`.
pub fn m_step_classifier(
    moments: &[EStepMoments],
    data: &[TaskDataset],
    w: &DVector<f64>,
    b: f64,
    hyper: &Hyperparams,
) -> Result<(DVector<f64>, f64)> {
    let work = classifier_work(moments, data, w, b);
    if work.n_labeled == 0 {
        return Err(LpmError::NoLabels);
    }
    let w_hat = reweighted_solve(&work.gram, &work.cross, w, hyper.vartheta());
    let mut residual = 0.0;
    for (m, ds) in moments.iter().zip(data) {
        for i in ds.labeled_indices() {
            residual += m.xi[i] - m.phi.column(i).dot(&w_hat);
        }
    }
    Ok((w_hat, residual / work.n_labeled as f64))
}
