//! E-step: conditional moments of the latent features and probit responses.

use nalgebra::{DMatrix, DVector};

use super::OpCount;
use crate::error::{LpmError, Result};
use crate::model::{Hyperparams, Label, LpmParams, TaskDataset};
use crate::normal;

/// Mean and variance of `z ~ N(zeta, rho)` conditioned on `sign(z) = y`.
///
/// Returns `(xi, beta)`. The lower tail goes through the scaled complementary
/// error function so the result stays finite for `|zeta / sqrt(rho)|` far
/// beyond 40.
pub fn truncated_normal_moments(zeta: f64, rho: f64, y: Label) -> Result<(f64, f64)> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(LpmError::InvalidInput(format!("variance must be positive, got {rho}")));
    }
    if !zeta.is_finite() {
        return Err(LpmError::InvalidInput(format!("non-finite mean {zeta}")));
    }
    let sd = rho.sqrt();
    let signed = zeta * y.sign();
    let t = signed / sd;
    let mills = normal::inv_mills(t);
    let mean = signed + sd * mills;
    let var_factor = if t < -100.0 {
        let inv = 1.0 / (t * t);
        inv * (1.0 - inv * (6.0 - inv * (50.0 - 518.0 * inv)))
    } else {
        (1.0 - mills * (mills + t)).clamp(f64::MIN_POSITIVE, 1.0)
    };
    Ok((mean * y.sign(), rho * var_factor))
}

/// Per-task conditional moments under the current parameters.
///
/// `phi` holds one column per example. `rho` is shared by every example of the
/// task. For unlabeled examples `xi == zeta` and `beta == rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepMoments {
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub zeta: DVector<f64>,
    pub rho: f64,
    pub xi: DVector<f64>,
    pub beta: DVector<f64>,
    pub ops: u64,
}

impl EStepMoments {
    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    /// `Cov(s_i | data) = R + beta_i R w w^T R`.
    pub fn latent_cov(&self, i: usize, w: &DVector<f64>) -> DMatrix<f64> {
        let rw = &self.r * w;
        &self.r + &rw * rw.transpose() * self.beta[i]
    }
}

pub(crate) fn spd_inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .cholesky()
        .ok_or_else(|| LpmError::Numerical(format!("{what} is not positive definite")))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn e_step_task(
    params: &LpmParams,
    hyper: &Hyperparams,
    task_index: usize,
    data: &TaskDataset,
) -> Result<EStepMoments> {
    let task = params
        .tasks
        .get(task_index)
        .ok_or_else(|| LpmError::InvalidInput(format!("no task {task_index}")))?;
    if task.dim() != data.dim() {
        return Err(LpmError::Dimension(format!(
            "task {task_index}: data dimension {} vs transform rows {}",
            data.dim(),
            task.dim()
        )));
    }
    let eta = hyper.eta();
    let f0 = params.f0();
    let (d, n) = (data.dim(), data.n());
    let mut ops = OpCount::default();
    let w = &params.w;

    let sigma_inv = spd_inverse(params.sigma.clone(), "sigma")?;
    let ftf = task.f.tr_mul(&task.f);
    ops.product(f0, d, f0);
    let q_prec = &sigma_inv + &ftf / eta;
    let q = spd_inverse(q_prec.clone(), &format!("Q for task {task_index}"))?;
    let r = spd_inverse(q_prec + w * w.transpose(), &format!("R for task {task_index}"))?;
    ops.factor(f0);
    ops.factor(f0);
    let qw = &q * w;
    let rho = 1.0 + w.dot(&qw);

    // F^T (x_i - F mu - d)
    let offset = &task.f * &params.mu + &task.d;
    let mut centered = data.x().clone();
    for mut col in centered.column_iter_mut() {
        col -= &offset;
    }
    let ft_centered = task.f.tr_mul(&centered);
    ops.product(f0, d, n);

    let zeta_base = w.dot(&params.mu) + params.b;
    let zeta = ft_centered.tr_mul(&qw).map(|v| zeta_base + v / eta);
    ops.product(n, f0, 1);

    let mut xi = zeta.clone();
    let mut beta = DVector::from_element(n, rho);
    for (i, label) in data.labels().iter().enumerate() {
        if let Some(y) = label {
            let (m, v) = truncated_normal_moments(zeta[i], rho, *y)?;
            xi[i] = m;
            beta[i] = v;
        }
    }

    // phi_i = R (Sigma^-1 mu + F^T F mu / eta - w b) + R F^T(x_i - F mu - d) / eta + R w xi_i
    let base = &r * (&sigma_inv * &params.mu + &ftf * &params.mu / eta - w * params.b);
    let rw = &r * w;
    let mut phi = &r * &ft_centered / eta;
    ops.product(f0, f0, n);
    for (i, mut col) in phi.column_iter_mut().enumerate() {
        col += &base + &rw * xi[i];
    }
    ops.add(2 * f0 * n);

    Ok(EStepMoments { r, q, phi, zeta, rho, xi, beta, ops: ops.total() })
}
