//! Two-step estimator of the shared classifier and its high-probability error
//! bound: least-squares latent recovery, pooling across tasks, lasso, and every
//! quantity the bound is built from.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LpmError, Result};
use crate::model::Hyperparams;
use crate::par::Execution;
use crate::sampler::{sample_sparse_weights, sample_transform, sparsify, substream};

/// Least-squares latent features `(FᵀF)⁻¹ Fᵀ X`, one column per example.
pub fn two_step_latent(f: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.nrows() != x.nrows() {
        return Err(LpmError::Dimension(format!(
            "transform has {} rows, data has {}",
            f.nrows(),
            x.nrows()
        )));
    }
    if f.ncols() > f.nrows() {
        return Err(LpmError::InvalidInput("transform has more columns than rows".into()));
    }
    let sv = f.singular_values();
    let max = sv.max();
    if !(sv.min() > 1e-12 * max.max(1e-300) * f.nrows() as f64) {
        return Err(LpmError::InvalidInput("transform is rank deficient".into()));
    }
    let (q, r) = f.clone().qr().unpack();
    r.solve_upper_triangular(&q.tr_mul(x))
        .ok_or_else(|| LpmError::Numerical("triangular solve failed".into()))
}

/// Concatenate per-task latent estimates column-wise in task order.
pub fn pool_psi(latents: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let f0 = latents
        .first()
        .map(|s| s.nrows())
        .ok_or_else(|| LpmError::InvalidInput("no tasks to pool".into()))?;
    if let Some(bad) = latents.iter().find(|s| s.nrows() != f0) {
        return Err(LpmError::Dimension(format!("latent dimension {} vs {f0}", bad.nrows())));
    }
    let n_t = latents.iter().map(|s| s.ncols()).sum();
    let mut psi = DMatrix::zeros(f0, n_t);
    let mut offset = 0;
    for s in latents {
        psi.columns_mut(offset, s.ncols()).copy_from(s);
        offset += s.ncols();
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop once a full sweep moves no coordinate by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub w: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// `(1/n)‖z − Ψᵀw‖² + r‖w‖₁` with `n` the number of columns of `Ψ`.
pub fn lasso_objective(psi: &DMatrix<f64>, z: &DVector<f64>, r: f64, w: &DVector<f64>) -> f64 {
    let resid = z - psi.tr_mul(w);
    resid.norm_squared() / psi.ncols() as f64 + r * w.lp_norm(1)
}

/// Minimize [`lasso_objective`] by cyclic coordinate descent with soft-thresholding.
pub fn lasso_solve(psi: &DMatrix<f64>, z: &DVector<f64>, r: f64, options: &LassoOptions) -> Result<LassoSolution> {
    if psi.ncols() != z.len() {
        return Err(LpmError::Dimension(format!("{} columns vs {} responses", psi.ncols(), z.len())));
    }
    if psi.ncols() == 0 {
        return Err(LpmError::InvalidInput("no observations".into()));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(LpmError::InvalidInput(format!("penalty must be nonnegative, got {r}")));
    }
    if psi.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(LpmError::InvalidInput("non-finite lasso input".into()));
    }
    let n = psi.ncols() as f64;
    let f0 = psi.nrows();
    let hess = psi * psi.transpose() * (2.0 / n);
    let lin = psi * z * (2.0 / n);
    let mut w = DVector::zeros(f0);
    // grad = hess·w − lin
    let mut grad = -lin.clone();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut biggest: f64 = 0.0;
        for j in 0..f0 {
            let h = hess[(j, j)];
            let old = w[j];
            let new = if h > 0.0 { soft_threshold(h * old - grad[j], r) / h } else { 0.0 };
            let step = new - old;
            if step != 0.0 {
                w[j] = new;
                grad.axpy(step, &hess.column(j), 1.0);
                biggest = biggest.max(step.abs());
            }
        }
        if biggest <= options.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoSolution { w, sweeps, converged })
}

fn soft_threshold(v: f64, r: f64) -> f64 {
    if v > r {
        v - r
    } else if v < -r {
        v + r
    } else {
        0.0
    }
}

/// Largest violation of the lasso subgradient conditions at `w`.
pub fn kkt_violation(psi: &DMatrix<f64>, z: &DVector<f64>, r: f64, w: &DVector<f64>) -> f64 {
    let n = psi.ncols() as f64;
    let corr = psi * (z - psi.tr_mul(w)) * (2.0 / n);
    corr.iter()
        .zip(w.iter())
        .map(|(&g, &wj)| {
            if wj == 0.0 {
                (g.abs() - r).max(0.0)
            } else {
                (g - r * wj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Upper bound on the largest eigenvalue of `FᵀF` from column sparsity:
/// `max_i Σ_j ‖f_{:,j}‖₀ f_ij²`.
pub fn byrne_max_eig_bound(f: &DMatrix<f64>) -> f64 {
    let col_nnz: Vec<f64> = f.column_iter().map(|c| c.iter().filter(|v| **v != 0.0).count() as f64).collect();
    f.row_iter()
        .map(|row| row.iter().zip(&col_nnz).map(|(v, k)| k * v * v).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Lower bound on the pooled restricted-eigenvalue term:
/// `Σ_m ω_min(X_m X_mᵀ / n_t) / byrne_max_eig_bound(F_m)`.
pub fn bound_denominator(xs: &[DMatrix<f64>], fs: &[DMatrix<f64>], n_t: usize) -> Result<f64> {
    if xs.len() != fs.len() {
        return Err(LpmError::Dimension(format!("{} data matrices for {} transforms", xs.len(), fs.len())));
    }
    let mut total = 0.0;
    for (x, f) in xs.iter().zip(fs) {
        let gram = x * x.transpose() / n_t as f64;
        let omega_min = SymmetricEigen::new(gram).eigenvalues.min().max(0.0);
        let byrne = byrne_max_eig_bound(f);
        if byrne > 0.0 {
            total += omega_min / byrne;
        }
    }
    if !(total > 0.0) {
        return Err(LpmError::Numerical("bound denominator is zero".into()));
    }
    Ok(total)
}

/// `1 − F0^(1 − a²/8)`; requires `F0 ≥ 2` and `a ≥ √8`.
pub fn success_probability(a: f64, f0: usize) -> Result<f64> {
    check_bound_domain(a, f0)?;
    Ok(1.0 - (f0 as f64).powf(1.0 - a * a / 8.0))
}

fn check_bound_domain(a: f64, f0: usize) -> Result<()> {
    if f0 < 2 {
        return Err(LpmError::InvalidInput(format!("F0 must be at least 2, got {f0}")));
    }
    if !(a * a >= 8.0 - 1e-12) {
        return Err(LpmError::InvalidInput(format!("a must be at least sqrt(8), got {a}")));
    }
    Ok(())
}

pub struct BoundInputs<'a> {
    pub a: f64,
    pub eps_psi: f64,
    pub n_t: usize,
    pub s: usize,
    pub c0: f64,
    pub f0: usize,
    pub xs: &'a [DMatrix<f64>],
    pub fs: &'a [DMatrix<f64>],
}

/// Right-hand side of the error bound:
/// `2 a ε_ψ n_t⁻¹ sqrt(s (1 + c0² s) ln F0) / bound_denominator`.
pub fn theorem1_rhs(inputs: &BoundInputs<'_>) -> Result<f64> {
    check_bound_domain(inputs.a, inputs.f0)?;
    let s = inputs.s as f64;
    let numerator = 2.0 * inputs.a * inputs.eps_psi / inputs.n_t as f64
        * (s * (1.0 + inputs.c0 * inputs.c0 * s) * (inputs.f0 as f64).ln()).sqrt();
    Ok(numerator / bound_denominator(inputs.xs, inputs.fs, inputs.n_t)?)
}

/// Cone constant `‖δ_{Jᶜ}‖₁ / ‖δ_J‖₁` (zero when `‖δ_J‖₁ = 0`).
pub fn cone_constant(delta: &DVector<f64>, support: &[bool]) -> f64 {
    let (mut on, mut off) = (0.0, 0.0);
    for (d, &inside) in delta.iter().zip(support) {
        if inside {
            on += d.abs();
        } else {
            off += d.abs();
        }
    }
    if on > 0.0 {
        off / on
    } else {
        0.0
    }
}

/// Setting of the Monte-Carlo check of the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub f0: usize,
    /// Nonzeros in the true classifier.
    pub s: usize,
    pub task_dims: Vec<usize>,
    /// Labeled examples per task.
    pub labeled_per_task: usize,
    pub eta: f64,
    pub a: f64,
    pub trials: usize,
    pub seed: u64,
    /// Laplace rate² of transform entries before sparsification.
    pub gamma: f64,
    /// Probability that a transform entry is kept.
    pub transform_density: f64,
    pub weight_range: (f64, f64),
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            f0: 8,
            s: 3,
            task_dims: vec![10, 12, 14, 16],
            labeled_per_task: 250,
            eta: 0.01,
            a: 4.0,
            trials: 200,
            seed: 7,
            gamma: 1.0,
            transform_density: 0.5,
            weight_range: (0.5, 1.5),
        }
    }
}

/// Every quantity of the bound for one trial, plus the realized error.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub s: usize,
    pub c0: f64,
    pub eps_psi: f64,
    pub a: f64,
    pub r: f64,
    pub n_t: usize,
    pub denom: f64,
    pub rhs: f64,
    pub delta_norm: f64,
    pub p_e: f64,
    /// `‖Ψe‖_∞ / n_t`.
    pub r_e: f64,
    pub held: bool,
    /// Whether `2 r_e ≤ r`, the event the probability statement is about.
    pub event: bool,
    pub lasso_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trials: Vec<BoundReport>,
    pub p_e: f64,
    pub holds_fraction: f64,
    pub event_fraction: f64,
    /// `p_e − 3·sqrt(p_e(1 − p_e)/trials)`.
    pub threshold: f64,
    /// `p_e ≤ 0`: the bound promises nothing.
    pub vacuous: bool,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.holds_fraction >= self.threshold
    }

    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,s,c0,eps_psi,a,r,delta_norm,rhs,held,r_e,event\n");
        for (t, b) in self.trials.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{}",
                b.s, b.c0, b.eps_psi, b.a, b.r, b.delta_norm, b.rhs, b.held, b.r_e, b.event
            );
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "trials={} p_e={:.6} holds_fraction={:.6} event_fraction={:.6} threshold={:.6} vacuous={}",
            self.trials.len(),
            self.p_e,
            self.holds_fraction,
            self.event_fraction,
            self.threshold,
            self.vacuous
        )
    }
}

/// Draw a full-rank sparse transform: Laplace entries, each kept with
/// probability `density`, redrawn until the columns are independent.
pub fn sample_sparse_transform<R: Rng + ?Sized>(
    d: usize,
    hyper: &Hyperparams,
    density: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    for _ in 0..1000 {
        let (mut f, _) = sample_transform(d, hyper, rng)?;
        sparsify(&mut f, density, rng);
        let sv = f.singular_values();
        if sv.min() > 1e-8 * sv.max() {
            return Ok(f);
        }
    }
    Err(LpmError::Numerical(format!("no full-rank {d}x{} transform at density {density}", hyper.f0())))
}

/// One trial of the bound check.
pub fn bound_trial(config: &VerifyConfig, trial: usize) -> Result<BoundReport> {
    let mut rng = substream(config.seed, trial as u64);
    let f0 = config.f0;
    let hyper = Hyperparams::from_rates(config.gamma, 1.0, config.eta, f0)?;
    let w_star = sample_sparse_weights(f0, config.s, config.weight_range, &mut rng)?;
    let noise_sd = config.eta.sqrt();
    let mut fs = Vec::with_capacity(config.task_dims.len());
    let mut xs = Vec::with_capacity(config.task_dims.len());
    let mut latents = Vec::with_capacity(config.task_dims.len());
    for &d in &config.task_dims {
        let f = sample_sparse_transform(d, &hyper, config.transform_density, &mut rng)?;
        let s = DMatrix::from_fn(f0, config.labeled_per_task, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DMatrix::from_fn(d, config.labeled_per_task, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
        let x = &f * s + noise;
        latents.push(two_step_latent(&f, &x)?);
        fs.push(f);
        xs.push(x);
    }
    let psi = pool_psi(&latents)?;
    let n_t = psi.ncols();
    let e = DVector::from_fn(n_t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = psi.tr_mul(&w_star) + &e;

    let eps_psi = psi.row_iter().map(|row| row.norm()).fold(0.0, f64::max);
    let r = config.a * eps_psi * (f0 as f64).ln().sqrt() / n_t as f64;
    let fit = lasso_solve(&psi, &z, r, &LassoOptions::default())?;
    let delta = &fit.w - &w_star;
    let support: Vec<bool> = w_star.iter().map(|v| *v != 0.0).collect();
    let c0 = cone_constant(&delta, &support);
    let inputs = BoundInputs { a: config.a, eps_psi, n_t, s: config.s, c0, f0, xs: &xs, fs: &fs };
    let rhs = theorem1_rhs(&inputs)?;
    let denom = bound_denominator(&xs, &fs, n_t)?;
    let r_e = (&psi * &e).amax() / n_t as f64;
    let delta_norm = delta.norm();
    Ok(BoundReport {
        s: config.s,
        c0,
        eps_psi,
        a: config.a,
        r,
        n_t,
        denom,
        rhs,
        delta_norm,
        p_e: success_probability(config.a, f0)?,
        r_e,
        held: delta_norm <= rhs,
        event: 2.0 * r_e <= r,
        lasso_sweeps: fit.sweeps,
    })
}

/// Run `config.trials` independent trials and summarize how often the bound holds.
pub fn verify_theorem1(config: &VerifyConfig, exec: Execution) -> Result<VerifyReport> {
    let p_e = success_probability(config.a, config.f0)?;
    if config.trials == 0 {
        return Err(LpmError::InvalidInput("at least one trial is required".into()));
    }
    let trials: Vec<BoundReport> = exec
        .map_range(config.trials, |t| bound_trial(config, t))
        .into_iter()
        .collect::<Result<_>>()?;
    let count = trials.len() as f64;
    let holds_fraction = trials.iter().filter(|t| t.held).count() as f64 / count;
    let event_fraction = trials.iter().filter(|t| t.event).count() as f64 / count;
    let threshold = p_e - 3.0 * (p_e.max(0.0) * (1.0 - p_e) / count).sqrt();
    Ok(VerifyReport { trials, p_e, holds_fraction, event_fraction, threshold, vacuous: p_e <= 0.0 })
}
