//! Reference computations written independently of the library: dense
//! Gaussian algebra, quadrature, quasi-Monte-Carlo and brute-force solvers.
#![allow(dead_code)]

use lpm::{Hyperparams, Label, LpmParams, TaskDataset, TaskParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub fn phi_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol || (b - a) <= 1e-12 * a.abs().max(b.abs()) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 30)
}

/// Mean and variance of `z ~ N(zeta, rho)` conditioned on `y·z ≥ 0`, by quadrature.
pub fn truncated_moments_quadrature(zeta: f64, rho: f64, y: Label) -> (f64, f64) {
    // Reflect so the support is always [0, ∞).
    let sign = if y == Label::Positive { 1.0 } else { -1.0 };
    let c = sign * zeta;
    let sd = rho.sqrt();
    let mode = c.max(0.0);
    // log-density relative to its value at the mode keeps everything finite.
    let g = move |z: f64| (-((z - c).powi(2) - (mode - c).powi(2)) / (2.0 * rho)).exp();
    // Mass sits within ~40 of this scale past the mode.
    let scale = if c >= 0.0 { sd } else { sd.min(rho / -c) };
    let hi = mode + 40.0 * scale;
    let mut breaks = vec![0.0];
    let mut x = scale / 64.0;
    while x < hi {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.extend((-40..=40).map(|j| mode + j as f64 * scale).filter(|&z| z > 0.0 && z < hi));
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrate = |h: &dyn Fn(f64) -> f64| {
        breaks.windows(2).map(|w| simpson(&|z| h(z), w[0], w[1], 1e-13 * scale)).sum::<f64>()
    };
    let m0 = integrate(&|z| g(z));
    let mean = integrate(&|z| z * g(z)) / m0;
    let var = integrate(&|z| (z - mean).powi(2) * g(z)) / m0;
    (sign * mean, var)
}

/// `s | x` for one example by dense conditioning of the joint Gaussian of `(s, x)`.
pub fn condition_on_features(params: &LpmParams, eta: f64, task: usize, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let TaskParams { f, d } = &params.tasks[task];
    let sigma = &params.sigma;
    let cross = sigma * f.transpose();
    let cov_x = f * sigma * f.transpose() + DMatrix::identity(f.nrows(), f.nrows()) * eta;
    let inv = cov_x.try_inverse().expect("observation covariance is invertible");
    let mean = &params.mu + &cross * &inv * (x - (f * &params.mu + d));
    let cov = sigma - &cross * &inv * cross.transpose();
    (mean, (&cov + cov.transpose()) * 0.5)
}

fn halton(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Posterior mean and covariance of `s ~ N(mean, cov)` reweighted by
/// `Φ(y(wᵀs + b))` (no reweighting when unlabeled), by randomly shifted
/// Halton points pushed through Box–Muller.
pub fn qmc_label_posterior<R: Rng>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    w: &DVector<f64>,
    b: f64,
    y: Option<Label>,
    n: u64,
    rng: &mut R,
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = mean.len();
    assert!(dim <= 4, "only four normals per Halton point");
    let l = cov.clone().cholesky().expect("covariance is PD").l();
    let bases = [2u64, 3, 5, 7];
    let u01 = Uniform::new(0.0, 1.0).unwrap();
    let shift: Vec<f64> = (0..4).map(|_| u01.sample(rng)).collect();
    let sign = y.map(|l| if l == Label::Positive { 1.0 } else { -1.0 });
    let mut total = 0.0;
    let mut first = DVector::zeros(dim);
    let mut second = DMatrix::zeros(dim, dim);
    let mut eps = [0.0; 4];
    for i in 1..=n {
        let u: Vec<f64> = (0..4).map(|k| (halton(i, bases[k]) + shift[k]).fract()).collect();
        for pair in 0..2 {
            let r = (-2.0 * (1.0 - u[2 * pair]).ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u[2 * pair + 1];
            eps[2 * pair] = r * t.cos();
            eps[2 * pair + 1] = r * t.sin();
        }
        let dev = &l * DVector::from_column_slice(&eps[..dim]);
        let weight = match sign {
            Some(s) => phi_cdf(s * (w.dot(&(mean + &dev)) + b)),
            None => 1.0,
        };
        total += weight;
        first += &dev * weight;
        second += &dev * dev.transpose() * weight;
    }
    let m1 = first / total;
    let cov_out = second / total - &m1 * m1.transpose();
    (mean + m1, cov_out)
}

/// Log posterior from the dense marginal of every example, the probit of each
/// label given its features, and the Laplace densities written out directly.
pub fn dense_log_posterior(params: &LpmParams, hyper: &Hyperparams, data: &[TaskDataset]) -> f64 {
    let eta = hyper.eta();
    let mut total = 0.0;
    for (m, ds) in data.iter().enumerate() {
        let TaskParams { f, d } = &params.tasks[m];
        let cov = f * &params.sigma * f.transpose() + DMatrix::identity(f.nrows(), f.nrows()) * eta;
        let chol = cov.clone().cholesky().unwrap();
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let inv = chol.inverse();
        let dim = f.nrows() as f64;
        let center = f * &params.mu + d;
        for i in 0..ds.n() {
            let x = ds.x().column(i).into_owned();
            let r = &x - &center;
            total += -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + log_det + r.dot(&(&inv * &r)));
            if let Some(y) = ds.labels()[i] {
                let (mean, q) = condition_on_features(params, eta, m, &x);
                let s = if y == Label::Positive { 1.0 } else { -1.0 };
                let scale = (1.0 + params.w.dot(&(&q * &params.w))).sqrt();
                total += phi_cdf(s * (params.w.dot(&mean) + params.b) / scale).ln();
            }
        }
    }
    let laplace = |v: f64, rate: f64| if rate > 0.0 { 0.5 * rate.ln() - std::f64::consts::LN_2 - rate.sqrt() * v.abs() } else { 0.0 };
    for t in &params.tasks {
        total += t.f.iter().map(|&v| laplace(v, hyper.gamma())).sum::<f64>();
    }
    total + params.w.iter().map(|&v| laplace(v, hyper.lambda())).sum::<f64>()
}

/// Minimizer of `½xᵀΓx − cᵀx + r‖x‖₁` by cyclic coordinate descent.
pub fn l1_quadratic_cd(gram: &DMatrix<f64>, c: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = c.len();
    let mut x = DVector::zeros(n);
    for _ in 0..1_000_000 {
        let mut moved: f64 = 0.0;
        for j in 0..n {
            let h = gram[(j, j)];
            let rest = gram.row(j).transpose().dot(&x) - h * x[j];
            let v = c[j] - rest;
            let new = if v > r { (v - r) / h } else if v < -r { (v + r) / h } else { 0.0 };
            moved = moved.max((new - x[j]).abs());
            x[j] = new;
        }
        if moved < 1e-15 {
            break;
        }
    }
    x
}

pub fn l1_quadratic_objective(gram: &DMatrix<f64>, c: &DVector<f64>, r: f64, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(gram * x)) - c.dot(x) + r * x.lp_norm(1)
}

/// Exact lasso `(1/n)‖z − Ψᵀw‖² + r‖w‖₁` by enumerating every sign pattern and
/// keeping the best self-consistent stationary point.
pub fn lasso_by_sign_patterns(psi: &DMatrix<f64>, z: &DVector<f64>, r: f64) -> (DVector<f64>, f64) {
    let (p, n) = (psi.nrows(), psi.ncols() as f64);
    let objective = |w: &DVector<f64>| (z - psi.tr_mul(w)).norm_squared() / n + r * w.lp_norm(1);
    let mut best = (DVector::zeros(p), objective(&DVector::zeros(p)));
    let patterns = 3usize.pow(p as u32);
    for code in 0..patterns {
        let mut signs = vec![0.0; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let k = support.len();
        let sub = DMatrix::from_fn(k, psi.ncols(), |a, i| psi[(support[a], i)]);
        let lhs = &sub * sub.transpose() * (2.0 / n);
        let rhs = &sub * z * (2.0 / n) - DVector::from_fn(k, |a, _| r * signs[support[a]]);
        let Some(sol) = lhs.lu().solve(&rhs) else { continue };
        if (0..k).any(|a| sol[a] * signs[support[a]] <= 0.0) {
            continue;
        }
        let mut w = DVector::zeros(p);
        for a in 0..k {
            w[support[a]] = sol[a];
        }
        let value = objective(&w);
        if value < best.1 {
            best = (w, value);
        }
    }
    best
}

/// Random valid parameters: `Sigma = AAᵀ + 0.5I`, entries of order one.
pub fn random_params<R: Rng>(f0: usize, dims: &[usize], rng: &mut R) -> LpmParams {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let a = DMatrix::from_fn(f0, f0, |_, _| 0.5 * g());
    let sigma = (&a * a.transpose() + DMatrix::identity(f0, f0) * 0.5).symmetric_part();
    let mu = DVector::from_fn(f0, |_, _| 0.5 * g());
    let w = DVector::from_fn(f0, |_, _| g());
    let b = 0.3 * g();
    let tasks = dims
        .iter()
        .map(|&d| TaskParams { f: DMatrix::from_fn(d, f0, |_, _| g()), d: DVector::from_fn(d, |_, _| g()) })
        .collect();
    LpmParams::new(mu, sigma, b, w, tasks).unwrap()
}

/// Largest standardized deviation of the empirical mean and covariance of
/// `x` (one example per column) from `F mu + d` and `eta I + F Sigma Fᵀ`.
pub fn marginal_z_scores(params: &LpmParams, eta: f64, task: usize, x: &DMatrix<f64>) -> (f64, f64) {
    let TaskParams { f, d } = &params.tasks[task];
    let mean = f * &params.mu + d;
    let cov = f * &params.sigma * f.transpose() + DMatrix::identity(f.nrows(), f.nrows()) * eta;
    let n = x.ncols() as f64;
    let emp_mean = x.column_mean();
    let mut centered = x.clone();
    for mut c in centered.column_iter_mut() {
        c -= &emp_mean;
    }
    let emp_cov = &centered * centered.transpose() / (n - 1.0);
    let dim = f.nrows();
    let mut worst_mean: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    for i in 0..dim {
        worst_mean = worst_mean.max((emp_mean[i] - mean[i]).abs() / (cov[(i, i)] / n).sqrt());
        for j in 0..dim {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            worst_cov = worst_cov.max((emp_cov[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    (worst_mean, worst_cov)
}
