//! Draws from the generative process: Laplacian-prior parameters through their
//! Gaussian scale mixtures, then latent features, observations and labels.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{LpmError, Result};
use crate::model::{Hyperparams, Label, LpmParams, SparsityScales, TaskDataset, TaskParams};
use crate::par::Execution;

/// Inputs of a synthetic multitask problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub hyper: Hyperparams,
    pub task_dims: Vec<usize>,
    pub n_per_task: Vec<usize>,
    pub labeled_fraction: Vec<f64>,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.task_dims.len();
        if m == 0 {
            return Err(LpmError::InvalidInput("at least one task is required".into()));
        }
        if self.n_per_task.len() != m || self.labeled_fraction.len() != m {
            return Err(LpmError::Dimension(format!(
                "task_dims, n_per_task and labeled_fraction have lengths {}, {}, {}",
                m,
                self.n_per_task.len(),
                self.labeled_fraction.len()
            )));
        }
        if self.task_dims.contains(&0) || self.n_per_task.contains(&0) {
            return Err(LpmError::InvalidInput("task dimensions and sizes must be positive".into()));
        }
        if let Some(f) = self.labeled_fraction.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(LpmError::InvalidInput(format!("labeled fraction {f} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Deterministic substream `stream` of the root generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exponential(rate: f64, what: &str) -> Result<Exp<f64>> {
    if !(rate > 0.0) {
        return Err(LpmError::InvalidHyperparams(format!(
            "{what} rate must be positive to sample, got {rate}"
        )));
    }
    Exp::new(rate).map_err(|e| LpmError::InvalidHyperparams(format!("{what}: {e}")))
}

/// `w_j ~ N(0, u_j)` with `u_j ~ Exp(lambda / 2)`; returns `(w, u)`.
pub fn sample_classifier<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mixing = exponential(hyper.lambda() / 2.0, "lambda")?;
    let f0 = hyper.f0();
    let mut w = DVector::zeros(f0);
    let mut u = DVector::zeros(f0);
    for j in 0..f0 {
        u[j] = mixing.sample(rng);
        let e: f64 = rng.sample(StandardNormal);
        w[j] = u[j].sqrt() * e;
    }
    Ok((w, u))
}

/// `f_kj ~ N(0, tau_kj)` with `tau_kj ~ Exp(gamma / 2)`; returns `(F, tau)`.
pub fn sample_transform<R: Rng + ?Sized>(
    d_m: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if d_m == 0 {
        return Err(LpmError::InvalidInput("task dimension must be positive".into()));
    }
    let mixing = exponential(hyper.gamma() / 2.0, "gamma")?;
    let f0 = hyper.f0();
    let mut f = DMatrix::zeros(d_m, f0);
    let mut tau = DMatrix::zeros(d_m, f0);
    for k in 0..d_m {
        for j in 0..f0 {
            tau[(k, j)] = mixing.sample(rng);
            let e: f64 = rng.sample(StandardNormal);
            f[(k, j)] = tau[(k, j)].sqrt() * e;
        }
    }
    Ok((f, tau))
}

/// Quantities the generative process draws but a learner never sees.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenDraws {
    /// Latent features, one column per example.
    pub s: DMatrix<f64>,
    pub z: DVector<f64>,
    pub y: Vec<Label>,
}

/// Draw `n_m` examples of task `task_index` with observation noise variance
/// `eta`, keeping labels for a uniformly chosen `labeled_fraction` of them.
pub fn sample_task<R: Rng + ?Sized>(
    params: &LpmParams,
    eta: f64,
    task_index: usize,
    n_m: usize,
    labeled_fraction: f64,
    rng: &mut R,
) -> Result<(TaskDataset, HiddenDraws)> {
    let task = params
        .tasks
        .get(task_index)
        .ok_or_else(|| LpmError::InvalidInput(format!("no task {task_index}")))?;
    if !(0.0..=1.0).contains(&labeled_fraction) {
        return Err(LpmError::InvalidInput(format!(
            "labeled fraction {labeled_fraction} outside [0, 1]"
        )));
    }
    let chol = params
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| LpmError::Numerical("sigma is not positive definite".into()))?;
    let l = chol.l();
    let f0 = params.f0();
    let d_m = task.dim();
    if !(eta > 0.0) {
        return Err(LpmError::InvalidHyperparams(format!("eta must be positive, got {eta}")));
    }
    let eta_sd = eta.sqrt();

    let mut s = DMatrix::zeros(f0, n_m);
    let mut x = DMatrix::zeros(d_m, n_m);
    let mut z = DVector::zeros(n_m);
    let mut y = Vec::with_capacity(n_m);
    for i in 0..n_m {
        let eps = DVector::from_fn(f0, |_, _| rng.sample::<f64, _>(StandardNormal));
        let si = &params.mu + &l * eps;
        let noise = DVector::from_fn(d_m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let xi = &task.f * &si + &task.d + noise * eta_sd;
        let e: f64 = rng.sample(StandardNormal);
        let zi = params.w.dot(&si) + params.b + e;
        s.set_column(i, &si);
        x.set_column(i, &xi);
        z[i] = zi;
        y.push(Label::from_response(zi));
    }

    let n_labeled = ((labeled_fraction * n_m as f64).round() as usize).min(n_m);
    let mut labels = vec![None; n_m];
    for i in index::sample(rng, n_m, n_labeled) {
        labels[i] = Some(y[i]);
    }
    Ok((TaskDataset::new(x, labels)?, HiddenDraws { s, z, y }))
}

/// Synthetic problem drawn from a [`GenConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub params: LpmParams,
    pub scales: SparsityScales,
    pub tasks: Vec<TaskDataset>,
    pub hidden: Vec<HiddenDraws>,
}

/// Draw parameters and data with `mu = 0`, `Sigma = I`, `b = 0`, `d_m = 0`.
///
/// Substream 0 drives the classifier; task `m` uses substream `1 + 2m` for its
/// transform and `2 + 2m` for its examples, so appending a task leaves earlier
/// draws untouched.
pub fn generate(config: &GenConfig, exec: Execution) -> Result<SyntheticProblem> {
    config.validate()?;
    let hyper = &config.hyper;
    let (w, u) = sample_classifier(hyper, &mut substream(config.seed, 0))?;
    let transforms = exec.map(&config.task_dims, |m, &d_m| {
        sample_transform(d_m, hyper, &mut substream(config.seed, 1 + 2 * m as u64))
    });
    let mut tasks = Vec::with_capacity(transforms.len());
    let mut tau = Vec::with_capacity(transforms.len());
    for t in transforms {
        let (f, t_m) = t?;
        tasks.push(TaskParams { d: DVector::zeros(f.nrows()), f });
        tau.push(t_m);
    }
    let params = LpmParams::standard(w, tasks)?;
    let draws = exec.map_range(config.task_dims.len(), |m| {
        sample_task(
            &params,
            hyper.eta(),
            m,
            config.n_per_task[m],
            config.labeled_fraction[m],
            &mut substream(config.seed, 2 + 2 * m as u64),
        )
    });
    let mut data = Vec::with_capacity(draws.len());
    let mut hidden = Vec::with_capacity(draws.len());
    for d in draws {
        let (ds, h) = d?;
        data.push(ds);
        hidden.push(h);
    }
    Ok(SyntheticProblem { params, scales: SparsityScales { tau, u }, tasks: data, hidden })
}

/// Weight vector with exactly `s` nonzeros at uniformly random positions,
/// magnitudes uniform in `[lo, hi]` and random signs.
pub fn sample_sparse_weights<R: Rng + ?Sized>(
    f0: usize,
    s: usize,
    (lo, hi): (f64, f64),
    rng: &mut R,
) -> Result<DVector<f64>> {
    if s > f0 {
        return Err(LpmError::InvalidInput(format!("support size {s} exceeds dimension {f0}")));
    }
    let mut w = DVector::zeros(f0);
    for j in index::sample(rng, f0, s) {
        let magnitude = rng.random_range(lo..=hi);
        w[j] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    Ok(w)
}

/// Keep each entry of `f` with probability `density`, zeroing the rest.
pub fn sparsify<R: Rng + ?Sized>(f: &mut DMatrix<f64>, density: f64, rng: &mut R) {
    for v in f.iter_mut() {
        if rng.random::<f64>() >= density {
            *v = 0.0;
        }
    }
}
