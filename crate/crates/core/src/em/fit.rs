use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::moments::e_step_task;
use super::mstep::{m_step_classifier, m_step_domain, m_step_latent};
use super::objective::log_posterior_counted;
use super::EStepMoments;
use crate::error::{LpmError, Result};
use crate::model::{validate, Hyperparams, Label, LpmParams, TaskDataset, TaskParams};
use crate::normal;
use crate::par::Execution;
use crate::sampler::substream;

/// Smallest magnitude allowed for initial transform and classifier entries;
/// exact zeros would be frozen by the reweighted updates.
const MIN_INIT_MAGNITUDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Relative change of the log posterior that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    /// Update `(mu, Sigma)`; when false they stay at their initial values.
    pub update_latent: bool,
    /// Entries below this magnitude are set to zero in the returned parameters.
    pub zero_threshold: f64,
    pub exec: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 500,
            update_latent: false,
            zero_threshold: 1e-8,
            exec: Execution::default(),
        }
    }
}

/// Starting point of a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Params(LpmParams),
    /// Data-driven start; the seed drives the classifier's random entries.
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub latent_change: f64,
    pub domain_change: f64,
    pub classifier_change: f64,
    pub nnz_transform: usize,
    pub nnz_classifier: usize,
    /// Scalar multiply–adds spent in this iteration.
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    /// Row 0 describes the initial parameters.
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    /// Total number of examples.
    pub n_a: usize,
    /// Total number of labeled examples.
    pub n_l: usize,
}

impl FitTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn final_log_posterior(&self) -> Option<f64> {
        self.rows.last().map(|r| r.log_posterior)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,log_posterior,latent_change,domain_change,classifier_change,nnz_transform,nnz_classifier,ops\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{},{}",
                r.iteration,
                r.log_posterior,
                r.latent_change,
                r.domain_change,
                r.classifier_change,
                r.nnz_transform,
                r.nnz_classifier,
                r.ops
            );
        }
        out
    }
}

/// Data-driven starting parameters.
///
/// `d_m` is the task mean; the columns of `F_m` are the leading principal
/// directions of the centered task data scaled by their standard deviations
/// (sign chosen so each column sums to a nonnegative value), padded with small
/// random columns when `F0` exceeds the task rank. `w_j ~ N(0, 0.01)`, and `b`
/// is the probit of the labeled positive fraction. `mu = 0`, `Sigma = I`.
pub fn initialize(data: &[TaskDataset], hyper: &Hyperparams, seed: u64) -> Result<LpmParams> {
    if data.is_empty() {
        return Err(LpmError::InvalidInput("at least one task is required".into()));
    }
    let f0 = hyper.f0();
    let mut tasks = Vec::with_capacity(data.len());
    for (m, ds) in data.iter().enumerate() {
        if ds.n() == 0 {
            return Err(LpmError::InvalidInput(format!("task {m} has no examples")));
        }
        let mut rng = substream(seed, 1 + m as u64);
        let n = ds.n() as f64;
        let mean = ds.x().column_mean();
        let mut centered = ds.x().clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let cov = &centered * centered.transpose() / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..ds.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut f = DMatrix::zeros(ds.dim(), f0);
        for j in 0..f0 {
            let usable = j < order.len() && eig.eigenvalues[order[j]] > 1e-12;
            if usable {
                let idx = order[j];
                let mut col = eig.eigenvectors.column(idx) * eig.eigenvalues[idx].sqrt();
                if col.sum() < 0.0 {
                    col.neg_mut();
                }
                f.set_column(j, &col);
            } else {
                for k in 0..ds.dim() {
                    f[(k, j)] = 1e-3 * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        f.apply(|v| *v = away_from_zero(*v));
        tasks.push(TaskParams { f, d: mean });
    }

    let mut rng = substream(seed, 0);
    let w = DVector::from_fn(f0, |_, _| away_from_zero(0.1 * rng.sample::<f64, _>(StandardNormal)));
    let (mut pos, mut total) = (0usize, 0usize);
    for ds in data {
        for label in ds.labels().iter().flatten() {
            total += 1;
            if *label == Label::Positive {
                pos += 1;
            }
        }
    }
    let b = if total == 0 { 0.0 } else { normal::quantile((pos as f64 / total as f64).clamp(0.01, 0.99)) };
    LpmParams::new(DVector::zeros(f0), DMatrix::identity(f0, f0), b, w, tasks)
}

fn away_from_zero(v: f64) -> f64 {
    if v.abs() >= MIN_INIT_MAGNITUDE {
        v
    } else if v < 0.0 {
        -MIN_INIT_MAGNITUDE
    } else {
        MIN_INIT_MAGNITUDE
    }
}

fn e_step_all(
    params: &LpmParams,
    hyper: &Hyperparams,
    data: &[TaskDataset],
    exec: Execution,
) -> Result<Vec<EStepMoments>> {
    exec.map(data, |m, ds| e_step_task(params, hyper, m, ds)).into_iter().collect()
}

/// Run EM from `init` until the relative change of the log posterior drops
/// below `options.tol` or `options.max_iters` iterations have run.
///
/// The classifier block is skipped when no task carries labels.
pub fn fit(
    data: &[TaskDataset],
    hyper: &Hyperparams,
    init: Init,
    options: &FitOptions,
) -> Result<(LpmParams, FitTrace)> {
    let mut params = match init {
        Init::Params(p) => p,
        Init::Seed(seed) => initialize(data, hyper, seed)?,
    };
    let report = validate(&params, data);
    if !report.is_ok() {
        return Err(LpmError::InvalidInput(report.issues.join("; ")));
    }
    if params.f0() != hyper.f0() {
        return Err(LpmError::Dimension(format!(
            "parameters have F0 = {}, hyperparameters F0 = {}",
            params.f0(),
            hyper.f0()
        )));
    }
    let exec = options.exec;
    let n_l: usize = data.iter().map(TaskDataset::n_labeled).sum();
    let mut trace = FitTrace {
        rows: Vec::new(),
        converged: false,
        n_a: data.iter().map(TaskDataset::n).sum(),
        n_l,
    };
    let (ell0, ops0) = log_posterior_counted(&params, hyper, data, exec)?;
    if !ell0.is_finite() {
        return Err(LpmError::Diverged { iteration: 0, last_finite: Box::new(trace) });
    }
    trace.rows.push(TraceRow {
        iteration: 0,
        log_posterior: ell0,
        latent_change: 0.0,
        domain_change: 0.0,
        classifier_change: 0.0,
        nnz_transform: nnz_transform(&params),
        nnz_classifier: nnz(params.w.iter()),
        ops: ops0,
    });

    let mut previous = ell0;
    for iteration in 1..=options.max_iters {
        let mut ops = 0u64;

        let mut latent_change = 0.0;
        if options.update_latent {
            let moments = e_step_all(&params, hyper, data, exec)?;
            ops += moments.iter().map(|m| m.ops).sum::<u64>();
            let (mu, sigma) = m_step_latent(&moments, &params.w)?;
            latent_change = ((&mu - &params.mu).norm_squared() + (&sigma - &params.sigma).norm_squared()).sqrt();
            params.mu = mu;
            params.sigma = sigma;
        }

        let updates = exec.map(data, |m, ds| -> Result<(TaskParams, u64)> {
            let moments = e_step_task(&params, hyper, m, ds)?;
            let (task, ops) = m_step_domain(&moments, ds, &params.tasks[m], &params.w, hyper)?;
            Ok((task, ops + moments.ops))
        });
        let mut domain_change = 0.0;
        for (m, update) in updates.into_iter().enumerate() {
            let (task, task_ops) = update?;
            ops += task_ops;
            domain_change += (&task.f - &params.tasks[m].f).norm_squared() + (&task.d - &params.tasks[m].d).norm_squared();
            params.tasks[m] = task;
        }
        let domain_change = domain_change.sqrt();

        let mut classifier_change = 0.0;
        if n_l > 0 {
            let moments = e_step_all(&params, hyper, data, exec)?;
            ops += moments.iter().map(|m| m.ops).sum::<u64>();
            let (w, b) = m_step_classifier(&moments, data, &params.w, params.b, hyper)?;
            classifier_change = ((&w - &params.w).norm_squared() + (b - params.b).powi(2)).sqrt();
            params.w = w;
            params.b = b;
        }

        let (ell, ell_ops) = log_posterior_counted(&params, hyper, data, exec)?;
        if !ell.is_finite() {
            return Err(LpmError::Diverged { iteration, last_finite: Box::new(trace) });
        }
        trace.rows.push(TraceRow {
            iteration,
            log_posterior: ell,
            latent_change,
            domain_change,
            classifier_change,
            nnz_transform: nnz_transform(&params),
            nnz_classifier: nnz(params.w.iter()),
            ops: ops + ell_ops,
        });
        let relative = (ell - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        previous = ell;
        if relative < options.tol {
            trace.converged = true;
            break;
        }
    }

    if trace.iterations() > 0 && options.zero_threshold > 0.0 {
        let cut = options.zero_threshold;
        let zero_small = |v: &mut f64| {
            if v.abs() < cut {
                *v = 0.0;
            }
        };
        params.w.apply(zero_small);
        for task in &mut params.tasks {
            task.f.apply(zero_small);
        }
    }
    Ok((params, trace))
}

fn nnz<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    values.filter(|v| **v != 0.0).count()
}

fn nnz_transform(params: &LpmParams) -> usize {
    params.tasks.iter().map(|t| nnz(t.f.iter())).sum()
}
