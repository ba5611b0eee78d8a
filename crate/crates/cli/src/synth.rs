//! Synthetic recovery experiment: a known sparse model, a joint fit and
//! per-task baselines, scored on fresh held-out draws.

use std::fmt::Write as _;

use lpm::em::{fit, FitOptions, FitTrace, Init};
use lpm::predict::fit_stl;
use lpm::sampler::{sample_sparse_weights, sample_task, sample_transform, sparsify, substream};
use lpm::{Hyperparams, LpmParams, TaskDataset, TaskParams};
use nalgebra::DVector;

use crate::config::SynthConfig;
use crate::error::{CliError, Result};
use crate::experiment::test_auc;

/// Stream of task `m`'s held-out examples.
const TEST_STREAM_BASE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseProblem {
    pub truth: LpmParams,
    pub train: Vec<TaskDataset>,
    pub test: Vec<TaskDataset>,
}

/// Draw a model with `support` nonzero classifier weights and transforms
/// keeping `transform_density` of their Laplace entries, then train and test data.
pub fn sparse_problem(cfg: &SynthConfig, seed: u64) -> Result<SparseProblem> {
    if cfg.task_dims.is_empty() || cfg.f0 == 0 {
        return Err(CliError::Usage("synth needs f0 > 0 and at least one task".into()));
    }
    let gen_hyper = Hyperparams::from_rates(1.0, 1.0, cfg.eta, cfg.f0)?;
    let w = sample_sparse_weights(cfg.f0, cfg.support, cfg.weight_range, &mut substream(seed, 0))?;
    let mut tasks = Vec::with_capacity(cfg.task_dims.len());
    for (m, &d) in cfg.task_dims.iter().enumerate() {
        let mut rng = substream(seed, 1 + 2 * m as u64);
        let (mut f, _) = sample_transform(d, &gen_hyper, &mut rng)?;
        sparsify(&mut f, cfg.transform_density, &mut rng);
        tasks.push(TaskParams { f, d: DVector::zeros(d) });
    }
    let truth = LpmParams::standard(w, tasks)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for m in 0..cfg.task_dims.len() {
        let mut rng = substream(seed, 2 + 2 * m as u64);
        train.push(sample_task(&truth, cfg.eta, m, cfg.n_per_task, cfg.labeled_fraction, &mut rng)?.0);
        let mut rng = substream(seed, TEST_STREAM_BASE + m as u64);
        test.push(sample_task(&truth, cfg.eta, m, cfg.n_per_task, 1.0, &mut rng)?.0);
    }
    Ok(SparseProblem { truth, train, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub fitted: LpmParams,
    pub trace: FitTrace,
    /// Held-out AUC per task for the joint fit and the single-task fits.
    pub lpm_auc: Vec<f64>,
    pub stl_auc: Vec<f64>,
}

impl SynthOutcome {
    pub fn mean_lpm_auc(&self) -> f64 {
        self.lpm_auc.iter().sum::<f64>() / self.lpm_auc.len() as f64
    }

    pub fn mean_stl_auc(&self) -> f64 {
        self.stl_auc.iter().sum::<f64>() / self.stl_auc.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,lpm_auc,stl_auc\n");
        for (m, (a, b)) in self.lpm_auc.iter().zip(&self.stl_auc).enumerate() {
            let _ = writeln!(out, "{m},{a},{b}");
        }
        out
    }
}

/// Fit the joint model and one single-task model per task with the same
/// hyperparameters, at the true latent dimension.
pub fn run_synth(
    problem: &SparseProblem,
    hyper: &Hyperparams,
    seed: u64,
    options: &FitOptions,
) -> Result<SynthOutcome> {
    let (fitted, trace) = fit(&problem.train, hyper, Init::Seed(seed), options)?;
    let mut lpm_auc = Vec::with_capacity(problem.test.len());
    let mut stl_auc = Vec::with_capacity(problem.test.len());
    for (m, (train, test)) in problem.train.iter().zip(&problem.test).enumerate() {
        lpm_auc.push(test_auc(&fitted, hyper.eta(), m, test)?);
        let (single, _) = fit_stl(train, hyper, seed, options)?;
        stl_auc.push(test_auc(&single, hyper.eta(), 0, test)?);
    }
    Ok(SynthOutcome { fitted, trace, lpm_auc, stl_auc })
}
