//! Repeated-split experiments comparing the joint model against single-task fits.

use lpm::em::{fit, FitOptions, FitTrace, Init};
use lpm::predict::{auc, fit_stl, predict_batch};
use lpm::sampler::substream;
use lpm::{Execution, Hyperparams, Label, LpmError, LpmParams, TaskDataset};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, Result};
use crate::split::{materialize, split_task, TaskSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lpm,
    Stl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lpm => "lpm",
            Method::Stl => "stl",
        }
    }
}

/// One aggregated row: a labeled count and grid point, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: Mode,
    pub labeled: usize,
    pub alpha: f64,
    pub vartheta: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub stl_mean_auc: f64,
    pub stl_std_auc: f64,
    /// `mean_auc − stl_mean_auc`, both over the same splits.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// A single fit inside an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub labeled: usize,
    pub alpha: f64,
    pub vartheta: f64,
    pub method: Method,
    /// Task the AUC refers to.
    pub task: usize,
    /// NaN when the method could not be fit (e.g. no labels).
    pub auc: f64,
    pub trace: Option<FitTrace>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Experiment {
    pub table: ResultTable,
    pub records: Vec<RunRecord>,
}

pub(crate) fn fit_options(cfg: &ExperimentConfig) -> FitOptions {
    FitOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        update_latent: cfg.update_latent,
        exec: Execution::Sequential,
        ..FitOptions::default()
    }
}

pub(crate) fn hyper(cfg: &ExperimentConfig, alpha: f64, vartheta: f64, f0: usize) -> Result<Hyperparams> {
    Ok(Hyperparams::from_regularizers(alpha, vartheta, cfg.eta, f0)?)
}

/// Stream of the split of `task` in `run`; independent of labeled count and grid point.
pub(crate) fn split_stream(run: usize, task: usize) -> u64 {
    ((run as u64) << 16) | task as u64
}

pub(crate) fn fit_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(run as u64)
}

pub fn test_auc(params: &LpmParams, eta: f64, task: usize, test: &TaskDataset) -> Result<f64> {
    let preds = predict_batch(params, eta, task, test.x(), Execution::Sequential)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.prob_positive).collect();
    let labels: Vec<Label> = test.labels().iter().map(|l| l.expect("test labels are always present")).collect();
    Ok(auc(&scores, &labels)?)
}

fn stl_auc(
    train: &TaskDataset,
    test: &TaskDataset,
    h: &Hyperparams,
    seed: u64,
    options: &FitOptions,
) -> Result<(f64, Option<FitTrace>)> {
    match fit_stl(train, h, seed, options) {
        Ok((params, trace)) => Ok((test_auc(&params, h.eta(), 0, test)?, Some(trace))),
        Err(LpmError::NoLabels) => Ok((f64::NAN, None)),
        Err(e) => Err(e.into()),
    }
}

pub(crate) struct RunInput {
    pub(crate) train: Vec<TaskDataset>,
    pub(crate) test: Vec<TaskDataset>,
}

pub(crate) fn prepare_run(cfg: &ExperimentConfig, data: &[TaskDataset], run: usize, labeled: usize) -> Result<RunInput> {
    let mut train = Vec::with_capacity(data.len());
    let mut test = Vec::with_capacity(data.len());
    for (m, ds) in data.iter().enumerate() {
        let mut rng = substream(cfg.seed, split_stream(run, m));
        let split = split_task(ds.labels(), cfg.test_fraction, labeled, &mut rng)?;
        let (tr, te) = materialize(ds, &split, cfg.normalize)?;
        train.push(tr);
        test.push(te);
    }
    Ok(RunInput { train, test })
}

/// Transfer split: the source trains on every example with up to
/// `source_labeled` labels; the target is split like any other task.
fn prepare_transfer(cfg: &ExperimentConfig, data: &[TaskDataset], run: usize, labeled: usize) -> Result<RunInput> {
    let source = cfg.source;
    let mut train = Vec::with_capacity(2);
    let mut test = Vec::with_capacity(2);
    for (m, ds) in data.iter().enumerate() {
        let mut rng = substream(cfg.seed, split_stream(run, m));
        if m == source {
            let n_lab = cfg.source_labeled.unwrap_or(ds.n_labeled()).min(ds.n_labeled());
            let all: Vec<usize> = (0..ds.n()).collect();
            // Reuse the stratified labeled draw with no held-out part.
            let mut split = split_task(ds.labels(), 0.0, n_lab, &mut rng)?;
            split.train = all;
            let split = TaskSplit { test: Vec::new(), ..split };
            let (tr, te) = materialize(ds, &split, cfg.normalize)?;
            train.push(tr);
            test.push(te);
        } else {
            let split = split_task(ds.labels(), cfg.test_fraction, labeled, &mut rng)?;
            let (tr, te) = materialize(ds, &split, cfg.normalize)?;
            train.push(tr);
            test.push(te);
        }
    }
    Ok(RunInput { train, test })
}

fn run_once(
    cfg: &ExperimentConfig,
    mode: Mode,
    data: &[TaskDataset],
    f0: usize,
    run: usize,
) -> Result<Vec<RunRecord>> {
    let options = fit_options(cfg);
    let seed = fit_seed(cfg.seed, run);
    let mut records = Vec::new();
    for &labeled in &cfg.labeled {
        let input = match mode {
            Mode::Transfer => prepare_transfer(cfg, data, run, labeled)?,
            _ => prepare_run(cfg, data, run, labeled)?,
        };
        let evaluated: Vec<usize> = match mode {
            Mode::Transfer => vec![1 - cfg.source],
            _ => (0..data.len()).collect(),
        };
        for (alpha, vartheta) in cfg.grid() {
            let h = hyper(cfg, alpha, vartheta, f0)?;
            let record = |method, task, auc, trace| RunRecord { run, labeled, alpha, vartheta, method, task, auc, trace };
            if mode != Mode::Stl {
                let (params, trace) = fit(&input.train, &h, Init::Seed(seed), &options)?;
                for (k, &m) in evaluated.iter().enumerate() {
                    let a = test_auc(&params, h.eta(), m, &input.test[m])?;
                    records.push(record(Method::Lpm, m, a, (k == 0).then(|| trace.clone())));
                }
            }
            for &m in &evaluated {
                let (a, trace) = stl_auc(&input.train[m], &input.test[m], &h, seed, &options)?;
                records.push(record(Method::Stl, m, a, trace));
            }
        }
    }
    Ok(records)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Average records into one row per labeled count and grid point. Each run
/// contributes its task-averaged AUC.
pub fn aggregate(cfg: &ExperimentConfig, mode: Mode, records: &[RunRecord]) -> ResultTable {
    let mut rows = Vec::new();
    for &labeled in &cfg.labeled {
        for (alpha, vartheta) in cfg.grid() {
            let per_run = |method: Method| -> Vec<f64> {
                (0..cfg.runs)
                    .map(|run| {
                        let aucs: Vec<f64> = records
                            .iter()
                            .filter(|r| {
                                r.run == run
                                    && r.labeled == labeled
                                    && r.alpha == alpha
                                    && r.vartheta == vartheta
                                    && r.method == method
                            })
                            .map(|r| r.auc)
                            .collect();
                        aucs.iter().sum::<f64>() / aucs.len() as f64
                    })
                    .collect()
            };
            let (stl_mean_auc, stl_std_auc) = mean_std(&per_run(Method::Stl));
            let (mean_auc, std_auc) =
                if mode == Mode::Stl { (stl_mean_auc, stl_std_auc) } else { mean_std(&per_run(Method::Lpm)) };
            rows.push(ResultRow {
                mode,
                labeled,
                alpha,
                vartheta,
                mean_auc,
                std_auc,
                stl_mean_auc,
                stl_std_auc,
                improvement: mean_auc - stl_mean_auc,
            });
        }
    }
    ResultTable { rows }
}

fn run_mode(cfg: &ExperimentConfig, mode: Mode, data: &[TaskDataset], exec: Execution) -> Result<Experiment> {
    cfg.check()?;
    let dims: Vec<usize> = data.iter().map(TaskDataset::dim).collect();
    let f0 = cfg.f0.resolve(&dims)?;
    let per_run = exec.map_range(cfg.runs, |run| run_once(cfg, mode, data, f0, run));
    let mut records = Vec::new();
    for r in per_run {
        records.extend(r?);
    }
    Ok(Experiment { table: aggregate(cfg, mode, &records), records })
}

/// Joint fit over all tasks against per-task fits on identical splits.
pub fn run_mtl(cfg: &ExperimentConfig, data: &[TaskDataset], exec: Execution) -> Result<Experiment> {
    if data.len() < 2 {
        return Err(CliError::Usage("mtl needs at least two tasks".into()));
    }
    run_mode(cfg, Mode::Mtl, data, exec)
}

/// Source-to-target transfer, evaluated on the target only.
pub fn run_transfer(cfg: &ExperimentConfig, data: &[TaskDataset], exec: Execution) -> Result<Experiment> {
    if data.len() != 2 {
        return Err(CliError::Usage("transfer needs exactly two tasks".into()));
    }
    if cfg.source > 1 {
        return Err(CliError::Usage("source must be 0 or 1".into()));
    }
    run_mode(cfg, Mode::Transfer, data, exec)
}

pub fn run_stl(cfg: &ExperimentConfig, data: &[TaskDataset], exec: Execution) -> Result<Experiment> {
    if data.is_empty() {
        return Err(CliError::Usage("stl needs at least one task".into()));
    }
    run_mode(cfg, Mode::Stl, data, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lpm::sampler::{generate, GenConfig};

    fn synthetic_tasks() -> Vec<TaskDataset> {
        let hyper = Hyperparams::from_rates(4.0, 1.0, 0.1, 3).unwrap();
        let problem = generate(
            &GenConfig {
                hyper,
                task_dims: vec![4, 5],
                n_per_task: vec![120, 120],
                labeled_fraction: vec![1.0, 1.0],
                seed: 5,
            },
            Execution::Sequential,
        )
        .unwrap();
        problem.tasks
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            labeled: vec![10, 20],
            runs: 2,
            alpha: vec![0.1, 1.0],
            max_iters: 30,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn mtl_table_shape_and_identities() {
        let cfg = small_config();
        let exp = run_mtl(&cfg, &synthetic_tasks(), Execution::Sequential).unwrap();
        assert_eq!(exp.table.rows.len(), 4);
        for row in &exp.table.rows {
            assert!((0.0..=1.0).contains(&row.mean_auc));
            assert_eq!(row.improvement, row.mean_auc - row.stl_mean_auc);
        }
        // 2 runs × 2 labeled × 2 grid × 2 tasks × 2 methods
        assert_eq!(exp.records.len(), 32);
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let cfg = small_config();
        let tasks = synthetic_tasks();
        let a = run_mtl(&cfg, &tasks, Execution::Sequential).unwrap();
        let b = run_mtl(&cfg, &tasks, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transfer_without_target_labels_still_runs() {
        let cfg = ExperimentConfig { labeled: vec![0], runs: 1, alpha: vec![0.1], max_iters: 20, ..ExperimentConfig::default() };
        let exp = run_transfer(&cfg, &synthetic_tasks(), Execution::Sequential).unwrap();
        let row = &exp.table.rows[0];
        assert!(row.mean_auc.is_finite());
        assert!(row.stl_mean_auc.is_nan());
        assert!(exp.records.iter().all(|r| r.task == 1));
    }

    #[test]
    fn stl_mode_has_zero_improvement() {
        let cfg = ExperimentConfig { labeled: vec![10], runs: 1, max_iters: 20, ..ExperimentConfig::default() };
        let exp = run_stl(&cfg, &synthetic_tasks(), Execution::Sequential).unwrap();
        assert_eq!(exp.table.rows[0].improvement, 0.0);
        assert!(exp.records.iter().all(|r| r.method == Method::Stl));
    }

    #[test]
    fn mode_preconditions() {
        let tasks = synthetic_tasks();
        let cfg = small_config();
        assert_eq!(run_mtl(&cfg, &tasks[..1], Execution::Sequential).unwrap_err().exit_code(), 1);
        assert_eq!(run_transfer(&cfg, &tasks[..1], Execution::Sequential).unwrap_err().exit_code(), 1);
    }
}
