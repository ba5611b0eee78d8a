//! k-fold cross-validation of `(alpha, vartheta)` over the labeled training examples.

use lpm::em::{fit, Init};
use lpm::predict::{auc, predict_batch};
use lpm::sampler::substream;
use lpm::{Execution, Label, TaskDataset};
use rand::seq::SliceRandom;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::{fit_options, hyper};

#[derive(Debug, Clone, PartialEq)]
pub struct GridScore {
    pub alpha: f64,
    pub vartheta: f64,
    /// Mean validation AUC over the folds that could be scored.
    pub mean_auc: f64,
    pub folds_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub alpha: f64,
    pub vartheta: f64,
    pub scores: Vec<GridScore>,
    pub warnings: Vec<String>,
}

/// Assign each labeled example of each task to one of `k` folds, stratified by class.
pub fn assign_folds(tasks: &[TaskDataset], k: usize, seed: u64) -> Vec<Vec<Vec<usize>>> {
    tasks
        .iter()
        .enumerate()
        .map(|(m, ds)| {
            let mut rng = substream(seed, m as u64);
            let mut folds = vec![Vec::new(); k];
            let mut slot = 0;
            for class in [Label::Positive, Label::Negative] {
                let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.labels()[i] == Some(class)).collect();
                idx.shuffle(&mut rng);
                for i in idx {
                    folds[slot % k].push(i);
                    slot += 1;
                }
            }
            for f in &mut folds {
                f.sort_unstable();
            }
            folds
        })
        .collect()
}

fn dedup_grid(grid: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    for p in grid {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Pick the grid point with the best mean validation AUC; ties go to the
/// larger `alpha`, then the larger `vartheta`.
pub fn cross_validate(cfg: &ExperimentConfig, tasks: &[TaskDataset], f0: usize, exec: Execution) -> Result<CvOutcome> {
    let grid = dedup_grid(cfg.grid());
    if grid.is_empty() {
        return Err(CliError::Usage("empty (alpha, vartheta) grid".into()));
    }
    if grid.len() == 1 {
        let (alpha, vartheta) = grid[0];
        return Ok(CvOutcome { alpha, vartheta, scores: Vec::new(), warnings: Vec::new() });
    }
    let k = cfg.cv_folds;
    let folds = assign_folds(tasks, k, cfg.seed);
    let options = fit_options(cfg);

    // Held-out fold data does not depend on the grid point.
    let mut fold_data = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    for j in 0..k {
        let train: Vec<TaskDataset> = tasks.iter().zip(&folds).map(|(ds, f)| ds.hide_labels(&f[j])).collect();
        let scored: Vec<usize> = (0..tasks.len())
            .filter(|&m| {
                let labels: Vec<_> = folds[m][j].iter().map(|&i| tasks[m].labels()[i]).collect();
                labels.contains(&Some(Label::Positive)) && labels.contains(&Some(Label::Negative))
            })
            .collect();
        if scored.is_empty() {
            warnings.push(format!("fold {j} skipped: no task has both classes in validation"));
            continue;
        }
        fold_data.push((j, train, scored));
    }
    if fold_data.is_empty() {
        return Err(CliError::Data("every cross-validation fold was skipped".into()));
    }

    let results = exec.map(&grid, |_, &(alpha, vartheta)| -> Result<GridScore> {
        let h = hyper(cfg, alpha, vartheta, f0)?;
        let mut total = 0.0;
        for (j, train, scored) in &fold_data {
            let (params, _) = fit(train, &h, Init::Seed(cfg.seed), &options)?;
            let mut fold_total = 0.0;
            for &m in scored {
                let idx = &folds[m][*j];
                let held = tasks[m].select(idx);
                let preds = predict_batch(&params, h.eta(), m, held.x(), Execution::Sequential)?;
                let scores: Vec<f64> = preds.iter().map(|p| p.prob_positive).collect();
                let labels: Vec<Label> = held.labels().iter().map(|l| l.expect("fold holds labeled examples")).collect();
                fold_total += auc(&scores, &labels)?;
            }
            total += fold_total / scored.len() as f64;
        }
        Ok(GridScore { alpha, vartheta, mean_auc: total / fold_data.len() as f64, folds_used: fold_data.len() })
    });
    let scores: Vec<GridScore> = results.into_iter().collect::<Result<_>>()?;
    let best = scores
        .iter()
        .max_by(|a, b| {
            a.mean_auc
                .total_cmp(&b.mean_auc)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.vartheta.total_cmp(&b.vartheta))
        })
        .expect("grid is non-empty");
    Ok(CvOutcome { alpha: best.alpha, vartheta: best.vartheta, scores: scores.clone(), warnings })
}
