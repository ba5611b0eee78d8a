//! Test-time scoring, ROC AUC and the single-task baseline.

use nalgebra::{DMatrix, DVector};

use crate::em::{fit, spd_inverse, FitOptions, FitTrace, Init};
use crate::error::{LpmError, Result};
use crate::model::{Hyperparams, Label, LpmParams, TaskDataset};
use crate::normal;
use crate::par::Execution;

/// Predictive law of the latent response given features only:
/// `z | x ~ N(zeta, rho)` and `P(y = +1 | x) = Φ(zeta / sqrt(rho))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub prob_positive: f64,
    pub zeta: f64,
    pub rho: f64,
}

/// Cached per-task quantities for scoring many examples.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    params: &'a LpmParams,
    task_index: usize,
    eta: f64,
    /// `Q w / eta`
    weight: DVector<f64>,
    rho: f64,
}

impl<'a> Predictor<'a> {
    pub fn new(params: &'a LpmParams, eta: f64, task_index: usize) -> Result<Self> {
        let task = params
            .tasks
            .get(task_index)
            .ok_or_else(|| LpmError::InvalidInput(format!("no task {task_index}")))?;
        if !(eta > 0.0) {
            return Err(LpmError::InvalidHyperparams(format!("eta must be positive, got {eta}")));
        }
        let sigma_inv = spd_inverse(params.sigma.clone(), "sigma")?;
        let q = spd_inverse(&sigma_inv + task.f.tr_mul(&task.f) / eta, "Q")?;
        let qw = &q * &params.w;
        let rho = 1.0 + params.w.dot(&qw);
        Ok(Self { params, task_index, eta, weight: qw / eta, rho })
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let task = &self.params.tasks[self.task_index];
        if x.len() != task.dim() {
            return Err(LpmError::Dimension(format!(
                "feature vector has length {}, task {} expects {}",
                x.len(),
                self.task_index,
                task.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LpmError::InvalidInput("non-finite feature".into()));
        }
        let resid = x - &task.f * &self.params.mu - &task.d;
        let zeta = self.params.w.dot(&self.params.mu) + self.params.b + self.weight.dot(&task.f.tr_mul(&resid));
        Ok(Prediction { prob_positive: normal::cdf(zeta / self.rho.sqrt()), zeta, rho: self.rho })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

pub fn predict(params: &LpmParams, eta: f64, task_index: usize, x: &DVector<f64>) -> Result<Prediction> {
    Predictor::new(params, eta, task_index)?.predict(x)
}

/// Score every column of `x` (one example per column).
pub fn predict_batch(
    params: &LpmParams,
    eta: f64,
    task_index: usize,
    x: &DMatrix<f64>,
    exec: Execution,
) -> Result<Vec<Prediction>> {
    let predictor = Predictor::new(params, eta, task_index)?;
    let columns: Vec<DVector<f64>> = x.column_iter().map(|c| c.into_owned()).collect();
    exec.map(&columns, |_, c| predictor.predict(c)).into_iter().collect()
}

/// Mann–Whitney estimate of the area under the ROC curve; ties count one half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(LpmError::Dimension(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(LpmError::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LpmError::InvalidInput("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i] == Label::Positive).count();
        rank_sum += midrank * tied_pos as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Single-task baseline: the same model and trainer run on one task alone.
pub fn fit_stl(
    task: &TaskDataset,
    hyper: &Hyperparams,
    seed: u64,
    options: &FitOptions,
) -> Result<(LpmParams, FitTrace)> {
    if task.n_labeled() == 0 {
        return Err(LpmError::NoLabels);
    }
    fit(std::slice::from_ref(task), hyper, Init::Seed(seed), options)
}
