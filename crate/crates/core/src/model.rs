//! Domain types shared by the sampler, the trainer and the bound tooling.

use nalgebra::{DMatrix, DVector};

use crate::error::{LpmError, Result};

/// Binary class label; `Positive` is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// Label of a latent response, with ties at zero going to `Positive`.
    pub fn from_response(z: f64) -> Self {
        if z >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// Fixed inputs to learning.
///
/// `gamma` and `lambda` are the Laplacian rates of the transform and classifier
/// priors; the trainer only sees them through `alpha = eta·sqrt(gamma)` and
/// `vartheta = sqrt(lambda)`. A zero rate is accepted and denotes a flat prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    gamma: f64,
    lambda: f64,
    eta: f64,
    f0: usize,
    alpha: f64,
    vartheta: f64,
}

impl Hyperparams {
    pub fn from_rates(gamma: f64, lambda: f64, eta: f64, f0: usize) -> Result<Self> {
        check_common(eta, f0)?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(LpmError::InvalidHyperparams(format!("gamma = {gamma}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LpmError::InvalidHyperparams(format!("lambda = {lambda}")));
        }
        Ok(Self {
            gamma,
            lambda,
            eta,
            f0,
            alpha: eta * gamma.sqrt(),
            vartheta: lambda.sqrt(),
        })
    }

    pub fn from_regularizers(alpha: f64, vartheta: f64, eta: f64, f0: usize) -> Result<Self> {
        check_common(eta, f0)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(LpmError::InvalidHyperparams(format!("alpha = {alpha}")));
        }
        if !(vartheta >= 0.0 && vartheta.is_finite()) {
            return Err(LpmError::InvalidHyperparams(format!("vartheta = {vartheta}")));
        }
        let sqrt_gamma = alpha / eta;
        Ok(Self {
            gamma: sqrt_gamma * sqrt_gamma,
            lambda: vartheta * vartheta,
            eta,
            f0,
            alpha,
            vartheta,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn f0(&self) -> usize {
        self.f0
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn vartheta(&self) -> f64 {
        self.vartheta
    }

    /// Laplace rate of transform entries, `sqrt(gamma)`.
    pub fn transform_rate(&self) -> f64 {
        self.gamma.sqrt()
    }

    /// Laplace rate of classifier weights, `sqrt(lambda)`.
    pub fn classifier_rate(&self) -> f64 {
        self.lambda.sqrt()
    }

    pub fn with_f0(self, f0: usize) -> Result<Self> {
        check_common(self.eta, f0)?;
        Ok(Self { f0, ..self })
    }
}

fn check_common(eta: f64, f0: usize) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(LpmError::InvalidHyperparams(format!("eta must be positive, got {eta}")));
    }
    if f0 == 0 {
        return Err(LpmError::InvalidHyperparams("f0 must be at least 1".into()));
    }
    Ok(())
}

/// Per-task domain transform `x = F s + d + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams {
    pub f: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl TaskParams {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }
}

/// Full parameter set: latent Gaussian, shared probit classifier, per-task transforms.
///
/// Fields are public so that externally assembled values can be inspected by
/// [`validate`]; [`LpmParams::new`] is the checked constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct LpmParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub b: f64,
    pub w: DVector<f64>,
    pub tasks: Vec<TaskParams>,
}

impl LpmParams {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        b: f64,
        w: DVector<f64>,
        tasks: Vec<TaskParams>,
    ) -> Result<Self> {
        let params = Self { mu, sigma, b, w, tasks };
        let report = validate(&params, &[]);
        if !report.is_ok() {
            return Err(LpmError::InvalidInput(report.issues.join("; ")));
        }
        Ok(params)
    }

    /// Standard latent distribution (`mu = 0`, `Sigma = I`), zero bias.
    pub fn standard(w: DVector<f64>, tasks: Vec<TaskParams>) -> Result<Self> {
        let f0 = w.len();
        Self::new(DVector::zeros(f0), DMatrix::identity(f0, f0), 0.0, w, tasks)
    }

    pub fn f0(&self) -> usize {
        self.w.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Single-task view used by per-task baselines.
    pub fn single_task(&self, index: usize) -> LpmParams {
        LpmParams {
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
            b: self.b,
            w: self.w.clone(),
            tasks: vec![self.tasks[index].clone()],
        }
    }
}

/// Observed features of one task (one column per example) and a partial labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    x: DMatrix<f64>,
    labels: Vec<Option<Label>>,
}

impl TaskDataset {
    pub fn new(x: DMatrix<f64>, labels: Vec<Option<Label>>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(LpmError::Dimension(format!(
                "{} labels for {} examples",
                labels.len(),
                x.ncols()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(LpmError::InvalidInput(format!(
                "non-finite feature at row {}, column {}",
                pos % x.nrows(),
                pos / x.nrows()
            )));
        }
        Ok(Self { x, labels })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_none()).collect()
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TaskDataset {
        let x = self.x.select_columns(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        TaskDataset { x, labels }
    }

    /// Same features with labels removed at `indices`.
    pub fn hide_labels(&self, indices: &[usize]) -> TaskDataset {
        let mut labels = self.labels.clone();
        for &i in indices {
            labels[i] = None;
        }
        TaskDataset { x: self.x.clone(), labels }
    }

    /// Same labels with features replaced.
    pub fn with_features(&self, x: DMatrix<f64>) -> Result<TaskDataset> {
        TaskDataset::new(x, self.labels.clone())
    }
}

/// Variances of the Gaussian scale mixtures behind the Laplacian priors.
/// They exist only in the sampler; learning integrates them out.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityScales {
    pub tau: Vec<DMatrix<f64>>,
    pub u: DVector<f64>,
}

/// Violated invariants found by [`validate`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.issues.iter().any(|s| s.contains(needle))
    }
}

/// Check parameter invariants and, when `data` is non-empty, dimension
/// agreement between parameters and datasets.
pub fn validate(params: &LpmParams, data: &[TaskDataset]) -> ValidationReport {
    let mut issues = Vec::new();
    let f0 = params.w.len();
    if f0 == 0 {
        issues.push("classifier weights are empty".to_string());
    }
    if params.mu.len() != f0 {
        issues.push(format!("mu has length {}, expected {f0}", params.mu.len()));
    }
    if params.sigma.nrows() != f0 || params.sigma.ncols() != f0 {
        issues.push(format!(
            "sigma is {}x{}, expected {f0}x{f0}",
            params.sigma.nrows(),
            params.sigma.ncols()
        ));
    } else {
        let scale = params.sigma.amax().max(1.0);
        if (&params.sigma - params.sigma.transpose()).amax() > 1e-12 * scale {
            issues.push("sigma not symmetric".to_string());
        }
        if params.sigma.clone().cholesky().is_none() {
            issues.push("sigma not PD".to_string());
        }
    }
    let finite = params.mu.iter().chain(params.w.iter()).chain(params.sigma.iter()).all(|v| v.is_finite())
        && params.b.is_finite();
    if !finite {
        issues.push("non-finite latent or classifier parameter".to_string());
    }
    for (m, task) in params.tasks.iter().enumerate() {
        if task.f.ncols() != f0 {
            issues.push(format!(
                "column mismatch: task {m} transform has {} columns, expected {f0}",
                task.f.ncols()
            ));
        }
        if task.d.len() != task.f.nrows() {
            issues.push(format!(
                "task {m} translation has length {}, transform has {} rows",
                task.d.len(),
                task.f.nrows()
            ));
        }
        if !task.f.iter().chain(task.d.iter()).all(|v| v.is_finite()) {
            issues.push(format!("task {m} has non-finite transform entries"));
        }
    }
    if !data.is_empty() {
        if data.len() != params.tasks.len() {
            issues.push(format!(
                "{} datasets for {} task transforms",
                data.len(),
                params.tasks.len()
            ));
        }
        for (m, (task, ds)) in params.tasks.iter().zip(data).enumerate() {
            if ds.dim() != task.f.nrows() {
                issues.push(format!(
                    "task {m} data has dimension {}, transform has {} rows",
                    ds.dim(),
                    task.f.nrows()
                ));
            }
        }
    }
    ValidationReport { issues }
}
