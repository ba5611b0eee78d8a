//! Experiment configuration, read from TOML and overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fit,
    Mtl,
    Transfer,
    Stl,
    Synth,
    VerifyBound,
    Cv,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::Mtl => "mtl",
            Mode::Transfer => "transfer",
            Mode::Stl => "stl",
            Mode::Synth => "synth",
            Mode::VerifyBound => "verify-bound",
            Mode::Cv => "cv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum F0Policy {
    Explicit(usize),
    Named(F0Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F0Keyword {
    MinTaskDim,
}

impl F0Policy {
    pub fn resolve(self, dims: &[usize]) -> Result<usize> {
        match self {
            F0Policy::Explicit(0) => Err(CliError::Usage("f0 must be positive".into())),
            F0Policy::Explicit(f0) => Ok(f0),
            F0Policy::Named(F0Keyword::MinTaskDim) => {
                dims.iter().copied().min().ok_or_else(|| CliError::Usage("no tasks configured".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub f0: usize,
    pub task_dims: Vec<usize>,
    pub n_per_task: usize,
    pub labeled_fraction: f64,
    /// Nonzeros of the true classifier.
    pub support: usize,
    pub weight_range: (f64, f64),
    /// Fraction of transform entries kept.
    pub transform_density: f64,
    pub eta: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            f0: 5,
            task_dims: vec![8, 10, 12],
            n_per_task: 500,
            labeled_fraction: 0.5,
            support: 2,
            weight_range: (1.5, 2.5),
            transform_density: 0.3,
            eta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub f0: usize,
    pub support: usize,
    pub task_dims: Vec<usize>,
    pub labeled_per_task: usize,
    pub eta: f64,
    pub a: f64,
    pub trials: usize,
    pub gamma: f64,
    pub transform_density: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        let v = lpm::bound::VerifyConfig::default();
        Self {
            f0: v.f0,
            support: v.s,
            task_dims: v.task_dims,
            labeled_per_task: v.labeled_per_task,
            eta: v.eta,
            a: v.a,
            trials: v.trials,
            gamma: v.gamma,
            transform_density: v.transform_density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub tasks: Vec<TaskSource>,
    /// Labeled examples per task, one sweep point each.
    pub labeled: Vec<usize>,
    pub runs: usize,
    pub f0: F0Policy,
    pub eta: f64,
    pub alpha: Vec<f64>,
    pub vartheta: Vec<f64>,
    pub cv_folds: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub normalize: bool,
    pub test_fraction: f64,
    /// Transfer direction: index of the source task in `tasks`.
    pub source: usize,
    /// Cap on source labels in transfer mode; all training labels when absent.
    pub source_labeled: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub update_latent: bool,
    pub synth: SynthConfig,
    pub bound: BoundConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            tasks: Vec::new(),
            labeled: vec![50, 100, 150],
            runs: 50,
            f0: F0Policy::Named(F0Keyword::MinTaskDim),
            eta: 1e-3,
            alpha: vec![0.1],
            vartheta: vec![1.0],
            cv_folds: 5,
            seed: 0,
            out: PathBuf::from("out"),
            normalize: true,
            test_fraction: 0.3,
            source: 0,
            source_labeled: None,
            tol: 1e-6,
            max_iters: 500,
            update_latent: false,
            synth: SynthConfig::default(),
            bound: BoundConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn check(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.runs == 0 {
            return usage("runs must be at least 1");
        }
        if self.alpha.is_empty() || self.vartheta.is_empty() {
            return usage("alpha and vartheta grids must be non-empty");
        }
        if self.alpha.iter().chain(&self.vartheta).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return usage("alpha and vartheta must be finite and nonnegative");
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return usage("eta must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return usage("test_fraction must lie in (0, 1)");
        }
        if self.cv_folds < 2 {
            return usage("cv_folds must be at least 2");
        }
        Ok(())
    }

    /// Every `(alpha, vartheta)` pair in grid order, alpha outermost.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.alpha.iter().flat_map(|&a| self.vartheta.iter().map(move |&v| (a, v))).collect()
    }
}
