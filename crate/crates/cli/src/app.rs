//! Command-line front end: argument parsing, config overrides and mode dispatch.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lpm::bound::{verify_theorem1, VerifyConfig};
use lpm::em::{fit, Init};
use lpm::io::save_params;
use lpm::predict::predict_batch;
use lpm::{Execution, TaskDataset};

use crate::config::{ExperimentConfig, F0Policy, Mode};
use crate::cv::cross_validate;
use crate::error::{CliError, Result};
use crate::experiment::{fit_options, fit_seed, hyper, prepare_run, run_mtl, run_stl, run_transfer, test_auc};
use crate::ingest::ingest_csv;
use crate::output::{emit_outputs, write_file};
use crate::synth::{run_synth, sparse_problem};

#[derive(Debug, Parser)]
#[command(name = "lpm", version, about = "Latent probit model experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model on every example of the given tasks and score them.
    Fit(Flags),
    /// Joint fit against single-task fits over repeated splits.
    Mtl(Flags),
    /// Source-to-target transfer over repeated splits.
    Transfer(Flags),
    /// Single-task fits only.
    Stl(Flags),
    /// Recovery of a known sparse synthetic model.
    Synth(Flags),
    /// Monte-Carlo check of the two-step estimator's error bound.
    VerifyBound(Flags),
    /// Cross-validate (alpha, vartheta) on each run's labeled training data.
    Cv(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Labeled examples per task; comma-separated to sweep.
    #[arg(long, value_delimiter = ',')]
    pub labeled: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub vartheta: Vec<f64>,
    #[arg(long)]
    pub f0: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, overrides_with = "no_normalize")]
    pub normalize: bool,
    #[arg(long, overrides_with = "normalize")]
    pub no_normalize: bool,
    /// Task CSV files; replaces the config's task list.
    #[arg(long = "task")]
    pub tasks: Vec<PathBuf>,
    /// Index of the transfer source task.
    #[arg(long)]
    pub source: Option<usize>,
    /// Monte-Carlo trials for verify-bound.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

impl Command {
    fn split(&self) -> (Mode, &Flags) {
        match self {
            Command::Fit(f) => (Mode::Fit, f),
            Command::Mtl(f) => (Mode::Mtl, f),
            Command::Transfer(f) => (Mode::Transfer, f),
            Command::Stl(f) => (Mode::Stl, f),
            Command::Synth(f) => (Mode::Synth, f),
            Command::VerifyBound(f) => (Mode::VerifyBound, f),
            Command::Cv(f) => (Mode::Cv, f),
        }
    }
}

/// Config file (if any) with command-line flags applied on top.
pub fn resolve_config(flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = &flags.out {
        cfg.out = v.clone();
    }
    if let Some(v) = flags.runs {
        cfg.runs = v;
    }
    if !flags.labeled.is_empty() {
        cfg.labeled = flags.labeled.clone();
    }
    if !flags.alpha.is_empty() {
        cfg.alpha = flags.alpha.clone();
    }
    if !flags.vartheta.is_empty() {
        cfg.vartheta = flags.vartheta.clone();
    }
    if let Some(v) = flags.f0 {
        cfg.f0 = F0Policy::Explicit(v);
    }
    if let Some(v) = flags.eta {
        cfg.eta = v;
    }
    if flags.normalize {
        cfg.normalize = true;
    }
    if flags.no_normalize {
        cfg.normalize = false;
    }
    if !flags.tasks.is_empty() {
        cfg.tasks = flags
            .tasks
            .iter()
            .map(|p| crate::config::TaskSource { path: p.clone(), label_column: "label".into() })
            .collect();
    }
    if let Some(v) = flags.source {
        cfg.source = v;
    }
    if let Some(v) = flags.trials {
        cfg.bound.trials = v;
    }
    cfg.check()?;
    Ok(cfg)
}

fn load_tasks(cfg: &ExperimentConfig, normalize: bool) -> Result<Vec<TaskDataset>> {
    if cfg.tasks.is_empty() {
        return Err(CliError::Usage("no task files given (use --task or [[tasks]] in the config)".into()));
    }
    cfg.tasks.iter().map(|t| Ok(ingest_csv(&t.path, &t.label_column, normalize)?.data)).collect()
}

fn run_fit(cfg: &ExperimentConfig, exec: Execution) -> Result<String> {
    let data = load_tasks(cfg, cfg.normalize)?;
    let dims: Vec<usize> = data.iter().map(TaskDataset::dim).collect();
    let f0 = cfg.f0.resolve(&dims)?;
    let h = hyper(cfg, cfg.alpha[0], cfg.vartheta[0], f0)?;
    let options = lpm::FitOptions { exec, ..fit_options(cfg) };
    let (params, trace) = fit(&data, &h, Init::Seed(cfg.seed), &options)?;
    let mut scores = String::from("task,index,label,prob_positive\n");
    for (m, ds) in data.iter().enumerate() {
        let preds = predict_batch(&params, h.eta(), m, ds.x(), exec)?;
        for (i, (p, label)) in preds.iter().zip(ds.labels()).enumerate() {
            let label = label.map(|l| if l.sign() > 0.0 { "+1" } else { "-1" }).unwrap_or("");
            let _ = writeln!(scores, "{m},{i},{label},{}", p.prob_positive);
        }
    }
    let params_text = String::from_utf8(save_params(&params)).expect("parameter text is ASCII");
    write_file(&cfg.out, "params.lpm", &params_text)?;
    write_file(&cfg.out, "trace.csv", &trace.to_csv())?;
    write_file(&cfg.out, "scores.csv", &scores)?;
    Ok(format!(
        "fit: {} iterations, converged={}, log posterior {}",
        trace.iterations(),
        trace.converged,
        trace.final_log_posterior().unwrap_or(f64::NAN)
    ))
}

fn run_cv(cfg: &ExperimentConfig, exec: Execution) -> Result<String> {
    let data = load_tasks(cfg, false)?;
    let dims: Vec<usize> = data.iter().map(TaskDataset::dim).collect();
    let f0 = cfg.f0.resolve(&dims)?;
    let options = fit_options(cfg);
    let per_run = exec.map_range(cfg.runs, |run| -> Result<(String, String, Vec<String>)> {
        let mut chosen = String::new();
        let mut grid = String::new();
        let mut warnings = Vec::new();
        for &labeled in &cfg.labeled {
            let input = prepare_run(cfg, &data, run, labeled)?;
            let run_cfg = ExperimentConfig { seed: fit_seed(cfg.seed, run), ..cfg.clone() };
            let outcome = cross_validate(&run_cfg, &input.train, f0, Execution::Sequential)?;
            let h = hyper(cfg, outcome.alpha, outcome.vartheta, f0)?;
            let (params, _) = fit(&input.train, &h, Init::Seed(fit_seed(cfg.seed, run)), &options)?;
            let mut total = 0.0;
            for (m, test) in input.test.iter().enumerate() {
                total += test_auc(&params, h.eta(), m, test)?;
            }
            let cv_auc = outcome
                .scores
                .iter()
                .find(|s| s.alpha == outcome.alpha && s.vartheta == outcome.vartheta)
                .map_or(f64::NAN, |s| s.mean_auc);
            let _ = writeln!(
                chosen,
                "{run},{labeled},{},{},{cv_auc},{}",
                outcome.alpha,
                outcome.vartheta,
                total / input.test.len() as f64
            );
            for s in &outcome.scores {
                let _ = writeln!(grid, "{run},{labeled},{},{},{},{}", s.alpha, s.vartheta, s.mean_auc, s.folds_used);
            }
            warnings.extend(outcome.warnings.into_iter().map(|w| format!("run {run}, labeled {labeled}: {w}")));
        }
        Ok((chosen, grid, warnings))
    });
    let mut chosen = String::from("run,labeled,alpha,vartheta,cv_auc,test_auc\n");
    let mut grid = String::from("run,labeled,alpha,vartheta,mean_auc,folds_used\n");
    for r in per_run {
        let (c, g, warnings) = r?;
        chosen.push_str(&c);
        grid.push_str(&g);
        for w in warnings {
            eprintln!("warning: {w}");
        }
    }
    write_file(&cfg.out, "cv.csv", &chosen)?;
    write_file(&cfg.out, "cv_grid.csv", &grid)?;
    Ok(format!("cv: {} runs written to {}", cfg.runs, cfg.out.display()))
}

fn run_synth_mode(cfg: &ExperimentConfig) -> Result<String> {
    let problem = sparse_problem(&cfg.synth, cfg.seed)?;
    let h = lpm::Hyperparams::from_regularizers(cfg.alpha[0], cfg.vartheta[0], cfg.synth.eta, cfg.synth.f0)?;
    let outcome = run_synth(&problem, &h, cfg.seed, &fit_options(cfg))?;
    let text = |p| String::from_utf8(save_params(p)).expect("parameter text is ASCII");
    write_file(&cfg.out, "synth_auc.csv", &outcome.to_csv())?;
    write_file(&cfg.out, "trace.csv", &outcome.trace.to_csv())?;
    write_file(&cfg.out, "truth.lpm", &text(&problem.truth))?;
    write_file(&cfg.out, "fitted.lpm", &text(&outcome.fitted))?;
    Ok(format!(
        "synth: mean held-out AUC lpm {:.4}, stl {:.4}",
        outcome.mean_lpm_auc(),
        outcome.mean_stl_auc()
    ))
}

fn run_verify(cfg: &ExperimentConfig, exec: Execution) -> Result<String> {
    let b = &cfg.bound;
    let vc = VerifyConfig {
        f0: b.f0,
        s: b.support,
        task_dims: b.task_dims.clone(),
        labeled_per_task: b.labeled_per_task,
        eta: b.eta,
        a: b.a,
        trials: b.trials,
        seed: cfg.seed,
        gamma: b.gamma,
        transform_density: b.transform_density,
        ..VerifyConfig::default()
    };
    let report = verify_theorem1(&vc, exec)?;
    write_file(&cfg.out, "bound_trials.csv", &report.trials_csv())?;
    let summary = format!("{}\npassed={}\n", report.summary_line(), report.passed());
    write_file(&cfg.out, "bound_summary.txt", &summary)?;
    Ok(format!("verify-bound: {}", report.summary_line()))
}

pub fn execute(mode: Mode, cfg: &ExperimentConfig, exec: Execution) -> Result<String> {
    let experiment = match mode {
        Mode::Fit => return run_fit(cfg, exec),
        Mode::Cv => return run_cv(cfg, exec),
        Mode::Synth => return run_synth_mode(cfg),
        Mode::VerifyBound => return run_verify(cfg, exec),
        Mode::Mtl => run_mtl(cfg, &load_tasks(cfg, false)?, exec)?,
        Mode::Transfer => run_transfer(cfg, &load_tasks(cfg, false)?, exec)?,
        Mode::Stl => run_stl(cfg, &load_tasks(cfg, false)?, exec)?,
    };
    emit_outputs(&experiment, &cfg.out)?;
    let mut msg = format!("{}: {} rows written to {}", mode.name(), experiment.table.rows.len(), cfg.out.display());
    for r in &experiment.table.rows {
        let _ = write!(
            msg,
            "\n  labeled={} alpha={} vartheta={} auc={:.4} stl={:.4} improvement={:+.4}",
            r.labeled, r.alpha, r.vartheta, r.mean_auc, r.stl_mean_auc, r.improvement
        );
    }
    Ok(msg)
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (mode, flags) = cli.command.split();
    let result = resolve_config(flags).and_then(|cfg| {
        if let Some(m) = cfg.mode.filter(|m| *m != mode) {
            eprintln!("note: config mode '{}' overridden by subcommand '{}'", m.name(), mode.name());
        }
        let exec = if flags.sequential { Execution::Sequential } else { Execution::Parallel };
        execute(mode, &cfg, exec)
    });
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
