#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const MODES: [&str; 7] = ["fit", "mtl", "transfer", "stl", "synth", "verify-bound", "cv"];

pub fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Small budgets so every mode finishes in seconds.
pub fn quick_config(out: &Path) -> String {
    format!(
        r#"
runs = 2
labeled = [30]
alpha = [0.1, 1.0]
vartheta = [1.0]
cv_folds = 3
max_iters = 20
seed = 4
out = "{out}"

[[tasks]]
path = "{a}"

[[tasks]]
path = "{b}"

[synth]
task_dims = [8, 10]
n_per_task = 120

[bound]
trials = 12
"#,
        out = out.display(),
        a = data_file("wisconsin_original.csv").display(),
        b = data_file("wisconsin_diagnostic.csv").display(),
    )
}

pub fn lpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpm")).args(args).output().expect("binary runs")
}

/// Write the quick config into `dir`, run `mode` with it, return the output.
pub fn run_mode(mode: &str, dir: &Path, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let config = dir.join("config.toml");
    std::fs::write(&config, quick_config(&out)).unwrap();
    let mut args = vec![mode, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    lpm(&args)
}

/// Every file under `dir`, keyed by name.
pub fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}
