//! Result files: `results.csv`, `runs.csv`, `traces.csv` and an SVG line plot
//! of AUC against labeled count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::experiment::{Experiment, Method, ResultTable};

pub const RESULTS_HEADER: &str =
    "mode,labeled,alpha,vartheta,mean_auc,std_auc,stl_mean_auc,stl_std_auc,auc_improvement_vs_stl";

pub fn results_csv(table: &ResultTable) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.mode.name(),
            r.labeled,
            r.alpha,
            r.vartheta,
            r.mean_auc,
            r.std_auc,
            r.stl_mean_auc,
            r.stl_std_auc,
            r.improvement
        );
    }
    out
}

pub fn runs_csv(exp: &Experiment) -> String {
    let mut out = String::from("run,labeled,alpha,vartheta,method,task,auc\n");
    for r in &exp.records {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.run, r.labeled, r.alpha, r.vartheta, r.method.name(), r.task, r.auc);
    }
    out
}

pub fn traces_csv(exp: &Experiment) -> String {
    let mut out = String::from(
        "run,labeled,alpha,vartheta,method,task,iteration,log_posterior,latent_change,domain_change,classifier_change,nnz_transform,nnz_classifier,ops\n",
    );
    for r in &exp.records {
        let Some(trace) = &r.trace else { continue };
        // Reuse the trace's own row format, dropping its header.
        for line in trace.to_csv().lines().skip(1) {
            let _ = writeln!(out, "{},{},{},{},{},{},{line}", r.run, r.labeled, r.alpha, r.vartheta, r.method.name(), r.task);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per method and grid point, x = labeled count, y = mean AUC.
pub fn plot_series(table: &ResultTable) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    let stl_only = table.rows.iter().all(|r| r.mode.name() == "stl");
    for r in &table.rows {
        let single_grid = table.rows.iter().all(|o| o.alpha == r.alpha && o.vartheta == r.vartheta);
        let suffix = if single_grid { String::new() } else { format!(" a={} v={}", r.alpha, r.vartheta) };
        let mut add = |method: Method, y: f64| {
            if !y.is_finite() {
                return;
            }
            let name = format!("{}{suffix}", method.name());
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((r.labeled as f64, y)),
                None => series.push(Series { name, points: vec![(r.labeled as f64, y)] }),
            }
        };
        if !stl_only {
            add(Method::Lpm, r.mean_auc);
        }
        add(Method::Stl, r.stl_mean_auc);
    }
    series
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Self-contained SVG line plot; `None` when there is nothing to draw.
pub fn line_plot_svg(series: &[Series], x_label: &str, y_label: &str) -> Option<String> {
    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if points.is_empty() {
        return None;
    }
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 70.0, 180.0, 20.0, 50.0);
    let span = |vals: Vec<f64>, pad: f64| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            (lo - pad, hi + pad)
        } else {
            (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
        }
    };
    let (x0, x1) = span(points.iter().map(|p| p.0).collect(), 1.0);
    let (y0, y1) = span(points.iter().map(|p| p.1).collect(), 0.01);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (ax0, ax1, ay0, ay1) = (left, w - right, h - bottom, top);
    let _ = writeln!(svg, r#"<line x1="{ax0}" y1="{ay0}" x2="{ax1}" y2="{ay0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{ax0}" y1="{ay0}" x2="{ax0}" y2="{ay1}" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xv:.1}</text>"#, px(xv), ay0 + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#, ax0 - 6.0, py(yv) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, (ax0 + ax1) / 2.0, h - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 16.0 * k as f64 + 8.0;
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, ax1 + 10.0, ax1 + 30.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, ax1 + 36.0, ly + 4.0, s.name);
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Write every experiment artifact into `dir`; returns the paths written.
pub fn emit_outputs(exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![
        write_file(dir, "results.csv", &results_csv(&exp.table))?,
        write_file(dir, "runs.csv", &runs_csv(exp))?,
        write_file(dir, "traces.csv", &traces_csv(exp))?,
    ];
    if let Some(svg) = line_plot_svg(&plot_series(&exp.table), "labeled examples per task", "mean AUC") {
        written.push(write_file(dir, "auc_vs_labeled.svg", &svg)?);
    }
    Ok(written)
}
