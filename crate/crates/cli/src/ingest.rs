//! CSV task ingestion: a header row, one label column holding `+1`, `-1` or
//! nothing (unlabeled), every other column a numeric feature.

use std::path::Path;

use lpm::{Label, TaskDataset};
use nalgebra::DMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub data: TaskDataset,
}

pub fn ingest_csv(path: &Path, label_column: &str, normalize: bool) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_table(file, path, label_column, normalize)
}

pub fn read_table<R: std::io::Read>(reader: R, path: &Path, label_column: &str, normalize: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| CliError::Data(format!("{}: no label column '{label_column}'", path.display())))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|(i, _)| *i != label_at).map(|(_, h)| h.to_string()).collect();
    if feature_names.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = r + 2;
        let record = record.map_err(|e| CliError::Data(format!("{}: row {row}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "{}: row {row} has {} fields, header has {}",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_at {
                labels.push(parse_label(cell).ok_or_else(|| CliError::Cell {
                    path: path.to_path_buf(),
                    row,
                    column: headers[c].to_string(),
                    message: format!("unknown label '{cell}'"),
                })?);
            } else {
                let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| CliError::Cell {
                    path: path.to_path_buf(),
                    row,
                    column: headers[c].to_string(),
                    message: format!("non-numeric value '{cell}'"),
                })?;
                values.push(v);
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(CliError::Data(format!("{}: no rows", path.display())));
    }
    let mut x = DMatrix::from_column_slice(feature_names.len(), n, &values);
    if normalize {
        let (mean, scale) = z_score_stats(&x, &(0..n).collect::<Vec<_>>());
        apply_z_score(&mut x, &mean, &scale);
    }
    Ok(Table { feature_names, data: TaskDataset::new(x, labels)? })
}

fn parse_label(cell: &str) -> Option<Option<Label>> {
    match cell {
        "" => Some(None),
        "+1" | "1" | "1.0" | "+1.0" => Some(Some(Label::Positive)),
        "-1" | "-1.0" => Some(Some(Label::Negative)),
        _ => None,
    }
}

/// Per-feature mean and standard deviation over the columns `indices`;
/// constant features get scale 1.
pub fn z_score_stats(x: &DMatrix<f64>, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = indices.len().max(1) as f64;
    let mut mean = vec![0.0; x.nrows()];
    let mut scale = vec![1.0; x.nrows()];
    for k in 0..x.nrows() {
        let m = indices.iter().map(|&i| x[(k, i)]).sum::<f64>() / n;
        let var = indices.iter().map(|&i| (x[(k, i)] - m).powi(2)).sum::<f64>() / n;
        mean[k] = m;
        if var > 0.0 {
            scale[k] = var.sqrt();
        }
    }
    (mean, scale)
}

pub fn apply_z_score(x: &mut DMatrix<f64>, mean: &[f64], scale: &[f64]) {
    for mut col in x.column_iter_mut() {
        for k in 0..col.len() {
            col[k] = (col[k] - mean[k]) / scale[k];
        }
    }
}
