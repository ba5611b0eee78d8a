//! Versioned text format for [`LpmParams`].
//!
//! ```text
//! lpm-params 1
//! f0 <F0>
//! tasks <M>
//! mu <F0>
//! <F0 values>
//! sigma <F0> <F0>
//! <F0 rows of F0 values>
//! b <value>
//! w <F0>
//! <F0 values>
//! task <m> <D_m> <F0>        (repeated M times)
//! f <D_m> <F0>
//! <D_m rows of F0 values>
//! d <D_m>
//! <D_m values>
//! end
//! ```
//!
//! Values are written in shortest round-trip scientific notation, so loading a
//! saved file reproduces every parameter bit for bit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{LpmError, Result};
use crate::model::{validate, LpmParams, TaskParams};

pub const FORMAT_TAG: &str = "lpm-params";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_params(params: &LpmParams) -> Vec<u8> {
    let f0 = params.f0();
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
    let _ = writeln!(out, "f0 {f0}");
    let _ = writeln!(out, "tasks {}", params.tasks.len());
    let _ = writeln!(out, "mu {f0}");
    write_row(&mut out, params.mu.iter());
    let _ = writeln!(out, "sigma {} {}", params.sigma.nrows(), params.sigma.ncols());
    write_matrix(&mut out, &params.sigma);
    let _ = writeln!(out, "b {:e}", params.b);
    let _ = writeln!(out, "w {f0}");
    write_row(&mut out, params.w.iter());
    for (m, task) in params.tasks.iter().enumerate() {
        let _ = writeln!(out, "task {m} {} {}", task.f.nrows(), task.f.ncols());
        let _ = writeln!(out, "f {} {}", task.f.nrows(), task.f.ncols());
        write_matrix(&mut out, &task.f);
        let _ = writeln!(out, "d {}", task.d.len());
        write_row(&mut out, task.d.iter());
    }
    out.push_str("end\n");
    out.into_bytes()
}

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        write_row(out, row.iter());
    }
}

pub fn load_params(bytes: &[u8]) -> Result<LpmParams> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err("header", e.to_string()))?;
    let mut tokens = Tokens { inner: text.split_ascii_whitespace() };

    tokens.keyword("header", FORMAT_TAG)?;
    let version: u32 = tokens.number("version")?;
    if version != FORMAT_VERSION {
        return Err(LpmError::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    tokens.keyword("f0", "f0")?;
    let f0: usize = tokens.number("f0")?;
    tokens.keyword("tasks", "tasks")?;
    let n_tasks: usize = tokens.number("tasks")?;

    tokens.keyword("mu", "mu")?;
    tokens.expect_dims("mu", &[f0])?;
    let mu = DVector::from_vec(tokens.floats("mu", f0)?);

    tokens.keyword("sigma", "sigma")?;
    tokens.expect_dims("sigma", &[f0, f0])?;
    let sigma = DMatrix::from_row_slice(f0, f0, &tokens.floats("sigma", f0 * f0)?);

    tokens.keyword("b", "b")?;
    let b = tokens.float("b")?;

    tokens.keyword("w", "w")?;
    tokens.expect_dims("w", &[f0])?;
    let w = DVector::from_vec(tokens.floats("w", f0)?);

    let mut tasks = Vec::with_capacity(n_tasks);
    for m in 0..n_tasks {
        let field = format!("task {m}");
        tokens.keyword(&field, "task")?;
        let index: usize = tokens.number(&field)?;
        if index != m {
            return Err(parse_err(&field, format!("found task index {index}")));
        }
        let rows: usize = tokens.number(&field)?;
        tokens.expect_dims(&field, &[f0])?;
        let f_field = format!("task {m} f");
        tokens.keyword(&f_field, "f")?;
        tokens.expect_dims(&f_field, &[rows, f0])?;
        let f = DMatrix::from_row_slice(rows, f0, &tokens.floats(&f_field, rows * f0)?);
        let d_field = format!("task {m} d");
        tokens.keyword(&d_field, "d")?;
        tokens.expect_dims(&d_field, &[rows])?;
        let d = DVector::from_vec(tokens.floats(&d_field, rows)?);
        tasks.push(TaskParams { f, d });
    }
    tokens.keyword("end", "end")?;
    if let Some(extra) = tokens.inner.next() {
        return Err(parse_err("end", format!("trailing content `{extra}`")));
    }

    let params = LpmParams { mu, sigma, b, w, tasks };
    let report = validate(&params, &[]);
    if !report.is_ok() {
        return Err(LpmError::InvalidInput(report.issues.join("; ")));
    }
    Ok(params)
}

fn parse_err(field: &str, message: impl Into<String>) -> LpmError {
    LpmError::Parse { field: field.to_string(), message: message.into() }
}

struct Tokens<'a> {
    inner: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, field: &str) -> Result<&'a str> {
        self.inner.next().ok_or_else(|| parse_err(field, "unexpected end of input"))
    }

    fn keyword(&mut self, field: &str, expected: &str) -> Result<()> {
        let tok = self.next(field)?;
        if tok != expected {
            return Err(parse_err(field, format!("expected `{expected}`, found `{tok}`")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, field: &str) -> Result<T> {
        let tok = self.next(field)?;
        tok.parse().map_err(|_| parse_err(field, format!("invalid integer `{tok}`")))
    }

    fn float(&mut self, field: &str) -> Result<f64> {
        let tok = self.next(field)?;
        tok.parse().map_err(|_| parse_err(field, format!("invalid number `{tok}`")))
    }

    fn floats(&mut self, field: &str, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.float(field)).collect()
    }

    fn expect_dims(&mut self, field: &str, dims: &[usize]) -> Result<()> {
        for &expected in dims {
            let found: usize = self.number(field)?;
            if found != expected {
                return Err(parse_err(field, format!("dimension {found}, expected {expected}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_params() -> LpmParams {
        LpmParams::new(
            DVector::from_vec(vec![0.1, -2.5e-12]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0 / 3.0]),
            -0.7,
            DVector::from_vec(vec![1e300, -0.0]),
            vec![TaskParams {
                f: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, std::f64::consts::PI]),
                d: DVector::from_vec(vec![0.0, 1.0, -1.0]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample_params();
        let back = load_params(&save_params(&p)).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.w[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn truncated_stream_is_a_parse_error() {
        let bytes = save_params(&sample_params());
        let cut = &bytes[..bytes.len() / 2];
        match load_params(cut) {
            Err(LpmError::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let text = String::from_utf8(save_params(&sample_params())).unwrap();
        let bumped = text.replacen("lpm-params 1", "lpm-params 7", 1);
        assert_eq!(
            load_params(bumped.as_bytes()),
            Err(LpmError::UnsupportedVersion { found: 7, expected: 1 })
        );
    }

    #[test]
    fn bad_value_names_the_field() {
        let text = String::from_utf8(save_params(&sample_params())).unwrap();
        let broken = text.replacen("-7e-1", "oops", 1);
        match load_params(broken.as_bytes()) {
            Err(LpmError::Parse { field, .. }) => assert_eq!(field, "b"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn random_params_round_trip(
            f0 in 1usize..4,
            dims in proptest::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-20..20));
            let a = DMatrix::from_fn(f0, f0, |_, _| draw().clamp(-1.0, 1.0));
            let sigma = (&a * a.transpose()).symmetric_part() + DMatrix::identity(f0, f0);
            let tasks = dims.iter().map(|&d| TaskParams {
                f: DMatrix::from_fn(d, f0, |_, _| draw()),
                d: DVector::from_fn(d, |_, _| draw()),
            }).collect();
            let p = LpmParams::new(DVector::from_fn(f0, |_, _| draw()), sigma, draw(), DVector::from_fn(f0, |_, _| draw()), tasks).unwrap();
            let back = load_params(&save_params(&p)).unwrap();
            prop_assert_eq!(p, back);
        }
    }
}
