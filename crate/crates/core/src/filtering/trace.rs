//! Per-step filter trace as CSV: `t, est_0..est_{d-1}, rmse, ess, resampled`.

use std::io::{BufRead, Write};

use super::engine::FilterRun;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub estimate: Vec<f64>,
    /// Euclidean error to the truth, when known.
    pub rmse: Option<f64>,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterTrace {
    pub dim: usize,
    pub rows: Vec<TraceRow>,
}

impl FilterTrace {
    pub fn from_run(run: &FilterRun<'_>, truths: Option<&Tensor>) -> Result<Self> {
        let errors = truths.map(|t| run.errors(t)).transpose()?;
        let rows = run
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| TraceRow {
                t: s.t,
                estimate: s.estimate.to_vec(),
                rmse: errors.as_ref().map(|e| e[i]),
                ess: s.ess,
                resampled: s.resampled,
            })
            .collect();
        Ok(FilterTrace {
            dim: run.initial.dim(),
            rows,
        })
    }

    pub fn header(dim: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..dim).map(|i| format!("est_{i}")));
        cols.extend(["rmse", "ess", "resampled"].map(String::from));
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::header(self.dim))?;
        for r in &self.rows {
            let est: Vec<String> = r.estimate.iter().map(|x| format!("{x:?}")).collect();
            let rmse = r.rmse.map_or(String::new(), |e| format!("{e:?}"));
            writeln!(out, "{},{},{},{:?},{}", r.t, est.join(","), rmse, r.ess, u8::from(r.resampled))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty trace".into()))??;
        let n_cols = header.split(',').count();
        if n_cols < 4 {
            return Err(Error::Format("trace header has too few columns".into()));
        }
        let dim = n_cols - 4;
        if header != Self::header(dim) {
            return Err(Error::Format(format!("unexpected trace header `{header}`")));
        }
        let bad = |l: &str| Error::Format(format!("bad trace row `{l}`"));
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != n_cols {
                return Err(bad(&line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&line));
            rows.push(TraceRow {
                t: f[0].parse().map_err(|_| bad(&line))?,
                estimate: f[1..=dim].iter().map(|s| num(s)).collect::<Result<_>>()?,
                rmse: if f[dim + 1].is_empty() { None } else { Some(num(f[dim + 1])?) },
                ess: num(f[dim + 2])?,
                resampled: f[dim + 3] == "1",
            });
        }
        Ok(FilterTrace { dim, rows })
    }
}
