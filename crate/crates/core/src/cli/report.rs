//! Per-step evaluation reports and the tables derived from them.

use std::io::{BufRead, Write};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::filtering::Episode;
use crate::learning::TrajectoryEval;

pub const REPORT_HEADER: &str = "method,seed,traj,t,truth_x,truth_y,est_x,est_y,rmse,ess";
pub const LONG_HEADER: &str = "method,seed,t,rmse";
pub const SUMMARY_HEADER: &str = "method,n_seeds,mean_rmse,std_rmse,mean_ess";

/// One filtered step of one trajectory. `rmse` is the Euclidean error of
/// this single step.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub seed: u64,
    pub traj: usize,
    /// 1-based step index.
    pub t: usize,
    pub truth: [f64; 2],
    pub estimate: [f64; 2],
    pub rmse: f64,
    pub ess: f64,
}

pub fn report_rows(method: &str, seed: u64, evals: &[TrajectoryEval], episodes: &[Episode]) -> Result<Vec<ReportRow>> {
    if evals.len() != episodes.len() {
        return Err(Error::Config("one evaluation per episode is required".into()));
    }
    let mut rows = Vec::new();
    for (traj, (ev, ep)) in evals.iter().zip(episodes).enumerate() {
        let truths = ep
            .truths
            .as_ref()
            .ok_or_else(|| Error::Config("report episode has no ground truth".into()))?;
        if truths.cols() != 2 {
            return Err(Error::Config(format!("reports need 2-d states, got {}", truths.cols())));
        }
        for (k, est) in ev.estimates.iter().enumerate() {
            let truth = truths.row(k);
            rows.push(ReportRow {
                method: method.to_string(),
                seed,
                traj,
                t: k + 1,
                truth: [truth[0], truth[1]],
                estimate: [est[0], est[1]],
                rmse: ev.errors[k],
                ess: ev.ess[k],
            });
        }
    }
    Ok(rows)
}

pub fn write_report<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.method, r.seed, r.traj, r.t, r.truth[0], r.truth[1], r.estimate[0], r.estimate[1], r.rmse, r.ess
        )?;
    }
    Ok(())
}

/// Columns are located by name, so extra columns and reordering are fine.
pub fn read_report<R: BufRead>(input: R) -> Result<Vec<ReportRow>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let names: Vec<&str> = header.trim().split(',').collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Format(format!("report is missing column `{name}`")))
    };
    let wanted = REPORT_HEADER.split(',').map(col).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        let bad = || Error::Format(format!("report line {}: malformed row", i + 2));
        let field = |k: usize| fields.get(wanted[k]).copied().ok_or_else(bad);
        let num = |k: usize| field(k)?.parse::<f64>().map_err(|_| bad());
        rows.push(ReportRow {
            method: field(0)?.to_string(),
            seed: field(1)?.parse().map_err(|_| bad())?,
            traj: field(2)?.parse().map_err(|_| bad())?,
            t: field(3)?.parse().map_err(|_| bad())?,
            truth: [num(4)?, num(5)?],
            estimate: [num(6)?, num(7)?],
            rmse: num(8)?,
            ess: num(9)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: String,
    pub n_seeds: usize,
    /// Mean over seeds of the per-seed mean trajectory RMSE.
    pub mean_rmse: f64,
    /// Sample standard deviation across seeds; zero for a single seed.
    pub std_rmse: f64,
    pub mean_ess: f64,
}

/// Trajectory RMSE is `sqrt(mean_t error²)`; each seed scores the mean
/// over its trajectories.
pub fn summarize(rows: &[ReportRow]) -> Vec<Summary> {
    let mut by_traj: IndexMap<(&str, u64, usize), (f64, usize)> = IndexMap::new();
    let mut ess: IndexMap<&str, (f64, usize)> = IndexMap::new();
    for r in rows {
        let e = by_traj.entry((r.method.as_str(), r.seed, r.traj)).or_default();
        e.0 += r.rmse * r.rmse;
        e.1 += 1;
        let s = ess.entry(r.method.as_str()).or_default();
        s.0 += r.ess;
        s.1 += 1;
    }
    let mut by_seed: IndexMap<(&str, u64), Vec<f64>> = IndexMap::new();
    for ((m, seed, _), (sq, n)) in by_traj {
        by_seed.entry((m, seed)).or_default().push((sq / n as f64).sqrt());
    }
    let mut by_method: IndexMap<&str, Vec<f64>> = IndexMap::new();
    for ((m, _), trajs) in by_seed {
        by_method.entry(m).or_default().push(trajs.iter().sum::<f64>() / trajs.len() as f64);
    }
    by_method
        .into_iter()
        .map(|(m, seeds)| {
            let n = seeds.len();
            let mean = seeds.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (seeds.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let (e, k) = ess[m];
            Summary {
                method: m.to_string(),
                n_seeds: n,
                mean_rmse: mean,
                std_rmse: std,
                mean_ess: e / k as f64,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(summaries: &[Summary], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(out, "{},{},{:?},{:?},{:?}", s.method, s.n_seeds, s.mean_rmse, s.std_rmse, s.mean_ess)?;
    }
    Ok(())
}

/// `(method, seed, t, rmse)` with the RMSE taken across trajectories at
/// each step.
#[derive(Clone, Debug, PartialEq)]
pub struct LongRow {
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub rmse: f64,
}

pub fn long_rows(rows: &[ReportRow]) -> Vec<LongRow> {
    let mut acc: IndexMap<(&str, u64, usize), (f64, usize)> = IndexMap::new();
    for r in rows {
        let e = acc.entry((r.method.as_str(), r.seed, r.t)).or_default();
        e.0 += r.rmse * r.rmse;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((m, seed, t), (sq, n))| LongRow {
            method: m.to_string(),
            seed,
            t,
            rmse: (sq / n as f64).sqrt(),
        })
        .collect()
}

pub fn write_long<W: Write>(rows: &[LongRow], mut out: W) -> Result<()> {
    writeln!(out, "{LONG_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{:?}", r.method, r.seed, r.t, r.rmse)?;
    }
    Ok(())
}

/// Truth and every method's estimate for one trajectory, one row per step.
/// Each method contributes its first seed in the report.
#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub methods: Vec<String>,
    /// `[t, truth_x, truth_y, m0_x, m0_y, m1_x, ...]`
    pub rows: Vec<Vec<f64>>,
}

impl Overlay {
    pub fn header(&self) -> String {
        let mut h = String::from("t,truth_x,truth_y");
        for m in &self.methods {
            h.push_str(&format!(",{m}_x,{m}_y"));
        }
        h
    }
}

pub fn overlay(rows: &[ReportRow], traj: usize) -> Result<Overlay> {
    let mut first_seed: IndexMap<&str, u64> = IndexMap::new();
    for r in rows.iter().filter(|r| r.traj == traj) {
        first_seed.entry(r.method.as_str()).or_insert(r.seed);
    }
    let mut steps: IndexMap<usize, Vec<f64>> = IndexMap::new();
    let width = 3 + 2 * first_seed.len();
    for r in rows.iter().filter(|r| r.traj == traj) {
        let (k, _, &seed) = first_seed.get_full(r.method.as_str()).expect("method collected above");
        if r.seed != seed {
            continue;
        }
        let row = steps.entry(r.t).or_insert_with(|| {
            let mut v = vec![f64::NAN; width];
            v[0] = r.t as f64;
            v[1] = r.truth[0];
            v[2] = r.truth[1];
            v
        });
        if row[1] != r.truth[0] || row[2] != r.truth[1] {
            return Err(Error::Format(format!("trajectory {traj} has conflicting ground truth at step {}", r.t)));
        }
        row[3 + 2 * k] = r.estimate[0];
        row[4 + 2 * k] = r.estimate[1];
    }
    steps.sort_keys();
    Ok(Overlay {
        methods: first_seed.keys().map(|m| m.to_string()).collect(),
        rows: steps.into_values().collect(),
    })
}

pub fn write_overlay<W: Write>(o: &Overlay, mut out: W) -> Result<()> {
    writeln!(out, "{}", o.header())?;
    for r in &o.rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { format!("{}", *v as usize) } else { format!("{v:?}") })
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_overlay<R: BufRead>(input: R) -> Result<Overlay> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let names: Vec<&str> = header.trim().split(',').collect();
    if names.len() < 3 || names[..3] != ["t", "truth_x", "truth_y"] || (names.len() - 3) % 2 != 0 {
        return Err(Error::Format(format!("unexpected overlay header `{header}`")));
    }
    let methods = names[3..]
        .chunks(2)
        .map(|c| {
            c[0].strip_suffix("_x")
                .filter(|m| c[1].strip_suffix("_y") == Some(m))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("unexpected overlay columns `{},{}`", c[0], c[1])))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .trim()
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad overlay value `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != names.len() {
            return Err(Error::Format("overlay row width differs from header".into()));
        }
        rows.push(row);
    }
    Ok(Overlay { methods, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, traj: usize, t: usize, err: f64) -> ReportRow {
        ReportRow {
            method: method.into(),
            seed,
            traj,
            t,
            truth: [t as f64, 2.0 * t as f64],
            estimate: [t as f64 + err, 2.0 * t as f64],
            rmse: err,
            ess: 10.0,
        }
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![row("dpf", 0, 0, 1, 0.5), row("dpf", 0, 0, 2, 0.1 + 0.2)];
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        assert_eq!(read_report(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn missing_column_is_an_error() {
        let text = "method,seed,traj,t,truth_x,truth_y,est_x,est_y,ess\n";
        assert!(matches!(read_report(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn empty_report_gives_header_only_tables() {
        let rows = read_report(format!("{REPORT_HEADER}\n").as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_long(&long_rows(&rows), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{LONG_HEADER}\n"));
        let o = overlay(&rows, 0).unwrap();
        assert!(o.rows.is_empty());
        assert!(summarize(&rows).is_empty());
    }

    #[test]
    fn long_table_counts_methods_seeds_and_steps() {
        let mut rows = Vec::new();
        for m in ["dpf", "cnf-dpf"] {
            for seed in 0..2 {
                for traj in 0..3 {
                    for t in 1..=5 {
                        rows.push(row(m, seed, traj, t, 1.0));
                    }
                }
            }
        }
        let long = long_rows(&rows);
        assert_eq!(long.len(), 20);
        assert!(long.iter().all(|r| (r.rmse - 1.0).abs() < 1e-15));
    }

    #[test]
    fn perfect_estimates_score_zero() {
        let rows: Vec<_> = (1..=4).map(|t| row("cnf-sdpf", 3, 0, t, 0.0)).collect();
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_seeds, 1);
        assert_eq!(s[0].mean_rmse, 0.0);
        assert_eq!(s[0].std_rmse, 0.0);
    }

    #[test]
    fn summary_spread_across_seeds() {
        // Seed 0 scores 1, seed 1 scores 3: mean 2, sample std sqrt(2).
        let rows = vec![row("dpf", 0, 0, 1, 1.0), row("dpf", 1, 0, 1, 3.0)];
        let s = &summarize(&rows)[0];
        assert!((s.mean_rmse - 2.0).abs() < 1e-15);
        assert!((s.std_rmse - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn overlay_round_trip_matches_source() {
        let mut rows: Vec<_> = (1..=3).map(|t| row("dpf", 0, 0, t, 0.25)).collect();
        rows.extend((1..=3).map(|t| row("cnf-dpf", 1, 0, t, -0.5)));
        rows.push(row("dpf", 5, 0, 1, 9.0));
        let o = overlay(&rows, 0).unwrap();
        assert_eq!(o.header(), "t,truth_x,truth_y,dpf_x,dpf_y,cnf-dpf_x,cnf-dpf_y");
        let mut buf = Vec::new();
        write_overlay(&o, &mut buf).unwrap();
        let back = read_overlay(&buf[..]).unwrap();
        assert_eq!(back, o);
        assert_eq!(back.rows[1], vec![2.0, 2.0, 4.0, 2.25, 4.0, 1.5, 4.0]);
    }
}
