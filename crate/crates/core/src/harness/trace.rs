use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::algorithm::RunTrace;
use crate::error::{Error, Result};

/// One row of a stored trace, i.e. one step `t` of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub f_sample: f64,
    pub f_comparator: Option<f64>,
    pub g_sample: Vec<f64>,
    pub g_comparator: Option<Vec<f64>>,
    pub lambda_norm: f64,
    pub step_norm: f64,
    pub inner_iters: usize,
    /// Set when the inner solver stopped on its iteration budget.
    pub inner_flag: bool,
}

/// The per-run table written to and read back from CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceTable {
    pub run_id: u64,
    pub seed: u64,
    pub p: usize,
    pub rows: Vec<TraceRow>,
}

fn fmt_f64(v: f64) -> String {
    // Debug output round-trips exactly
    format!("{v:?}")
}

impl TraceTable {
    pub fn from_trace(trace: &RunTrace, run_id: u64, seed: u64) -> Self {
        let rows = trace
            .records
            .iter()
            .map(|r| TraceRow {
                t: r.t,
                f_sample: r.f_sample,
                f_comparator: r.f_comparator,
                g_sample: r.g_sample.clone(),
                g_comparator: r.g_comparator.clone(),
                lambda_norm: r.lambda_norm,
                step_norm: r.step_norm,
                inner_iters: r.inner_iters,
                inner_flag: !r.inner_converged,
            })
            .collect();
        Self {
            run_id,
            seed,
            p: trace.num_constraints(),
            rows,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn has_comparator(&self) -> bool {
        !self.rows.is_empty()
            && self
                .rows
                .iter()
                .all(|r| r.f_comparator.is_some() && r.g_comparator.is_some())
    }

    pub fn header(p: usize) -> String {
        let mut cols = vec![
            "run_id".to_string(),
            "seed".into(),
            "t".into(),
            "f_sample".into(),
            "f_comparator".into(),
        ];
        cols.extend((1..=p).map(|i| format!("g_sample_{i}")));
        cols.extend((1..=p).map(|i| format!("g_comparator_{i}")));
        cols.extend(["lambda_norm", "step_norm", "inner_iters", "inner_flag"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.p);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                self.run_id,
                self.seed,
                r.t,
                fmt_f64(r.f_sample),
                opt(r.f_comparator)
            );
            for g in &r.g_sample {
                let _ = write!(out, ",{}", fmt_f64(*g));
            }
            for i in 0..self.p {
                let _ = write!(out, ",{}", opt(r.g_comparator.as_ref().map(|g| g[i])));
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                fmt_f64(r.lambda_norm),
                fmt_f64(r.step_norm),
                r.inner_iters,
                u8::from(r.inner_flag)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Trace {
            path: source.to_string(),
            msg: format!("line {line}: {msg}"),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let ncols = header.split(',').count();
        if ncols < 9 || (ncols - 9) % 2 != 0 {
            return Err(err(1, format!("unexpected column count {ncols}")));
        }
        let p = (ncols - 9) / 2;
        if header != Self::header(p) {
            return Err(err(1, "header does not match the trace layout".into()));
        }
        let mut ids: Option<(u64, u64)> = None;
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let ln = k + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != ncols {
                return Err(err(ln, format!("expected {ncols} cells, found {}", cells.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| err(ln, format!("{s:?}: {e}")));
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(ln, format!("{s:?}: {e}")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            let id = (int(cells[0])?, int(cells[1])?);
            if *ids.get_or_insert(id) != id {
                return Err(err(ln, "run_id/seed changes within one file".into()));
            }
            let t = int(cells[2])? as usize;
            if t != k {
                return Err(err(ln, format!("expected t = {k}, found {t}")));
            }
            let g_sample = cells[5..5 + p].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let g_cmp = cells[5 + p..5 + 2 * p]
                .iter()
                .map(|s| opt(s))
                .collect::<Result<Vec<_>>>()?;
            let g_comparator = if g_cmp.iter().all(Option::is_some) {
                Some(g_cmp.into_iter().flatten().collect())
            } else if g_cmp.iter().all(Option::is_none) {
                None
            } else {
                return Err(err(ln, "partially missing comparator columns".into()));
            };
            let tail = 5 + 2 * p;
            let flag = match cells[tail + 3] {
                "0" => false,
                "1" => true,
                s => return Err(err(ln, format!("inner_flag must be 0 or 1, found {s:?}"))),
            };
            rows.push(TraceRow {
                t,
                f_sample: num(cells[3])?,
                f_comparator: opt(cells[4])?,
                g_sample,
                g_comparator,
                lambda_norm: num(cells[tail])?,
                step_norm: num(cells[tail + 1])?,
                inner_iters: int(cells[tail + 2])? as usize,
                inner_flag: flag,
            });
        }
        let (run_id, seed) = ids.ok_or_else(|| err(2, "trace has no rows".into()))?;
        Ok(Self { run_id, seed, p, rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(with_cmp: bool) -> TraceTable {
        let rows = (0..3)
            .map(|t| TraceRow {
                t,
                f_sample: 0.1 * t as f64 + 1e-17,
                f_comparator: with_cmp.then_some(-1.0 / 3.0),
                g_sample: vec![t as f64, -2.5e-300],
                g_comparator: with_cmp.then(|| vec![0.0, 1e300]),
                lambda_norm: 0.5,
                step_norm: std::f64::consts::PI,
                inner_iters: 17,
                inner_flag: t == 1,
            })
            .collect();
        TraceTable {
            run_id: 4,
            seed: 11,
            p: 2,
            rows,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            TraceTable::header(2),
            "run_id,seed,t,f_sample,f_comparator,g_sample_1,g_sample_2,g_comparator_1,g_comparator_2,\
             lambda_norm,step_norm,inner_iters,inner_flag"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for cmp in [true, false] {
            let t = table(cmp);
            let back = TraceTable::parse_csv(&t.to_csv(), "mem").unwrap();
            assert_eq!(back, t);
            assert_eq!(back.has_comparator(), cmp);
        }
    }

    #[test]
    fn rejects_malformed() {
        let csv = table(true).to_csv();
        assert!(TraceTable::parse_csv("", "mem").is_err());
        assert!(TraceTable::parse_csv(&csv.replacen("run_id", "id", 1), "mem").is_err());
        let mut lines: Vec<String> = csv.lines().map(String::from).collect();
        lines[2] = lines[2].replacen(",1,", ",5,", 1);
        assert!(TraceTable::parse_csv(&lines.join("\n"), "mem").is_err());
        let truncated: Vec<&str> = csv.lines().map(|l| l.rsplit_once(',').unwrap().0).collect();
        assert!(TraceTable::parse_csv(&truncated.join("\n"), "mem").is_err());
    }
}
