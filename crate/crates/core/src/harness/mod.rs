//! Multi-seed experiments: run the configured algorithm over a grid of
//! horizons and seeds, store one CSV trace per run and summarize the
//! regrets against the theoretical bounds.
//!
//! Output layout under `out/`:
//!
//! ```text
//! out/report.json
//! out/traces/experiment.toml
//! out/traces/failures.json
//! out/traces/run0000_T100_seed0.csv
//! ```
//!
//! The report is a pure function of the `traces/` directory, so
//! [`aggregate_dir`] regenerates it byte for byte.

mod config;
mod report;
mod trace;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{AlgorithmKind, AlgorithmSpec, ExperimentConfig, NamedRule, ParamSetting, SeedSpec, DEFAULT_ETA};
pub use report::{
    aggregate, constraint_regret, empirical_tail, horizon_bounds, objective_regret, quantile, rate_fit, EtaBounds,
    HorizonBounds, HorizonSummary, RateFit, RateSummary, RegretReport, RunFailure, RunRegret, Stats, TailEstimate,
    RATE_FLOOR, SCHEMA_VERSION,
};
pub use trace::{TraceRow, TraceTable};

use crate::algorithm::run_pmmsopt;
use crate::baseline::run_projected_sa;
use crate::error::{Error, Result};
use crate::problem::StochasticProgram;

pub const TRACE_DIR: &str = "traces";
pub const CONFIG_FILE: &str = "experiment.toml";
pub const FAILURES_FILE: &str = "failures.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunKey {
    pub run_id: u64,
    pub horizon: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn file_name(&self) -> String {
        format!("run{:04}_T{}_seed{}.csv", self.run_id, self.horizon, self.seed)
    }
}

/// All `(T, seed)` pairs in run order; `run_id` is the position in this list.
pub fn run_keys(config: &ExperimentConfig) -> Vec<RunKey> {
    let seeds = config.seeds();
    config
        .horizons
        .iter()
        .flat_map(|&horizon| seeds.iter().map(move |&seed| (horizon, seed)))
        .enumerate()
        .map(|(i, (horizon, seed))| RunKey {
            run_id: i as u64,
            horizon,
            seed,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub traces: Vec<TraceTable>,
    pub report: RegretReport,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Executes every run; `jobs = 0` lets the pool pick the thread count.
pub fn execute_runs(config: &ExperimentConfig, jobs: usize) -> Result<(Vec<TraceTable>, Vec<RunFailure>)> {
    config.validate()?;
    let instance = config.instance.build()?;
    let x_star = instance.descriptor().x_star;
    let keys = run_keys(config);
    let results: Vec<Result<TraceTable>> = thread_pool(jobs)?.install(|| {
        keys.par_iter()
            .map(|k| {
                let trace = match config.algorithm.name {
                    AlgorithmKind::Pmmsopt => {
                        run_pmmsopt(&instance, &config.algo_config(k.horizon, k.seed, Some(x_star.clone())))?
                    }
                    AlgorithmKind::ProjectedSa => run_projected_sa(
                        &instance,
                        |y: &[f64]| instance.project_feasible(y),
                        &config.baseline_config(k.horizon, k.seed, Some(x_star.clone())),
                    )?,
                };
                Ok(TraceTable::from_trace(&trace, k.run_id, k.seed))
            })
            .collect()
    });
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in keys.iter().zip(results) {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => failures.push(RunFailure {
                horizon: k.horizon,
                seed: k.seed,
                error: e.to_string(),
            }),
        }
    }
    Ok((traces, failures))
}

/// Report for a config and its traces, with the config and failures echoed in.
pub fn build_report(
    config: &ExperimentConfig,
    traces: &[TraceTable],
    failures: Vec<RunFailure>,
) -> Result<RegretReport> {
    let instance = config.instance.build()?;
    let mut report = aggregate(traces, &instance.descriptor(), instance.constants(), &config.eta)?;
    report.config = Some(config.clone());
    report.failures = failures;
    Ok(report)
}

/// Runs the experiment without touching the filesystem.
pub fn run_in_memory(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    let (traces, failures) = execute_runs(config, jobs)?;
    let report = build_report(config, &traces, failures)?;
    Ok(ExperimentOutcome { traces, report })
}

fn is_trace_file(name: &str) -> bool {
    name.starts_with("run") && name.contains("_T") && name.contains("_seed") && name.ends_with(".csv")
}

/// Runs the experiment and writes traces and report under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let trace_dir = out_dir.join(TRACE_DIR);
    std::fs::create_dir_all(&trace_dir)?;
    // stale traces from an earlier run would leak into aggregate_dir
    for entry in std::fs::read_dir(&trace_dir)? {
        let entry = entry?;
        if entry.file_name().to_str().is_some_and(is_trace_file) {
            std::fs::remove_file(entry.path())?;
        }
    }
    let outcome = run_in_memory(config, jobs)?;
    std::fs::write(trace_dir.join(CONFIG_FILE), config.to_toml()?)?;
    std::fs::write(
        trace_dir.join(FAILURES_FILE),
        serde_json::to_string_pretty(&outcome.report.failures)? + "\n",
    )?;
    let keys = run_keys(config);
    for table in &outcome.traces {
        let key = keys[table.run_id as usize];
        table.write_csv(&trace_dir.join(key.file_name()))?;
    }
    std::fs::write(out_dir.join(REPORT_FILE), outcome.report.to_json()?)?;
    Ok(outcome)
}

fn trace_files(trace_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(trace_dir)? {
        let path = entry?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(is_trace_file) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Rebuilds the report from a `traces/` directory without re-running anything.
pub fn aggregate_dir(trace_dir: &Path) -> Result<RegretReport> {
    let config = ExperimentConfig::load(&trace_dir.join(CONFIG_FILE))?;
    let traces = trace_files(trace_dir)?
        .iter()
        .map(|p| TraceTable::read_csv(p))
        .collect::<Result<Vec<_>>>()?;
    let failures_path = trace_dir.join(FAILURES_FILE);
    let failures = if failures_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&failures_path)?)?
    } else {
        Vec::new()
    };
    build_report(&config, &traces, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse(
            r#"
master_seed = 3
horizons = [20, 40]
seeds = [5, 2]

[instance]
name = "scalar_toy"
noise_amp = 0.5

[algorithm]
name = "pmmsopt"
"#,
        )
        .unwrap()
    }

    #[test]
    fn keys_follow_horizon_then_seed() {
        let keys = run_keys(&small());
        let pairs: Vec<_> = keys.iter().map(|k| (k.run_id, k.horizon, k.seed)).collect();
        assert_eq!(pairs, vec![(0, 20, 5), (1, 20, 2), (2, 40, 5), (3, 40, 2)]);
        assert_eq!(keys[1].file_name(), "run0001_T20_seed2.csv");
        assert!(is_trace_file(&keys[1].file_name()));
        assert!(!is_trace_file("experiment.toml"));
    }

    #[test]
    fn jobs_do_not_change_results() {
        let cfg = small();
        let a = run_in_memory(&cfg, 1).unwrap();
        let b = run_in_memory(&cfg, 3).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        assert_eq!(a.traces.len(), 4);
        assert!(a.report.failures.is_empty());
    }
}
