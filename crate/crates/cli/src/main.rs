//! `pmm`: run experiments, rebuild reports, evaluate bounds and spot-check
//! instance constants from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pmm_core::bounds::BoundSummary;
use pmm_core::harness::{aggregate_dir, run_experiment, ExperimentConfig, RegretReport, REPORT_FILE};
use pmm_core::problem::validate_constants;
use pmm_core::{kappa_constants, InstanceSpec, StochasticProgram};

#[derive(Parser)]
#[command(
    name = "pmm",
    version,
    about = "Stochastic proximal method of multipliers experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (horizon, seed) pair of a config and write traces plus report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Rebuild the report from a traces directory without re-running.
    Aggregate {
        #[arg(long)]
        traces: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every bound constant for an instance, horizon and η.
    Bounds {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        eta: f64,
    },
    /// Monte Carlo check of an instance's declared constants.
    Validate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// `scalar_toy` or `affine_qp`
    #[arg(long)]
    instance: String,
    #[arg(long)]
    noise_amp: Option<f64>,
    /// affine_qp dimension
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// affine_qp constraint count
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// affine_qp generator seed
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
}

impl InstanceArgs {
    fn spec(&self) -> Result<InstanceSpec> {
        Ok(match self.instance.as_str() {
            "scalar_toy" => InstanceSpec::ScalarToy {
                noise_amp: self.noise_amp.unwrap_or(0.5),
            },
            "affine_qp" => InstanceSpec::AffineQp {
                n: self.n,
                p: self.p,
                seed: self.instance_seed,
                noise_amp: self.noise_amp.unwrap_or(0.1),
            },
            other => bail!("unknown instance {other:?} (expected scalar_toy or affine_qp)"),
        })
    }
}

fn print_summary(report: &RegretReport) {
    for h in &report.horizons {
        let obj = h.objective.as_ref().map_or("n/a".into(), |s| format!("{:.4}", s.mean));
        let cv: Vec<String> = h.constraint.iter().map(|s| format!("{:.4}", s.mean)).collect();
        println!(
            "T={:<8} runs={:<4} mean R_obj={obj} (<= {:.1})  mean R_cv=[{}] (<= {:.1})",
            h.horizon,
            h.runs,
            h.bounds.kappa_o_sqrt_t,
            cv.join(", "),
            h.bounds.kappa_c_sqrt_t
        );
    }
    if let Some(r) = &report.rates {
        let slopes: Vec<String> = r.constraint.iter().map(|f| format!("{:.3}", f.slope)).collect();
        let obj = r.objective.map_or("n/a".into(), |f| format!("{:.3}", f.slope));
        println!(
            "slopes: objective={obj} constraint=[{}] (floor {})",
            slopes.join(", "),
            r.floor
        );
    }
    for f in &report.failures {
        eprintln!("run T={} seed={} failed: {}", f.horizon, f.seed, f.error);
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, jobs } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = match out.or_else(|| cfg.output_dir.clone().map(PathBuf::from)) {
                Some(o) => o,
                None => bail!("no output directory: pass --out or set output_dir in the config"),
            };
            let outcome = run_experiment(&cfg, &out, jobs)?;
            print_summary(&outcome.report);
            println!("report written to {}", out.join(REPORT_FILE).display());
            if !outcome.report.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Aggregate { traces, out } => {
            let json = aggregate_dir(&traces)?.to_json()?;
            match out {
                Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{json}"),
            }
        }
        Command::Bounds { instance, horizon, eta } => {
            let inst = instance.spec()?.build()?;
            let p = inst.num_constraints();
            let summary = BoundSummary::compute(inst.constants(), p, horizon, eta)?;
            let out = serde_json::json!({
                "instance": inst.descriptor(),
                "constants": inst.constants(),
                "kappa": kappa_constants(inst.constants(), p)?,
                "bounds": summary,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Validate {
            instance,
            samples,
            seed,
        } => {
            let inst = instance.spec()?.build()?;
            let rep = validate_constants(&inst, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            if !rep.passed() {
                eprintln!("declared constants violated: {}", rep.flags.join("; "));
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
