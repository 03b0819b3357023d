use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{error, info};
use serde::Serialize;

use specshare::sweep::{plan_jobs, write_results_csv, write_sessions_csv, SweepOutcome};
use specshare::{erlang_b, AllocationStrategy, Scenario, ScenarioConfig, SweepOptions};

/// Dynamic spectrum sharing simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy, seed and sweep point of a scenario.
    Run {
        config: PathBuf,
        /// Output directory for results.csv and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Replaces the base seed from the config.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Also write a per-session log for every run under sessions/.
        #[arg(long)]
        verbose: bool,
    },
    /// Parse and validate a scenario, printing the normalized document.
    Validate { config: PathBuf },
    /// Erlang-B blocking probability of an M/M/K/K system.
    ErlangB {
        #[arg(long)]
        channels: usize,
        /// Offered load in Erlangs.
        #[arg(long)]
        load: f64,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: String,
    base_seed: u64,
    seeds: Vec<u64>,
    strategies: Vec<AllocationStrategy>,
    sweep_parameter: Option<String>,
    sweep_values: Vec<f64>,
    runs_requested: usize,
    runs_completed: usize,
    complete: bool,
    failures: Vec<FailureEntry<'a>>,
}

#[derive(Serialize)]
struct FailureEntry<'a> {
    sweep_value: Option<f64>,
    seed: u64,
    strategy: AllocationStrategy,
    error: &'a str,
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (config, _) =
        ScenarioConfig::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(config)
}

fn workers() -> Result<Option<usize>> {
    match std::env::var("SPECSHARE_WORKERS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .with_context(|| format!("SPECSHARE_WORKERS={v}"))?;
            if n == 0 {
                bail!("SPECSHARE_WORKERS must be at least 1");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn write_outputs(
    out_dir: &Path,
    config_path: &Path,
    scenario: &Scenario,
    seed_override: Option<u64>,
    outcome: &SweepOutcome,
) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let results = out_dir.join("results.csv");
    write_results_csv(&outcome.rows, BufWriter::new(File::create(&results)?))
        .with_context(|| format!("writing {}", results.display()))?;

    let mut seeds: Vec<u64> = plan_jobs(scenario, seed_override)
        .iter()
        .map(|j| j.seed)
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: config_path.display().to_string(),
        base_seed: seed_override.unwrap_or(scenario.traffic.seed),
        seeds,
        strategies: scenario.allocations.clone(),
        sweep_parameter: scenario.sweep.as_ref().map(|s| s.parameter.to_string()),
        sweep_values: scenario
            .sweep
            .as_ref()
            .map(|s| s.values.clone())
            .unwrap_or_default(),
        runs_requested: outcome.jobs,
        runs_completed: outcome.rows.len(),
        complete: outcome.complete(),
        failures: outcome
            .failures
            .iter()
            .map(|f| FailureEntry {
                sweep_value: f.job.point.map(|(_, v)| v),
                seed: f.job.seed,
                strategy: f.job.strategy,
                error: &f.error,
            })
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &manifest)
        .with_context(|| format!("writing {}", path.display()))?;

    if !outcome.records.is_empty() {
        let dir = out_dir.join("sessions");
        fs::create_dir_all(&dir)?;
        for (job, records) in &outcome.records {
            let name = match job.point {
                Some((p, v)) => format!("{p}_{v}_seed{}_{}.csv", job.seed, job.strategy),
                None => format!("seed{}_{}.csv", job.seed, job.strategy),
            };
            write_sessions_csv(records, BufWriter::new(File::create(dir.join(name))?))?;
        }
    }
    Ok(())
}

fn run(config: &Path, out: &Path, seed_override: Option<u64>, verbose: bool) -> Result<bool> {
    let scenario = load(config)?
        .scenario()
        .map_err(|e| anyhow::anyhow!("{}: {e}", config.display()))?;
    let options = SweepOptions {
        seed_override,
        workers: workers()?,
        keep_records: verbose,
    };
    info!("running {} jobs", plan_jobs(&scenario, seed_override).len());
    let outcome = specshare::run_sweep(&scenario, &options);
    for f in &outcome.failures {
        error!("seed {} {}: {}", f.job.seed, f.job.strategy, f.error);
    }
    write_outputs(out, config, &scenario, seed_override, &outcome)?;
    info!(
        "{} of {} runs completed; results in {}",
        outcome.rows.len(),
        outcome.jobs,
        out.display()
    );
    Ok(outcome.complete())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed_override,
            verbose,
        } => run(&config, &out, seed_override, verbose),
        Command::Validate { config } => load(&config).map(|c| {
            print!("{}", c.to_toml());
            true
        }),
        Command::ErlangB { channels, load } => {
            if load.is_finite() && load >= 0.0 {
                println!("{}", erlang_b(channels, load));
                Ok(true)
            } else {
                Err(anyhow::anyhow!("load must be a non-negative number"))
            }
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
