//! Parameter sweeps: one simulation per (point, seed, strategy), run in
//! parallel and reported in a fixed order.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Scenario;
use crate::sim::{run_simulation, AllocationStrategy, SessionRecord, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Sets every provider's arrival rate to the value.
    ArrivalRate,
    /// Multiplies every provider's arrival rate by the value.
    ArrivalScale,
    /// Keeps the first `n` links and scales arrival rates by `n / N`.
    Users,
    /// Mean holding time in seconds.
    HoldingTime,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::ArrivalRate => "arrival_rate",
            SweepParameter::ArrivalScale => "arrival_scale",
            SweepParameter::Users => "users",
            SweepParameter::HoldingTime => "holding_time",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub seeds_per_point: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("{parameter} = {value}: {reason}")]
    InvalidPoint {
        parameter: SweepParameter,
        value: f64,
        reason: String,
    },
}

impl Scenario {
    /// The scenario with one sweep point applied.
    pub fn at_point(&self, parameter: SweepParameter, value: f64) -> Result<Scenario, SweepError> {
        let invalid = |reason: &str| SweepError::InvalidPoint {
            parameter,
            value,
            reason: reason.to_string(),
        };
        if !value.is_finite() {
            return Err(invalid("value must be finite"));
        }
        let mut out = self.clone();
        out.sweep = None;
        match parameter {
            SweepParameter::ArrivalRate => {
                if value < 0.0 {
                    return Err(invalid("rate must be non-negative"));
                }
                out.traffic
                    .arrival_rates
                    .iter_mut()
                    .for_each(|l| *l = value);
            }
            SweepParameter::ArrivalScale => {
                if value < 0.0 {
                    return Err(invalid("scale must be non-negative"));
                }
                out.traffic
                    .arrival_rates
                    .iter_mut()
                    .for_each(|l| *l *= value);
            }
            SweepParameter::HoldingTime => {
                if value <= 0.0 {
                    return Err(invalid("holding time must be positive"));
                }
                out.traffic.mean_holding_s = value;
            }
            SweepParameter::Users => {
                let total = self.topology.links.len();
                if value.fract() != 0.0 || value < 1.0 || value > total as f64 {
                    return Err(invalid(&format!("must be an integer in 1..={total}")));
                }
                let n = value as usize;
                let keep: Vec<usize> = (0..n).collect();
                out.topology = self.topology.with_links(&keep);
                let k = n as f64 / total as f64;
                out.traffic.arrival_rates.iter_mut().for_each(|l| *l *= k);
            }
        }
        Ok(out)
    }
}

/// One simulation of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub point: Option<(SweepParameter, f64)>,
    pub seed: u64,
    pub strategy: AllocationStrategy,
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub seed: u64,
    pub strategy: AllocationStrategy,
    pub blocking_probability: f64,
    pub throughput_bps: f64,
    pub spectral_efficiency: f64,
    pub mean_interference_w: f64,
    pub mean_prop_delay_s: f64,
    pub mean_rtt_s: f64,
    pub arrivals: usize,
    pub admitted: usize,
    pub blocked_no_channel: usize,
    pub blocked_qos: usize,
    pub blocked_interference: usize,
}

#[derive(Debug, Clone)]
pub struct JobFailure {
    pub job: Job,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Replaces the configured base seed.
    pub seed_override: Option<u64>,
    /// Rayon worker count; the global pool when absent.
    pub workers: Option<usize>,
    /// Keep per-session records for every job.
    pub keep_records: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Successful jobs in job order.
    pub rows: Vec<ResultRow>,
    /// Per-session records, parallel to `rows`, when requested.
    pub records: Vec<(Job, Vec<SessionRecord>)>,
    pub failures: Vec<JobFailure>,
    pub jobs: usize,
}

impl SweepOutcome {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Jobs in point, seed, strategy order. Seeds are `base + k` for
/// `k < seeds_per_point`.
pub fn plan_jobs(scenario: &Scenario, seed_override: Option<u64>) -> Vec<Job> {
    let base = seed_override.unwrap_or(scenario.traffic.seed);
    let points: Vec<Option<(SweepParameter, f64)>> = match &scenario.sweep {
        Some(s) => s.values.iter().map(|v| Some((s.parameter, *v))).collect(),
        None => vec![None],
    };
    let seeds = scenario.sweep.as_ref().map_or(1, |s| s.seeds_per_point);
    let mut jobs = Vec::new();
    for point in points {
        for k in 0..seeds {
            for strategy in &scenario.allocations {
                jobs.push(Job {
                    point,
                    seed: base.wrapping_add(u64::from(k)),
                    strategy: *strategy,
                });
            }
        }
    }
    jobs
}

fn run_job(
    scenario: &Scenario,
    job: &Job,
    keep: bool,
) -> Result<(ResultRow, Vec<SessionRecord>), String> {
    let mut sc = match job.point {
        Some((p, v)) => scenario.at_point(p, v).map_err(|e| e.to_string())?,
        None => scenario.clone(),
    };
    sc.traffic.seed = job.seed;
    let out = run_simulation(
        &sc.topology,
        &sc.traffic,
        job.strategy,
        &sc.sbac,
        &sc.admission,
    )
    .map_err(|e: SimError| e.to_string())?;
    let m = &out.metrics;
    let row = ResultRow {
        sweep_param: job
            .point
            .map_or("none".to_string(), |(p, _)| p.name().to_string()),
        sweep_value: job.point.map_or(String::new(), |(_, v)| v.to_string()),
        seed: job.seed,
        strategy: job.strategy,
        blocking_probability: m.blocking_probability,
        throughput_bps: m.throughput_bps,
        spectral_efficiency: m.spectral_efficiency,
        mean_interference_w: m.mean_primary_interference_w,
        mean_prop_delay_s: m.mean_propagation_delay_s,
        mean_rtt_s: m.mean_rtt_s,
        arrivals: m.arrivals,
        admitted: m.admitted,
        blocked_no_channel: m.blocked_no_channel,
        blocked_qos: m.blocked_qos,
        blocked_interference: m.blocked_interference,
    };
    Ok((row, if keep { out.records } else { Vec::new() }))
}

/// Runs every job of the scenario. A failing job is recorded and the rest
/// still run.
pub fn run_sweep(scenario: &Scenario, options: &SweepOptions) -> SweepOutcome {
    let jobs = plan_jobs(scenario, options.seed_override);
    let exec = || -> Vec<_> {
        jobs.par_iter()
            .map(|job| (*job, run_job(scenario, job, options.keep_records)))
            .collect()
    };
    let results = match options.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(exec),
            Err(_) => exec(),
        },
        None => exec(),
    };
    let mut outcome = SweepOutcome {
        jobs: jobs.len(),
        ..SweepOutcome::default()
    };
    for (job, result) in results {
        match result {
            Ok((row, records)) => {
                outcome.rows.push(row);
                if options.keep_records {
                    outcome.records.push((job, records));
                }
            }
            Err(error) => outcome.failures.push(JobFailure { job, error }),
        }
    }
    outcome
}

/// Serializes rows as CSV. The header is written even without rows.
pub fn write_results_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "sweep_param",
    "sweep_value",
    "seed",
    "strategy",
    "blocking_probability",
    "throughput_bps",
    "spectral_efficiency",
    "mean_interference_w",
    "mean_prop_delay_s",
    "mean_rtt_s",
    "arrivals",
    "admitted",
    "blocked_no_channel",
    "blocked_qos",
    "blocked_interference",
];

#[derive(Debug, Serialize)]
struct SessionRow<'a> {
    id: usize,
    home_provider: usize,
    link: Option<usize>,
    arrival_time: f64,
    start_time: f64,
    end_time: f64,
    provider: Option<usize>,
    channel: Option<usize>,
    rate_bps: f64,
    power_w: f64,
    outcome: &'a str,
}

/// Per-session log in CSV.
pub fn write_sessions_csv<W: std::io::Write>(
    records: &[SessionRecord],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(SessionRow {
            id: r.id,
            home_provider: r.home_provider,
            link: r.link,
            arrival_time: r.arrival_time,
            start_time: r.start_time,
            end_time: r.end_time,
            provider: r.assignment.map(|a| a.provider),
            channel: r.assignment.map(|a| a.channel),
            rate_bps: r.rate_bps,
            power_w: r.power_w,
            outcome: r.outcome.name(),
        })?;
    }
    w.flush()?;
    Ok(())
}
