//! Run-level performance metrics and the Erlang-B reference formula.

use thiserror::Error;

use crate::sim::{Outcome, SessionRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric undefined for an empty record list")]
    Undefined,
    #[error("malformed interference trace: {0}")]
    MalformedTrace(String),
}

/// Seconds for a signal to cover `distance_m` at `speed_mps`.
pub fn propagation_delay(distance_m: f64, speed_mps: f64) -> f64 {
    distance_m / speed_mps
}

/// Request/response round trip excluding data transfer: two propagation legs
/// plus the time the request waited for a channel.
pub fn rtt(distance_m: f64, access_wait_s: f64, speed_mps: f64) -> f64 {
    2.0 * propagation_delay(distance_m, speed_mps) + access_wait_s
}

pub fn session_rtt(record: &SessionRecord, speed_mps: f64) -> f64 {
    rtt(
        record.tx_rx_distance_m,
        record.start_time - record.arrival_time,
        speed_mps,
    )
}

/// Delivered bits of admitted sessions within `[0, horizon]`, per second.
pub fn throughput(records: &[SessionRecord], horizon_s: f64) -> f64 {
    records
        .iter()
        .filter(|r| r.outcome == Outcome::Admitted)
        .map(|r| r.rate_bps * (r.end_time.min(horizon_s) - r.start_time).max(0.0))
        .sum::<f64>()
        / horizon_s
}

/// Piecewise-constant primary interference over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    pub start: f64,
    pub end: f64,
    /// Aggregate secondary load at each primary point, in watts.
    pub loads_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryInterference {
    pub per_point_w: Vec<f64>,
    /// Mean of `per_point_w`; zero without primary points.
    pub mean_w: f64,
}

/// Time-weighted mean load per primary point. The segments must tile
/// `[0, horizon]` exactly.
pub fn mean_primary_interference(
    trace: &[TraceSegment],
    horizon_s: f64,
) -> Result<PrimaryInterference, MetricsError> {
    let points = trace.first().map_or(0, |s| s.loads_w.len());
    let mut cursor = 0.0;
    let mut integral = vec![0.0; points];
    for (k, seg) in trace.iter().enumerate() {
        if seg.start != cursor {
            return Err(MetricsError::MalformedTrace(format!(
                "segment {k} starts at {} but previous coverage ends at {cursor}",
                seg.start
            )));
        }
        if !(seg.end >= seg.start) {
            return Err(MetricsError::MalformedTrace(format!(
                "segment {k} has negative length"
            )));
        }
        if seg.loads_w.len() != points {
            return Err(MetricsError::MalformedTrace(format!(
                "segment {k} has {} points, expected {points}",
                seg.loads_w.len()
            )));
        }
        for (acc, load) in integral.iter_mut().zip(&seg.loads_w) {
            *acc += load * (seg.end - seg.start);
        }
        cursor = seg.end;
    }
    if cursor != horizon_s {
        return Err(MetricsError::MalformedTrace(format!(
            "coverage ends at {cursor}, horizon is {horizon_s}"
        )));
    }
    let per_point_w: Vec<f64> = integral.into_iter().map(|x| x / horizon_s).collect();
    let mean_w = if per_point_w.is_empty() {
        0.0
    } else {
        per_point_w.iter().sum::<f64>() / per_point_w.len() as f64
    };
    Ok(PrimaryInterference {
        per_point_w,
        mean_w,
    })
}

/// Average number of busy channels divided by the channel total.
pub fn spectral_efficiency(
    busy_channel_seconds: f64,
    total_channels: usize,
    horizon_s: f64,
) -> f64 {
    busy_channel_seconds / horizon_s / total_channels as f64
}

pub fn blocking_probability(records: &[SessionRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Undefined);
    }
    let blocked = records.iter().filter(|r| r.outcome.is_blocked()).count();
    Ok(blocked as f64 / records.len() as f64)
}

/// Erlang-B blocking of an M/M/K/K system with offered load `a`, via
/// `B(k) = a B(k-1) / (k + a B(k-1))`, `B(0) = 1`.
pub fn erlang_b(channels: usize, offered_load: f64) -> f64 {
    (1..=channels).fold(1.0, |b, k| offered_load * b / (k as f64 + offered_load * b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub arrivals: usize,
    pub admitted: usize,
    pub blocked_no_channel: usize,
    pub blocked_qos: usize,
    pub blocked_interference: usize,
    /// Zero when there were no arrivals.
    pub blocking_probability: f64,
    pub throughput_bps: f64,
    pub spectral_efficiency: f64,
    pub mean_primary_interference_w: f64,
    pub primary_interference_w: Vec<f64>,
    /// Means over admitted sessions; zero when none were admitted.
    pub mean_propagation_delay_s: f64,
    pub mean_rtt_s: f64,
}

impl MetricsReport {
    pub fn from_run(
        records: &[SessionRecord],
        busy_channel_seconds: f64,
        total_channels: usize,
        trace: &[TraceSegment],
        horizon_s: f64,
        speed_mps: f64,
    ) -> Result<Self, MetricsError> {
        let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
        let admitted: Vec<&SessionRecord> = records
            .iter()
            .filter(|r| r.outcome == Outcome::Admitted)
            .collect();
        let mean_over_admitted = |f: &dyn Fn(&SessionRecord) -> f64| {
            if admitted.is_empty() {
                0.0
            } else {
                admitted.iter().map(|r| f(r)).sum::<f64>() / admitted.len() as f64
            }
        };
        let interference = mean_primary_interference(trace, horizon_s)?;
        Ok(MetricsReport {
            arrivals: records.len(),
            admitted: admitted.len(),
            blocked_no_channel: count(Outcome::BlockedNoChannel),
            blocked_qos: count(Outcome::BlockedQos),
            blocked_interference: count(Outcome::BlockedInterference),
            blocking_probability: blocking_probability(records).unwrap_or(0.0),
            throughput_bps: throughput(records, horizon_s),
            spectral_efficiency: spectral_efficiency(
                busy_channel_seconds,
                total_channels,
                horizon_s,
            ),
            mean_primary_interference_w: interference.mean_w,
            primary_interference_w: interference.per_point_w,
            mean_propagation_delay_s: mean_over_admitted(&|r| {
                propagation_delay(r.tx_rx_distance_m, speed_mps)
            }),
            mean_rtt_s: mean_over_admitted(&|r| session_rtt(r, speed_mps)),
        })
    }
}
