//! Fixed workloads shared by the benchmarks.

use specshare::qos::LinkTerms;
use specshare::radio::SpectrumChannel;
use specshare::{
    CandidatePool, GainMatrices, LinkSystem, Matrix, NetworkTopology, ServiceProvider, TrafficSpec,
};

/// `providers` pools of `channels` channels each, every second channel free.
pub fn pools(providers: usize, channels: usize) -> Vec<CandidatePool> {
    (0..providers)
        .map(|p| CandidatePool {
            provider_id: p,
            available: (0..channels)
                .step_by(2)
                .map(|c| SpectrumChannel {
                    id: c,
                    center_frequency_hz: 400e6 + p as f64 * 20e6 + c as f64 * 200e3,
                    bandwidth_hz: 200e3,
                })
                .collect(),
            total_channels: channels,
            session_minutes: 1.0,
            cost_rate: 0.05 * (p + 1) as f64,
        })
        .collect()
}

/// `n` links with uniform weak coupling; feasible for any `n`.
pub fn coupled_system(n: usize) -> LinkSystem {
    let g: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| if i == j { 1.0 } else { 0.5 / n as f64 })
                .collect()
        })
        .collect();
    LinkSystem {
        links: vec![
            LinkTerms {
                processing_gain: 10.0,
                noise_w: 1e-3,
                sinr_target: 5.0,
                power_max_w: 10.0,
            };
            n
        ],
        g_ss: Matrix::from_rows(&g).expect("square"),
        g_ps: Matrix::zeros(0, n),
        tolerance_w: vec![],
    }
}

pub fn channel_only_topology(channels: &[usize]) -> NetworkTopology {
    NetworkTopology {
        providers: channels
            .iter()
            .enumerate()
            .map(|(p, &k)| ServiceProvider {
                id: p,
                channels: (0..k)
                    .map(|c| SpectrumChannel {
                        id: c,
                        center_frequency_hz: 400e6 + p as f64 * 20e6 + c as f64 * 200e3,
                        bandwidth_hz: 200e3,
                    })
                    .collect(),
                cost_rate: 0.05,
            })
            .collect(),
        links: vec![],
        primary_points: vec![],
        gains: GainMatrices {
            g_ss: Matrix::zeros(0, 0),
            g_ps: Matrix::zeros(0, 0),
        },
        propagation_speed_mps: 3e8,
    }
}

pub fn traffic(rates: &[f64], horizon_s: f64) -> TrafficSpec {
    TrafficSpec {
        arrival_rates: rates.to_vec(),
        mean_holding_s: 1.0,
        horizon_s,
        seed: 1,
        session_rate_bps: 1e5,
    }
}
