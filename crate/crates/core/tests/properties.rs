//! Invariants over randomized inputs.

use proptest::prelude::*;

use specshare::metrics::erlang_b;
use specshare::qos::{ber_from_sinr, compute_sinr, sinr_target_from_ber, LinkTerms};
use specshare::radio::gains_from_positions;
use specshare::sim::ChannelAssignment;
use specshare::*;

/// Transmitter position and receiver offset.
type Geometry = ((f64, f64), (f64, f64));

fn topology(channels: &[usize], links: &[Geometry], tolerance_w: f64) -> NetworkTopology {
    let mut t = NetworkTopology {
        providers: channels
            .iter()
            .enumerate()
            .map(|(p, &k)| ServiceProvider {
                id: p,
                channels: (0..k)
                    .map(|c| SpectrumChannel {
                        id: c,
                        center_frequency_hz: 400e6 + 20e6 * p as f64 + 1e6 * c as f64,
                        bandwidth_hz: 1e6,
                    })
                    .collect(),
                cost_rate: 0.05 * (p + 1) as f64,
            })
            .collect(),
        links: links
            .iter()
            .enumerate()
            .map(|(i, ((tx, ty), (dx, dy)))| SecondaryLink {
                id: i,
                home_provider: i % channels.len(),
                tx: Position::new(*tx, *ty),
                rx: Position::new(tx + dx, ty + dy),
                bandwidth_hz: 1e6,
                rate_bps: 1e5,
                rate_min_bps: 5e4,
                rate_max_bps: 2e5,
                power_w: 0.1,
                power_max_w: 1.0,
                noise_w: 1e-12,
                sinr_target: 5.0,
                modulation: Modulation::None,
                target_ber: None,
            })
            .collect(),
        primary_points: vec![PrimaryReceivingPoint {
            id: 0,
            position: Position::new(0.0, 0.0),
            tolerance_w,
        }],
        gains: GainMatrices {
            g_ss: Matrix::zeros(0, 0),
            g_ps: Matrix::zeros(0, 0),
        },
        propagation_speed_mps: 3e8,
    };
    t.gains = gains_from_positions(&t, 3.0, 1.0).unwrap();
    t
}

fn link_geometry() -> impl Strategy<Value = Geometry> {
    (
        (50.0f64..2000.0, 50.0f64..2000.0),
        (10.0f64..200.0, 10.0f64..200.0),
    )
}

fn scenario() -> impl Strategy<
    Value = (
        NetworkTopology,
        TrafficSpec,
        AdmissionConfig,
        AllocationStrategy,
    ),
> {
    (
        proptest::collection::vec(1usize..5, 1..4),
        proptest::collection::vec(link_geometry(), 4..8),
        prop_oneof![Just(1e-9), Just(1e-6), Just(1.0)],
        any::<bool>(),
        any::<bool>(),
        1usize..4,
        any::<bool>(),
        0.2f64..4.0,
        any::<u64>(),
    )
        .prop_map(
            |(channels, links, tol, physical, reuse, limit, dynamic, load, seed)| {
                let topo = topology(&channels, &links, tol);
                let traffic = TrafficSpec {
                    arrival_rates: channels.iter().map(|&k| k as f64 * load).collect(),
                    mean_holding_s: 1.0,
                    horizon_s: 30.0,
                    seed,
                    session_rate_bps: 1e5,
                };
                let admission = AdmissionConfig {
                    physical_checks: physical,
                    channel_reuse: reuse,
                    reuse_limit: if reuse { limit } else { 1 },
                    ..AdmissionConfig::default()
                };
                let strategy = if dynamic {
                    AllocationStrategy::DynamicSbac
                } else {
                    AllocationStrategy::Fixed
                };
                (topo, traffic, admission, strategy)
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn simulation_invariants((topo, traffic, admission, strategy) in scenario()) {
        let sbac = SbacConfig::default();
        let out = run_simulation(&topo, &traffic, strategy, &sbac, &admission).unwrap();
        let m = &out.metrics;

        prop_assert_eq!(m.arrivals, out.records.len());
        prop_assert_eq!(m.arrivals, m.admitted + m.blocked_no_channel + m.blocked_qos + m.blocked_interference);
        prop_assert!((0.0..=1.0).contains(&m.spectral_efficiency));
        let bound = topo.total_channels() as f64 * admission.channel_capacity() as f64 * 2e5;
        prop_assert!(m.throughput_bps <= bound * (1.0 + 1e-12));
        if !admission.physical_checks {
            prop_assert_eq!(m.blocked_qos + m.blocked_interference, 0);
        }

        let admitted: Vec<&SessionRecord> =
            out.records.iter().filter(|r| r.outcome == Outcome::Admitted).collect();
        for r in &admitted {
            let at = r.assignment.unwrap();
            prop_assert!(r.start_time == r.arrival_time && r.end_time > r.start_time);
            prop_assert!(r.power_w <= 1.0 + 1e-9);
            if strategy == AllocationStrategy::Fixed {
                prop_assert_eq!(at.provider, r.home_provider);
            }
            let sharing = admitted
                .iter()
                .filter(|s| s.assignment == Some(at) && s.start_time <= r.start_time && r.start_time < s.end_time)
                .count();
            prop_assert!(sharing <= admission.channel_capacity());
        }
        for r in out.records.iter().filter(|r| r.outcome.is_blocked()) {
            prop_assert_eq!(r.assignment, None::<ChannelAssignment>);
        }

        let again = run_simulation(&topo, &traffic, strategy, &sbac, &admission).unwrap();
        prop_assert_eq!(format!("{:?}", out.records), format!("{:?}", again.records));
        prop_assert_eq!(&out.metrics, &again.metrics);
    }

    #[test]
    fn dynamic_never_blocks_more_on_channels(
        channels in proptest::collection::vec(1usize..6, 2..4),
        load in 0.5f64..3.0,
        seed in any::<u64>(),
    ) {
        // identical arrivals; a pooled loss system has no fewer free channels
        // than the home pool at every instant, so no-channel blocks cannot exceed FIXED
        let topo = topology(&channels, &[], 1.0);
        let traffic = TrafficSpec {
            arrival_rates: channels.iter().enumerate().map(|(p, _)| if p == 0 { 3.0 * load } else { 0.1 }).collect(),
            mean_holding_s: 1.0,
            horizon_s: 20.0,
            seed,
            session_rate_bps: 1e5,
        };
        let run = |s| run_simulation(&topo, &traffic, s, &SbacConfig::default(), &AdmissionConfig::default()).unwrap();
        let fixed = run(AllocationStrategy::Fixed);
        let dynamic = run(AllocationStrategy::DynamicSbac);
        prop_assert_eq!(fixed.metrics.arrivals, dynamic.metrics.arrivals);
        if fixed.metrics.blocked_no_channel == 0 {
            prop_assert_eq!(dynamic.metrics.blocked_no_channel, 0);
        }
    }

    #[test]
    fn sinr_responds_to_powers(
        p in proptest::collection::vec(0.01f64..5.0, 2..6),
        bump in 1.01f64..3.0,
    ) {
        let n = p.len();
        let sys = LinkSystem {
            links: vec![LinkTerms { processing_gain: 10.0, noise_w: 0.01, sinr_target: 1.0, power_max_w: 10.0 }; n],
            g_ss: Matrix::from_rows(&(0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.1 }).collect()).collect::<Vec<_>>()).unwrap(),
            g_ps: Matrix::zeros(0, n),
            tolerance_w: vec![],
        };
        let base = compute_sinr(&sys, &p).unwrap().mu;
        let mut q = p.clone();
        q[0] *= bump;
        let after = compute_sinr(&sys, &q).unwrap().mu;
        prop_assert!(after[0] > base[0]);
        for i in 1..n {
            prop_assert!(after[i] < base[i]);
        }
    }

    #[test]
    fn ber_round_trip(t in 1e-6f64..0.4, qpsk in any::<bool>()) {
        let m = if qpsk { Modulation::Qpsk } else { Modulation::Bpsk };
        let gamma = sinr_target_from_ber(m, t).unwrap();
        prop_assert!((ber_from_sinr(m, gamma).unwrap() - t).abs() <= 1e-8);
    }

    #[test]
    fn ber_decreases_with_sinr(a in 0.0f64..20.0, d in 0.01f64..5.0) {
        for m in [Modulation::Bpsk, Modulation::Qpsk] {
            prop_assert!(ber_from_sinr(m, a + d).unwrap() < ber_from_sinr(m, a).unwrap());
        }
    }

    #[test]
    fn erlang_b_monotone(k in 1usize..40, a in 0.01f64..50.0, d in 0.01f64..5.0) {
        let b = erlang_b(k, a);
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(erlang_b(k, a + d) > b);
        prop_assert!(erlang_b(k + 1, a) < b);
    }
}
