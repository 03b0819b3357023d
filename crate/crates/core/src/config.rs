//! Scenario configuration documents (TOML).
//!
//! A document has five sections: `[topology]` (providers, links, primary
//! points, optional explicit gains), `[traffic]`, `[sbac]`, `[strategy]` and
//! an optional `[sweep]`. Parsing normalizes the document in place: dB-valued
//! fields become linear watts, channel grids are expanded, SINR targets are
//! derived from target BERs and every omitted optional key receives its
//! default (logged as `defaulted <key> = <value>`). Serializing a parsed
//! config therefore yields a fully explicit document that re-parses to an
//! equal config.

use std::fmt;
use std::ops::Range;

use log::info;
use serde::{Deserialize, Serialize};
use serde_spanned::Spanned;
use thiserror::Error;

use crate::qos::{sinr_target_from_ber, SolverOptions};
use crate::radio::{
    gains_from_positions, validate_topology, Entity, GainMatrices, Matrix, Modulation,
    NetworkTopology, Position, PrimaryReceivingPoint, SecondaryLink, ServiceProvider,
    SpectrumChannel,
};
use crate::sbac::{FrequencyUnit, SbacWeights, UtilityParams};
use crate::sim::{validate_scenario, AdmissionConfig, AllocationStrategy, SbacConfig, SimError};
use crate::sweep::{SweepParameter, SweepSpec};
use crate::traffic::TrafficSpec;

/// A configuration problem, located by key path and (when known) line.
#[derive(Debug, Clone, Error, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key)?;
        if let Some(line) = self.line {
            write!(f, " (line {line})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologySection,
    pub traffic: TrafficSection,
    #[serde(default)]
    pub sbac: SbacSection,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation_speed_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_distance_m: Option<f64>,
    pub providers: Vec<Spanned<ProviderEntry>>,
    #[serde(default)]
    pub links: Vec<Spanned<LinkEntry>>,
    #[serde(default)]
    pub primary_points: Vec<Spanned<PrimaryPointEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Spanned<GainsEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderEntry {
    /// Price per minute of airtime.
    pub cost_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_channel_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_spacing_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<usize>,
    pub tx: [f64; 2],
    pub rx: [f64; 2],
    pub bandwidth_hz: f64,
    pub rate_bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_min_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_max_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_max_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_max_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ber: Option<f64>,
    /// Takes precedence over `target_ber` when both are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimaryPointEntry {
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_dbw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsEntry {
    pub g_ss: Vec<Vec<f64>>,
    #[serde(default)]
    pub g_ps: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    /// Sessions per second, one per provider.
    pub arrival_rates: Vec<f64>,
    pub mean_holding_s: f64,
    pub horizon_s: f64,
    pub session_rate_bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbacSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_unit: Option<FrequencyUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<Vec<AllocationStrategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_checks: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_reuse: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_processing_gain: Option<bool>,
    /// No minimum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_processing_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_patience: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_per_point: Option<u32>,
}

/// Everything a simulation run needs, in domain types.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: NetworkTopology,
    pub traffic: TrafficSpec,
    pub sbac: SbacConfig,
    pub admission: AdmissionConfig,
    pub allocations: Vec<AllocationStrategy>,
    pub sweep: Option<SweepSpec>,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

struct Ctx<'t> {
    text: &'t str,
    defaulted: Vec<String>,
}

impl Ctx<'_> {
    fn line_of(&self, span: &Range<usize>) -> Option<usize> {
        (span.start <= self.text.len()).then(|| self.text[..span.start].matches('\n').count() + 1)
    }

    fn err(
        &self,
        key: impl Into<String>,
        span: Option<&Range<usize>>,
        message: impl Into<String>,
    ) -> ConfigError {
        ConfigError {
            key: key.into(),
            line: span.and_then(|s| self.line_of(s)),
            message: message.into(),
        }
    }

    fn default<T: Clone + fmt::Debug>(&mut self, slot: &mut Option<T>, key: &str, value: T) -> T {
        if slot.is_none() {
            info!("defaulted {key} = {value:?}");
            self.defaulted.push(key.to_string());
            *slot = Some(value);
        }
        slot.clone().expect("just filled")
    }
}

/// Parses, normalizes and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    ScenarioConfig::parse(text).map(|(c, _)| c)
}

impl ScenarioConfig {
    /// Like [`parse_config`], also returning the keys that received defaults.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>), ConfigError> {
        let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().trim().to_string();
            let key = message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".to_string());
            ConfigError {
                line: e
                    .span()
                    .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
                key,
                message,
            }
        })?;
        let mut ctx = Ctx {
            text,
            defaulted: Vec::new(),
        };
        config.normalize(&mut ctx)?;
        config.build(&ctx)?;
        Ok((config, ctx.defaulted))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config documents always serialize")
    }

    /// Domain objects for a parsed config.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.build(&Ctx {
            text: "",
            defaulted: Vec::new(),
        })
    }

    fn normalize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), ConfigError> {
        let topo = &mut self.topology;
        ctx.default(
            &mut topo.propagation_speed_mps,
            "topology.propagation_speed_mps",
            3.0e8,
        );
        if topo.gains.is_none() {
            ctx.default(
                &mut topo.path_loss_exponent,
                "topology.path_loss_exponent",
                3.0,
            );
            ctx.default(
                &mut topo.reference_distance_m,
                "topology.reference_distance_m",
                1.0,
            );
        }

        let provider_count = topo.providers.len();
        for (p, entry) in topo.providers.iter_mut().enumerate() {
            let span = entry.span();
            let key = format!("topology.providers[{p}]");
            let e = entry.get_mut();
            let grid = (e.channel_count, e.first_channel_hz, e.channel_spacing_hz);
            match (&e.channels, grid) {
                (Some(_), (None, None, None)) if e.channel_bandwidth_hz.is_none() => {}
                (Some(_), _) => {
                    return Err(ctx.err(key, Some(&span), "give either `channels` or a channel grid, not both"))
                }
                (None, (Some(count), Some(first), Some(spacing))) => {
                    let bw = ctx.default(
                        &mut e.channel_bandwidth_hz,
                        &format!("{key}.channel_bandwidth_hz"),
                        spacing,
                    );
                    e.channels = Some(
                        (0..count)
                            .map(|c| ChannelEntry {
                                center_hz: first + spacing * c as f64,
                                bandwidth_hz: bw,
                            })
                            .collect(),
                    );
                    e.channel_count = None;
                    e.first_channel_hz = None;
                    e.channel_spacing_hz = None;
                    e.channel_bandwidth_hz = None;
                }
                (None, _) => {
                    return Err(ctx.err(
                        key,
                        Some(&span),
                        "channels require `channels` or all of channel_count, first_channel_hz, channel_spacing_hz",
                    ))
                }
            }
        }

        for (i, entry) in topo.links.iter_mut().enumerate() {
            let span = entry.span();
            let key = format!("topology.links[{i}]");
            let e = entry.get_mut();
            if provider_count > 0 {
                ctx.default(
                    &mut e.provider,
                    &format!("{key}.provider"),
                    i % provider_count,
                );
            }
            ctx.default(
                &mut e.rate_min_bps,
                &format!("{key}.rate_min_bps"),
                e.rate_bps,
            );
            ctx.default(
                &mut e.rate_max_bps,
                &format!("{key}.rate_max_bps"),
                e.rate_bps,
            );
            linear_from_db(
                ctx,
                &key,
                &span,
                "power_max",
                &mut e.power_max_w,
                &mut e.power_max_dbw,
                true,
            )?;
            linear_from_db(
                ctx,
                &key,
                &span,
                "power",
                &mut e.power_w,
                &mut e.power_dbw,
                false,
            )?;
            if e.power_w.is_none() {
                let cap = e.power_max_w;
                ctx.default(
                    &mut e.power_w,
                    &format!("{key}.power_w"),
                    cap.unwrap_or(0.0),
                );
            }
            linear_from_db(
                ctx,
                &key,
                &span,
                "noise",
                &mut e.noise_w,
                &mut e.noise_dbw,
                true,
            )?;
            let modulation = ctx.default(
                &mut e.modulation,
                &format!("{key}.modulation"),
                Modulation::None,
            );
            if e.sinr_target.is_none() {
                let Some(ber) = e.target_ber else {
                    return Err(ctx.err(
                        key,
                        Some(&span),
                        "needs `sinr_target` or `modulation` with `target_ber`",
                    ));
                };
                let gamma = sinr_target_from_ber(modulation, ber).map_err(|err| {
                    ctx.err(format!("{key}.target_ber"), Some(&span), err.to_string())
                })?;
                e.sinr_target = Some(gamma);
            }
        }

        for (j, entry) in topo.primary_points.iter_mut().enumerate() {
            let span = entry.span();
            let key = format!("topology.primary_points[{j}]");
            let e = entry.get_mut();
            linear_from_db(
                ctx,
                &key,
                &span,
                "tolerance",
                &mut e.tolerance_w,
                &mut e.tolerance_dbw,
                true,
            )?;
        }

        let sbac = &mut self.sbac;
        let d = SbacWeights::default();
        ctx.default(&mut sbac.beta, "sbac.beta", [d.beta1, d.beta2, d.beta3]);
        ctx.default(&mut sbac.session_minutes, "sbac.session_minutes", 1.0);
        let u = UtilityParams::default();
        ctx.default(&mut sbac.spread_unit, "sbac.spread_unit", u.spread_unit);
        ctx.default(&mut sbac.spread_floor, "sbac.spread_floor", u.spread_floor);
        ctx.default(&mut sbac.cost_floor, "sbac.cost_floor", u.cost_floor);

        ctx.default(&mut self.traffic.seed, "traffic.seed", 1);

        let s = &mut self.strategy;
        ctx.default(
            &mut s.allocations,
            "strategy.allocations",
            vec![AllocationStrategy::Fixed, AllocationStrategy::DynamicSbac],
        );
        ctx.default(&mut s.physical_checks, "strategy.physical_checks", false);
        let reuse = ctx.default(&mut s.channel_reuse, "strategy.channel_reuse", false);
        ctx.default(
            &mut s.reuse_limit,
            "strategy.reuse_limit",
            if reuse { 4 } else { 1 },
        );
        ctx.default(
            &mut s.use_processing_gain,
            "strategy.use_processing_gain",
            true,
        );
        let so = SolverOptions::default();
        ctx.default(
            &mut s.solver_tolerance,
            "strategy.solver_tolerance",
            so.tolerance,
        );
        ctx.default(
            &mut s.solver_max_iterations,
            "strategy.solver_max_iterations",
            so.max_iterations,
        );
        ctx.default(
            &mut s.solver_patience,
            "strategy.solver_patience",
            so.patience,
        );

        if let Some(sweep) = &mut self.sweep {
            ctx.default(&mut sweep.seeds_per_point, "sweep.seeds_per_point", 1);
        }
        Ok(())
    }

    fn build(&self, ctx: &Ctx<'_>) -> Result<Scenario, ConfigError> {
        let topo = &self.topology;
        let providers: Vec<ServiceProvider> = topo
            .providers
            .iter()
            .enumerate()
            .map(|(p, e)| ServiceProvider {
                id: p,
                channels: e
                    .get_ref()
                    .channels
                    .iter()
                    .flatten()
                    .enumerate()
                    .map(|(c, ch)| SpectrumChannel {
                        id: c,
                        center_frequency_hz: ch.center_hz,
                        bandwidth_hz: ch.bandwidth_hz,
                    })
                    .collect(),
                cost_rate: e.get_ref().cost_rate,
            })
            .collect();

        let req = |v: Option<f64>, key: String, span: &Range<usize>| {
            v.ok_or_else(|| ctx.err(key, Some(span), "missing after normalization"))
        };
        let mut links = Vec::with_capacity(topo.links.len());
        for (i, entry) in topo.links.iter().enumerate() {
            let span = entry.span();
            let e = entry.get_ref();
            let key = format!("topology.links[{i}]");
            links.push(SecondaryLink {
                id: i,
                home_provider: e.provider.unwrap_or(0),
                tx: Position::new(e.tx[0], e.tx[1]),
                rx: Position::new(e.rx[0], e.rx[1]),
                bandwidth_hz: e.bandwidth_hz,
                rate_bps: e.rate_bps,
                rate_min_bps: req(e.rate_min_bps, format!("{key}.rate_min_bps"), &span)?,
                rate_max_bps: req(e.rate_max_bps, format!("{key}.rate_max_bps"), &span)?,
                power_w: req(e.power_w, format!("{key}.power_w"), &span)?,
                power_max_w: req(e.power_max_w, format!("{key}.power_max_w"), &span)?,
                noise_w: req(e.noise_w, format!("{key}.noise_w"), &span)?,
                sinr_target: req(e.sinr_target, format!("{key}.sinr_target"), &span)?,
                modulation: e.modulation.unwrap_or(Modulation::None),
                target_ber: e.target_ber,
            });
        }
        let mut primary_points = Vec::with_capacity(topo.primary_points.len());
        for (j, entry) in topo.primary_points.iter().enumerate() {
            let e = entry.get_ref();
            primary_points.push(PrimaryReceivingPoint {
                id: j,
                position: Position::new(e.position[0], e.position[1]),
                tolerance_w: req(
                    e.tolerance_w,
                    format!("topology.primary_points[{j}].tolerance_w"),
                    &entry.span(),
                )?,
            });
        }

        let mut topology = NetworkTopology {
            providers,
            links,
            primary_points,
            gains: GainMatrices {
                g_ss: Matrix::zeros(0, 0),
                g_ps: Matrix::zeros(0, 0),
            },
            propagation_speed_mps: topo.propagation_speed_mps.unwrap_or(3.0e8),
        };
        topology.gains = match &topo.gains {
            Some(g) => {
                let span = g.span();
                let g = g.get_ref();
                let n = topology.links.len();
                let g_ss = Matrix::from_rows(&g.g_ss)
                    .map_err(|e| ctx.err("topology.gains.g_ss", Some(&span), e.to_string()))?;
                let g_ps = if g.g_ps.is_empty() {
                    Matrix::zeros(0, n)
                } else {
                    Matrix::from_rows(&g.g_ps)
                        .map_err(|e| ctx.err("topology.gains.g_ps", Some(&span), e.to_string()))?
                };
                GainMatrices { g_ss, g_ps }
            }
            None => gains_from_positions(
                &topology,
                topo.path_loss_exponent.unwrap_or(3.0),
                topo.reference_distance_m.unwrap_or(1.0),
            )
            .map_err(|e| ctx.err("topology", None, e.to_string()))?,
        };

        if let Some(v) = validate_topology(&topology).into_iter().next() {
            let (key, span) = match v.entity {
                Entity::Topology => ("topology".to_string(), None),
                Entity::Provider(p) | Entity::Channel { provider: p, .. } => (
                    format!("topology.providers[{p}]"),
                    Some(topo.providers[p].span()),
                ),
                Entity::Link(i) => (format!("topology.links[{i}]"), Some(topo.links[i].span())),
                Entity::PrimaryPoint(j) => (
                    format!("topology.primary_points[{j}]"),
                    Some(topo.primary_points[j].span()),
                ),
                Entity::Gains => (
                    "topology.gains".to_string(),
                    topo.gains.as_ref().map(|g| g.span()),
                ),
            };
            return Err(ctx.err(key, span.as_ref(), format!("{}: {}", v.entity, v.rule)));
        }

        let t = &self.traffic;
        let traffic = TrafficSpec {
            arrival_rates: t.arrival_rates.clone(),
            mean_holding_s: t.mean_holding_s,
            horizon_s: t.horizon_s,
            seed: t.seed.unwrap_or(1),
            session_rate_bps: t.session_rate_bps,
        };

        let s = &self.sbac;
        let [b1, b2, b3] = s.beta.unwrap_or([0.5, 0.3, 0.2]);
        let weights =
            SbacWeights::new(b1, b2, b3).map_err(|e| ctx.err("sbac.beta", None, e.to_string()))?;
        let sbac = SbacConfig {
            weights,
            utility: UtilityParams {
                spread_unit: s.spread_unit.unwrap_or(FrequencyUnit::MHz),
                spread_floor: s.spread_floor.unwrap_or(1e-6),
                cost_floor: s.cost_floor.unwrap_or(1e-6),
            },
            session_minutes: s.session_minutes.unwrap_or(1.0),
        };
        if !(sbac.session_minutes > 0.0) {
            return Err(ctx.err("sbac.session_minutes", None, "must be positive"));
        }
        if !(sbac.utility.spread_floor > 0.0 && sbac.utility.cost_floor > 0.0) {
            return Err(ctx.err("sbac", None, "clamps must be positive"));
        }

        let st = &self.strategy;
        let channel_reuse = st.channel_reuse.unwrap_or(false);
        let reuse_limit = st.reuse_limit.unwrap_or(1);
        if reuse_limit == 0 || (!channel_reuse && reuse_limit != 1) {
            return Err(ctx.err(
                "strategy.reuse_limit",
                None,
                "must be 1 without channel reuse and at least 1 with it",
            ));
        }
        let solver = SolverOptions {
            tolerance: st.solver_tolerance.unwrap_or(1e-9),
            max_iterations: st.solver_max_iterations.unwrap_or(10_000),
            patience: st.solver_patience.unwrap_or(50),
        };
        if !(solver.tolerance > 0.0) || solver.max_iterations == 0 || solver.patience == 0 {
            return Err(ctx.err("strategy", None, "solver settings must be positive"));
        }
        if st.min_processing_gain.is_some_and(|g| !(g > 0.0)) {
            return Err(ctx.err("strategy.min_processing_gain", None, "must be positive"));
        }
        let admission = AdmissionConfig {
            physical_checks: st.physical_checks.unwrap_or(false),
            channel_reuse,
            reuse_limit,
            use_processing_gain: st.use_processing_gain.unwrap_or(true),
            min_processing_gain: st.min_processing_gain,
            solver,
        };
        let allocations = st
            .allocations
            .clone()
            .unwrap_or_else(|| vec![AllocationStrategy::Fixed, AllocationStrategy::DynamicSbac]);
        if allocations.is_empty() {
            return Err(ctx.err(
                "strategy.allocations",
                None,
                "at least one strategy is required",
            ));
        }

        validate_scenario(&topology, &traffic, &admission).map_err(|e| match e {
            SimError::InvalidTraffic(t) => ctx.err("traffic", None, t.to_string()),
            other => ctx.err("scenario", None, other.to_string()),
        })?;

        let sweep = match &self.sweep {
            None => None,
            Some(sw) => {
                if sw.values.is_empty() {
                    return Err(ctx.err("sweep.values", None, "must not be empty"));
                }
                let spec = SweepSpec {
                    parameter: sw.parameter,
                    values: sw.values.clone(),
                    seeds_per_point: sw.seeds_per_point.unwrap_or(1),
                };
                if spec.seeds_per_point == 0 {
                    return Err(ctx.err("sweep.seeds_per_point", None, "must be at least 1"));
                }
                Some(spec)
            }
        };

        let scenario = Scenario {
            topology,
            traffic,
            sbac,
            admission,
            allocations,
            sweep,
        };
        if let Some(spec) = &scenario.sweep {
            for v in &spec.values {
                scenario
                    .at_point(spec.parameter, *v)
                    .map_err(|e| ctx.err("sweep.values", None, e.to_string()))?;
            }
        }
        Ok(scenario)
    }
}

/// Resolves a `<name>_w` / `<name>_dbw` pair to linear watts.
fn linear_from_db(
    ctx: &mut Ctx<'_>,
    key: &str,
    span: &Range<usize>,
    name: &str,
    linear: &mut Option<f64>,
    db: &mut Option<f64>,
    required: bool,
) -> Result<(), ConfigError> {
    match (*linear, *db) {
        (Some(_), Some(_)) => Err(ctx.err(
            format!("{key}.{name}_dbw"),
            Some(span),
            format!("give either {name}_w or {name}_dbw, not both"),
        )),
        (None, Some(d)) => {
            *linear = Some(db_to_linear(d));
            *db = None;
            Ok(())
        }
        (None, None) if required => Err(ctx.err(
            format!("{key}.{name}_w"),
            Some(span),
            format!("missing {name}_w (or {name}_dbw)"),
        )),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[topology]
[[topology.providers]]
cost_rate = 1.0
channels = [{ center_hz = 4.0e8, bandwidth_hz = 2.0e5 }]

[traffic]
arrival_rates = [0.0]
mean_holding_s = 1.0
horizon_s = 10.0
session_rate_bps = 1.0e5
"#;

    fn with_link(extra: &str) -> String {
        format!(
            r#"{MINIMAL}
[[topology.links]]
tx = [0.0, 0.0]
rx = [100.0, 0.0]
bandwidth_hz = 1.0e6
rate_bps = 1.0e5
power_max_w = 1.0
sinr_target = 5.0
{extra}
"#
        )
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let (c, defaulted) = ScenarioConfig::parse(MINIMAL).unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.topology.total_channels(), 1);
        assert_eq!(s.traffic.arrival_rates, vec![0.0]);
        assert_eq!(s.sbac.weights, SbacWeights::default());
        assert!(defaulted.contains(&"sbac.beta".to_string()));
        assert!(defaulted.contains(&"strategy.solver_tolerance".to_string()));
        assert_eq!(s.admission.solver, SolverOptions::default());
    }

    #[test]
    fn noise_in_db_becomes_linear() {
        let c = parse_config(&with_link("noise_dbw = -10.0")).unwrap();
        let link = c.topology.links[0].get_ref();
        assert!((link.noise_w.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(link.noise_dbw, None);
    }

    #[test]
    fn inverted_rate_bounds_name_the_link() {
        let text = with_link("noise_w = 0.1\nrate_min_bps = 2.0e5\nrate_max_bps = 1.5e5");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "topology.links[0]");
        assert!(err.message.contains("link 0"), "{err}");
        let header_line = text
            .lines()
            .position(|l| l == "[[topology.links]]")
            .unwrap()
            + 1;
        assert_eq!(err.line, Some(header_line));
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = MINIMAL.replace("horizon_s = 10.0", "horizon_s = 10.0\nhorizonn = 3");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "horizonn");
        assert!(err.line.is_some());
    }

    #[test]
    fn missing_required_key_is_named() {
        let text = MINIMAL.replace("mean_holding_s = 1.0\n", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "mean_holding_s");
    }

    #[test]
    fn target_ber_derives_sinr_target() {
        let text = with_link("noise_w = 0.1").replace(
            "sinr_target = 5.0",
            "modulation = \"bpsk\"\ntarget_ber = 0.0786496",
        );
        let c = parse_config(&text).unwrap();
        let gamma = c.topology.links[0].get_ref().sinr_target.unwrap();
        assert!((gamma - 1.0).abs() < 1e-4, "{gamma}");
    }

    #[test]
    fn ber_without_modulation_is_an_error() {
        let text = with_link("noise_w = 0.1").replace("sinr_target = 5.0", "target_ber = 0.01");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "topology.links[0].target_ber");
    }

    #[test]
    fn conflicting_db_and_linear_values() {
        let err = parse_config(&with_link("noise_w = 0.1\nnoise_dbw = -10.0")).unwrap_err();
        assert_eq!(err.key, "topology.links[0].noise_dbw");
    }

    #[test]
    fn channel_grid_expands() {
        let text = MINIMAL.replace(
            "channels = [{ center_hz = 4.0e8, bandwidth_hz = 2.0e5 }]",
            "channel_count = 3\nfirst_channel_hz = 4.0e8\nchannel_spacing_hz = 1.0e6",
        );
        let c = parse_config(&text).unwrap();
        let s = c.scenario().unwrap();
        let freqs: Vec<f64> = s.topology.providers[0]
            .channels
            .iter()
            .map(|c| c.center_frequency_hz)
            .collect();
        assert_eq!(freqs, vec![4.0e8, 4.01e8, 4.02e8]);
    }

    #[test]
    fn reparse_of_serialized_config_is_equal() {
        let c = parse_config(&with_link("noise_dbw = -10.0")).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.scenario().unwrap(), again.scenario().unwrap());
    }

    #[test]
    fn arrival_rates_must_match_providers() {
        let text = MINIMAL.replace("arrival_rates = [0.0]", "arrival_rates = [0.0, 1.0]");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "scenario");
    }

    #[test]
    fn reuse_limit_without_reuse_is_rejected() {
        let text = format!("{MINIMAL}\n[strategy]\nreuse_limit = 3\n");
        assert_eq!(parse_config(&text).unwrap_err().key, "strategy.reuse_limit");
    }
}
