//! Event-driven loss-system simulator.
//!
//! Arrivals are served in time order. Departures due at or before an arrival
//! instant are processed first. A blocked request is lost; there is no
//! queueing and no retry, so every session starts the instant it arrives or
//! not at all.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, MetricsReport, TraceSegment};
use crate::qos::{
    min_power_allocation, primary_loads, Infeasibility, LinkSystem, Member, SolverOptions,
};
use crate::radio::{validate_topology, NetworkTopology, Violation};
use crate::sbac::{select_best_channel, CandidatePool, SbacWeights, UtilityParams};
use crate::traffic::{build_event_stream, ArrivalEvent, TrafficError, TrafficSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid topology: {}", join(.0))]
    InvalidTopology(Vec<Violation>),
    #[error("invalid traffic: {0}")]
    InvalidTraffic(#[from] TrafficError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("simulator consistency error: {0}")]
    Consistency(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AllocationStrategy {
    /// Sessions may only use their home provider's band.
    Fixed,
    /// Sessions may use any provider's band, chosen by SBAC utility.
    DynamicSbac,
}

impl AllocationStrategy {
    pub fn name(self) -> &'static str {
        match self {
            AllocationStrategy::Fixed => "FIXED",
            AllocationStrategy::DynamicSbac => "DYNAMIC_SBAC",
        }
    }
}

impl fmt::Display for AllocationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbacConfig {
    pub weights: SbacWeights,
    pub utility: UtilityParams,
    /// Session length `t` used to price a candidate pool.
    pub session_minutes: f64,
}

impl Default for SbacConfig {
    fn default() -> Self {
        SbacConfig {
            weights: SbacWeights::default(),
            utility: UtilityParams::default(),
            session_minutes: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionConfig {
    /// Run power control and primary-interference checks on admission.
    pub physical_checks: bool,
    /// Let several sessions share one channel of a provider's band.
    pub channel_reuse: bool,
    /// Sessions per channel when reuse is on.
    pub reuse_limit: usize,
    pub use_processing_gain: bool,
    pub min_processing_gain: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        AdmissionConfig {
            physical_checks: false,
            channel_reuse: false,
            reuse_limit: 1,
            use_processing_gain: true,
            min_processing_gain: None,
            solver: SolverOptions::default(),
        }
    }
}

impl AdmissionConfig {
    pub fn channel_capacity(&self) -> usize {
        if self.channel_reuse {
            self.reuse_limit
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelAssignment {
    pub provider: usize,
    pub channel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Admitted,
    BlockedNoChannel,
    BlockedQos,
    BlockedInterference,
}

impl Outcome {
    pub fn is_blocked(self) -> bool {
        self != Outcome::Admitted
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Admitted => "ADMITTED",
            Outcome::BlockedNoChannel => "BLOCKED_NO_CHANNEL",
            Outcome::BlockedQos => "BLOCKED_QOS",
            Outcome::BlockedInterference => "BLOCKED_INTERFERENCE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub id: usize,
    pub home_provider: usize,
    pub link: Option<usize>,
    pub arrival_time: f64,
    pub start_time: f64,
    /// `start_time + holding_time` when admitted, the arrival time otherwise.
    pub end_time: f64,
    pub assignment: Option<ChannelAssignment>,
    pub rate_bps: f64,
    /// Transmit power at admission.
    pub power_w: f64,
    pub outcome: Outcome,
    pub tx_rx_distance_m: f64,
}

/// Channel holders per provider band and the busy-channel time integral.
#[derive(Debug, Clone)]
pub struct OccupancyState {
    holders: Vec<Vec<Vec<usize>>>,
    busy: Vec<usize>,
    capacity: usize,
    clock: f64,
    busy_integral: f64,
    placement: HashMap<usize, ChannelAssignment>,
}

impl OccupancyState {
    pub fn new(topology: &NetworkTopology, capacity: usize) -> Self {
        OccupancyState {
            holders: topology
                .providers
                .iter()
                .map(|p| vec![Vec::new(); p.channels.len()])
                .collect(),
            busy: vec![0; topology.providers.len()],
            capacity: capacity.max(1),
            clock: 0.0,
            busy_integral: 0.0,
            placement: HashMap::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Busy channel-seconds accumulated up to [`Self::clock`].
    pub fn busy_integral(&self) -> f64 {
        self.busy_integral
    }

    pub fn busy_channels(&self) -> usize {
        self.busy.iter().sum()
    }

    pub fn busy_in_provider(&self, provider: usize) -> usize {
        self.busy[provider]
    }

    pub fn total_channels(&self) -> usize {
        self.holders.iter().map(Vec::len).sum()
    }

    pub fn active_sessions(&self) -> usize {
        self.placement.len()
    }

    pub fn holders(&self, at: ChannelAssignment) -> &[usize] {
        &self.holders[at.provider][at.channel]
    }

    pub fn is_available(&self, at: ChannelAssignment) -> bool {
        self.holders(at).len() < self.capacity
    }

    pub fn placement(&self, session: usize) -> Option<ChannelAssignment> {
        self.placement.get(&session).copied()
    }

    pub fn advance_to(&mut self, time: f64) -> Result<(), SimError> {
        if time < self.clock {
            return Err(SimError::Consistency(format!(
                "clock moved backwards from {} to {time}",
                self.clock
            )));
        }
        self.busy_integral += self.busy_channels() as f64 * (time - self.clock);
        self.clock = time;
        Ok(())
    }

    pub fn occupy(
        &mut self,
        session: usize,
        at: ChannelAssignment,
        time: f64,
    ) -> Result<(), SimError> {
        self.advance_to(time)?;
        if self.placement.contains_key(&session) {
            return Err(SimError::Consistency(format!(
                "session {session} already holds a channel"
            )));
        }
        if !self.is_available(at) {
            return Err(SimError::Consistency(format!(
                "provider {} channel {} is full",
                at.provider, at.channel
            )));
        }
        let slot = &mut self.holders[at.provider][at.channel];
        if slot.is_empty() {
            self.busy[at.provider] += 1;
        }
        slot.push(session);
        self.placement.insert(session, at);
        Ok(())
    }

    pub fn release(&mut self, session: usize, time: f64) -> Result<ChannelAssignment, SimError> {
        self.advance_to(time)?;
        let at = self
            .placement
            .remove(&session)
            .ok_or_else(|| SimError::Consistency(format!("session {session} holds no channel")))?;
        let slot = &mut self.holders[at.provider][at.channel];
        slot.retain(|&s| s != session);
        if slot.is_empty() {
            self.busy[at.provider] -= 1;
        }
        Ok(at)
    }

    /// Exhaustive consistency check of the occupancy bookkeeping.
    pub fn audit(&self) -> Result<(), SimError> {
        let mut seen = 0;
        for (p, band) in self.holders.iter().enumerate() {
            let busy = band.iter().filter(|h| !h.is_empty()).count();
            if busy != self.busy[p] {
                return Err(SimError::Consistency(format!(
                    "provider {p} busy count {} but {busy} channels held",
                    self.busy[p]
                )));
            }
            for (c, h) in band.iter().enumerate() {
                if h.len() > self.capacity {
                    return Err(SimError::Consistency(format!(
                        "provider {p} channel {c} held by {} sessions",
                        h.len()
                    )));
                }
                for s in h {
                    seen += 1;
                    let at = ChannelAssignment {
                        provider: p,
                        channel: c,
                    };
                    if self.placement.get(s) != Some(&at) {
                        return Err(SimError::Consistency(format!(
                            "session {s} on provider {p} channel {c} is misplaced"
                        )));
                    }
                }
            }
        }
        if seen != self.placement.len() {
            return Err(SimError::Consistency("placement map out of sync".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ActiveSession {
    link: Option<usize>,
    rate_bps: f64,
    power_w: f64,
    assignment: ChannelAssignment,
}

/// Admission and release logic over a shared occupancy state.
pub struct Simulator<'a> {
    topology: &'a NetworkTopology,
    strategy: AllocationStrategy,
    sbac: &'a SbacConfig,
    admission: &'a AdmissionConfig,
    occupancy: OccupancyState,
    active: BTreeMap<usize, ActiveSession>,
    links_by_provider: Vec<Vec<usize>>,
    trace: Vec<TraceSegment>,
    trace_start: f64,
    loads: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        topology: &'a NetworkTopology,
        strategy: AllocationStrategy,
        sbac: &'a SbacConfig,
        admission: &'a AdmissionConfig,
    ) -> Self {
        let mut links_by_provider = vec![Vec::new(); topology.providers.len()];
        for (i, l) in topology.links.iter().enumerate() {
            links_by_provider[l.home_provider].push(i);
        }
        Simulator {
            topology,
            strategy,
            sbac,
            admission,
            occupancy: OccupancyState::new(topology, admission.channel_capacity()),
            active: BTreeMap::new(),
            links_by_provider,
            trace: Vec::new(),
            trace_start: 0.0,
            loads: vec![0.0; topology.primary_points.len()],
        }
    }

    pub fn occupancy(&self) -> &OccupancyState {
        &self.occupancy
    }

    /// Current transmit power of an active session.
    pub fn session_power(&self, session: usize) -> Option<f64> {
        self.active.get(&session).map(|s| s.power_w)
    }

    fn pick_link(&self, event: &ArrivalEvent) -> Option<usize> {
        let candidates = &self.links_by_provider[event.home_provider];
        if candidates.is_empty() {
            return None;
        }
        let k = ((event.user_draw * candidates.len() as f64) as usize).min(candidates.len() - 1);
        Some(candidates[k])
    }

    fn candidate_pools(&self, home: usize) -> Vec<CandidatePool> {
        let providers: Vec<usize> = match self.strategy {
            AllocationStrategy::Fixed => vec![home],
            AllocationStrategy::DynamicSbac => (0..self.topology.providers.len()).collect(),
        };
        providers
            .into_iter()
            .map(|p| {
                let provider = &self.topology.providers[p];
                CandidatePool {
                    provider_id: p,
                    available: provider
                        .channels
                        .iter()
                        .filter(|c| {
                            self.occupancy.is_available(ChannelAssignment {
                                provider: p,
                                channel: c.id,
                            })
                        })
                        .copied()
                        .collect(),
                    total_channels: provider.channels.len(),
                    session_minutes: self.sbac.session_minutes,
                    cost_rate: provider.cost_rate,
                }
            })
            .collect()
    }

    /// Co-channel sessions ordered by id, and the primary load contributed
    /// by everyone else.
    fn co_channel(&self, at: ChannelAssignment, exclude: Option<usize>) -> (Vec<usize>, Vec<f64>) {
        let members: Vec<usize> = self
            .occupancy
            .holders(at)
            .iter()
            .copied()
            .filter(|s| Some(*s) != exclude)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut background = vec![0.0; self.topology.primary_points.len()];
        for (id, s) in &self.active {
            if s.assignment == at || Some(*id) == exclude {
                continue;
            }
            if let Some(link) = s.link {
                for (j, b) in background.iter_mut().enumerate() {
                    *b += self.topology.gains.g_ps[(j, link)] * s.power_w;
                }
            }
        }
        (members, background)
    }

    fn solve(&self, members: &[Member], background: &[f64]) -> Result<Vec<f64>, Infeasibility> {
        let system = LinkSystem::for_members(
            self.topology,
            members,
            self.admission.use_processing_gain,
            background,
        );
        match min_power_allocation(&system, &self.admission.solver) {
            Ok(sol) if sol.feasible => Ok(sol.powers),
            Ok(sol) => Err(sol.reason.unwrap_or(Infeasibility::PowerCap)),
            // a verdict that never arrives means the coupling is critical
            Err(_) => Err(Infeasibility::PowerCap),
        }
    }

    /// Decides one arrival and, if admitted, seizes its channel.
    pub fn admit_session(
        &mut self,
        id: usize,
        event: &ArrivalEvent,
    ) -> Result<SessionRecord, SimError> {
        self.occupancy.advance_to(event.time)?;
        let link = self.pick_link(event);
        let link_ref = link.map(|l| &self.topology.links[l]);
        let rate_bps = link_ref.map_or(event.requested_rate_bps, |l| {
            l.clamp_rate(event.requested_rate_bps)
        });
        let mut record = SessionRecord {
            id,
            home_provider: event.home_provider,
            link,
            arrival_time: event.time,
            start_time: event.time,
            end_time: event.time,
            assignment: None,
            rate_bps,
            power_w: 0.0,
            outcome: Outcome::BlockedNoChannel,
            tx_rx_distance_m: link_ref.map_or(0.0, |l| l.length()),
        };

        let pools = self.candidate_pools(event.home_provider);
        let Ok(selection) = select_best_channel(&pools, &self.sbac.weights, &self.sbac.utility)
        else {
            return Ok(record);
        };
        let at = ChannelAssignment {
            provider: selection.provider_id,
            channel: selection.channel_id,
        };

        let mut updated: Vec<(usize, f64)> = Vec::new();
        let power_w = if !self.admission.physical_checks {
            link_ref.map_or(0.0, |l| l.power_w)
        } else {
            let (Some(link), Some(l)) = (link, link_ref) else {
                record.outcome = Outcome::BlockedQos;
                return Ok(record);
            };
            let gain_ok = self.admission.min_processing_gain.is_none_or(|min| {
                !self.admission.use_processing_gain || l.bandwidth_hz / rate_bps >= min
            });
            if !gain_ok {
                record.outcome = Outcome::BlockedQos;
                return Ok(record);
            }
            let (existing, background) = self.co_channel(at, None);
            let mut members: Vec<Member> = existing
                .iter()
                .map(|s| {
                    let a = &self.active[s];
                    Member {
                        link: a.link.expect("physical admission requires a link"),
                        rate_bps: a.rate_bps,
                    }
                })
                .collect();
            members.push(Member { link, rate_bps });
            match self.solve(&members, &background) {
                Ok(powers) => {
                    updated = existing
                        .iter()
                        .copied()
                        .zip(powers.iter().copied())
                        .collect();
                    powers[powers.len() - 1]
                }
                Err(Infeasibility::PowerCap) => {
                    record.outcome = Outcome::BlockedQos;
                    return Ok(record);
                }
                Err(Infeasibility::Interference) => {
                    record.outcome = Outcome::BlockedInterference;
                    return Ok(record);
                }
            }
        };

        self.occupancy.occupy(id, at, event.time)?;
        for (s, p) in updated {
            if let Some(a) = self.active.get_mut(&s) {
                a.power_w = p;
            }
        }
        self.active.insert(
            id,
            ActiveSession {
                link,
                rate_bps,
                power_w,
                assignment: at,
            },
        );
        self.refresh_trace(event.time);

        record.outcome = Outcome::Admitted;
        record.assignment = Some(at);
        record.power_w = power_w;
        record.end_time = event.time + event.holding_time;
        Ok(record)
    }

    /// Frees a session's channel at `time`.
    pub fn release_session(&mut self, id: usize, time: f64) -> Result<(), SimError> {
        let at = self.occupancy.release(id, time)?;
        self.active
            .remove(&id)
            .ok_or_else(|| SimError::Consistency(format!("session {id} was not active")))?;

        // remaining co-channel sessions can back off to their new minimum
        if self.admission.physical_checks && self.admission.channel_reuse {
            let (remaining, background) = self.co_channel(at, Some(id));
            if !remaining.is_empty() {
                let members: Vec<Member> = remaining
                    .iter()
                    .filter_map(|s| {
                        let a = &self.active[s];
                        a.link.map(|link| Member {
                            link,
                            rate_bps: a.rate_bps,
                        })
                    })
                    .collect();
                if members.len() == remaining.len() {
                    if let Ok(powers) = self.solve(&members, &background) {
                        for (s, p) in remaining.iter().zip(powers) {
                            if let Some(a) = self.active.get_mut(s) {
                                a.power_w = p;
                            }
                        }
                    }
                }
            }
        }
        self.refresh_trace(time);
        Ok(())
    }

    fn current_loads(&self) -> Vec<f64> {
        let mut links = Vec::new();
        let mut powers = Vec::new();
        for s in self.active.values() {
            if let Some(l) = s.link {
                links.push(l);
                powers.push(s.power_w);
            }
        }
        let points: Vec<usize> = (0..self.topology.primary_points.len()).collect();
        primary_loads(&self.topology.gains.g_ps.select(&points, &links), &powers)
    }

    fn refresh_trace(&mut self, time: f64) {
        if self.loads.is_empty() {
            return;
        }
        let loads = self.current_loads();
        if loads != self.loads {
            if time > self.trace_start {
                self.trace.push(TraceSegment {
                    start: self.trace_start,
                    end: time,
                    loads_w: std::mem::take(&mut self.loads),
                });
                self.trace_start = time;
            }
            self.loads = loads;
        }
    }

    /// Closes the occupancy integral and the interference trace at `horizon`.
    pub fn finish(
        mut self,
        horizon_s: f64,
    ) -> Result<(OccupancyState, Vec<TraceSegment>), SimError> {
        self.occupancy.advance_to(horizon_s)?;
        self.trace.push(TraceSegment {
            start: self.trace_start,
            end: horizon_s,
            loads_w: self.loads,
        });
        Ok((self.occupancy, self.trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Departure {
    time: f64,
    session: usize,
}

impl Eq for Departure {}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Departure {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.session.cmp(&other.session))
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub records: Vec<SessionRecord>,
    pub metrics: MetricsReport,
    pub busy_channel_seconds: f64,
    pub interference_trace: Vec<TraceSegment>,
}

/// Checks that a scenario can be simulated at all.
pub fn validate_scenario(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    admission: &AdmissionConfig,
) -> Result<(), SimError> {
    let violations = validate_topology(topology);
    if !violations.is_empty() {
        return Err(SimError::InvalidTopology(violations));
    }
    traffic.validate()?;
    if traffic.arrival_rates.len() != topology.providers.len() {
        return Err(SimError::InvalidScenario(format!(
            "{} arrival rates for {} providers",
            traffic.arrival_rates.len(),
            topology.providers.len()
        )));
    }
    if admission.channel_reuse && admission.reuse_limit == 0 {
        return Err(SimError::InvalidScenario(
            "reuse limit must be at least 1".into(),
        ));
    }
    if admission.physical_checks {
        for (p, rate) in traffic.arrival_rates.iter().enumerate() {
            if *rate > 0.0 && !topology.links.iter().any(|l| l.home_provider == p) {
                return Err(SimError::InvalidScenario(format!(
                    "physical checks need at least one link homed on provider {p}"
                )));
            }
        }
    }
    Ok(())
}

/// Runs one replication of the loss system over `[0, horizon)`.
pub fn run_simulation(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    strategy: AllocationStrategy,
    sbac: &SbacConfig,
    admission: &AdmissionConfig,
) -> Result<SimulationOutput, SimError> {
    validate_scenario(topology, traffic, admission)?;
    let events = build_event_stream(traffic)?;
    let horizon = traffic.horizon_s;

    let mut sim = Simulator::new(topology, strategy, sbac, admission);
    let mut departures: BinaryHeap<Reverse<Departure>> = BinaryHeap::new();
    let mut records = Vec::with_capacity(events.len());

    for (id, event) in events.iter().enumerate() {
        while let Some(Reverse(d)) = departures.peek().copied() {
            if d.time > event.time {
                break;
            }
            departures.pop();
            sim.release_session(d.session, d.time)?;
            #[cfg(debug_assertions)]
            sim.occupancy.audit()?;
        }
        let record = sim.admit_session(id, event)?;
        #[cfg(debug_assertions)]
        sim.occupancy.audit()?;
        if record.outcome == Outcome::Admitted {
            departures.push(Reverse(Departure {
                time: record.end_time,
                session: id,
            }));
        }
        records.push(record);
    }
    while let Some(Reverse(d)) = departures.pop() {
        if d.time > horizon {
            break;
        }
        sim.release_session(d.session, d.time)?;
    }

    let (occupancy, trace) = sim.finish(horizon)?;
    let metrics = MetricsReport::from_run(
        &records,
        occupancy.busy_integral(),
        occupancy.total_channels(),
        &trace,
        horizon,
        topology.propagation_speed_mps,
    )?;
    Ok(SimulationOutput {
        records,
        metrics,
        busy_channel_seconds: occupancy.busy_integral(),
        interference_trace: trace,
    })
}
