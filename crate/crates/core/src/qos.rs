//! SINR evaluation, the QoS and primary-interference constraints, BER/SINR
//! mappings and a minimal-power solver for the secondary links.
//!
//! All routines work on a [`LinkSystem`], a flattened view of the links that
//! share a channel together with the primary receiving points they load.
//! [`LinkSystem::from_topology`] builds the view for every link of a
//! topology; the simulator builds smaller views for co-channel sessions.

use thiserror::Error;

use crate::radio::{Matrix, Modulation, NetworkTopology};

#[derive(Debug, Error, PartialEq)]
pub enum QosError {
    #[error("expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("power of link {0} is negative or not finite")]
    InvalidPower(usize),
    #[error("link {0} has zero noise and zero interference")]
    DivisionByZero(usize),
    #[error("no closed-form BER mapping for modulation {0}")]
    UnsupportedMapping(Modulation),
    #[error("target BER {0} outside (0, 0.5)")]
    InvalidBer(f64),
    #[error("no verdict after {iterations} iterations")]
    Indeterminate { iterations: usize, last: Vec<f64> },
}

/// Per-link terms of the SINR equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTerms {
    /// `W / R`, or 1 when processing gain is not applied.
    pub processing_gain: f64,
    pub noise_w: f64,
    pub sinr_target: f64,
    pub power_max_w: f64,
}

/// A set of secondary links plus the primary points they interfere with.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSystem {
    pub links: Vec<LinkTerms>,
    /// `g_ss[(j, i)]`: transmitter of member `i` to receiver of member `j`.
    pub g_ss: Matrix,
    /// `g_ps[(j, i)]`: transmitter of member `i` to primary point `j`.
    pub g_ps: Matrix,
    /// Remaining interference budget per primary point, in watts.
    pub tolerance_w: Vec<f64>,
}

/// A secondary link transmitting at a fixed rate, as seen by the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Member {
    pub link: usize,
    pub rate_bps: f64,
}

impl LinkSystem {
    /// Every link of the topology at its configured rate.
    pub fn from_topology(topology: &NetworkTopology, use_processing_gain: bool) -> Self {
        let members: Vec<Member> = topology
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| Member {
                link: i,
                rate_bps: l.rate_bps,
            })
            .collect();
        let background = vec![0.0; topology.primary_points.len()];
        Self::for_members(topology, &members, use_processing_gain, &background)
    }

    /// A subset of links (repeats allowed) whose primary budgets are reduced
    /// by `background_w`, the load already contributed by transmitters that
    /// are not members.
    pub fn for_members(
        topology: &NetworkTopology,
        members: &[Member],
        use_processing_gain: bool,
        background_w: &[f64],
    ) -> Self {
        let idx: Vec<usize> = members.iter().map(|m| m.link).collect();
        let points: Vec<usize> = (0..topology.primary_points.len()).collect();
        let links = members
            .iter()
            .map(|m| {
                let l = &topology.links[m.link];
                LinkTerms {
                    processing_gain: if use_processing_gain {
                        l.bandwidth_hz / m.rate_bps
                    } else {
                        1.0
                    },
                    noise_w: l.noise_w,
                    sinr_target: l.sinr_target,
                    power_max_w: l.power_max_w,
                }
            })
            .collect();
        LinkSystem {
            links,
            g_ss: topology.gains.g_ss.select(&idx, &idx),
            g_ps: topology.gains.g_ps.select(&points, &idx),
            tolerance_w: topology
                .primary_points
                .iter()
                .zip(background_w)
                .map(|(p, bg)| p.tolerance_w - bg)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub mu: Vec<f64>,
    pub processing_gain: Vec<f64>,
}

/// Effective bit-energy-to-noise density ratio of every link:
///
/// `mu_i = (W/R_i) * g_ii P_i / (sum_{j != i} g_ij P_j + N_i)`
pub fn compute_sinr(system: &LinkSystem, powers: &[f64]) -> Result<SinrReport, QosError> {
    let n = system.len();
    if powers.len() != n {
        return Err(QosError::DimensionMismatch {
            expected: n,
            actual: powers.len(),
        });
    }
    if let Some(i) = powers.iter().position(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(QosError::InvalidPower(i));
    }
    let mut mu = Vec::with_capacity(n);
    for (i, link) in system.links.iter().enumerate() {
        let interference: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| system.g_ss[(i, j)] * powers[j])
            .sum();
        let denom = interference + link.noise_w;
        if denom == 0.0 {
            return Err(QosError::DivisionByZero(i));
        }
        mu.push(link.processing_gain * system.g_ss[(i, i)] * powers[i] / denom);
    }
    Ok(SinrReport {
        mu,
        processing_gain: system.links.iter().map(|l| l.processing_gain).collect(),
    })
}

/// `mu_i >= gamma_i` per link, compared exactly.
pub fn check_qos(report: &SinrReport, system: &LinkSystem) -> Vec<bool> {
    report
        .mu
        .iter()
        .zip(&system.links)
        .map(|(mu, l)| *mu >= l.sinr_target)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceLoad {
    pub load_w: f64,
    pub satisfied: bool,
}

/// Aggregate secondary interference `sum_i g_ps[j][i] P_i` at each primary
/// point against its budget.
pub fn check_interference(system: &LinkSystem, powers: &[f64]) -> Vec<InterferenceLoad> {
    primary_loads(&system.g_ps, powers)
        .into_iter()
        .zip(&system.tolerance_w)
        .map(|(load_w, t)| InterferenceLoad {
            load_w,
            satisfied: load_w <= *t,
        })
        .collect()
}

pub(crate) fn primary_loads(g_ps: &Matrix, powers: &[f64]) -> Vec<f64> {
    (0..g_ps.rows())
        .map(|j| g_ps.row(j).iter().zip(powers).map(|(g, p)| g * p).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Consecutive iterations above a power cap before giving up.
    pub patience: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            max_iterations: 10_000,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    /// Some link needs more than its power cap.
    PowerCap,
    /// The minimal powers overload a primary receiving point.
    Interference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub feasible: bool,
    pub reason: Option<Infeasibility>,
    pub powers: Vec<f64>,
    pub iterations: usize,
    /// Max-norm change of the last fixed-point step.
    pub residual: f64,
}

impl PowerSolution {
    fn verdict(
        reason: Option<Infeasibility>,
        powers: Vec<f64>,
        iterations: usize,
        residual: f64,
    ) -> Self {
        PowerSolution {
            feasible: reason.is_none(),
            reason,
            powers,
            iterations,
            residual,
        }
    }
}

/// Finds the component-wise smallest powers meeting every SINR target.
///
/// Setting `mu_i = gamma_i` gives the linear system `P = F P + u` with
/// `F[i][j] = gamma_i g_ij / (pg_i g_ii)` and `u_i = gamma_i N_i / (pg_i g_ii)`.
/// Both are non-negative, so iterating from zero produces a non-decreasing
/// sequence that converges to the minimal solution when the spectral radius
/// of `F` is below one and diverges otherwise.
pub fn min_power_allocation(
    system: &LinkSystem,
    options: &SolverOptions,
) -> Result<PowerSolution, QosError> {
    let n = system.len();
    let (coupling, offset) = fixed_point_map(system);

    let mut powers = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut over_cap_streak = 0;
    for iteration in 1..=options.max_iterations {
        for i in 0..n {
            next[i] = offset[i]
                + coupling
                    .row(i)
                    .iter()
                    .zip(&powers)
                    .map(|(f, p)| f * p)
                    .sum::<f64>();
        }
        let step = next
            .iter()
            .zip(&powers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut powers, &mut next);

        let over_cap = powers
            .iter()
            .zip(&system.links)
            .any(|(p, l)| *p > l.power_max_w + options.tolerance);
        over_cap_streak = if over_cap { over_cap_streak + 1 } else { 0 };
        if over_cap_streak >= options.patience.max(1) {
            return Ok(PowerSolution::verdict(
                Some(Infeasibility::PowerCap),
                powers,
                iteration,
                step,
            ));
        }

        if step < options.tolerance {
            let within_cap = powers
                .iter()
                .zip(&system.links)
                .all(|(p, l)| *p <= l.power_max_w);
            let reason = if !within_cap {
                Some(Infeasibility::PowerCap)
            } else if check_interference(system, &powers)
                .iter()
                .all(|l| l.satisfied)
            {
                None
            } else {
                Some(Infeasibility::Interference)
            };
            return Ok(PowerSolution::verdict(reason, powers, iteration, step));
        }
    }
    Err(QosError::Indeterminate {
        iterations: options.max_iterations,
        last: powers,
    })
}

/// The coupling matrix `F` and offset `u` of the minimal-power fixed point.
pub fn fixed_point_map(system: &LinkSystem) -> (Matrix, Vec<f64>) {
    let n = system.len();
    let mut coupling = Matrix::zeros(n, n);
    let mut offset = vec![0.0; n];
    for (i, link) in system.links.iter().enumerate() {
        let scale = link.sinr_target / (link.processing_gain * system.g_ss[(i, i)]);
        for j in (0..n).filter(|&j| j != i) {
            coupling[(i, j)] = scale * system.g_ss[(i, j)];
        }
        offset[i] = scale * link.noise_w;
    }
    (coupling, offset)
}

/// Gaussian tail probability `Q(x) = P[Z > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Bit error rate at SINR `gamma`: `Q(sqrt(2 gamma))` for BPSK and
/// `Q(sqrt(gamma))` for QPSK.
pub fn ber_from_sinr(modulation: Modulation, gamma: f64) -> Result<f64, QosError> {
    let gamma = gamma.max(0.0);
    match modulation {
        Modulation::Bpsk => Ok(q_function((2.0 * gamma).sqrt())),
        Modulation::Qpsk => Ok(q_function(gamma.sqrt())),
        Modulation::None => Err(QosError::UnsupportedMapping(modulation)),
    }
}

/// Inverts [`ber_from_sinr`] by bisection on the decreasing BER curve.
pub fn sinr_target_from_ber(modulation: Modulation, target_ber: f64) -> Result<f64, QosError> {
    if modulation == Modulation::None {
        return Err(QosError::UnsupportedMapping(modulation));
    }
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(QosError::InvalidBer(target_ber));
    }
    let ber = |g: f64| ber_from_sinr(modulation, g).expect("modulation checked above");

    let mut lo = 0.0;
    let mut hi = 1.0;
    while ber(hi) > target_ber {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let b = ber(mid);
        if b == target_ber {
            return Ok(mid);
        }
        if b > target_ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // closest bracket end
    if (ber(lo) - target_ber).abs() < (ber(hi) - target_ber).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}
