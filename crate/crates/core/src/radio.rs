//! Static description of a shared-spectrum scenario: service providers with
//! channelized bands, secondary links, primary receiving points and the
//! channel gains between them.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("degenerate geometry: {0} has zero separation")]
    DegenerateGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix rows have unequal lengths")]
    RaggedMatrix,
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from nested rows. A matrix with zero rows has zero
    /// columns unless `cols` is given explicitly through [`Matrix::zeros`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, RadioError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(RadioError::RaggedMatrix);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }

    /// Submatrix picking `rows` and `cols` by index. Indices may repeat.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (oi, &i) in rows.iter().enumerate() {
            for (oj, &j) in cols.iter().enumerate() {
                out[(oi, oj)] = self[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumChannel {
    pub id: usize,
    pub center_frequency_hz: f64,
    pub bandwidth_hz: f64,
}

/// A licensed operator owning one channelized band.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceProvider {
    pub id: usize,
    pub channels: Vec<SpectrumChannel>,
    /// Usage price per minute of airtime.
    pub cost_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
    None,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::None => "none",
        })
    }
}

/// A transmitter/receiver pair of the secondary (unlicensed) system.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryLink {
    pub id: usize,
    /// Base station whose users are served over this link.
    pub home_provider: usize,
    pub tx: Position,
    pub rx: Position,
    /// Spread bandwidth `W`.
    pub bandwidth_hz: f64,
    pub rate_bps: f64,
    pub rate_min_bps: f64,
    pub rate_max_bps: f64,
    /// Nominal transmit power, used when admission skips power control.
    pub power_w: f64,
    pub power_max_w: f64,
    pub noise_w: f64,
    /// Minimum SINR `γ` for the link's BER requirement.
    pub sinr_target: f64,
    pub modulation: Modulation,
    pub target_ber: Option<f64>,
}

impl SecondaryLink {
    pub fn length(&self) -> f64 {
        self.tx.distance(&self.rx)
    }

    /// Clamps a requested rate into this link's allowable range.
    pub fn clamp_rate(&self, rate_bps: f64) -> f64 {
        rate_bps.clamp(self.rate_min_bps, self.rate_max_bps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryReceivingPoint {
    pub id: usize,
    pub position: Position,
    /// Maximum aggregate secondary interference tolerated, in watts.
    pub tolerance_w: f64,
}

/// `g_ss[(j, i)]` is the gain from the transmitter of secondary link `i` to
/// the receiver of secondary link `j`; `g_ps[(j, i)]` the gain from the
/// transmitter of link `i` to primary receiving point `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrices {
    pub g_ss: Matrix,
    pub g_ps: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub providers: Vec<ServiceProvider>,
    pub links: Vec<SecondaryLink>,
    pub primary_points: Vec<PrimaryReceivingPoint>,
    pub gains: GainMatrices,
    pub propagation_speed_mps: f64,
}

impl NetworkTopology {
    pub fn total_channels(&self) -> usize {
        self.providers.iter().map(|p| p.channels.len()).sum()
    }

    /// Restricts the topology to the given links (in the given order),
    /// renumbering link ids and slicing the gain matrices to match.
    pub fn with_links(&self, keep: &[usize]) -> NetworkTopology {
        let links = keep
            .iter()
            .enumerate()
            .map(|(new_id, &i)| SecondaryLink {
                id: new_id,
                ..self.links[i].clone()
            })
            .collect();
        let all_points: Vec<usize> = (0..self.primary_points.len()).collect();
        NetworkTopology {
            providers: self.providers.clone(),
            links,
            primary_points: self.primary_points.clone(),
            gains: GainMatrices {
                g_ss: self.gains.g_ss.select(keep, keep),
                g_ps: self.gains.g_ps.select(&all_points, keep),
            },
            propagation_speed_mps: self.propagation_speed_mps,
        }
    }
}

/// Power-law path gain `min(1, (d / d0)^-n)`.
pub fn path_gain(distance: f64, path_loss_exponent: f64, reference_distance: f64) -> f64 {
    (distance / reference_distance)
        .powf(-path_loss_exponent)
        .min(1.0)
}

/// Derives both gain matrices from node positions with a power-law path
/// loss model clamped at unity gain.
pub fn gains_from_positions(
    topology: &NetworkTopology,
    path_loss_exponent: f64,
    reference_distance: f64,
) -> Result<GainMatrices, RadioError> {
    if !(path_loss_exponent >= 2.0) {
        return Err(RadioError::InvalidParameter(format!(
            "path loss exponent {path_loss_exponent} must be at least 2"
        )));
    }
    if !(reference_distance > 0.0) {
        return Err(RadioError::InvalidParameter(format!(
            "reference distance {reference_distance} must be positive"
        )));
    }
    let n = topology.links.len();
    let m = topology.primary_points.len();
    let gain = |d: f64, what: &dyn Fn() -> String| {
        if d > 0.0 {
            Ok(path_gain(d, path_loss_exponent, reference_distance))
        } else {
            Err(RadioError::DegenerateGeometry(what()))
        }
    };

    let mut g_ss = Matrix::zeros(n, n);
    for (j, rx_link) in topology.links.iter().enumerate() {
        for (i, tx_link) in topology.links.iter().enumerate() {
            let d = tx_link.tx.distance(&rx_link.rx);
            g_ss[(j, i)] = gain(d, &|| format!("link {i} transmitter / link {j} receiver"))?;
        }
    }
    let mut g_ps = Matrix::zeros(m, n);
    for (j, point) in topology.primary_points.iter().enumerate() {
        for (i, tx_link) in topology.links.iter().enumerate() {
            let d = tx_link.tx.distance(&point.position);
            g_ps[(j, i)] = gain(d, &|| format!("link {i} transmitter / primary point {j}"))?;
        }
    }
    Ok(GainMatrices { g_ss, g_ps })
}

/// What a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    Topology,
    Provider(usize),
    Channel { provider: usize, channel: usize },
    Link(usize),
    PrimaryPoint(usize),
    Gains,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Topology => write!(f, "topology"),
            Entity::Provider(p) => write!(f, "provider {p}"),
            Entity::Channel { provider, channel } => {
                write!(f, "provider {provider} channel {channel}")
            }
            Entity::Link(i) => write!(f, "link {i}"),
            Entity::PrimaryPoint(j) => write!(f, "primary point {j}"),
            Entity::Gains => write!(f, "gain matrices"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: Entity,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Checks every structural invariant of a topology. An empty result means
/// the topology is safe to hand to the QoS engine and the simulator.
pub fn validate_topology(topology: &NetworkTopology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |entity: Entity, ok: bool, rule: &str| {
        if !ok {
            out.push(Violation {
                entity,
                rule: rule.to_string(),
            });
        }
    };

    flag(
        Entity::Topology,
        topology.propagation_speed_mps > 0.0 && topology.propagation_speed_mps.is_finite(),
        "propagation speed must be positive",
    );
    flag(
        Entity::Topology,
        !topology.providers.is_empty(),
        "at least one provider is required",
    );

    for (p, provider) in topology.providers.iter().enumerate() {
        let e = Entity::Provider(p);
        flag(
            e,
            provider.id == p,
            "provider ids must be their ordinal index",
        );
        flag(
            e,
            !provider.channels.is_empty(),
            "provider owns no channels",
        );
        flag(
            e,
            provider.cost_rate >= 0.0,
            "cost rate must be non-negative",
        );
        let mut seen = HashSet::new();
        for (c, ch) in provider.channels.iter().enumerate() {
            let e = Entity::Channel {
                provider: p,
                channel: c,
            };
            flag(
                e,
                seen.insert(ch.id),
                "channel id is not unique within provider",
            );
            flag(e, ch.id == c, "channel ids must be their ordinal index");
            flag(e, ch.bandwidth_hz > 0.0, "bandwidth must be positive");
            flag(
                e,
                ch.center_frequency_hz > 0.0,
                "center frequency must be positive",
            );
        }
    }

    for (i, link) in topology.links.iter().enumerate() {
        let e = Entity::Link(i);
        flag(e, link.id == i, "link ids must be their ordinal index");
        flag(
            e,
            link.home_provider < topology.providers.len(),
            "home provider does not exist",
        );
        flag(e, link.bandwidth_hz > 0.0, "bandwidth W must be positive");
        flag(
            e,
            0.0 < link.rate_min_bps && link.rate_min_bps <= link.rate_max_bps,
            "rate bounds must satisfy 0 < rate_min <= rate_max",
        );
        flag(
            e,
            link.rate_min_bps <= link.rate_bps && link.rate_bps <= link.rate_max_bps,
            "rate must lie within [rate_min, rate_max]",
        );
        flag(
            e,
            0.0 <= link.power_w && link.power_w <= link.power_max_w,
            "power must satisfy 0 <= power <= power_max",
        );
        flag(e, link.noise_w > 0.0, "noise power must be positive");
        flag(e, link.sinr_target > 0.0, "SINR target must be positive");
        if let Some(ber) = link.target_ber {
            flag(
                e,
                ber > 0.0 && ber <= 0.5,
                "target BER must lie in (0, 0.5]",
            );
        }
    }

    for (j, point) in topology.primary_points.iter().enumerate() {
        let e = Entity::PrimaryPoint(j);
        flag(
            e,
            point.id == j,
            "primary point ids must be their ordinal index",
        );
        flag(
            e,
            point.tolerance_w >= 0.0,
            "interference tolerance must be non-negative",
        );
    }

    let n = topology.links.len();
    let m = topology.primary_points.len();
    let g = &topology.gains;
    let dims_ok = g.g_ss.rows() == n
        && g.g_ss.cols() == n
        && g.g_ps.rows() == m
        && (g.g_ps.cols() == n || m == 0);
    flag(
        Entity::Gains,
        dims_ok,
        "gain matrix dimensions do not match links and primary points",
    );
    flag(
        Entity::Gains,
        g.g_ss
            .iter()
            .chain(g.g_ps.iter())
            .all(|x| *x >= 0.0 && x.is_finite()),
        "gain entries must be finite and non-negative",
    );
    if dims_ok {
        flag(
            Entity::Gains,
            (0..n).all(|i| g.g_ss[(i, i)] > 0.0),
            "g_ss diagonal must be strictly positive",
        );
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn single_pair(d: f64) -> NetworkTopology {
        let mut t = two_provider();
        t.links = vec![link(0, Position::new(0.0, 0.0), Position::new(d, 0.0))];
        t.primary_points.clear();
        t
    }

    #[test]
    fn gain_at_reference_distance_is_unity() {
        let g = gains_from_positions(&single_pair(10.0), 3.0, 10.0).unwrap();
        assert_eq!(g.g_ss[(0, 0)], 1.0);
    }

    #[test]
    fn gain_at_double_reference_distance() {
        let g = gains_from_positions(&single_pair(20.0), 3.0, 10.0).unwrap();
        assert!((g.g_ss[(0, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gain_clamps_inside_reference_distance() {
        let g = gains_from_positions(&single_pair(5.0), 3.0, 10.0).unwrap();
        assert_eq!(g.g_ss[(0, 0)], 1.0);
    }

    #[test]
    fn coincident_nodes_are_rejected() {
        let err = gains_from_positions(&single_pair(0.0), 3.0, 1.0).unwrap_err();
        assert!(matches!(err, RadioError::DegenerateGeometry(_)));
    }

    #[test]
    fn exponent_below_two_is_rejected() {
        assert!(gains_from_positions(&single_pair(5.0), 1.5, 1.0).is_err());
    }

    #[test]
    fn well_formed_topology_has_no_violations() {
        assert_eq!(validate_topology(&two_provider()), vec![]);
    }

    #[test]
    fn inverted_rate_bounds_name_the_link() {
        let mut t = two_provider();
        t.links[1].rate_min_bps = 2e6;
        let v = validate_topology(&t);
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.entity == Entity::Link(1)));
        assert!(v.iter().any(|v| v.rule.contains("rate_min <= rate_max")));
    }

    #[test]
    fn zero_diagonal_gain_is_one_violation() {
        let mut t = two_provider();
        t.gains.g_ss[(1, 1)] = 0.0;
        let v = validate_topology(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, Entity::Gains);
    }

    #[test]
    fn mismatched_gain_dimensions_are_reported() {
        let mut t = two_provider();
        t.gains.g_ss = Matrix::zeros(3, 3);
        assert!(validate_topology(&t)
            .iter()
            .any(|v| v.rule.contains("dimensions")));
    }

    #[test]
    fn with_links_slices_gains() {
        let t = two_provider();
        let sub = t.with_links(&[1]);
        assert_eq!(sub.links.len(), 1);
        assert_eq!(sub.links[0].id, 0);
        assert_eq!(sub.gains.g_ss[(0, 0)], t.gains.g_ss[(1, 1)]);
        assert_eq!(sub.gains.g_ps[(0, 0)], t.gains.g_ps[(0, 1)]);
        assert!(validate_topology(&sub).is_empty());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert_eq!(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(RadioError::RaggedMatrix)
        );
    }
}
