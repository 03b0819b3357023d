//! Selection of Best Available Channel.
//!
//! Each candidate pool (the free channels a provider can offer right now) is
//! scored as
//!
//! ```text
//! ch_u = 10 * b1 * prob + b2 * ln(1 / inter) + b3 / cost
//! ```
//!
//! where `prob` is the free fraction of the pool, `inter` the spread between
//! the highest and lowest free center frequency and `cost = t * 60 * c` the
//! price of a `t`-minute session at rate `c`. The pool with the largest
//! utility wins and its lowest-numbered free channel is assigned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::SpectrumChannel;

#[derive(Debug, Error, PartialEq)]
pub enum SbacError {
    #[error("no candidate pool has a free channel")]
    NoCandidate,
    #[error("invalid SBAC weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbacWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl SbacWeights {
    pub fn new(beta1: f64, beta2: f64, beta3: f64) -> Result<Self, SbacError> {
        let w = SbacWeights {
            beta1,
            beta2,
            beta3,
        };
        if [beta1, beta2, beta3]
            .iter()
            .any(|b| !(*b >= 0.0 && b.is_finite()))
        {
            return Err(SbacError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if beta1 + beta2 + beta3 <= 0.0 {
            return Err(SbacError::InvalidWeights(
                "weights must not all be zero".into(),
            ));
        }
        Ok(w)
    }

    pub fn scaled(&self, k: f64) -> Self {
        SbacWeights {
            beta1: self.beta1 * k,
            beta2: self.beta2 * k,
            beta3: self.beta3 * k,
        }
    }
}

/// Arbitrary; no reference weighting exists.
impl Default for SbacWeights {
    fn default() -> Self {
        SbacWeights {
            beta1: 0.5,
            beta2: 0.3,
            beta3: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyUnit {
    Hz,
    #[serde(rename = "kHz")]
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    pub fn hertz(self) -> f64 {
        match self {
            FrequencyUnit::Hz => 1.0,
            FrequencyUnit::KHz => 1e3,
            FrequencyUnit::MHz => 1e6,
            FrequencyUnit::GHz => 1e9,
        }
    }
}

/// Unit and singularity clamps of the utility formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    pub spread_unit: FrequencyUnit,
    /// Lower clamp for `inter` before the logarithm, in `spread_unit`.
    pub spread_floor: f64,
    /// Lower clamp for `cost` before the reciprocal.
    pub cost_floor: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            spread_unit: FrequencyUnit::MHz,
            spread_floor: 1e-6,
            cost_floor: 1e-6,
        }
    }
}

/// The free channels one provider can offer an incoming session.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub provider_id: usize,
    pub available: Vec<SpectrumChannel>,
    pub total_channels: usize,
    pub session_minutes: f64,
    pub cost_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityBreakdown {
    pub prob: f64,
    pub inter: f64,
    pub cost: f64,
    pub ch_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub provider_id: usize,
    pub channel_id: usize,
    pub utility: UtilityBreakdown,
}

pub fn availability_prob(pool: &CandidatePool) -> f64 {
    pool.available.len() as f64 / pool.total_channels as f64
}

/// `|frmax - frmin|` over the free channels, expressed in `unit`.
pub fn frequency_spread(pool: &CandidatePool, unit: FrequencyUnit) -> Result<f64, SbacError> {
    let mut freqs = pool.available.iter().map(|c| c.center_frequency_hz);
    let first = freqs.next().ok_or(SbacError::NoCandidate)?;
    let (lo, hi) = freqs.fold((first, first), |(lo, hi), f| (lo.min(f), hi.max(f)));
    Ok((hi - lo).abs() / unit.hertz())
}

pub fn usage_cost(pool: &CandidatePool) -> f64 {
    pool.session_minutes * 60.0 * pool.cost_rate
}

pub fn channel_utility(
    pool: &CandidatePool,
    weights: &SbacWeights,
    params: &UtilityParams,
) -> Result<UtilityBreakdown, SbacError> {
    let prob = availability_prob(pool);
    let inter = frequency_spread(pool, params.spread_unit)?;
    let cost = usage_cost(pool);
    let ch_u = 10.0 * weights.beta1 * prob
        + weights.beta2 * (1.0 / inter.max(params.spread_floor)).ln()
        + weights.beta3 * (1.0 / cost.max(params.cost_floor));
    Ok(UtilityBreakdown {
        prob,
        inter,
        cost,
        ch_u,
    })
}

/// Scores every pool that has a free channel and returns the best one.
/// Ties go to the lowest provider id.
pub fn select_best_channel(
    pools: &[CandidatePool],
    weights: &SbacWeights,
    params: &UtilityParams,
) -> Result<Selection, SbacError> {
    let mut best: Option<(&CandidatePool, UtilityBreakdown)> = None;
    for pool in pools.iter().filter(|p| !p.available.is_empty()) {
        let u = channel_utility(pool, weights, params)?;
        let better = match &best {
            None => true,
            Some((b, bu)) => {
                u.ch_u > bu.ch_u || (u.ch_u == bu.ch_u && pool.provider_id < b.provider_id)
            }
        };
        if better {
            best = Some((pool, u));
        }
    }
    let (pool, utility) = best.ok_or(SbacError::NoCandidate)?;
    let channel_id = pool
        .available
        .iter()
        .map(|c| c.id)
        .min()
        .ok_or(SbacError::NoCandidate)?;
    Ok(Selection {
        provider_id: pool.provider_id,
        channel_id,
        utility,
    })
}
