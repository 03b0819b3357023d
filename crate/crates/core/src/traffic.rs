//! Poisson session arrivals with exponential holding times.
//!
//! Every provider draws from its own ChaCha sub-stream of the root seed, and
//! within a provider inter-arrival gaps, holding times and user selection use
//! separate streams. Adding a provider or changing one provider's rate never
//! perturbs another provider's draws, and scaling a rate only rescales the
//! arrival instants.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("arrival rate of provider {0} must be finite and non-negative")]
    InvalidRate(usize),
    #[error("mean holding time must be positive")]
    InvalidHolding,
    #[error("horizon must be positive")]
    InvalidHorizon,
    #[error("session rate must be positive")]
    InvalidSessionRate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    /// Session requests per second, one entry per provider.
    pub arrival_rates: Vec<f64>,
    pub mean_holding_s: f64,
    pub horizon_s: f64,
    pub seed: u64,
    /// Common data rate requested by every session.
    pub session_rate_bps: f64,
}

impl TrafficSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if let Some(p) = self
            .arrival_rates
            .iter()
            .position(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(TrafficError::InvalidRate(p));
        }
        if !(self.mean_holding_s > 0.0 && self.mean_holding_s.is_finite()) {
            return Err(TrafficError::InvalidHolding);
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(TrafficError::InvalidHorizon);
        }
        if !(self.session_rate_bps > 0.0) {
            return Err(TrafficError::InvalidSessionRate);
        }
        Ok(())
    }

    /// Offered load in Erlangs for each provider.
    pub fn offered_load(&self) -> Vec<f64> {
        self.arrival_rates
            .iter()
            .map(|l| l * self.mean_holding_s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalEvent {
    pub time: f64,
    /// Base station that received the request.
    pub home_provider: usize,
    pub requested_rate_bps: f64,
    pub holding_time: f64,
    /// Uniform draw in `[0, 1)` used to pick which of the home provider's
    /// users is requesting.
    pub user_draw: f64,
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Gaps = 0,
    Holding = 1,
    Users = 2,
}

fn sub_stream(seed: u64, provider: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(provider as u64 * 4 + purpose as u64);
    rng
}

/// Inverse-CDF exponential draw; strictly positive for any `mean > 0`.
pub fn draw_holding_time<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    -mean * u.ln()
}

/// Builds the merged, time-ordered arrival stream over `[0, horizon)`.
pub fn build_event_stream(spec: &TrafficSpec) -> Result<Vec<ArrivalEvent>, TrafficError> {
    spec.validate()?;
    let mut events = Vec::new();
    for (provider, &rate) in spec.arrival_rates.iter().enumerate() {
        if rate == 0.0 {
            continue;
        }
        let mut gaps = sub_stream(spec.seed, provider, Purpose::Gaps);
        let mut holding = sub_stream(spec.seed, provider, Purpose::Holding);
        let mut users = sub_stream(spec.seed, provider, Purpose::Users);
        let mut t = 0.0;
        loop {
            t += draw_holding_time(&mut gaps, 1.0 / rate);
            if t >= spec.horizon_s {
                break;
            }
            events.push(ArrivalEvent {
                time: t,
                home_provider: provider,
                requested_rate_bps: spec.session_rate_bps,
                holding_time: draw_holding_time(&mut holding, spec.mean_holding_s),
                user_draw: users.random::<f64>(),
            });
        }
    }
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.home_provider.cmp(&b.home_provider))
    });
    Ok(events)
}
