//! Discrete-event simulation of dynamic spectrum sharing between service
//! providers, with cognitive-radio secondary links admitted through SINR and
//! primary-interference checks and channels picked by SBAC utility.

// `!(x > 0.0)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod metrics;
pub mod qos;
pub mod radio;
pub mod sbac;
pub mod sim;
pub mod sweep;
pub mod traffic;

pub use config::{parse_config, ConfigError, Scenario, ScenarioConfig};
pub use metrics::{erlang_b, MetricsReport};
pub use qos::{LinkSystem, PowerSolution, SinrReport, SolverOptions};
pub use radio::{
    GainMatrices, Matrix, Modulation, NetworkTopology, Position, PrimaryReceivingPoint,
    SecondaryLink, ServiceProvider, SpectrumChannel,
};
pub use sbac::{CandidatePool, SbacWeights, UtilityParams};
pub use sim::{
    run_simulation, AdmissionConfig, AllocationStrategy, Outcome, SbacConfig, SessionRecord,
    SimError, SimulationOutput,
};
pub use sweep::{run_sweep, ResultRow, SweepOptions, SweepOutcome, SweepParameter, SweepSpec};
pub use traffic::{ArrivalEvent, TrafficSpec};
