//! Value-at-risk of cascading large fluctuations in noisy, time-delayed
//! linear consensus networks.
//!
//! The pipeline is
//!
//! 1. [`graph`]: build a connected communication graph, its Laplacian and
//!    spectral decomposition, and the admissible delay bound;
//! 2. [`covariance`]: evaluate the closed-form stationary covariance of the
//!    agents' deviations from the network average;
//! 3. [`conditional`]: condition that law on agents already observed in
//!    failure states, directly or one new failure at a time;
//! 4. [`risk`]: turn conditional laws into value-at-risk figures, risk
//!    profiles and most-vulnerable sequences.
//!
//! [`simulate`] is an independent Monte Carlo oracle for all of the above,
//! and [`scenario`] drives configuration files and result records for the
//! `cascade-risk` binary.
//!
//! Agents are 0-based inside the library; every text format uses 1-based
//! labels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditional;
pub mod covariance;
pub mod error;
pub mod graph;
pub mod risk;
pub mod scenario;
pub mod simulate;

pub use conditional::{
    conditional_stats, incremental_update, ConditionalStats, ConditionedScenario, FailureScenario,
};
pub use covariance::{correlation, steady_state_covariance, NoiseDelayConfig, SteadyStateCovariance};
pub use error::{Error, Result};
pub use graph::{
    build_graph, laplacian, max_stable_delay, spectral, GraphKind, LaplacianMatrix, SpectralData,
    WeightedGraph,
};
pub use risk::{
    cascading_risk, exceedance_probability, most_vulnerable_sequence, risk_profile,
    single_agent_risk, InfiniteTrigger, RiskClass, RiskParams, RiskProfile, RiskValue,
    VulnerableSequence,
};
pub use simulate::{
    conditional_risk_oracle, sample_steady_state, simulate, EmpiricalStats, OracleEstimate,
    SimConfig,
};
