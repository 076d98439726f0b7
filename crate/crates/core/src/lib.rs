//! Stochastic day-ahead market clearing for DC networks with wind uncertainty.
//!
//! The social cost (generation cost minus end-user utility) is augmented with
//! a CVaR penalty on the real-time transaction cost of wind imbalance, sampled
//! over wind scenarios. The resulting convex QP is solved either whole or by
//! ADMM between the ISO and demand-response aggregators.

pub mod bundle;
pub mod clearing;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod pricing;
pub mod qp;
pub mod risk;
pub mod scenarios;

/// Row-major `[slot][item]` matrix: slots by farms, buses, generators or aggregators.
pub type SlotMatrix = Vec<Vec<f64>>;

pub use clearing::{admm_solve, solve_centralized, ClearingConfig, DispatchSolution, Mode};
pub use grid::{build_flow_matrices, validate_case, NetworkCase};
pub use risk::{PriceSchedule, RiskConfig};
pub use scenarios::{generate_scenarios, ScenarioSet};
