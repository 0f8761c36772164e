//! Cooperative customer–supplier planning workbench: rolling-horizon demand,
//! mixed-integer production planning, simulation, and decision analysis of
//! the resulting outcome tables.

pub mod demand;
pub mod experiment;
pub mod planner;
pub mod risk;
pub mod simulator;
pub mod solver;

/// Discrete time index. Period 1 is the first simulated period; the planner
/// also addresses periods before it through commitment ledgers.
pub type Period = i64;
