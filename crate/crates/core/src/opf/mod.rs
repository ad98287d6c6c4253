//! Centralised optimal power flow and the offline scenario sweep.

pub mod cost;
pub mod solver;
pub mod sweep;

pub use cost::{cost_breakdown, total_cost, voltage_penalty, CostBreakdown, CostParams, PowerNormalization};
pub use solver::{solve_opf, OpfOptions, OpfResult, OpfSolver, SetpointPct};
pub use sweep::{run_sweep, run_sweep_over, SweepOutput, SweepReport, TrainingRow};
