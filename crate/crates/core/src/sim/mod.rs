//! Co-simulation harness and experiments.

mod bus;
mod compare;
mod config;
mod harness;
mod report;

pub use bus::MessageBus;
pub use compare::{compare_cases, retraining_experiment, CaseComparison, ComparisonRow, RetrainingOutcome};
pub use config::{experiment_cost, ControlCase, FailureWindow, SimConfig};
pub use harness::{load_models, model_file_name, run_simulation, RunOutput, SimSetup};
pub use report::{decisions_csv, parse_decisions_csv, steps_csv, DecisionRecord, RunReport, StepRecord};
