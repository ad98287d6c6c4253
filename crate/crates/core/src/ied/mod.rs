//! Field IED control: remote pass-through, failure detection, regression
//! fallback with ramped transitions, emergency measures, and the baseline
//! local controllers.

pub mod baseline;
pub mod field;
pub mod transition;

pub use baseline::{fixed_pf_control, qv_control};
pub use field::{detect_failure, ControlDecision, FieldIed, FieldIedConfig, Mode, Reason, SetpointMessage};
pub use transition::{Command, TransitionEngine};
