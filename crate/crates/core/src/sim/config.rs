use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::ied::FieldIedConfig;
use crate::opf::{CostParams, PowerNormalization};
use crate::regression::{LearnerConfig, DEFAULT_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCase {
    /// Case 1: every DER at unity power factor, no coordination.
    NoControl,
    /// Case 2: central OPF setpoints, communication always available.
    CentralOpf,
    /// Case 3: central OPF with regression fallback during outages.
    OpfPlusRegression,
    /// Case 4: central OPF with Q(V) droop during outages.
    OpfPlusQv,
}

impl ControlCase {
    pub const ALL: [ControlCase; 4] = [
        ControlCase::NoControl,
        ControlCase::CentralOpf,
        ControlCase::OpfPlusRegression,
        ControlCase::OpfPlusQv,
    ];

    /// 1-based case number.
    pub fn number(self) -> usize {
        match self {
            ControlCase::NoControl => 1,
            ControlCase::CentralOpf => 2,
            ControlCase::OpfPlusRegression => 3,
            ControlCase::OpfPlusQv => 4,
        }
    }

    pub fn from_number(n: usize) -> Option<Self> {
        Self::ALL.get(n.checked_sub(1)?).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            ControlCase::NoControl => "no control, cos phi = 1",
            ControlCase::CentralOpf => "central OPF",
            ControlCase::OpfPlusRegression => "OPF + regression fallback",
            ControlCase::OpfPlusQv => "OPF + Q(V) fallback",
        }
    }

    pub fn uses_models(self) -> bool {
        self == ControlCase::OpfPlusRegression
    }

    /// Whether communication failures apply to this case.
    pub fn sees_failures(self) -> bool {
        matches!(self, ControlCase::OpfPlusRegression | ControlCase::OpfPlusQv)
    }
}

/// Messages with a timestamp in `[start_s, end_s)` are lost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl FailureWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_s - self.start_s).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Grid file; the bundled benchmark grid when absent.
    pub grid: Option<PathBuf>,
    /// Profile CSV; the synthetic profile for `seed` when absent.
    pub profile: Option<PathBuf>,
    /// Directory holding `der_<id>.json` model files.
    pub models_dir: Option<PathBuf>,
    /// Weights used by the central OPF and the training sweep.
    pub opf_cost: CostParams,
    /// Weights used to score each simulated step.
    pub eval_cost: CostParams,
    pub timestep_s: f64,
    /// Number of steps to simulate; the full profile when absent.
    pub horizon_steps: Option<usize>,
    pub se_cycle_s: f64,
    pub opf_cycle_s: f64,
    pub regression_cycle_s: f64,
    pub transition_steps: usize,
    pub stale_after_s: f64,
    pub failure_windows: Vec<FailureWindow>,
    pub case: ControlCase,
    pub seed: u64,
    pub learner: LearnerConfig,
    pub bucket_capacity: usize,
    pub field: FieldIedConfig,
}

/// Weights of the experiments: the default coefficients with DER powers in
/// per unit of a 100 MVA system base.
pub fn experiment_cost() -> CostParams {
    CostParams {
        normalization: PowerNormalization::SystemBase { mva: 100.0 },
        ..CostParams::default()
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        let opf_cost = experiment_cost();
        Self {
            grid: None,
            profile: None,
            models_dir: None,
            opf_cost,
            eval_cost: opf_cost.with_deadband(0.0),
            timestep_s: 30.0,
            horizon_steps: None,
            se_cycle_s: 10.0,
            opf_cycle_s: 30.0,
            regression_cycle_s: 30.0,
            transition_steps: 5,
            stale_after_s: 60.0,
            failure_windows: vec![FailureWindow {
                start_s: 9000.0,
                end_s: 19800.0,
            }],
            case: ControlCase::CentralOpf,
            seed: 42,
            learner: LearnerConfig::default(),
            bucket_capacity: DEFAULT_CAPACITY,
            field: FieldIedConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: SimConfig = serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        // relative paths are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.grid, &mut cfg.profile, &mut cfg.models_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field IED settings with the timing knobs of this config applied.
    pub fn field_config(&self) -> FieldIedConfig {
        FieldIedConfig {
            stale_after_s: self.stale_after_s,
            transition_steps: self.transition_steps,
            ..self.field
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.timestep_s > 0.0) {
            return bad(format!("timestep_s must be positive, got {}", self.timestep_s));
        }
        for (name, v) in [
            ("se_cycle_s", self.se_cycle_s),
            ("opf_cycle_s", self.opf_cycle_s),
            ("regression_cycle_s", self.regression_cycle_s),
            ("stale_after_s", self.stale_after_s),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.transition_steps == 0 {
            return bad("transition_steps must be at least 1".into());
        }
        if self.bucket_capacity == 0 {
            return bad("bucket_capacity must be at least 1".into());
        }
        if self.learner.k == 0 || self.learner.sections == 0 {
            return bad("learner k and sections must be at least 1".into());
        }
        for c in [&self.opf_cost, &self.eval_cost] {
            if !(c.c_v > 0.0 && c.c_p > 0.0 && c.c_q > 0.0 && c.deadband_pu >= 0.0) {
                return bad(format!("invalid cost parameters {c:?}"));
            }
        }
        let mut windows = self.failure_windows.clone();
        windows.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for w in &windows {
            if !(w.end_s >= w.start_s) || w.start_s < 0.0 {
                return bad(format!("invalid failure window [{}, {})", w.start_s, w.end_s));
            }
        }
        if windows.windows(2).any(|p| p[1].start_s < p[0].end_s) {
            return bad("failure windows overlap".into());
        }
        Ok(())
    }

    /// Check windows against the simulated horizon.
    pub fn validate_horizon(&self, horizon_s: f64) -> Result<(), SimError> {
        for w in &self.failure_windows {
            if w.end_s > horizon_s + 1e-9 {
                return Err(SimError::Config(format!(
                    "failure window [{}, {}) extends past the horizon of {horizon_s} s",
                    w.start_s, w.end_s
                )));
            }
        }
        Ok(())
    }

    pub fn failure_fraction(&self, horizon_s: f64) -> f64 {
        self.failure_windows.iter().map(|w| w.duration_s()).sum::<f64>() / horizon_s
    }
}
