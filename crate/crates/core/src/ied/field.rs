//! Field IED state machine.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::baseline::qv_control;
use super::transition::{Command, TransitionEngine};
use crate::capability::{limit_capability, q_limit_pct};
use crate::error::RegressionError;
use crate::regression::{BucketEntry, BucketSet, IngestOutcome, Origin, RegressionModelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Remote,
    Transition,
    Fallback,
    Emergency,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointMessage {
    pub der_id: usize,
    pub p_sp_pct: f64,
    pub q_sp_pct: f64,
    pub operating_point_pct: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    Remote,
    RemoteClamped,
    StaleMessage,
    Hold,
    Resync { step: usize },
    Fallback,
    FallbackRamp { step: usize },
    Recovery { op_pct: u32 },
    Undervoltage,
    Overvoltage { op_pct: u32 },
    QvDroop,
    FixedPf,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Remote => write!(f, "remote"),
            Reason::RemoteClamped => write!(f, "remote-clamped"),
            Reason::StaleMessage => write!(f, "stale-message"),
            Reason::Hold => write!(f, "hold"),
            Reason::Resync { step } => write!(f, "resync-{step}"),
            Reason::Fallback => write!(f, "regression"),
            Reason::FallbackRamp { step } => write!(f, "regression-ramp-{step}"),
            Reason::Recovery { op_pct } => write!(f, "recovery-op{op_pct}"),
            Reason::Undervoltage => write!(f, "undervoltage"),
            Reason::Overvoltage { op_pct } => write!(f, "overvoltage-op{op_pct}"),
            Reason::QvDroop => write!(f, "qv-droop"),
            Reason::FixedPf => write!(f, "fixed-pf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub p_cmd_pct: f64,
    pub q_cmd_pct: f64,
    pub mode: Mode,
    pub reason: Reason,
}

impl ControlDecision {
    pub fn command(&self) -> Command {
        Command::new(self.p_cmd_pct, self.q_cmd_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldIedConfig {
    pub stale_after_s: f64,
    pub transition_steps: usize,
    pub min_power_factor: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    /// Operating-point decrement per over-voltage cycle, percent.
    pub emergency_step_pct: f64,
    pub qv_v_low: f64,
    pub qv_v_high: f64,
}

impl Default for FieldIedConfig {
    fn default() -> Self {
        Self {
            stale_after_s: 60.0,
            transition_steps: 5,
            min_power_factor: 0.9,
            v_min_pu: 0.9,
            v_max_pu: 1.1,
            emergency_step_pct: 10.0,
            qv_v_low: 0.95,
            qv_v_high: 1.05,
        }
    }
}

/// `now − last_msg_time > stale_after`.
pub fn detect_failure(last_msg_time: f64, now: f64, stale_after_s: f64) -> bool {
    now - last_msg_time > stale_after_s
}

/// Local controller of one DER. Commands are in percent of the DER's S_max;
/// operating points in percent of its P_max.
#[derive(Debug, Clone)]
pub struct FieldIed {
    pub der_id: usize,
    pub cfg: FieldIedConfig,
    pub mode: Mode,
    /// Timestamp of the newest accepted message, or the start time.
    pub last_msg_time: f64,
    newest_timestamp: Option<f64>,
    pub command: Command,
    engine: TransitionEngine,
    /// Reduced operating point while over-voltage measures are active or
    /// being withdrawn.
    pub emergency_op_pct: Option<f64>,
    models: Option<Arc<RegressionModelSet>>,
    pub buckets: Option<BucketSet>,
    pending: Option<SetpointMessage>,
}

impl FieldIed {
    pub fn new(der_id: usize, cfg: FieldIedConfig, start_time: f64, initial: Command) -> Self {
        Self {
            der_id,
            cfg,
            mode: Mode::Remote,
            last_msg_time: start_time,
            newest_timestamp: None,
            command: initial,
            engine: TransitionEngine::new(cfg.transition_steps),
            emergency_op_pct: None,
            models: None,
            buckets: None,
            pending: None,
        }
    }

    pub fn with_models(mut self, models: Arc<RegressionModelSet>) -> Self {
        self.models = Some(models);
        self
    }

    pub fn with_buckets(mut self, buckets: BucketSet) -> Self {
        self.buckets = Some(buckets);
        self
    }

    pub fn set_models(&mut self, models: Arc<RegressionModelSet>) {
        self.models = Some(models);
    }

    pub fn models(&self) -> Option<&Arc<RegressionModelSet>> {
        self.models.as_ref()
    }

    pub fn detect_failure(&self, now: f64) -> bool {
        detect_failure(self.last_msg_time, now, self.cfg.stale_after_s)
    }

    fn limit(&self, cmd: Command, p_avail_pct: f64) -> Command {
        let (p, q) = limit_capability(cmd.p_pct.min(p_avail_pct), cmd.q_pct, 100.0, self.cfg.min_power_factor);
        Command::new(p, q)
    }

    fn emit(&mut self, cmd: Command, mode: Mode, reason: Reason) -> ControlDecision {
        self.command = cmd;
        self.mode = mode;
        ControlDecision {
            p_cmd_pct: cmd.p_pct,
            q_cmd_pct: cmd.q_pct,
            mode,
            reason,
        }
    }

    /// Repeat the current command.
    pub fn hold(&mut self, p_avail_pct: f64) -> ControlDecision {
        let cmd = self.limit(self.command, p_avail_pct);
        let mode = self.mode;
        self.emit(cmd, mode, Reason::Hold)
    }

    /// Accept a setpoint from the central controller. In Remote mode the
    /// limited setpoint is passed through; after a fallback period the
    /// command is walked back to the remote setpoint over the configured
    /// number of transition steps.
    pub fn process_message(&mut self, msg: &SetpointMessage, p_avail_pct: f64) -> ControlDecision {
        if self.newest_timestamp.is_some_and(|t| msg.timestamp <= t) {
            let cmd = self.command;
            return ControlDecision {
                p_cmd_pct: cmd.p_pct,
                q_cmd_pct: cmd.q_pct,
                mode: self.mode,
                reason: Reason::StaleMessage,
            };
        }
        self.newest_timestamp = Some(msg.timestamp);
        self.last_msg_time = msg.timestamp;
        self.pending = Some(*msg);
        self.emergency_op_pct = None;

        let raw = Command::new(msg.p_sp_pct, msg.q_sp_pct);
        let target = self.limit(raw, p_avail_pct);
        let clamped = (target.p_pct - raw.p_pct).abs() > 1e-9 || (target.q_pct - raw.q_pct).abs() > 1e-9;

        match self.mode {
            Mode::Remote => {
                self.engine.reset();
                let reason = if clamped { Reason::RemoteClamped } else { Reason::Remote };
                self.emit(target, Mode::Remote, reason)
            }
            Mode::Fallback | Mode::Emergency | Mode::Transition => {
                if self.mode != Mode::Transition {
                    self.engine.reset();
                }
                let (cmd, step) = self.engine.step_tracking(self.command, target);
                let cmd = self.limit(cmd, p_avail_pct);
                let decision = self.emit(cmd, Mode::Transition, Reason::Resync { step });
                if step >= self.cfg.transition_steps {
                    self.mode = Mode::Remote;
                }
                decision
            }
        }
    }

    /// Local control without a valid remote setpoint: regression models
    /// selected by the operating point and fed with the local voltage, plus
    /// emergency measures outside `[v_min, v_max]`.
    pub fn regression_control(&mut self, v_pu: f64, op_pct: f64, p_avail_pct: f64) -> Result<ControlDecision, RegressionError> {
        let models = self.models.clone().ok_or(RegressionError::NoData(self.der_id))?;
        if v_pu < self.cfg.v_min_pu {
            self.engine.reset();
            self.emergency_op_pct = None;
            let p = p_avail_pct.clamp(0.0, 100.0);
            let q = q_limit_pct(p, 100.0, self.cfg.min_power_factor);
            return Ok(self.emit(Command::new(p, q), Mode::Emergency, Reason::Undervoltage));
        }
        if v_pu > self.cfg.v_max_pu {
            self.engine.reset();
            let base = self.emergency_op_pct.unwrap_or(op_pct).min(op_pct);
            let reduced = (base - self.cfg.emergency_step_pct).max(0.0);
            self.emergency_op_pct = Some(reduced);
            let (p, q) = models.predict(reduced, v_pu)?;
            let cmd = self.limit(Command::new(p, q), p_avail_pct);
            return Ok(self.emit(cmd, Mode::Emergency, Reason::Overvoltage { op_pct: reduced as u32 }));
        }

        let (op, reason) = match self.emergency_op_pct {
            Some(reduced) => {
                let next = reduced + self.cfg.emergency_step_pct;
                if next >= op_pct {
                    self.emergency_op_pct = None;
                    (op_pct, Reason::Recovery { op_pct: op_pct as u32 })
                } else {
                    self.emergency_op_pct = Some(next);
                    (next, Reason::Recovery { op_pct: next as u32 })
                }
            }
            None => (op_pct, Reason::Fallback),
        };
        // Switching to another control source or model ramps linearly over
        // the transition steps; in between the model output is followed.
        let switchover = self.mode != Mode::Fallback || matches!(reason, Reason::Recovery { .. });
        if switchover {
            self.engine.reset();
        }
        let (p, q) = models.predict(op, v_pu)?;
        let target = self.limit(Command::new(p, q), p_avail_pct);
        let (cmd, step) = if switchover || self.engine.is_ramping() {
            self.engine.step_tracking(self.command, target)
        } else {
            (target, 0)
        };
        let cmd = self.limit(cmd, p_avail_pct);
        let reason = match reason {
            Reason::Fallback if step > 0 => Reason::FallbackRamp { step },
            r => r,
        };
        Ok(self.emit(cmd, Mode::Fallback, reason))
    }

    /// Local Q(V) droop in place of regression fallback.
    pub fn qv_fallback(&mut self, v_pu: f64, p_avail_pct: f64) -> ControlDecision {
        self.engine.reset();
        let c = &self.cfg;
        let cmd = qv_control(v_pu, p_avail_pct, c.qv_v_low, c.qv_v_high, c.min_power_factor);
        let cmd = self.limit(cmd, p_avail_pct);
        self.emit(cmd, Mode::Fallback, Reason::QvDroop)
    }

    /// Store the last accepted setpoint in the training bucket of its
    /// operating point, using the voltage measured after it was applied.
    pub fn ingest_pending(&mut self, v_pu: f64, theta_rad: f64) -> Option<IngestOutcome> {
        let msg = self.pending.take()?;
        let buckets = self.buckets.as_mut()?;
        Some(buckets.bucket_mut(msg.operating_point_pct).ingest(BucketEntry {
            v_pu,
            theta_rad,
            p_pct: msg.p_sp_pct,
            q_pct: msg.q_sp_pct,
            origin: Origin::OnlineSetpoint,
        }))
    }
}
