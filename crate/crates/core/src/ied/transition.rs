//! Linear setpoint ramps.

use serde::{Deserialize, Serialize};

/// A (P, Q) command in percent of S_max.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub p_pct: f64,
    pub q_pct: f64,
}

impl Command {
    pub fn new(p_pct: f64, q_pct: f64) -> Self {
        Self { p_pct, q_pct }
    }

    fn lerp(self, to: Command, frac: f64) -> Command {
        if frac >= 1.0 {
            return to;
        }
        Command {
            p_pct: self.p_pct + frac * (to.p_pct - self.p_pct),
            q_pct: self.q_pct + frac * (to.q_pct - self.q_pct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub from: Command,
    pub to: Command,
    /// Steps already emitted, 1..=steps.
    pub step: usize,
}

/// Moves commands toward a target in `steps` equal increments, one per
/// control cycle. A new target restarts the ramp from the current command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEngine {
    pub steps: usize,
    pub ramp: Option<Ramp>,
}

impl TransitionEngine {
    pub fn new(steps: usize) -> Self {
        assert!(steps > 0, "transition needs at least one step");
        Self { steps, ramp: None }
    }

    pub fn reset(&mut self) {
        self.ramp = None;
    }

    pub fn is_ramping(&self) -> bool {
        self.ramp.is_some()
    }

    /// Next command on the way from `current` to `target`. Returns the
    /// command and the step number just emitted (0 when no ramp was needed).
    pub fn step(&mut self, current: Command, target: Command) -> (Command, usize) {
        match &mut self.ramp {
            Some(r) if r.to == target => {
                r.step += 1;
                let step = r.step;
                let cmd = r.from.lerp(r.to, step as f64 / self.steps as f64);
                if step >= self.steps {
                    self.ramp = None;
                }
                (cmd, step)
            }
            _ if current == target => {
                self.ramp = None;
                (target, 0)
            }
            _ => {
                let r = Ramp {
                    from: current,
                    to: target,
                    step: 1,
                };
                let cmd = current.lerp(target, 1.0 / self.steps as f64);
                self.ramp = (self.steps > 1).then_some(r);
                (cmd, 1)
            }
        }
    }

    /// Like [`step`](Self::step) but the target may move between calls
    /// without restarting: step `k` emits `from + k/steps · (target − from)`
    /// for the latest target, so the schedule always ends after `steps`
    /// calls.
    pub fn step_tracking(&mut self, current: Command, target: Command) -> (Command, usize) {
        let r = self.ramp.get_or_insert(Ramp {
            from: current,
            to: target,
            step: 0,
        });
        r.to = target;
        r.step += 1;
        let step = r.step;
        let cmd = r.from.lerp(target, step as f64 / self.steps as f64);
        if step >= self.steps {
            self.ramp = None;
        }
        (cmd, step)
    }
}
