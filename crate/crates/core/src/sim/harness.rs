//! Deterministic co-simulation of grid, controller IED, message bus and
//! field IEDs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use log::{debug, info};

use super::bus::MessageBus;
use super::config::{ControlCase, SimConfig};
use super::report::{DecisionRecord, RunReport, StepRecord};
use crate::error::{RegressionError, SimError};
use crate::grid::{apply_scenario, benchmark_grid, load_grid, GridModel, Scenario};
use crate::ied::{fixed_pf_control, Command, ControlDecision, FieldIed, Mode, Reason, SetpointMessage};
use crate::opf::{cost_breakdown, OpfOptions, OpfResult, OpfSolver};
use crate::powerflow::{Dispatch, PfOptions, PfSolution, PowerFlow};
use crate::profile::{load_profiles, synthetic_profile, ProfileSeries};
use crate::regression::{BucketSet, RegressionModelSet};

/// Physics solves use the same tolerance as the OPF's inner power flow.
const PHYSICS_PF: PfOptions = PfOptions { tol: 1e-10, max_iter: 30 };

/// Everything a run needs, resolved from a [`SimConfig`].
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub grid: GridModel,
    pub profile: ProfileSeries,
    pub config: SimConfig,
    /// One model set per controllable DER, in `GridModel::controllable()`
    /// order; empty when no models were loaded.
    pub models: Vec<Arc<RegressionModelSet>>,
    /// Training buckets per controllable DER; field IEDs ingest into these.
    pub buckets: Vec<BucketSet>,
}

pub fn model_file_name(der_id: usize) -> String {
    format!("der_{der_id}.json")
}

impl SimSetup {
    /// Load grid, profile and (if `models_dir` is set) model files.
    pub fn from_config(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let grid = match &config.grid {
            Some(p) => load_grid(p)?,
            None => benchmark_grid(),
        };
        let profile = match &config.profile {
            Some(p) => load_profiles(p)?,
            None => synthetic_profile(config.seed, config.timestep_s),
        };
        let mut setup = Self::new(grid, profile, config)?;
        if let Some(dir) = setup.config.models_dir.clone() {
            setup.models = load_models(&setup.grid, &dir)?;
        }
        Ok(setup)
    }

    pub fn new(grid: GridModel, mut profile: ProfileSeries, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        grid.validate()?;
        if let Some(n) = config.horizon_steps {
            if n == 0 || n > profile.len() {
                return Err(SimError::Config(format!("horizon of {n} steps, profile has {}", profile.len())));
            }
            profile = profile.truncated(n);
        }
        if (profile.timestep_s - config.timestep_s).abs() > 1e-9 {
            profile.timestep_s = config.timestep_s;
        }
        config.validate_horizon(profile.len() as f64 * config.timestep_s)?;
        Ok(Self {
            grid,
            profile,
            config,
            models: Vec::new(),
            buckets: Vec::new(),
        })
    }

    pub fn with_models(mut self, models: Vec<RegressionModelSet>) -> Self {
        self.models = models.into_iter().map(Arc::new).collect();
        self
    }

    pub fn with_buckets(mut self, buckets: Vec<BucketSet>) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn horizon_s(&self) -> f64 {
        self.profile.len() as f64 * self.config.timestep_s
    }
}

/// Read `der_<id>.json` for every controllable DER.
pub fn load_models(grid: &GridModel, dir: &Path) -> Result<Vec<Arc<RegressionModelSet>>, SimError> {
    grid.controllable()
        .into_iter()
        .map(|der| {
            let path = dir.join(model_file_name(der));
            let set = RegressionModelSet::load(&path)?;
            if set.der_id != der {
                return Err(SimError::Config(format!("{} holds models of DER {}", path.display(), set.der_id)));
            }
            Ok(Arc::new(set))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub steps: Vec<StepRecord>,
    pub decisions: Vec<DecisionRecord>,
    /// Buckets after the run, including online setpoints.
    pub buckets: Vec<BucketSet>,
}

/// Whole multiple of `dt` closest to `cycle`, at least 1.
fn cycle_steps(cycle_s: f64, dt: f64) -> usize {
    ((cycle_s / dt).round() as usize).max(1)
}

/// Run one control case over the setup's profile.
pub fn run_simulation(setup: &SimSetup, case: ControlCase) -> Result<RunOutput, SimError> {
    let cfg = &setup.config;
    let grid = &setup.grid;
    let dt = cfg.timestep_s;
    let controllable = grid.controllable();
    if case.uses_models() && setup.models.len() != controllable.len() {
        return Err(SimError::Regression(RegressionError::NoData(
            controllable.get(setup.models.len()).copied().unwrap_or(0),
        )));
    }

    let pflow = PowerFlow::new(grid);
    let solver = OpfSolver::new(grid, cfg.opf_cost, OpfOptions::default());
    let mut opf_cache: HashMap<Scenario, OpfResult> = HashMap::new();
    let windows = if case.sees_failures() { cfg.failure_windows.clone() } else { Vec::new() };
    let mut bus = MessageBus::new(windows);

    let opf_every = cycle_steps(cfg.opf_cycle_s, dt);
    let reg_every = cycle_steps(cfg.regression_cycle_s, dt);
    let se_window = cycle_steps(cfg.se_cycle_s, dt);

    let first = apply_scenario(grid, setup.profile.scenario(0));
    let field_cfg = cfg.field_config();
    let mut ieds: Vec<FieldIed> = controllable
        .iter()
        .enumerate()
        .map(|(j, &der)| {
            let initial = fixed_pf_control(first.p_avail_pct(der));
            let mut ied = FieldIed::new(der, field_cfg, 0.0, initial);
            if let Some(m) = setup.models.get(j) {
                ied.set_models(Arc::clone(m));
            }
            if let Some(b) = setup.buckets.get(j) {
                ied = ied.with_buckets(b.clone());
            }
            ied
        })
        .collect();

    // measured bus voltages: mean over the last `se_window` physics steps
    let initial_pf = pflow.solve_from(&first, &Dispatch::unity_pf(&first), &PHYSICS_PF, None);
    if !initial_pf.converged {
        return Err(SimError::Diverged {
            t_s: 0.0,
            mismatch: initial_pf.max_mismatch_pu,
        });
    }
    let mut history: Vec<PfSolution> = vec![initial_pf];
    let mut prev_pf: Option<PfSolution> = None;

    let mut steps = Vec::with_capacity(setup.profile.len());
    let mut decisions = Vec::new();

    for k in 0..setup.profile.len() {
        let t = k as f64 * dt;
        let scenario = setup.profile.scenario(k);
        let scaled = apply_scenario(grid, scenario);
        let comm_ok = bus.link_up(t);

        // controller IED
        if case != ControlCase::NoControl && k % opf_every == 0 {
            let res = opf_cache.entry(scenario).or_insert_with(|| solver.solve(&scaled, None));
            if res.converged {
                for sp in &res.setpoints {
                    let kind = grid.ders[sp.der].kind;
                    bus.send(SetpointMessage {
                        der_id: sp.der,
                        p_sp_pct: sp.p_pct,
                        q_sp_pct: sp.q_pct,
                        operating_point_pct: 100.0 * scenario.factor_for(kind),
                        timestamp: t,
                    });
                }
            } else {
                debug!("t={t}: OPF did not converge for {scenario:?}, no broadcast");
            }
        }

        // field IEDs
        let measured = mean_voltages(&history, se_window);
        let mut dispatch = Dispatch::unity_pf(&scaled);
        let mut commands = Vec::with_capacity(ieds.len());
        let mut modes = Vec::with_capacity(ieds.len());
        for ied in ieds.iter_mut() {
            let der = ied.der_id;
            let d = &grid.ders[der];
            let p_avail = scaled.p_avail_pct(der);
            let op_pct = 100.0 * scaled.p_avail_mw[der] / d.p_max_mw;
            let v_local = measured[grid.bus_index(d.bus)];
            let decision = match case {
                ControlCase::NoControl => {
                    let c = fixed_pf_control(p_avail);
                    ied.command = c;
                    ControlDecision {
                        p_cmd_pct: c.p_pct,
                        q_cmd_pct: c.q_pct,
                        mode: Mode::Remote,
                        reason: Reason::FixedPf,
                    }
                }
                _ => {
                    if let Some(msg) = bus.take(der) {
                        ied.process_message(&msg, p_avail)
                    } else if k % reg_every == 0 && ied.detect_failure(t) {
                        match case {
                            ControlCase::OpfPlusRegression => ied.regression_control(v_local, op_pct, p_avail)?,
                            ControlCase::OpfPlusQv => ied.qv_fallback(v_local, p_avail),
                            _ => ied.hold(p_avail),
                        }
                    } else {
                        ied.hold(p_avail)
                    }
                }
            };
            let cmd = Command::new(decision.p_cmd_pct, decision.q_cmd_pct);
            dispatch.0[der].p_mw = cmd.p_pct / 100.0 * d.s_max_mva;
            dispatch.0[der].q_mvar = cmd.q_pct / 100.0 * d.s_max_mva;
            commands.push((cmd.p_pct, cmd.q_pct));
            modes.push(decision.mode);
            decisions.push(DecisionRecord {
                t,
                der_id: der,
                mode: decision.mode,
                p_cmd: decision.p_cmd_pct,
                q_cmd: decision.q_cmd_pct,
                v_pu: v_local,
                reason: decision.reason.to_string(),
            });
        }

        // physics
        let pf = pflow.solve_from(&scaled, &dispatch, &PHYSICS_PF, prev_pf.as_ref());
        let pf = if pf.converged {
            pf
        } else {
            pflow.solve_from(&scaled, &dispatch, &PHYSICS_PF, None)
        };
        if !pf.converged {
            return Err(SimError::Diverged {
                t_s: t,
                mismatch: pf.max_mismatch_pu,
            });
        }
        let balance_error_pu = slack_balance_error(grid, &pflow, &scaled.load_p_mw, &scaled.load_q_mvar, &dispatch, &pf);
        let cost = cost_breakdown(&scaled, &pf, &dispatch, &cfg.eval_cost);

        for ied in ieds.iter_mut() {
            let b = grid.bus_index(grid.ders[ied.der_id].bus);
            ied.ingest_pending(pf.v_pu[b], pf.theta_rad[b]);
        }

        steps.push(StepRecord {
            t_s: t,
            load_f: scenario.load_factor(),
            pv_f: scenario.pv_factor(),
            wind_f: scenario.wind_factor(),
            v_pu: pf.v_pu.clone(),
            commands,
            modes,
            cost,
            comm_ok,
            balance_error_pu,
        });
        history.push(pf.clone());
        if history.len() > se_window {
            history.remove(0);
        }
        prev_pf = Some(pf);
    }

    let report = summarize(setup, case, &steps, &ieds, &bus);
    info!("case {}: mean cost {:.6}", case.number(), report.mean_cost);
    let buckets = ieds.into_iter().filter_map(|i| i.buckets).collect();
    Ok(RunOutput {
        report,
        steps,
        decisions,
        buckets,
    })
}

fn mean_voltages(history: &[PfSolution], window: usize) -> Vec<f64> {
    let recent = &history[history.len().saturating_sub(window)..];
    let n = recent.len() as f64;
    (0..recent[0].v_pu.len())
        .map(|b| recent.iter().map(|s| s.v_pu[b]).sum::<f64>() / n)
        .collect()
}

/// `|S_slack − (loads + losses − DER injections)|` in pu.
fn slack_balance_error(
    grid: &GridModel,
    pflow: &PowerFlow,
    load_p: &[f64],
    load_q: &[f64],
    dispatch: &Dispatch,
    pf: &PfSolution,
) -> f64 {
    let base = grid.s_base_mva;
    let slack = pflow.slack_injection(pf);
    let losses = pflow.branch_losses(grid, pf);
    let gen_p: f64 = dispatch.0.iter().map(|s| s.p_mw).sum();
    let gen_q: f64 = dispatch.0.iter().map(|s| s.q_mvar).sum();
    let net_p = (load_p.iter().sum::<f64>() - gen_p) / base + losses.re;
    let net_q = (load_q.iter().sum::<f64>() - gen_q) / base + losses.im;
    (slack.re - net_p).abs().max((slack.im - net_q).abs())
}

fn summarize(setup: &SimSetup, case: ControlCase, steps: &[StepRecord], ieds: &[FieldIed], bus: &MessageBus) -> RunReport {
    let cfg = &setup.config;
    let n = steps.len() as f64;
    let mean = |f: &dyn Fn(&StepRecord) -> f64| steps.iter().map(f).sum::<f64>() / n;
    let all_v = || steps.iter().flat_map(|s| s.v_pu.iter().copied());
    let db = cfg.opf_cost.deadband_pu;
    let (lo, hi) = (cfg.field.v_min_pu, cfg.field.v_max_pu);
    let modes = || steps.iter().flat_map(|s| s.modes.iter());
    let horizon_s = setup.horizon_s();
    RunReport {
        case,
        case_number: case.number(),
        label: case.label().to_string(),
        steps: steps.len(),
        horizon_s,
        mean_cost: mean(&|s| s.total_cost()),
        mean_voltage_cost: mean(&|s| s.cost.voltage),
        mean_reactive_cost: mean(&|s| s.cost.reactive),
        mean_curtailment_cost: mean(&|s| s.cost.curtailment),
        deadband_violation_steps: steps.iter().filter(|s| s.v_pu.iter().any(|v| (v - 1.0).abs() > db + 1e-12)).count(),
        limit_violation_steps: steps.iter().filter(|s| s.v_pu.iter().any(|&v| v < lo || v > hi)).count(),
        min_v_pu: all_v().fold(f64::INFINITY, f64::min),
        max_v_pu: all_v().fold(f64::NEG_INFINITY, f64::max),
        fallback_ied_steps: modes().filter(|m| matches!(m, Mode::Fallback | Mode::Emergency)).count(),
        transition_ied_steps: modes().filter(|m| **m == Mode::Transition).count(),
        messages_sent: bus.sent,
        messages_dropped: bus.dropped,
        failure_fraction: if case.sees_failures() { cfg.failure_fraction(horizon_s) } else { 0.0 },
        max_balance_error_pu: steps.iter().map(|s| s.balance_error_pu).fold(0.0, f64::max),
        model_versions: ieds.iter().filter_map(|i| i.models().map(|m| m.version)).collect(),
        step_records: None,
    }
}
