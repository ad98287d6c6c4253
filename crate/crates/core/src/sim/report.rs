//! Per-step records, run reports and their file formats.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ControlCase;
use crate::error::SimError;
use crate::ied::Mode;
use crate::opf::CostBreakdown;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t_s: f64,
    pub load_f: f64,
    pub pv_f: f64,
    pub wind_f: f64,
    pub v_pu: Vec<f64>,
    /// `(p, q)` command of each controllable DER in percent of S_max.
    pub commands: Vec<(f64, f64)>,
    pub modes: Vec<Mode>,
    pub cost: CostBreakdown,
    pub comm_ok: bool,
    /// Slack-balance residual of the physics solve, pu.
    pub balance_error_pu: f64,
}

impl StepRecord {
    pub fn total_cost(&self) -> f64 {
        self.cost.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub der_id: usize,
    pub mode: Mode,
    pub p_cmd: f64,
    pub q_cmd: f64,
    pub v_pu: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: ControlCase,
    pub case_number: usize,
    pub label: String,
    pub steps: usize,
    pub horizon_s: f64,
    pub mean_cost: f64,
    pub mean_voltage_cost: f64,
    pub mean_reactive_cost: f64,
    pub mean_curtailment_cost: f64,
    /// Steps with a bus voltage outside the training dead-band.
    pub deadband_violation_steps: usize,
    /// Steps with a bus voltage outside the emergency limits.
    pub limit_violation_steps: usize,
    pub min_v_pu: f64,
    pub max_v_pu: f64,
    /// IED-steps spent in Fallback or Emergency mode.
    pub fallback_ied_steps: usize,
    pub transition_ied_steps: usize,
    pub messages_sent: usize,
    pub messages_dropped: usize,
    pub failure_fraction: f64,
    pub max_balance_error_pu: f64,
    pub model_versions: Vec<u64>,
    pub step_records: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        write_file(path, self.to_json().as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let io = |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

/// Steps as CSV: time, factors, cost terms, link state, bus voltages and
/// the command and mode of every controllable DER.
pub fn steps_csv(steps: &[StepRecord], bus_ids: &[usize], der_ids: &[usize]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["t", "load", "pv", "wind", "cost", "cost_v", "cost_q", "cost_p", "comm_ok"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(bus_ids.iter().map(|b| format!("v_{b}")));
    for d in der_ids {
        header.extend([format!("p_{d}"), format!("q_{d}"), format!("mode_{d}")]);
    }
    w.write_record(&header)?;
    for s in steps {
        let mut row = vec![
            s.t_s.to_string(),
            s.load_f.to_string(),
            s.pv_f.to_string(),
            s.wind_f.to_string(),
            s.total_cost().to_string(),
            s.cost.voltage.to_string(),
            s.cost.reactive.to_string(),
            s.cost.curtailment.to_string(),
            u8::from(s.comm_ok).to_string(),
        ];
        row.extend(s.v_pu.iter().map(|v| v.to_string()));
        for ((p, q), m) in s.commands.iter().zip(&s.modes) {
            row.extend([p.to_string(), q.to_string(), m.to_string()]);
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
}

pub fn decisions_csv(decisions: &[DecisionRecord]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for d in decisions {
        w.serialize(d)?;
    }
    if decisions.is_empty() {
        w.write_record(["t", "der_id", "mode", "p_cmd", "q_cmd", "v_pu", "reason"])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
}

pub fn parse_decisions_csv(text: &str) -> Result<Vec<DecisionRecord>, SimError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
