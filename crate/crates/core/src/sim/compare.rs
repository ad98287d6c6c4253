//! Multi-case comparison and the model-retraining experiment.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ControlCase;
use super::harness::{run_simulation, RunOutput, SimSetup};
use super::report::RunReport;
use crate::error::SimError;
use crate::opf::CostParams;
use crate::regression::RegressionModelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub label: String,
    pub mean_cost: f64,
    /// Relative difference to the first reference row, percent.
    pub diff_to_ref1_pct: Option<f64>,
    pub diff_to_ref2_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseComparison {
    pub ref1: String,
    pub ref2: String,
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<RunReport>,
}

fn rel_pct(x: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (x - base) / base)
}

impl CaseComparison {
    fn build(ref1: &str, ref2: &str, named: Vec<(String, RunReport)>) -> Self {
        let find = |n: &str| named.iter().find(|(m, _)| m == n).map(|(_, r)| r.mean_cost);
        let (c1, c2) = (find(ref1), find(ref2));
        let rows = named
            .iter()
            .map(|(name, r)| ComparisonRow {
                name: name.clone(),
                label: r.label.clone(),
                mean_cost: r.mean_cost,
                diff_to_ref1_pct: c1.and_then(|b| rel_pct(r.mean_cost, b)),
                diff_to_ref2_pct: c2.and_then(|b| rel_pct(r.mean_cost, b)),
            })
            .collect();
        Self {
            ref1: ref1.to_string(),
            ref2: ref2.to_string(),
            rows,
            reports: named.into_iter().map(|(_, r)| r).collect(),
        }
    }

    pub fn mean_cost(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.mean_cost)
    }

    pub fn to_csv(&self) -> Result<String, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "case".to_string(),
            "label".to_string(),
            "mean_cost".to_string(),
            format!("diff_to_{}_pct", self.ref1),
            format!("diff_to_{}_pct", self.ref2),
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.label.clone(),
                r.mean_cost.to_string(),
                opt(r.diff_to_ref1_pct),
                opt(r.diff_to_ref2_pct),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let h1 = format!("vs {}", self.ref1);
        let h2 = format!("vs {}", self.ref2);
        writeln!(s, "{:<6} {:<28} {:>12} {:>11} {:>11}", "case", "control", "mean cost", h1, h2).unwrap();
        let opt = |x: Option<f64>| x.map(|v| format!("{v:+.2}%")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            writeln!(
                s,
                "{:<6} {:<28} {:>12.4} {:>11} {:>11}",
                r.name,
                r.label,
                r.mean_cost,
                opt(r.diff_to_ref1_pct),
                opt(r.diff_to_ref2_pct)
            )
            .unwrap();
        }
        s
    }
}

/// Run each case on the shared setup (in parallel) and tabulate the mean
/// costs with differences to case 1 and case 2.
pub fn compare_cases(setup: &SimSetup, cases: &[ControlCase]) -> Result<(CaseComparison, Vec<RunOutput>), SimError> {
    let outputs: Vec<RunOutput> = cases
        .par_iter()
        .map(|&c| run_simulation(setup, c))
        .collect::<Result<_, _>>()?;
    let named = outputs
        .iter()
        .map(|o| (o.report.case_number.to_string(), o.report.clone()))
        .collect();
    Ok((CaseComparison::build("1", "2", named), outputs))
}

#[derive(Debug, Clone)]
pub struct RetrainingOutcome {
    /// Rows A (central OPF), B (stale models) and C (retrained models).
    pub table: CaseComparison,
    pub retrained: Vec<RegressionModelSet>,
    pub runs: [RunOutput; 3],
}

impl RetrainingOutcome {
    /// Gap of the stale and retrained fallback to the central OPF, percent.
    pub fn gaps_pct(&self) -> (f64, f64) {
        let a = self.table.rows[0].mean_cost;
        (100.0 * (self.table.rows[1].mean_cost - a) / a, 100.0 * (self.table.rows[2].mean_cost - a) / a)
    }
}

/// Switch the central OPF to `new_params`, let the field IEDs collect its
/// setpoints during a fault-free run (A), refit their models from the
/// grown buckets, then repeat the failure scenario with the old models (B)
/// and the refitted ones (C). The evaluation cost follows `new_params`
/// with the configured evaluation dead-band.
pub fn retraining_experiment(setup: &SimSetup, new_params: CostParams) -> Result<RetrainingOutcome, SimError> {
    if setup.buckets.len() != setup.models.len() || setup.models.is_empty() {
        return Err(SimError::Config("retraining needs initial models and their training buckets".into()));
    }
    let mut shifted = setup.clone();
    shifted.config.opf_cost = new_params;
    shifted.config.eval_cost = new_params.with_deadband(setup.config.eval_cost.deadband_pu);

    let run_a = run_simulation(&shifted, ControlCase::CentralOpf)?;
    let trained_at = shifted.horizon_s();
    let retrained: Vec<RegressionModelSet> = shifted
        .models
        .iter()
        .zip(&run_a.buckets)
        .map(|(m, b)| m.retrain(b, &setup.config.learner, trained_at))
        .collect::<Result<_, _>>()?;

    let stale = shifted.clone().with_buckets(Vec::new());
    let fresh = stale.clone().with_models(retrained.clone());
    let (run_b, run_c) = rayon::join(
        || run_simulation(&stale, ControlCase::OpfPlusRegression),
        || run_simulation(&fresh, ControlCase::OpfPlusRegression),
    );
    let (run_b, run_c) = (run_b?, run_c?);

    let mut named = Vec::new();
    for (name, run, label) in [
        ("A", &run_a, "central OPF, new weights"),
        ("B", &run_b, "fallback, stale models"),
        ("C", &run_c, "fallback, retrained models"),
    ] {
        let mut r = run.report.clone();
        r.label = label.to_string();
        named.push((name.to_string(), r));
    }
    Ok(RetrainingOutcome {
        table: CaseComparison::build("A", "B", named),
        retrained,
        runs: [run_a, run_b, run_c],
    })
}
