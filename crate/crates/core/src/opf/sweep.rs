//! Offline sweep over the full scenario lattice.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostParams;
use super::solver::{OpfOptions, OpfResult, OpfSolver};
use crate::error::GridError;
use crate::grid::{apply_scenario, GridModel, Scenario};

/// One line of a per-DER training export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub load_f: f64,
    pub pv_f: f64,
    pub wind_f: f64,
    pub v_pu: f64,
    pub theta_rad: f64,
    pub p_sp_pct: f64,
    pub q_sp_pct: f64,
    pub cost: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenarios: usize,
    pub converged: usize,
    pub failed: usize,
    /// `[load, pv, wind]` factors of every failed scenario.
    pub failed_scenarios: Vec<[f64; 3]>,
    pub max_opf_iterations: usize,
    pub max_pf_iterations: usize,
    /// Largest final power-flow mismatch over converged scenarios, pu.
    pub max_mismatch_pu: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub results: Vec<OpfResult>,
}

/// Solve the OPF for every lattice scenario, ordered lexicographically by
/// (load, pv, wind).
pub fn run_sweep(grid: &GridModel, params: &CostParams, opts: &OpfOptions) -> SweepOutput {
    let scenarios: Vec<Scenario> = Scenario::all().collect();
    run_sweep_over(grid, params, opts, &scenarios)
}

/// Solve the OPF for the given scenarios. Output order follows the input
/// regardless of how the work is scheduled.
pub fn run_sweep_over(grid: &GridModel, params: &CostParams, opts: &OpfOptions, scenarios: &[Scenario]) -> SweepOutput {
    let solver = OpfSolver::new(grid, *params, *opts);
    let results = scenarios
        .par_iter()
        .map(|&sc| solver.solve(&apply_scenario(grid, sc), None))
        .collect();
    SweepOutput { results }
}

impl SweepOutput {
    pub fn report(&self) -> SweepReport {
        let failed_scenarios: Vec<[f64; 3]> = self
            .results
            .iter()
            .filter(|r| !r.converged)
            .map(|r| [r.scenario.load_factor(), r.scenario.pv_factor(), r.scenario.wind_factor()])
            .collect();
        SweepReport {
            scenarios: self.results.len(),
            converged: self.results.len() - failed_scenarios.len(),
            failed: failed_scenarios.len(),
            failed_scenarios,
            max_opf_iterations: self.results.iter().map(|r| r.iterations).max().unwrap_or(0),
            max_pf_iterations: self.results.iter().map(|r| r.pf.iterations).max().unwrap_or(0),
            max_mismatch_pu: self
                .results
                .iter()
                .filter(|r| r.converged)
                .map(|r| r.pf.max_mismatch_pu)
                .fold(0.0, f64::max),
        }
    }

    /// Export rows for DER `der` (index into `GridModel::ders`), one per
    /// scenario including failed ones.
    pub fn training_rows(&self, grid: &GridModel, der: usize) -> Vec<TrainingRow> {
        let bus = grid.bus_index(grid.ders[der].bus);
        self.results
            .iter()
            .filter_map(|r| {
                let sp = r.setpoints.iter().find(|s| s.der == der)?;
                Some(TrainingRow {
                    load_f: r.scenario.load_factor(),
                    pv_f: r.scenario.pv_factor(),
                    wind_f: r.scenario.wind_factor(),
                    v_pu: r.pf.v_pu[bus],
                    theta_rad: r.pf.theta_rad[bus],
                    p_sp_pct: sp.p_pct,
                    q_sp_pct: sp.q_pct,
                    cost: r.cost,
                    converged: r.converged,
                })
            })
            .collect()
    }

    pub fn write_training_csv(&self, grid: &GridModel, der: usize, path: &Path) -> Result<(), GridError> {
        let io = |source| GridError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for row in self.training_rows(grid, der) {
            w.serialize(row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}
