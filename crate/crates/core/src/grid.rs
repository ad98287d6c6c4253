//! Network data model: buses, branches, DERs and scenario scaling.
//!
//! All branch parameters are stored in per-unit on the system base
//! `s_base_mva`; loads and DER ratings are stored in MW / MVAr / MVA and
//! converted on demand.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::lattice;

/// Bundled benchmark grid (Cigré MV European feeder with two controllable DERs).
pub const BENCHMARK_GRID_JSON: &str = include_str!("../data/cigre_mv.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub base_voltage_kv: f64,
    pub load_p_mw: f64,
    pub load_q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    pub b_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DerKind {
    PV,
    Wind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Der {
    pub bus: usize,
    pub kind: DerKind,
    pub s_max_mva: f64,
    pub p_max_mw: f64,
    pub controllable: bool,
}

impl Der {
    /// Rated active power as a percentage of the apparent-power rating.
    pub fn p_max_pct(&self) -> f64 {
        100.0 * self.p_max_mw / self.s_max_mva
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub s_base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub ders: Vec<Der>,
}

/// Load a grid file and validate it.
pub fn load_grid(path: impl AsRef<Path>) -> Result<GridModel, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GridModel::from_json(&text)
}

/// The bundled benchmark grid.
pub fn benchmark_grid() -> GridModel {
    GridModel::from_json(BENCHMARK_GRID_JSON).expect("bundled grid is valid")
}

impl GridModel {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let mut grid: GridModel = serde_json::from_str(text)?;
        grid.buses.sort_by_key(|b| b.id);
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Zero-based matrix index of a bus id.
    pub fn bus_index(&self, id: usize) -> usize {
        id - 1
    }

    /// Indices (into `ders`) of the dispatchable DERs.
    pub fn controllable(&self) -> Vec<usize> {
        self.ders
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.controllable.then_some(i))
            .collect()
    }

    /// Check every structural invariant of the model.
    pub fn validate(&self) -> Result<(), GridError> {
        let fail = |msg: String| Err(GridError::Validation(msg));
        if !(self.s_base_mva > 0.0) {
            return fail(format!("s_base_mva must be positive, got {}", self.s_base_mva));
        }
        if self.buses.is_empty() {
            return fail("grid has no buses".into());
        }
        for (pos, bus) in self.buses.iter().enumerate() {
            if bus.id != pos + 1 {
                return fail(format!(
                    "bus ids must be unique and contiguous from 1; found id {} at position {}",
                    bus.id,
                    pos + 1
                ));
            }
            if !(bus.base_voltage_kv > 0.0) {
                return fail(format!("bus {}: base_voltage_kv must be positive", bus.id));
            }
            if !(bus.load_p_mw >= 0.0) || !bus.load_q_mvar.is_finite() {
                return fail(format!("bus {}: invalid load", bus.id));
            }
        }
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.as_slice() {
            [1] => {}
            [] => return fail("missing slack bus".into()),
            [id] => return fail(format!("slack bus must be bus 1, found bus {id}")),
            _ => return fail(format!("exactly one slack bus allowed, found {}", slacks.len())),
        }
        let n = self.buses.len();
        let exists = |id: usize| (1..=n).contains(&id);
        for br in &self.branches {
            if !exists(br.from_bus) || !exists(br.to_bus) {
                return fail(format!("branch {}-{} references unknown bus", br.from_bus, br.to_bus));
            }
            if br.from_bus == br.to_bus {
                return fail(format!("branch {0}-{0} is a self loop", br.from_bus));
            }
            if !(br.r_pu >= 0.0 && br.x_pu >= 0.0 && br.b_pu >= 0.0) {
                return fail(format!("branch {}-{} has negative parameters", br.from_bus, br.to_bus));
            }
            if br.r_pu == 0.0 && br.x_pu == 0.0 {
                return fail(format!("branch {}-{} has zero impedance", br.from_bus, br.to_bus));
            }
        }
        if !self.is_connected() {
            return fail("network graph is not connected".into());
        }
        for (i, der) in self.ders.iter().enumerate() {
            if !exists(der.bus) {
                return fail(format!("DER {i} sits on unknown bus {}", der.bus));
            }
            if !(der.s_max_mva > 0.0) {
                return fail(format!("DER {i}: s_max_mva must be positive"));
            }
            if !(der.p_max_mw > 0.0 && der.p_max_mw <= der.s_max_mva) {
                return fail(format!("DER {i}: p_max_mw must lie in (0, s_max_mva]"));
            }
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from_bus - 1].push(br.to_bus - 1);
            adj[br.to_bus - 1].push(br.from_bus - 1);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// One operating situation: load, PV and wind scaling on the 5% lattice.
///
/// Stored as lattice indices so that ordering and equality are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    load: u8,
    pv: u8,
    wind: u8,
}

impl Scenario {
    pub fn new(load: f64, pv: f64, wind: f64) -> Result<Self, GridError> {
        let idx = |f: f64| lattice::index_of(f).map(|i| i as u8).ok_or(GridError::OffLattice(f));
        Ok(Self {
            load: idx(load)?,
            pv: idx(pv)?,
            wind: idx(wind)?,
        })
    }

    /// Build from lattice indices (each 0..=20).
    pub fn from_indices(load: usize, pv: usize, wind: usize) -> Self {
        assert!(load < lattice::LATTICE_POINTS && pv < lattice::LATTICE_POINTS && wind < lattice::LATTICE_POINTS);
        Self {
            load: load as u8,
            pv: pv as u8,
            wind: wind as u8,
        }
    }

    /// All 21³ lattice scenarios in lexicographic (load, pv, wind) order.
    pub fn all() -> impl Iterator<Item = Scenario> {
        let n = lattice::LATTICE_POINTS;
        (0..n).flat_map(move |l| (0..n).flat_map(move |p| (0..n).map(move |w| Scenario::from_indices(l, p, w))))
    }

    pub fn load_factor(&self) -> f64 {
        lattice::value(self.load as usize)
    }

    pub fn pv_factor(&self) -> f64 {
        lattice::value(self.pv as usize)
    }

    pub fn wind_factor(&self) -> f64 {
        lattice::value(self.wind as usize)
    }

    /// Scaling factor applying to DERs of `kind`.
    pub fn factor_for(&self, kind: DerKind) -> f64 {
        match kind {
            DerKind::PV => self.pv_factor(),
            DerKind::Wind => self.wind_factor(),
        }
    }

    /// Lattice index of the factor applying to DERs of `kind`.
    pub fn index_for(&self, kind: DerKind) -> usize {
        match kind {
            DerKind::PV => self.pv as usize,
            DerKind::Wind => self.wind as usize,
        }
    }
}

/// A grid with one scenario applied: scaled loads and available DER power.
#[derive(Debug, Clone)]
pub struct ScaledGrid<'a> {
    pub grid: &'a GridModel,
    pub scenario: Scenario,
    pub load_p_mw: Vec<f64>,
    pub load_q_mvar: Vec<f64>,
    /// Available active power `P'_max = s · P_max` per DER.
    pub p_avail_mw: Vec<f64>,
}

/// Scale every load by the load factor and each DER's available power by the
/// factor of its kind. Topology and impedances are untouched.
pub fn apply_scenario(grid: &GridModel, scenario: Scenario) -> ScaledGrid<'_> {
    let lf = scenario.load_factor();
    ScaledGrid {
        grid,
        scenario,
        load_p_mw: grid.buses.iter().map(|b| lf * b.load_p_mw).collect(),
        load_q_mvar: grid.buses.iter().map(|b| lf * b.load_q_mvar).collect(),
        p_avail_mw: grid
            .ders
            .iter()
            .map(|d| scenario.factor_for(d.kind) * d.p_max_mw)
            .collect(),
    }
}

impl ScaledGrid<'_> {
    /// Available power of DER `i` as a percentage of its S_max.
    pub fn p_avail_pct(&self, i: usize) -> f64 {
        100.0 * self.p_avail_mw[i] / self.grid.ders[i].s_max_mva
    }
}
