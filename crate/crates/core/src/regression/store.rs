//! Per-DER model sets: fitting from buckets, versioned publication and the
//! JSON model file.

use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::bucket::{BucketEntry, BucketSet, Origin};
use super::fit::{fit_auto, fit_linear, fit_piecewise};
use super::model::{Channel, RegressionModel, TrainingSample};
use super::nnr::fit_nnr;
use crate::error::RegressionError;
use crate::grid::GridModel;
use crate::lattice;
use crate::opf::SweepOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Linear,
    Piecewise,
    Auto,
    #[default]
    Nnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub k: usize,
    pub sections: usize,
    pub max_breakpoints: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Nnr,
            k: 20,
            sections: 100,
            max_breakpoints: 2,
        }
    }
}

impl LearnerConfig {
    pub fn fit(&self, samples: &[TrainingSample]) -> Result<RegressionModel, RegressionError> {
        match self.kind {
            LearnerKind::Linear => fit_linear(samples),
            LearnerKind::Piecewise => fit_piecewise(samples, self.max_breakpoints),
            LearnerKind::Auto => fit_auto(samples),
            LearnerKind::Nnr => fit_nnr(samples, self.k, self.sections),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub channel: Channel,
    pub op_pct: u32,
    #[serde(flatten)]
    pub model: RegressionModel,
}

/// The 42 models of one DER (P and Q for each of the 21 operating points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModelSet {
    pub der_id: usize,
    pub version: u64,
    /// Simulation time of the fit in seconds (0 for the offline fit).
    pub trained_at: f64,
    pub models: Vec<ModelEntry>,
}

impl RegressionModelSet {
    /// Fit every (channel, operating point) model. Empty buckets borrow the
    /// model of the nearest non-empty operating point, the lower one on
    /// ties.
    pub fn fit(buckets: &BucketSet, learner: &LearnerConfig, version: u64, trained_at: f64) -> Result<Self, RegressionError> {
        let n = buckets.buckets.len();
        let filled: Vec<usize> = (0..n).filter(|&i| !buckets.buckets[i].is_empty()).collect();
        if filled.is_empty() {
            return Err(RegressionError::NoData(buckets.der_id));
        }
        let mut models = Vec::with_capacity(2 * n);
        for channel in [Channel::P, Channel::Q] {
            let fitted: Vec<Option<RegressionModel>> = (0..n)
                .map(|i| {
                    let b = &buckets.buckets[i];
                    (!b.is_empty()).then(|| learner.fit(&b.samples(channel))).transpose()
                })
                .collect::<Result<_, _>>()?;
            for i in 0..n {
                let src = *filled
                    .iter()
                    .min_by_key(|&&j| (j.abs_diff(i), j))
                    .expect("at least one filled bucket");
                models.push(ModelEntry {
                    channel,
                    op_pct: buckets.buckets[i].operating_point_pct,
                    model: fitted[src].clone().expect("filled bucket has a model"),
                });
            }
        }
        Ok(Self {
            der_id: buckets.der_id,
            version,
            trained_at,
            models,
        })
    }

    /// Refit from the current buckets with the next version number.
    pub fn retrain(&self, buckets: &BucketSet, learner: &LearnerConfig, trained_at: f64) -> Result<Self, RegressionError> {
        Self::fit(buckets, learner, self.version + 1, trained_at)
    }

    pub fn get(&self, channel: Channel, op_pct: u32) -> Option<&RegressionModel> {
        self.models
            .iter()
            .find(|m| m.channel == channel && m.op_pct == op_pct)
            .map(|m| &m.model)
    }

    /// Predict the (P, Q) setpoint at an operating point; off-lattice
    /// operating points use the lattice point below.
    pub fn predict(&self, op_pct: f64, v_pu: f64) -> Result<(f64, f64), RegressionError> {
        let op = lattice::floor_percent(op_pct.clamp(0.0, 100.0)) as u32;
        let model = |channel| {
            self.get(channel, op).ok_or(RegressionError::MissingModel {
                channel: channel.as_char(),
                op_pct: op,
            })
        };
        Ok((
            model(Channel::P)?.predict(v_pu, Channel::P),
            model(Channel::Q)?.predict(v_pu, Channel::Q),
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegressionError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegressionError> {
        std::fs::write(path, self.to_json()).map_err(|source| RegressionError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RegressionError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegressionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Buckets of DER `der` filled from the converged scenarios of a sweep.
/// Each scenario lands in the bucket of the DER kind's scaling factor.
pub fn buckets_from_sweep(grid: &GridModel, sweep: &SweepOutput, der: usize, capacity: usize) -> BucketSet {
    let kind = grid.ders[der].kind;
    let bus = grid.bus_index(grid.ders[der].bus);
    let mut set = BucketSet::new(der, capacity);
    for r in sweep.results.iter().filter(|r| r.converged) {
        let Some(sp) = r.setpoints.iter().find(|s| s.der == der) else {
            continue;
        };
        let bucket = &mut set.buckets[r.scenario.index_for(kind)];
        if bucket.len() < bucket.capacity {
            bucket.entries.push(BucketEntry {
                v_pu: r.pf.v_pu[bus],
                theta_rad: r.pf.theta_rad[bus],
                p_pct: sp.p_pct,
                q_pct: sp.q_pct,
                origin: Origin::OfflineSweep,
            });
        }
    }
    set
}

/// Buckets and fitted version-1 model sets for every controllable DER, in
/// `GridModel::controllable()` order.
pub fn train_from_sweep(
    grid: &GridModel,
    sweep: &SweepOutput,
    learner: &LearnerConfig,
    capacity: usize,
) -> Result<Vec<(RegressionModelSet, BucketSet)>, RegressionError> {
    grid.controllable()
        .into_iter()
        .map(|der| {
            let buckets = buckets_from_sweep(grid, sweep, der, capacity);
            let set = RegressionModelSet::fit(&buckets, learner, 1, 0.0)?;
            Ok((set, buckets))
        })
        .collect()
}

/// Holder of the currently published model set. Readers take a snapshot;
/// a retrained set replaces it in one step.
#[derive(Debug)]
pub struct ModelStore {
    current: RwLock<Arc<RegressionModelSet>>,
}

impl ModelStore {
    pub fn new(set: RegressionModelSet) -> Self {
        Self {
            current: RwLock::new(Arc::new(set)),
        }
    }

    pub fn snapshot(&self) -> Arc<RegressionModelSet> {
        Arc::clone(&self.current.read().expect("model store poisoned"))
    }

    /// Publish `set`, which must carry a newer version than the current one.
    pub fn publish(&self, set: RegressionModelSet) {
        let mut guard = self.current.write().expect("model store poisoned");
        assert!(set.version > guard.version, "model versions must increase");
        *guard = Arc::new(set);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(v: f64, p: f64, q: f64) -> BucketEntry {
        BucketEntry {
            v_pu: v,
            theta_rad: 0.0,
            p_pct: p,
            q_pct: q,
            origin: Origin::OfflineSweep,
        }
    }

    fn sample_set() -> BucketSet {
        let mut b = BucketSet::new(7, 64);
        for i in [4usize, 10, 11] {
            for j in 0..10 {
                let v = 0.97 + 0.006 * j as f64;
                b.buckets[i].entries.push(entry(v, 5.0 * i as f64, -(j as f64)));
            }
        }
        b
    }

    #[test]
    fn full_key_coverage_with_fallback() {
        let set = RegressionModelSet::fit(&sample_set(), &LearnerConfig::default(), 1, 0.0).unwrap();
        assert_eq!(set.models.len(), 42);
        // op 35 (index 7) is equidistant from 20 and 50: lower wins
        assert_eq!(set.get(Channel::P, 35), set.get(Channel::P, 20));
        assert_eq!(set.get(Channel::P, 0), set.get(Channel::P, 20));
        assert_eq!(set.get(Channel::P, 100), set.get(Channel::P, 55));
        assert_eq!(set.get(Channel::P, 40), set.get(Channel::P, 50));
    }

    #[test]
    fn empty_buckets_everywhere_is_an_error() {
        assert!(RegressionModelSet::fit(&BucketSet::new(1, 8), &LearnerConfig::default(), 1, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let set = RegressionModelSet::fit(&sample_set(), &LearnerConfig::default(), 3, 12.5).unwrap();
        let back = RegressionModelSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
        let value: serde_json::Value = serde_json::from_str(&set.to_json()).unwrap();
        let first = &value["models"][0];
        assert_eq!(first["channel"], "P");
        assert_eq!(first["kind"], "nnr");
        assert_eq!(first["payload"].as_array().unwrap().len(), 100);
    }

    #[test]
    fn retrain_bumps_version_and_store_swaps() {
        let buckets = sample_set();
        let learner = LearnerConfig::default();
        let v1 = RegressionModelSet::fit(&buckets, &learner, 1, 0.0).unwrap();
        let store = ModelStore::new(v1.clone());
        let held = store.snapshot();
        let v2 = v1.retrain(&buckets, &learner, 60.0).unwrap();
        assert_eq!(v2.version, 2);
        assert_eq!(v2.models, v1.models);
        store.publish(v2);
        assert_eq!(held.version, 1);
        assert_eq!(store.snapshot().version, 2);
    }
}
