//! Bounded per-operating-point training data.
//!
//! A bucket holds joint (V, P, Q) entries: the P and Q models of one
//! operating point are fitted from the two channel views of the same bucket,
//! and eviction weighs both setpoints at once.

use serde::{Deserialize, Serialize};

use super::model::{Channel, TrainingSample};
use crate::lattice;

pub const DEFAULT_CAPACITY: usize = 512;

/// Entries compared for eviction around a new sample's voltage.
pub const EVICTION_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    OfflineSweep,
    OnlineSetpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketEntry {
    pub v_pu: f64,
    pub theta_rad: f64,
    pub p_pct: f64,
    pub q_pct: f64,
    pub origin: Origin,
}

impl BucketEntry {
    pub fn sample(&self, channel: Channel) -> TrainingSample {
        TrainingSample {
            v_pu: self.v_pu,
            theta_rad: self.theta_rad,
            setpoint_pct: match channel {
                Channel::P => self.p_pct,
                Channel::Q => self.q_pct,
            },
        }
    }

    fn dedup_key(&self) -> (i64, i64, i64) {
        (
            (self.v_pu * 1e4).round() as i64,
            (self.p_pct / 5.0).round() as i64,
            (self.q_pct / 5.0).round() as i64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IngestOutcome {
    Appended,
    Duplicate,
    /// Appended after removing this entry.
    Evicted(BucketEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBucket {
    pub operating_point_pct: u32,
    pub capacity: usize,
    pub entries: Vec<BucketEntry>,
}

impl TrainingBucket {
    pub fn new(operating_point_pct: u32, capacity: usize) -> Self {
        assert!(capacity > 0, "bucket capacity must be positive");
        Self {
            operating_point_pct,
            capacity,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn samples(&self, channel: Channel) -> Vec<TrainingSample> {
        self.entries.iter().map(|e| e.sample(channel)).collect()
    }

    /// Add a new setpoint unless an equal one (voltage to 1e-4 pu,
    /// setpoints to the 5% lattice) is already present. When the bucket
    /// overflows, the entry maximising `(P_SP − P_i)² + (Q_SP − Q_i)²` among
    /// the nearest-voltage existing entries is removed.
    pub fn ingest(&mut self, entry: BucketEntry) -> IngestOutcome {
        let key = entry.dedup_key();
        if self.entries.iter().any(|e| e.dedup_key() == key) {
            return IngestOutcome::Duplicate;
        }
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return IngestOutcome::Appended;
        }
        let victim = self.eviction_victim(&entry);
        let removed = self.entries.remove(victim);
        self.entries.push(entry);
        IngestOutcome::Evicted(removed)
    }

    /// Index of the entry that a new sample would displace.
    pub fn eviction_victim(&self, entry: &BucketEntry) -> usize {
        let mut by_distance: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.v_pu - entry.v_pu).abs(), i))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_distance
            .iter()
            .take(EVICTION_CANDIDATES)
            .map(|&(_, i)| (setpoint_distance(entry, &self.entries[i]), i))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, i)| i)
            .expect("eviction from an empty bucket")
    }
}

/// `(P_SP − P_i)² + (Q_SP − Q_i)²`.
pub fn setpoint_distance(new: &BucketEntry, old: &BucketEntry) -> f64 {
    let dp = new.p_pct - old.p_pct;
    let dq = new.q_pct - old.q_pct;
    dp * dp + dq * dq
}

/// The 21 buckets of one DER, indexed by lattice position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSet {
    pub der_id: usize,
    pub buckets: Vec<TrainingBucket>,
}

impl BucketSet {
    pub fn new(der_id: usize, capacity: usize) -> Self {
        Self {
            der_id,
            buckets: (0..lattice::LATTICE_POINTS)
                .map(|i| TrainingBucket::new(lattice::percent(i) as u32, capacity))
                .collect(),
        }
    }

    /// Bucket for an operating point in percent; off-lattice values go to
    /// the lattice point below.
    pub fn bucket_mut(&mut self, op_pct: f64) -> &mut TrainingBucket {
        &mut self.buckets[lattice::floor_index(op_pct / 100.0)]
    }

    pub fn bucket(&self, op_pct: f64) -> &TrainingBucket {
        &self.buckets[lattice::floor_index(op_pct / 100.0)]
    }

    pub fn total_len(&self) -> usize {
        self.buckets.iter().map(|b| b.len()).sum()
    }
}
