//! k-nearest-neighbour regression quantised into a look-up table.

use std::cmp::Ordering;

use super::model::{RegressionModel, TrainingSample};
use crate::error::RegressionError;

/// Half-width used when every sample has the same voltage.
const DEGENERATE_HALF_WIDTH: f64 = 5e-5;

/// Cell centers of `sections` equal-width cells spanning `[lo, hi]`.
pub fn cell_centers(lo: f64, hi: f64, sections: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - DEGENERATE_HALF_WIDTH, hi + DEGENERATE_HALF_WIDTH)
    };
    let width = (hi - lo) / sections as f64;
    (0..sections).map(|i| lo + (i as f64 + 0.5) * width).collect()
}

/// Mean setpoint of the `k` samples nearest to `x`. Equal distances go to
/// the lower sample index; the selected values are summed in index order.
pub fn knn_mean(samples: &[TrainingSample], x: f64, k: usize) -> f64 {
    let k = k.clamp(1, samples.len());
    let mut order: Vec<(f64, usize)> = samples.iter().enumerate().map(|(i, s)| ((s.v_pu - x).abs(), i)).collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_key);
        order.truncate(k);
    }
    order.sort_unstable_by_key(|a| a.1);
    let sum: f64 = order.iter().map(|&(_, i)| samples[i].setpoint_pct).sum();
    sum / k as f64
}

/// Indices of the `k` samples nearest to `x`, in ascending index order.
pub fn knn_indices(samples: &[TrainingSample], x: f64, k: usize) -> Vec<usize> {
    let k = k.clamp(1, samples.len().max(1));
    let mut order: Vec<(f64, usize)> = samples.iter().enumerate().map(|(i, s)| ((s.v_pu - x).abs(), i)).collect();
    order.sort_unstable_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });
    let mut idx: Vec<usize> = order.into_iter().take(k).map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Fit the look-up table. `k` is clamped to the number of samples.
pub fn fit_nnr(samples: &[TrainingSample], k: usize, sections: usize) -> Result<RegressionModel, RegressionError> {
    if samples.is_empty() {
        return Err(RegressionError::NoSamples);
    }
    let sections = sections.max(1);
    let (lo, hi) = voltage_range(samples);
    let table = cell_centers(lo, hi, sections)
        .into_iter()
        .map(|c| [c, knn_mean(samples, c, k)])
        .collect();
    Ok(RegressionModel::Nnr(table))
}

pub fn voltage_range(samples: &[TrainingSample]) -> (f64, f64) {
    samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.v_pu), hi.max(s.v_pu)))
}
