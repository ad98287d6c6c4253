//! Least-squares learners: straight line, continuous piecewise line, and an
//! automatic choice between them.

use nalgebra::{DMatrix, DVector};

use super::model::{sse, RegressionModel, TrainingSample};
use crate::error::RegressionError;

/// Candidate breakpoints per search grid.
const GRID_POINTS: usize = 50;

/// Ordinary least squares `setpoint = intercept + slope · v`. Collapses to
/// the mean when every voltage is equal.
pub fn fit_linear(samples: &[TrainingSample]) -> Result<RegressionModel, RegressionError> {
    if samples.is_empty() {
        return Err(RegressionError::NoSamples);
    }
    let n = samples.len() as f64;
    let vm = samples.iter().map(|s| s.v_pu).sum::<f64>() / n;
    let ym = samples.iter().map(|s| s.setpoint_pct).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in samples {
        let dv = s.v_pu - vm;
        sxx += dv * dv;
        sxy += dv * (s.setpoint_pct - ym);
    }
    if sxx <= 0.0 {
        return Ok(RegressionModel::Linear { slope: 0.0, intercept: ym });
    }
    let slope = sxy / sxx;
    Ok(RegressionModel::Linear {
        slope,
        intercept: ym - slope * vm,
    })
}

/// Continuous piecewise-linear fit with at most `max_breakpoints` (≤ 2)
/// breakpoints. Breakpoints are searched over 50 evenly spaced voltages
/// between the 5th and 95th percentile; the configuration with the least
/// SSE wins, fewer breakpoints on ties. The winning breakpoints are then
/// polished within one grid cell.
pub fn fit_piecewise(samples: &[TrainingSample], max_breakpoints: usize) -> Result<RegressionModel, RegressionError> {
    let linear = fit_linear(samples)?;
    let max_bp = max_breakpoints.min(2).min((samples.len() / 2).saturating_sub(1));
    if max_bp == 0 {
        return Ok(linear);
    }
    let grid = candidate_grid(samples);
    if grid.is_empty() {
        return Ok(linear);
    }
    let mut best_err = sse(&linear, samples);
    let mut best = linear;
    let mut best_bps: Vec<f64> = Vec::new();
    let mut consider = |bps: &[f64]| {
        if let Some(model) = hinge_fit(samples, bps) {
            let err = sse(&model, samples);
            if err < best_err {
                best_err = err;
                best = model;
                best_bps = bps.to_vec();
            }
        }
    };
    for &b in &grid {
        consider(&[b]);
    }
    if max_bp == 2 {
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                consider(&[grid[i], grid[j]]);
            }
        }
    }
    if best_bps.is_empty() {
        return Ok(best);
    }
    let cell = grid[1] - grid[0];
    Ok(refine(samples, best_bps, cell).filter(|(_, err)| *err < best_err).map_or(best, |(m, _)| m))
}

/// Golden-section search on each breakpoint in turn within one grid cell
/// of its grid position, keeping breakpoints ordered.
fn refine(samples: &[TrainingSample], mut bps: Vec<f64>, cell: f64) -> Option<(RegressionModel, f64)> {
    let cost = |bps: &[f64]| hinge_fit(samples, bps).map_or(f64::INFINITY, |m| sse(&m, samples));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..2 {
        for j in 0..bps.len() {
            let mut lo = bps[j] - cell;
            let mut hi = bps[j] + cell;
            if j > 0 {
                lo = lo.max(bps[j - 1] + 1e-9);
            }
            if j + 1 < bps.len() {
                hi = hi.min(bps[j + 1] - 1e-9);
            }
            let at = |x: f64, bps: &[f64]| {
                let mut t = bps.to_vec();
                t[j] = x;
                cost(&t)
            };
            let (mut a, mut b) = (lo, hi);
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let (mut fc, mut fd) = (at(c, &bps), at(d, &bps));
            for _ in 0..60 {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = at(c, &bps);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = at(d, &bps);
                }
            }
            let x = if fc <= fd { c } else { d };
            if at(x, &bps) < cost(&bps) {
                bps[j] = x;
            }
        }
    }
    let model = hinge_fit(samples, &bps)?;
    let err = sse(&model, samples);
    Some((model, err))
}

/// Learner chosen by validation error on a fixed split: every fifth sample
/// (indices 4, 9, 14, …) is held out. Ties go to the simpler structure; the
/// winner is refitted on all samples. Fewer than four samples give a line.
pub fn fit_auto(samples: &[TrainingSample]) -> Result<RegressionModel, RegressionError> {
    if samples.len() < 4 {
        return fit_linear(samples);
    }
    let (train, valid): (Vec<_>, Vec<_>) = samples.iter().enumerate().partition(|(i, _)| i % 5 != 4);
    let train: Vec<TrainingSample> = train.into_iter().map(|(_, s)| *s).collect();
    let valid: Vec<TrainingSample> = valid.into_iter().map(|(_, s)| *s).collect();

    let mut best_bp = 0;
    let mut best_err = sse(&fit_linear(&train)?, &valid);
    for bp in 1..=2 {
        let model = fit_piecewise(&train, bp)?;
        if model.breakpoints().len() != bp {
            continue;
        }
        let err = sse(&model, &valid);
        if err < best_err * (1.0 - 1e-9) - 1e-12 {
            best_err = err;
            best_bp = bp;
        }
    }
    if best_bp == 0 {
        fit_linear(samples)
    } else {
        fit_piecewise(samples, best_bp)
    }
}

fn candidate_grid(samples: &[TrainingSample]) -> Vec<f64> {
    let mut v: Vec<f64> = samples.iter().map(|s| s.v_pu).collect();
    v.sort_by(f64::total_cmp);
    let lo = percentile(&v, 0.05);
    let hi = percentile(&v, 0.95);
    if hi <= lo {
        return Vec::new();
    }
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| lo + i as f64 * step).collect()
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Least squares on the basis `1, v, (v − b_j)+`, solved in standardised
/// voltage to keep the normal equations well conditioned. `None` when a
/// hinge carries no data or the system is singular.
fn hinge_fit(samples: &[TrainingSample], bps: &[f64]) -> Option<RegressionModel> {
    let n = samples.len();
    let m = 2 + bps.len();
    let mean = samples.iter().map(|s| s.v_pu).sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s.v_pu - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = var.sqrt();
    if scale <= 0.0 {
        return None;
    }
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut aty = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; m];
    let mut hinge_support = vec![0usize; bps.len()];
    for s in samples {
        let u = (s.v_pu - mean) / scale;
        row[0] = 1.0;
        row[1] = u;
        for (j, &b) in bps.iter().enumerate() {
            let h = (s.v_pu - b).max(0.0) / scale;
            if h > 0.0 {
                hinge_support[j] += 1;
            }
            row[2 + j] = h;
        }
        for a in 0..m {
            aty[a] += row[a] * s.setpoint_pct;
            for b in 0..m {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    if hinge_support.contains(&0) {
        return None;
    }
    let coef = ata.cholesky()?.solve(&aty);
    if coef.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let slope = coef[1] / scale;
    Some(RegressionModel::Piecewise {
        intercept: coef[0] - slope * mean,
        slope,
        hinges: bps.iter().enumerate().map(|(j, &b)| [b, coef[2 + j] / scale]).collect(),
    })
}
