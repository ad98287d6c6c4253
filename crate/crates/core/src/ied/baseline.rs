//! Conventional local controllers used as comparison baselines.

use super::transition::Command;
use crate::capability::q_limit_pct;
use crate::lattice::floor_percent;

/// Q(V) droop: full capacitive Q at `v_low`, full inductive Q at `v_high`,
/// linear in between. P is the available power rounded down to 5%.
pub fn qv_control(v_pu: f64, p_avail_pct: f64, v_low: f64, v_high: f64, min_pf: f64) -> Command {
    let p = floor_percent(p_avail_pct).min(100.0);
    let q_lim = q_limit_pct(p, 100.0, min_pf);
    let mid = 0.5 * (v_low + v_high);
    let half = 0.5 * (v_high - v_low);
    let frac = ((mid - v_pu) / half).clamp(-1.0, 1.0);
    Command::new(p, frac * q_lim)
}

/// Unity power factor at the available power rounded down to 5%.
pub fn fixed_pf_control(p_avail_pct: f64) -> Command {
    Command::new(floor_percent(p_avail_pct).min(100.0), 0.0)
}
