//! DER capability limits shared by the optimiser and the field controllers.
//!
//! Powers are in percent of the DER's apparent-power rating. Positive Q is
//! capacitive (injection, raises voltage).

/// Reactive headroom at active power `p_pct`: the tighter of the
/// power-factor cone and the apparent-power circle.
pub fn q_limit_pct(p_pct: f64, s_max_pct: f64, min_pf: f64) -> f64 {
    let p = p_pct.clamp(0.0, s_max_pct);
    let by_pf = p * tan_phi(min_pf);
    let by_s = (s_max_pct * s_max_pct - p * p).max(0.0).sqrt();
    by_pf.min(by_s)
}

/// `tan(acos(pf))`.
pub fn tan_phi(min_pf: f64) -> f64 {
    (1.0 - min_pf * min_pf).sqrt() / min_pf
}

/// Clip `p` to `[0, s_max]`, then clip `q` toward zero into the capability
/// region at that `p`.
pub fn limit_capability(p_pct: f64, q_pct: f64, s_max_pct: f64, min_pf: f64) -> (f64, f64) {
    let p = p_pct.clamp(0.0, s_max_pct);
    let lim = q_limit_pct(p, s_max_pct, min_pf);
    (p, q_pct.clamp(-lim, lim))
}

/// Whether `(p, q)` satisfies both limits within `tol`.
pub fn within_capability(p_pct: f64, q_pct: f64, s_max_pct: f64, min_pf: f64, tol: f64) -> bool {
    p_pct >= -tol
        && p_pct <= s_max_pct + tol
        && p_pct * p_pct + q_pct * q_pct <= s_max_pct * s_max_pct + tol
        && q_pct.abs() <= p_pct.max(0.0) * tan_phi(min_pf) + tol
}
