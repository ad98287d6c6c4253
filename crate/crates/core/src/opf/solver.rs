//! Reduced-space OPF: the power flow is solved as an inner evaluation and a
//! bound-constrained projected Newton method runs over the controllable DERs.
//!
//! Each controllable DER contributes two variables, `p` (fraction of S_max,
//! in `[0, P'_max / S_max]`) and `t` in `[-1, 1]`, with `q = t · q_cap(p)`.
//! The capability region (power-factor cone intersected with the S_max disk)
//! maps onto a box in `(p, t)`, so projection is a clamp and active bounds
//! are met exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cost::{cost_breakdown, voltage_penalty_slope, CostParams};
use crate::capability::tan_phi;
use crate::grid::{GridModel, ScaledGrid, Scenario};
use crate::powerflow::{DerSetpoint, Dispatch, PfOptions, PfSolution, PowerFlow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpfOptions {
    pub min_power_factor: f64,
    pub max_iter: usize,
    /// Convergence threshold on the Newton-scaled projected step.
    pub step_tol: f64,
    #[serde(skip, default = "inner_pf")]
    pub pf: PfOptions,
}

fn inner_pf() -> PfOptions {
    PfOptions { tol: 1e-10, max_iter: 30 }
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            min_power_factor: 0.9,
            max_iter: 60,
            step_tol: 1e-7,
            pf: inner_pf(),
        }
    }
}

/// Setpoint of one controllable DER in percent of its S_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointPct {
    pub der: usize,
    pub p_pct: f64,
    pub q_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfResult {
    pub scenario: Scenario,
    pub setpoints: Vec<SetpointPct>,
    pub dispatch: Dispatch,
    pub pf: PfSolution,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Var {
    der: usize,
    s_max: f64,
    /// Upper bound of `p`.
    avail: f64,
}

/// Reusable solver bound to one grid.
#[derive(Debug, Clone)]
pub struct OpfSolver<'g> {
    grid: &'g GridModel,
    pf: PowerFlow,
    params: CostParams,
    opts: OpfOptions,
    tan: f64,
}

struct Eval {
    cost: f64,
    pf: PfSolution,
    dispatch: Dispatch,
}

impl<'g> OpfSolver<'g> {
    pub fn new(grid: &'g GridModel, params: CostParams, opts: OpfOptions) -> Self {
        Self {
            grid,
            pf: PowerFlow::new(grid),
            params,
            opts,
            tan: tan_phi(opts.min_power_factor),
        }
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn power_flow(&self) -> &PowerFlow {
        &self.pf
    }

    fn q_cap(&self, p: f64) -> f64 {
        (p * self.tan).min((1.0 - p * p).max(0.0).sqrt())
    }

    fn q_cap_slope(&self, p: f64) -> f64 {
        if p * self.tan <= (1.0 - p * p).max(0.0).sqrt() {
            self.tan
        } else {
            -p / (1.0 - p * p).max(1e-300).sqrt()
        }
    }

    fn variables(&self, scaled: &ScaledGrid<'_>) -> Vec<Var> {
        self.grid
            .ders
            .iter()
            .enumerate()
            .filter(|(_, d)| d.controllable)
            .map(|(i, d)| Var {
                der: i,
                s_max: d.s_max_mva,
                avail: (scaled.p_avail_mw[i] / d.s_max_mva).clamp(0.0, 1.0),
            })
            .collect()
    }

    fn dispatch_at(&self, scaled: &ScaledGrid<'_>, vars: &[Var], x: &[f64]) -> Dispatch {
        let mut d = Dispatch::unity_pf(scaled);
        for (k, v) in vars.iter().enumerate() {
            let (p, t) = (x[2 * k], x[2 * k + 1]);
            d.0[v.der] = DerSetpoint {
                p_mw: p * v.s_max,
                q_mvar: t * self.q_cap(p) * v.s_max,
            };
        }
        d
    }

    fn evaluate(&self, scaled: &ScaledGrid<'_>, vars: &[Var], x: &[f64], warm: Option<&PfSolution>) -> Option<Eval> {
        let dispatch = self.dispatch_at(scaled, vars, x);
        let pf = self.pf.solve_from(scaled, &dispatch, &self.opts.pf, warm);
        if !pf.converged {
            return None;
        }
        let cost = cost_breakdown(scaled, &pf, &dispatch, &self.params).total();
        Some(Eval { cost, pf, dispatch })
    }

    fn gradient(&self, scaled: &ScaledGrid<'_>, vars: &[Var], x: &[f64], ev: &Eval) -> Option<Vec<f64>> {
        let dcost_dv: Vec<f64> = ev
            .pf
            .v_pu
            .iter()
            .map(|&v| self.params.c_v * voltage_penalty_slope(v, self.params.deadband_pu))
            .collect();
        let sens = self.pf.injection_sensitivity(&ev.pf, &dcost_dv)?;
        let s_base = self.grid.s_base_mva;
        let mut g = vec![0.0; x.len()];
        for (k, v) in vars.iter().enumerate() {
            let der = &self.grid.ders[v.der];
            let bus = self.grid.bus_index(der.bus);
            let base = self.params.base_mva(der.s_max_mva);
            let sp = ev.dispatch.0[v.der];
            // d cost / d MW and d cost / d MVAr of this DER's injection
            let mut dc_dp = sens[bus].0 / s_base;
            let dc_dq = sens[bus].1 / s_base + self.params.c_q * 2.0 * sp.q_mvar / (base * base);
            if der.bus != 1 {
                dc_dp -= self.params.c_p * 2.0 * (scaled.p_avail_mw[v.der] - sp.p_mw) / (base * base);
            }
            let (p, t) = (x[2 * k], x[2 * k + 1]);
            g[2 * k] = v.s_max * (dc_dp + dc_dq * t * self.q_cap_slope(p));
            g[2 * k + 1] = v.s_max * dc_dq * self.q_cap(p);
        }
        Some(g)
    }

    /// Analytic gradient of the objective at `x = [p_0, t_0, p_1, t_1, …]`.
    /// Exposed for derivative checks.
    pub fn objective_and_gradient(&self, scaled: &ScaledGrid<'_>, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let vars = self.variables(scaled);
        let ev = self.evaluate(scaled, &vars, x, None)?;
        let g = self.gradient(scaled, &vars, x, &ev)?;
        Some((ev.cost, g))
    }

    fn bounds(vars: &[Var]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(2 * vars.len());
        let mut hi = Vec::with_capacity(2 * vars.len());
        for v in vars {
            lo.extend([0.0, -1.0]);
            hi.extend([v.avail, 1.0]);
        }
        (lo, hi)
    }

    fn initial_point(&self, scaled: &ScaledGrid<'_>, vars: &[Var], init: Option<&Dispatch>) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * vars.len());
        for v in vars {
            let (p, t) = match init.and_then(|d| d.0.get(v.der)) {
                Some(sp) => {
                    let p = (sp.p_mw / v.s_max).clamp(0.0, v.avail);
                    let cap = self.q_cap(p);
                    let t = if cap > 0.0 { (sp.q_mvar / v.s_max / cap).clamp(-1.0, 1.0) } else { 0.0 };
                    (p, t)
                }
                None => (v.avail, 0.0),
            };
            x.extend([p, t]);
        }
        let _ = scaled;
        x
    }

    /// Minimise the operating cost over the controllable DERs.
    pub fn solve(&self, scaled: &ScaledGrid<'_>, init: Option<&Dispatch>) -> OpfResult {
        let vars = self.variables(scaled);
        let (lo, hi) = Self::bounds(&vars);
        let project = |x: &mut [f64]| {
            for j in 0..x.len() {
                x[j] = x[j].clamp(lo[j], hi[j]);
            }
        };
        let mut x = self.initial_point(scaled, &vars, init);
        let n = x.len();

        let fail = |x: &[f64], iterations: usize| {
            let dispatch = self.dispatch_at(scaled, &vars, x);
            let pf = self.pf.solve(scaled, &dispatch, &self.opts.pf);
            self.finish(scaled, &vars, dispatch, pf, f64::NAN, false, iterations)
        };

        let Some(mut cur) = self.evaluate(scaled, &vars, &x, None) else {
            return fail(&x, 0);
        };
        if n == 0 {
            return self.finish(scaled, &vars, cur.dispatch, cur.pf, cur.cost, true, 0);
        }

        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=self.opts.max_iter {
            iterations = it;
            let Some(g) = self.gradient(scaled, &vars, &x, &cur) else {
                return fail(&x, it);
            };
            let Some(hess) = self.hessian(scaled, &vars, &x, &g, &cur, &lo, &hi) else {
                return fail(&x, it);
            };

            let diag: Vec<f64> = (0..n).map(|j| hess[(j, j)].max(1e-12)).collect();
            // Newton-scaled projected step, used both as the stationarity
            // measure and to size the active-set tolerance.
            let kkt: Vec<f64> = (0..n)
                .map(|j| x[j] - (x[j] - g[j] / diag[j]).clamp(lo[j], hi[j]))
                .collect();
            let kkt_norm = kkt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if kkt_norm < self.opts.step_tol {
                converged = true;
                break;
            }
            let eps = kkt_norm.min(1e-3);
            let active: Vec<bool> = (0..n)
                .map(|j| (x[j] - lo[j] <= eps && g[j] > 0.0) || (hi[j] - x[j] <= eps && g[j] < 0.0))
                .collect();
            let dir = newton_direction(&hess, &g, &active, &diag);

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut trial);
                let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gj, (tj, xj))| gj * (tj - xj)).sum();
                if decrease < 0.0 {
                    if let Some(ev) = self.evaluate(scaled, &vars, &trial, Some(&cur.pf)) {
                        if ev.cost <= cur.cost + 1e-4 * decrease {
                            accepted = Some((trial, ev));
                            break;
                        }
                    }
                } else if decrease == 0.0 {
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, ev)) = accepted else {
                // no descent left at working precision
                converged = kkt_norm < 1e3 * self.opts.step_tol;
                break;
            };
            let step = trial.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let gain = cur.cost - ev.cost;
            x = trial;
            cur = ev;
            if step < 1e-12 || gain <= 1e-14 * cur.cost.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
        // final state from a flat start so results do not depend on the
        // iterate history of the inner solves
        let pf = self.pf.solve(scaled, &cur.dispatch, &self.opts.pf);
        let cost = if pf.converged {
            cost_breakdown(scaled, &pf, &cur.dispatch, &self.params).total()
        } else {
            f64::NAN
        };
        let ok = converged && pf.converged;
        self.finish(scaled, &vars, cur.dispatch, pf, cost, ok, iterations)
    }

    #[allow(clippy::too_many_arguments)]
    fn hessian(
        &self,
        scaled: &ScaledGrid<'_>,
        vars: &[Var],
        x: &[f64],
        g: &[f64],
        cur: &Eval,
        lo: &[f64],
        hi: &[f64],
    ) -> Option<DMatrix<f64>> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut step = 1e-6;
            if x[j] + step > hi[j] {
                step = -step;
            }
            if x[j] + step < lo[j] {
                // degenerate interval: no curvature information
                continue;
            }
            let mut xp = x.to_vec();
            xp[j] += step;
            let ev = self.evaluate(scaled, vars, &xp, Some(&cur.pf))?;
            let gp = self.gradient(scaled, vars, &xp, &ev)?;
            for i in 0..n {
                h[(i, j)] = (gp[i] - g[i]) / step;
            }
        }
        let sym = (&h + h.transpose()) * 0.5;
        Some(sym)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        scaled: &ScaledGrid<'_>,
        vars: &[Var],
        dispatch: Dispatch,
        pf: PfSolution,
        cost: f64,
        converged: bool,
        iterations: usize,
    ) -> OpfResult {
        let setpoints = vars
            .iter()
            .map(|v| {
                let sp = dispatch.0[v.der];
                SetpointPct {
                    der: v.der,
                    p_pct: 100.0 * sp.p_mw / v.s_max,
                    q_pct: 100.0 * sp.q_mvar / v.s_max,
                }
            })
            .collect();
        OpfResult {
            scenario: scaled.scenario,
            setpoints,
            dispatch,
            pf,
            cost,
            converged,
            iterations,
        }
    }
}

/// Newton direction on the free variables with an eigenvalue-modified
/// Hessian; scaled steepest descent on the active ones.
fn newton_direction(hess: &DMatrix<f64>, g: &[f64], active: &[bool], diag: &[f64]) -> Vec<f64> {
    let n = g.len();
    let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();
    let mut dir: Vec<f64> = (0..n).map(|j| if active[j] { -g[j] / diag[j] } else { 0.0 }).collect();
    if free.is_empty() {
        return dir;
    }
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |a, b| hess[(free[a], free[b])]);
    let eig = SymmetricEigen::new(sub);
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = (max_abs * 1e-8).max(1e-12);
    let gf = DVector::from_iterator(m, free.iter().map(|&j| g[j]));
    let coords = eig.eigenvectors.transpose() * &gf;
    let scaled = DVector::from_iterator(m, coords.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / l.abs().max(floor)));
    let d = -(&eig.eigenvectors * scaled);
    for (a, &j) in free.iter().enumerate() {
        dir[j] = d[a];
    }
    dir
}

/// Solve the OPF for one scaled grid with default options.
pub fn solve_opf(scaled: &ScaledGrid<'_>, params: &CostParams, init: Option<&Dispatch>) -> OpfResult {
    OpfSolver::new(scaled.grid, *params, OpfOptions::default()).solve(scaled, init)
}
