//! Newton–Raphson AC power flow in polar coordinates.

use nalgebra::{Complex, DMatrix, DVector};

use crate::grid::{GridModel, ScaledGrid};

pub type C64 = Complex<f64>;

/// Active / reactive injection of one DER in MW / MVAr.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerSetpoint {
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Injections of every DER of a grid, in the order of `GridModel::ders`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dispatch(pub Vec<DerSetpoint>);

impl Dispatch {
    /// Every DER at its available power with unity power factor.
    pub fn unity_pf(scaled: &ScaledGrid<'_>) -> Self {
        Dispatch(
            scaled
                .p_avail_mw
                .iter()
                .map(|&p| DerSetpoint { p_mw: p, q_mvar: 0.0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    pub v_pu: Vec<f64>,
    pub theta_rad: Vec<f64>,
    pub converged: bool,
    /// Number of mismatch evaluations performed.
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

impl PfSolution {
    fn flat(n: usize) -> Self {
        Self {
            v_pu: vec![1.0; n],
            theta_rad: vec![0.0; n],
            converged: false,
            iterations: 0,
            max_mismatch_pu: f64::INFINITY,
        }
    }

    pub fn voltages(&self) -> Vec<C64> {
        self.v_pu
            .iter()
            .zip(&self.theta_rad)
            .map(|(&m, &a)| C64::from_polar(m, a))
            .collect()
    }
}

/// Bus admittance matrix. Off-diagonal `(i, j) = -y_series`; the diagonal
/// collects the series admittances plus half of each line's charging.
pub fn build_ybus(grid: &GridModel) -> DMatrix<C64> {
    let n = grid.n_buses();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for br in &grid.branches {
        let f = grid.bus_index(br.from_bus);
        let t = grid.bus_index(br.to_bus);
        let ys = C64::new(1.0, 0.0) / C64::new(br.r_pu, br.x_pu);
        let ysh = C64::new(0.0, br.b_pu / 2.0);
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

/// Precomputed network data for repeated solves on one grid.
#[derive(Debug, Clone)]
pub struct PowerFlow {
    ybus: DMatrix<C64>,
    /// Non-slack bus indices in ascending order.
    pq: Vec<usize>,
    /// Position of each bus in `pq`, `None` for the slack.
    pq_pos: Vec<Option<usize>>,
    s_base_mva: f64,
    der_bus: Vec<usize>,
    n: usize,
}

impl PowerFlow {
    pub fn new(grid: &GridModel) -> Self {
        let n = grid.n_buses();
        let pq: Vec<usize> = (1..n).collect();
        let mut pq_pos = vec![None; n];
        for (k, &i) in pq.iter().enumerate() {
            pq_pos[i] = Some(k);
        }
        Self {
            ybus: build_ybus(grid),
            pq,
            pq_pos,
            s_base_mva: grid.s_base_mva,
            der_bus: grid.ders.iter().map(|d| grid.bus_index(d.bus)).collect(),
            n,
        }
    }

    pub fn ybus(&self) -> &DMatrix<C64> {
        &self.ybus
    }

    pub fn n_buses(&self) -> usize {
        self.n
    }

    /// Net specified injection per bus in pu (generation minus load).
    pub fn specified_injections(&self, scaled: &ScaledGrid<'_>, dispatch: &Dispatch) -> Vec<C64> {
        let mut s: Vec<C64> = scaled
            .load_p_mw
            .iter()
            .zip(&scaled.load_q_mvar)
            .map(|(&p, &q)| C64::new(-p, -q))
            .collect();
        for (sp, &bus) in dispatch.0.iter().zip(&self.der_bus) {
            s[bus] += C64::new(sp.p_mw, sp.q_mvar);
        }
        for v in &mut s {
            *v /= self.s_base_mva;
        }
        s
    }

    /// Computed complex power injection `V ∘ conj(Y V)` at every bus.
    pub fn injections(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let acc: C64 = v.iter().enumerate().map(|(j, vj)| self.ybus[(i, j)] * vj).sum();
                v[i] * acc.conj()
            })
            .collect()
    }

    /// Solve from a flat start.
    pub fn solve(&self, scaled: &ScaledGrid<'_>, dispatch: &Dispatch, opts: &PfOptions) -> PfSolution {
        self.solve_from(scaled, dispatch, opts, None)
    }

    /// Solve, optionally warm-starting from a previous solution.
    pub fn solve_from(
        &self,
        scaled: &ScaledGrid<'_>,
        dispatch: &Dispatch,
        opts: &PfOptions,
        start: Option<&PfSolution>,
    ) -> PfSolution {
        assert!(opts.tol > 0.0, "tolerance must be positive");
        assert_eq!(dispatch.len(), scaled.grid.ders.len(), "dispatch must cover every DER");
        debug_assert!(
            dispatch
                .0
                .iter()
                .zip(&scaled.grid.ders)
                .all(|(sp, d)| sp.p_mw.hypot(sp.q_mvar) <= d.s_max_mva * (1.0 + 1e-6) + 1e-9),
            "dispatch exceeds apparent-power rating"
        );
        let spec = self.specified_injections(scaled, dispatch);
        self.newton(&spec, opts, start)
    }

    fn newton(&self, spec: &[C64], opts: &PfOptions, start: Option<&PfSolution>) -> PfSolution {
        let npq = self.pq.len();
        let mut sol = match start {
            Some(s) if s.v_pu.len() == self.n && s.v_pu.iter().all(|v| v.is_finite() && *v > 0.0) => {
                let mut s = s.clone();
                s.converged = false;
                s.iterations = 0;
                s
            }
            _ => PfSolution::flat(self.n),
        };
        sol.v_pu[0] = 1.0;
        sol.theta_rad[0] = 0.0;
        if npq == 0 {
            sol.converged = true;
            sol.iterations = 1;
            sol.max_mismatch_pu = 0.0;
            return sol;
        }

        for it in 1..=opts.max_iter {
            let v = sol.voltages();
            let s_calc = self.injections(&v);
            let mut f = DVector::zeros(2 * npq);
            for (k, &i) in self.pq.iter().enumerate() {
                let d = s_calc[i] - spec[i];
                f[k] = d.re;
                f[npq + k] = d.im;
            }
            let norm = f.amax();
            sol.iterations = it;
            sol.max_mismatch_pu = norm;
            if !norm.is_finite() || norm > 1e6 {
                return sol;
            }
            if norm < opts.tol {
                sol.converged = true;
                return sol;
            }
            let jac = self.jacobian(&v);
            let Some(dx) = jac.lu().solve(&f) else {
                return sol;
            };
            if dx.iter().any(|x| !x.is_finite()) {
                return sol;
            }
            for (k, &i) in self.pq.iter().enumerate() {
                sol.theta_rad[i] -= dx[k];
                sol.v_pu[i] -= dx[npq + k];
            }
            if sol.v_pu.iter().any(|&m| m <= 0.0) {
                sol.max_mismatch_pu = f64::INFINITY;
                return sol;
            }
        }
        // report the residual of the last iterate
        let s_calc = self.injections(&sol.voltages());
        sol.max_mismatch_pu = self
            .pq
            .iter()
            .map(|&i| {
                let d = s_calc[i] - spec[i];
                d.re.abs().max(d.im.abs())
            })
            .fold(0.0, f64::max);
        sol.converged = sol.max_mismatch_pu < opts.tol;
        sol
    }

    /// Jacobian of the PQ-bus mismatch with respect to `[θ_pq; |V|_pq]`.
    pub fn jacobian(&self, v: &[C64]) -> DMatrix<f64> {
        let n = self.n;
        let npq = self.pq.len();
        let y = &self.ybus;
        let ibus: Vec<C64> = (0..n)
            .map(|i| (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + y[(i, j)] * v[j]))
            .collect();
        let vnorm: Vec<C64> = v.iter().map(|x| x / x.norm()).collect();
        let mut jac = DMatrix::zeros(2 * npq, 2 * npq);
        for (r, &i) in self.pq.iter().enumerate() {
            for (c, &j) in self.pq.iter().enumerate() {
                // dS_i/dθ_j and dS_i/d|V|_j (MATPOWER dSbus_dV, polar form)
                let mut ds_da = -C64::i() * v[i] * (y[(i, j)] * v[j]).conj();
                let mut ds_dm = v[i] * (y[(i, j)] * vnorm[j]).conj();
                if i == j {
                    ds_da += C64::i() * v[i] * ibus[i].conj();
                    ds_dm += ibus[i].conj() * vnorm[i];
                }
                jac[(r, c)] = ds_da.re;
                jac[(r, npq + c)] = ds_dm.re;
                jac[(npq + r, c)] = ds_da.im;
                jac[(npq + r, npq + c)] = ds_dm.im;
            }
        }
        jac
    }

    /// Gradient of a voltage-magnitude cost with respect to net bus
    /// injections, obtained from the adjoint of the power-flow Jacobian.
    ///
    /// `dcost_dv[i]` is ∂cost/∂|V_i|. Returns per-bus `(∂cost/∂P_i, ∂cost/∂Q_i)`
    /// with injections in pu; the slack entry is zero.
    pub fn injection_sensitivity(&self, sol: &PfSolution, dcost_dv: &[f64]) -> Option<Vec<(f64, f64)>> {
        let npq = self.pq.len();
        let mut out = vec![(0.0, 0.0); self.n];
        if npq == 0 {
            return Some(out);
        }
        let jac = self.jacobian(&sol.voltages());
        let mut rhs = DVector::zeros(2 * npq);
        for (k, &i) in self.pq.iter().enumerate() {
            rhs[npq + k] = dcost_dv[i];
        }
        let lambda = jac.transpose().lu().solve(&rhs)?;
        for (i, slot) in out.iter_mut().enumerate() {
            if let Some(k) = self.pq_pos[i] {
                *slot = (lambda[k], lambda[npq + k]);
            }
        }
        Some(out)
    }

    /// Slack-bus complex injection in pu.
    pub fn slack_injection(&self, sol: &PfSolution) -> C64 {
        self.injections(&sol.voltages())[0]
    }

    /// Series and shunt losses summed over branches, in pu.
    pub fn branch_losses(&self, grid: &GridModel, sol: &PfSolution) -> C64 {
        let v = sol.voltages();
        grid.branches
            .iter()
            .map(|br| {
                let f = grid.bus_index(br.from_bus);
                let t = grid.bus_index(br.to_bus);
                let ys = C64::new(1.0, 0.0) / C64::new(br.r_pu, br.x_pu);
                let ysh = C64::new(0.0, br.b_pu / 2.0);
                let i_ft = ys * (v[f] - v[t]) + ysh * v[f];
                let i_tf = ys * (v[t] - v[f]) + ysh * v[t];
                v[f] * i_ft.conj() + v[t] * i_tf.conj()
            })
            .fold(C64::new(0.0, 0.0), |a, b| a + b)
    }
}

/// One-shot flat-start solve.
pub fn solve_pf(scaled: &ScaledGrid<'_>, dispatch: &Dispatch, tol: f64, max_iter: usize) -> PfSolution {
    PowerFlow::new(scaled.grid).solve(scaled, dispatch, &PfOptions { tol, max_iter })
}
