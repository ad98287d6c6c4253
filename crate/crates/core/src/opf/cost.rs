use serde::{Deserialize, Serialize};

use crate::error::OpfError;
use crate::grid::ScaledGrid;
use crate::powerflow::{Dispatch, PfSolution};

/// Unit in which DER powers enter the Q and curtailment terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerNormalization {
    /// Fraction of each DER's own apparent-power rating.
    RatedApparent,
    /// Per-unit on a common MVA base.
    SystemBase { mva: f64 },
}

impl PowerNormalization {
    fn base_mva(&self, s_max_mva: f64) -> f64 {
        match *self {
            PowerNormalization::RatedApparent => s_max_mva,
            PowerNormalization::SystemBase { mva } => mva,
        }
    }
}

/// Weights of the OPF objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c_v: f64,
    pub c_p: f64,
    pub c_q: f64,
    pub deadband_pu: f64,
    #[serde(default = "default_normalization")]
    pub normalization: PowerNormalization,
}

fn default_normalization() -> PowerNormalization {
    PowerNormalization::RatedApparent
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c_v: 2e3,
            c_p: 1e6,
            c_q: 1e4,
            deadband_pu: 0.01,
            normalization: PowerNormalization::RatedApparent,
        }
    }
}

impl CostParams {
    /// Weights after the cost-function change used for the retraining study.
    pub fn retrain_variant(&self) -> Self {
        Self {
            c_p: 1e5,
            c_q: 5e4,
            ..*self
        }
    }

    pub fn with_deadband(&self, deadband_pu: f64) -> Self {
        Self { deadband_pu, ..*self }
    }

    /// Warn when reactive power is priced at or above curtailment.
    pub fn check(&self) {
        if self.c_q >= self.c_p {
            log::warn!("c_q ({}) >= c_p ({}): reactive power no cheaper than curtailment", self.c_q, self.c_p);
        }
    }

    pub(crate) fn base_mva(&self, s_max_mva: f64) -> f64 {
        self.normalization.base_mva(s_max_mva)
    }
}

/// Excess below which a voltage counts as on the band edge, so that e.g.
/// 1.010 with a 0.01 band is cost-free despite `1.01 - 1.0 > 0.01` in
/// binary floating point.
const EDGE_TOL: f64 = 1e-12;

/// Dead-band cubic voltage penalty: zero while `|v - 1| <= deadband`,
/// `(|v - 1| - deadband)^3` outside. Value, slope and curvature all vanish
/// at the band edge.
pub fn voltage_penalty(v_pu: f64, deadband: f64) -> f64 {
    let excess = (v_pu - 1.0).abs() - deadband;
    if excess <= EDGE_TOL {
        0.0
    } else {
        excess * excess * excess
    }
}

/// d/dv of [`voltage_penalty`].
pub fn voltage_penalty_slope(v_pu: f64, deadband: f64) -> f64 {
    let dev = v_pu - 1.0;
    let excess = dev.abs() - deadband;
    if excess <= EDGE_TOL {
        0.0
    } else {
        3.0 * excess * excess * dev.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub voltage: f64,
    pub reactive: f64,
    pub curtailment: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.voltage + self.reactive + self.curtailment
    }
}

/// Objective split into its three terms. The voltage term runs over every
/// bus; the reactive and curtailment terms over controllable DERs, with DERs
/// on the slack bus excluded from curtailment.
pub fn cost_breakdown(scaled: &ScaledGrid<'_>, pf: &PfSolution, dispatch: &Dispatch, params: &CostParams) -> CostBreakdown {
    let voltage = params.c_v * pf.v_pu.iter().map(|&v| voltage_penalty(v, params.deadband_pu)).sum::<f64>();
    let mut reactive = 0.0;
    let mut curtailment = 0.0;
    for (i, der) in scaled.grid.ders.iter().enumerate() {
        if !der.controllable {
            continue;
        }
        let base = params.base_mva(der.s_max_mva);
        let sp = dispatch.0[i];
        let q = sp.q_mvar / base;
        reactive += q * q;
        if der.bus != 1 {
            let shortfall = (scaled.p_avail_mw[i] - sp.p_mw) / base;
            curtailment += shortfall * shortfall;
        }
    }
    CostBreakdown {
        voltage,
        reactive: params.c_q * reactive,
        curtailment: params.c_p * curtailment,
    }
}

/// Total operating cost of a solved state.
pub fn total_cost(scaled: &ScaledGrid<'_>, pf: &PfSolution, dispatch: &Dispatch, params: &CostParams) -> Result<f64, OpfError> {
    if !pf.converged {
        return Err(OpfError::PowerFlowDiverged);
    }
    if dispatch.len() != scaled.grid.ders.len() {
        return Err(OpfError::DispatchShape {
            expected: scaled.grid.ders.len(),
            got: dispatch.len(),
        });
    }
    Ok(cost_breakdown(scaled, pf, dispatch, params).total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_scenario, GridModel, Scenario};
    use crate::powerflow::DerSetpoint;

    #[test]
    fn penalty_examples() {
        assert_eq!(voltage_penalty(1.000, 0.01), 0.0);
        assert_eq!(voltage_penalty(1.010, 0.01), 0.0);
        assert!((voltage_penalty(1.020, 0.01) - 1e-6).abs() < 1e-15);
        assert!((voltage_penalty(0.980, 0.01) - 1e-6).abs() < 1e-15);
        assert!((voltage_penalty(1.05, 0.0) - 0.05f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn penalty_is_twice_differentiable_at_band_edge() {
        let db = 0.01;
        let h = 1e-4;
        for edge in [1.0 + db, 1.0 - db] {
            let f = |v: f64| voltage_penalty(v, db);
            let d2 = (f(edge + h) - 2.0 * f(edge) + f(edge - h)) / (h * h);
            assert!(d2.abs() < 1e-3, "curvature jump {d2} at {edge}");
            assert!(voltage_penalty_slope(edge, db).abs() < 1e-15);
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        for &v in &[0.93, 0.985, 1.0, 1.004, 1.02, 1.07] {
            let h = 1e-7;
            let fd = (voltage_penalty(v + h, 0.01) - voltage_penalty(v - h, 0.01)) / (2.0 * h);
            assert!((fd - voltage_penalty_slope(v, 0.01)).abs() < 1e-9);
        }
    }

    fn three_bus() -> GridModel {
        GridModel::from_json(
            r#"{"s_base_mva": 1.0,
                "buses": [
                  {"id": 1, "kind": "Slack", "base_voltage_kv": 20.0, "load_p_mw": 0.0, "load_q_mvar": 0.0},
                  {"id": 2, "kind": "PQ", "base_voltage_kv": 20.0, "load_p_mw": 0.0, "load_q_mvar": 0.0},
                  {"id": 3, "kind": "PQ", "base_voltage_kv": 20.0, "load_p_mw": 0.0, "load_q_mvar": 0.0}
                ],
                "branches": [
                  {"from_bus": 1, "to_bus": 2, "r_pu": 0.01, "x_pu": 0.02, "b_pu": 0.0},
                  {"from_bus": 2, "to_bus": 3, "r_pu": 0.01, "x_pu": 0.02, "b_pu": 0.0}
                ],
                "ders": [
                  {"bus": 2, "kind": "Wind", "s_max_mva": 2.0, "p_max_mw": 1.8, "controllable": true},
                  {"bus": 3, "kind": "PV", "s_max_mva": 1.0, "p_max_mw": 1.0, "controllable": false}
                ]}"#,
        )
        .unwrap()
    }

    fn solved(v: &[f64]) -> PfSolution {
        PfSolution {
            v_pu: v.to_vec(),
            theta_rad: vec![0.0; v.len()],
            converged: true,
            iterations: 1,
            max_mismatch_pu: 0.0,
        }
    }

    #[test]
    fn zero_cost_when_everything_vanishes() {
        let g = three_bus();
        let s = apply_scenario(&g, Scenario::new(1.0, 1.0, 1.0).unwrap());
        let pf = solved(&[1.0, 1.005, 0.995]);
        let cost = total_cost(&s, &pf, &Dispatch::unity_pf(&s), &CostParams::default()).unwrap();
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn single_curtailment_term() {
        let g = three_bus();
        let s = apply_scenario(&g, Scenario::new(1.0, 1.0, 1.0).unwrap());
        let mut d = Dispatch::unity_pf(&s);
        // curtail 10 % of S_max = 0.2 MW
        d.0[0].p_mw -= 0.2;
        let cost = total_cost(&s, &solved(&[1.0; 3]), &d, &CostParams::default()).unwrap();
        assert!((cost - 1e4).abs() < 1e-6);
    }

    #[test]
    fn hand_evaluated_three_bus() {
        let g = three_bus();
        let s = apply_scenario(&g, Scenario::new(1.0, 0.5, 0.5).unwrap());
        let d = Dispatch(vec![
            DerSetpoint { p_mw: 0.7, q_mvar: -0.3 },
            DerSetpoint { p_mw: 0.5, q_mvar: 0.0 },
        ]);
        let pf = solved(&[1.0, 1.03, 1.045]);
        let params = CostParams::default();
        // voltage: (0.02)^3 + (0.035)^3 = 8e-6 + 4.2875e-5
        // reactive: (-0.3 / 2)^2 = 0.0225
        // curtailment: ((0.9 - 0.7) / 2)^2 = 0.01
        let expect = 2e3 * (8e-6 + 4.2875e-5) + 1e4 * 0.0225 + 1e6 * 0.01;
        let got = total_cost(&s, &pf, &d, &params).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");

        let sys = CostParams {
            normalization: PowerNormalization::SystemBase { mva: 10.0 },
            ..params
        };
        let expect_sys = 2e3 * (8e-6 + 4.2875e-5) + 1e4 * 0.03f64.powi(2) + 1e6 * 0.02f64.powi(2);
        let got_sys = total_cost(&s, &pf, &d, &sys).unwrap();
        assert!((got_sys - expect_sys).abs() < 1e-9 * expect_sys);
    }

    #[test]
    fn rejects_unconverged_state() {
        let g = three_bus();
        let s = apply_scenario(&g, Scenario::new(1.0, 1.0, 1.0).unwrap());
        let mut pf = solved(&[1.0; 3]);
        pf.converged = false;
        assert!(matches!(
            total_cost(&s, &pf, &Dispatch::unity_pf(&s), &CostParams::default()),
            Err(OpfError::PowerFlowDiverged)
        ));
    }
}
