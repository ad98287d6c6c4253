use serde::{Deserialize, Serialize};

/// Output channel of a regression model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    P,
    Q,
}

impl Channel {
    /// Admissible prediction range in percent of S_max.
    pub fn range(self) -> (f64, f64) {
        match self {
            Channel::P => (0.0, 100.0),
            Channel::Q => (-100.0, 100.0),
        }
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        value.clamp(lo, hi)
    }

    pub fn as_char(self) -> char {
        match self {
            Channel::P => 'P',
            Channel::Q => 'Q',
        }
    }
}

/// Voltage and one channel's setpoint: the (X, Y) pair a learner sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub v_pu: f64,
    pub theta_rad: f64,
    pub setpoint_pct: f64,
}

/// A fitted single-input model. The serialized form carries a `kind` tag
/// that identifies the payload layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RegressionModel {
    Linear { slope: f64, intercept: f64 },
    /// `y = intercept + slope·v + Σ c·max(0, v − b)` over `hinges = [[b, c], …]`
    /// with ascending `b`.
    Piecewise {
        intercept: f64,
        slope: f64,
        hinges: Vec<[f64; 2]>,
    },
    /// Look-up table `[[v_center, value], …]` with strictly increasing centers.
    Nnr(Vec<[f64; 2]>),
}

impl RegressionModel {
    /// Raw model output, not clamped.
    pub fn evaluate(&self, v_pu: f64) -> f64 {
        match self {
            RegressionModel::Linear { slope, intercept } => intercept + slope * v_pu,
            RegressionModel::Piecewise { intercept, slope, hinges } => {
                let mut y = intercept + slope * v_pu;
                for &[b, c] in hinges {
                    if v_pu > b {
                        y += c * (v_pu - b);
                    }
                }
                y
            }
            RegressionModel::Nnr(table) => table[nearest_cell(table, v_pu)][1],
        }
    }

    /// Prediction clamped to the channel range.
    pub fn predict(&self, v_pu: f64, channel: Channel) -> f64 {
        channel.clamp(self.evaluate(v_pu))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            RegressionModel::Linear { .. } => "linear",
            RegressionModel::Piecewise { .. } => "piecewise",
            RegressionModel::Nnr(_) => "nnr",
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RegressionModel::Piecewise { hinges, .. } => hinges.iter().map(|h| h[0]).collect(),
            _ => Vec::new(),
        }
    }
}

/// Index of the table cell whose center is nearest to `v`; queries outside
/// the table land in the end cells, equidistant queries in the lower cell.
pub fn nearest_cell(table: &[[f64; 2]], v: f64) -> usize {
    let upper = table.partition_point(|c| c[0] < v);
    if upper == 0 {
        return 0;
    }
    if upper == table.len() {
        return table.len() - 1;
    }
    let below = v - table[upper - 1][0];
    let above = table[upper][0] - v;
    if above < below {
        upper
    } else {
        upper - 1
    }
}

/// Sum of squared residuals of `model` over `samples`.
pub fn sse(model: &RegressionModel, samples: &[TrainingSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let r = model.evaluate(s.v_pu) - s.setpoint_pct;
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_cell_clamps_and_prefers_lower() {
        let t = vec![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]];
        assert_eq!(nearest_cell(&t, 0.0), 0);
        assert_eq!(nearest_cell(&t, 9.0), 2);
        assert_eq!(nearest_cell(&t, 1.5), 0);
        assert_eq!(nearest_cell(&t, 1.51), 1);
        assert_eq!(nearest_cell(&t, 2.0), 1);
    }

    #[test]
    fn predictions_are_clamped_per_channel() {
        let m = RegressionModel::Linear { slope: 0.0, intercept: -20.0 };
        assert_eq!(m.predict(1.0, Channel::P), 0.0);
        assert_eq!(m.predict(1.0, Channel::Q), -20.0);
        let m = RegressionModel::Linear { slope: 0.0, intercept: 150.0 };
        assert_eq!(m.predict(1.0, Channel::Q), 100.0);
    }

    #[test]
    fn piecewise_evaluates_hinges() {
        let m = RegressionModel::Piecewise {
            intercept: 5.0,
            slope: 0.0,
            hinges: vec![[1.0, 10.0], [2.0, -10.0]],
        };
        assert_eq!(m.evaluate(0.5), 5.0);
        assert_eq!(m.evaluate(1.5), 10.0);
        assert_eq!(m.evaluate(3.0), 15.0);
    }

    #[test]
    fn serialized_form_carries_kind_and_payload() {
        let m = RegressionModel::Nnr(vec![[0.95, 1.0], [1.05, 2.0]]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"kind":"nnr","payload":[[0.95,1.0],[1.05,2.0]]}"#);
        let back: RegressionModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
