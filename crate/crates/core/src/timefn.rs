//! Deterministic functions of time, serializable in run configs.
//!
//! These cover every deterministic coefficient the configs need: constraint
//! levels, Wiener-integral weights, compensator exponents, volatility curves.

use serde::{Deserialize, Serialize};

use crate::paths::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFn {
    Constant { value: f64 },
    /// coeffs[0] + coeffs[1] t + coeffs[2] t^2 + ...
    Poly { coeffs: Vec<f64> },
    /// Linear interpolation through (times[i], values[i]); clamped outside.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

impl TimeFn {
    pub fn constant(value: f64) -> Self {
        TimeFn::Constant { value }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant { value } => *value,
            TimeFn::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            TimeFn::PiecewiseLinear { times, values } => {
                if times.is_empty() {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    pub fn on_grid(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times().iter().map(|&t| self.eval(t)).collect()
    }

    pub fn is_zero_on(&self, grid: &TimeGrid) -> bool {
        grid.times().iter().all(|&t| self.eval(t) == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_eval() {
        // -(1 - t) written as -1 + t
        let f = TimeFn::Poly { coeffs: vec![-1.0, 1.0] };
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(f.eval(0.3), -0.7);
        assert_eq!(f.eval(1.0), 0.0);
    }

    #[test]
    fn piecewise_linear_clamps() {
        let f = TimeFn::PiecewiseLinear { times: vec![0.0, 1.0], values: vec![2.0, 4.0] };
        assert_eq!(f.eval(-1.0), 2.0);
        assert_eq!(f.eval(0.5), 3.0);
        assert_eq!(f.eval(2.0), 4.0);
    }
}
