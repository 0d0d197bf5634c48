//! Terminal payoffs with exact Malliavin derivatives, a finite-difference
//! oracle for those derivatives, and the moment estimators consumed by the
//! compensator formulas.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paths::{PathEnsemble, TimeGrid};
use crate::stats::EstimateCI;
use crate::timefn::TimeFn;

type CylEval = dyn Fn(&[f64]) -> f64 + Send + Sync;
type CylGrad = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// A smooth bounded function of finitely many path values, with an optional
/// analytic gradient. Without one, partial derivatives fall back to central
/// finite differences with a path-scaled step.
#[derive(Clone)]
pub struct CylinderFn {
    pub name: String,
    f: Arc<CylEval>,
    grad: Option<Arc<CylGrad>>,
}

impl fmt::Debug for CylinderFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CylinderFn({})", self.name)
    }
}

impl CylinderFn {
    pub fn new(
        name: impl Into<String>,
        f: Arc<CylEval>,
        grad: Option<Arc<CylGrad>>,
    ) -> Self {
        Self { name: name.into(), f, grad }
    }

    /// sin(sum_i w_i x_i): bounded and smooth, gradient w_i cos(.).
    pub fn sin_sum(weights: Vec<f64>) -> Self {
        let w = weights.clone();
        let wg = weights;
        Self {
            name: "sin_sum".into(),
            f: Arc::new(move |xs| xs.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>().sin()),
            grad: Some(Arc::new(move |xs, i| {
                let s: f64 = xs.iter().zip(&wg).map(|(x, wi)| x * wi).sum();
                wg[i] * s.cos()
            })),
        }
    }

    /// tanh of the average of the arguments.
    pub fn tanh_mean() -> Self {
        Self {
            name: "tanh_mean".into(),
            f: Arc::new(|xs| {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                m.tanh()
            }),
            grad: None,
        }
    }

    pub fn eval(&self, xs: &[f64]) -> f64 {
        (self.f)(xs)
    }

    pub fn partial(&self, xs: &[f64], i: usize) -> f64 {
        match &self.grad {
            Some(g) => g(xs, i),
            None => {
                let h = 1e-5 * xs[i].abs().max(1.0);
                let mut up = xs.to_vec();
                let mut dn = xs.to_vec();
                up[i] += h;
                dn[i] -= h;
                ((self.f)(&up) - (self.f)(&dn)) / (2.0 * h)
            }
        }
    }
}

/// Terminal functional of the Brownian path.
#[derive(Debug, Clone)]
pub enum Payoff {
    /// xi = int_0^T lambda(t) dB_t for deterministic lambda.
    WienerIntegral { lambda: TimeFn },
    /// xi = exp(sign * B_T - T/2).
    GeometricExponential { sign: i8 },
    /// xi = g(B_{t_1}, ..., B_{t_m}) with the t_i on the grid.
    Cylinder { times: Vec<f64>, g: CylinderFn },
    Constant { value: f64 },
}

/// Monte Carlo moments of the signed parts of D_t xi.
#[derive(Debug, Clone, Copy)]
pub struct DxiMoments {
    pub t: f64,
    /// E[D_t xi^+]
    pub mean_pos: EstimateCI,
    /// E[D_t xi^-]
    pub mean_neg: EstimateCI,
    /// E[|D_t xi^+|^{1/q+}]^{q+}
    pub lp_pos: EstimateCI,
    /// E[|D_t xi^-|^{q-}]^{1/q-}
    pub lp_neg: EstimateCI,
    pub q_minus: f64,
    pub q_plus: f64,
}

impl DxiMoments {
    pub fn mean_dxi(&self) -> f64 {
        self.mean_pos.mean - self.mean_neg.mean
    }

    pub fn mean_dxi_stderr(&self) -> f64 {
        // pos and neg parts come from the same draws; a conservative combine.
        self.mean_pos.stderr + self.mean_neg.stderr
    }
}

impl Payoff {
    pub fn geometric(sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidConfig(format!("geometric sign must be +1/-1, got {sign}")));
        }
        Ok(Payoff::GeometricExponential { sign })
    }

    fn cylinder_indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        match self {
            Payoff::Cylinder { times, .. } => times.iter().map(|&t| grid.index_of(t)).collect(),
            _ => Ok(Vec::new()),
        }
    }

    /// Evaluate on raw path data (used by the bump-and-reevaluate oracle).
    fn eval_on(&self, grid: &TimeGrid, b: &[f64], db: &[f64], lambda_grid: &[f64]) -> f64 {
        let n = grid.n_steps();
        match self {
            Payoff::WienerIntegral { .. } => {
                (0..n).map(|k| lambda_grid[k] * db[k]).sum()
            }
            Payoff::GeometricExponential { sign } => {
                (*sign as f64 * b[n] - grid.horizon() / 2.0).exp()
            }
            Payoff::Cylinder { times, g } => {
                // callers validate times beforehand
                let xs: Vec<f64> = times
                    .iter()
                    .map(|&t| b[grid.index_of(t).expect("validated cylinder time")])
                    .collect();
                g.eval(&xs)
            }
            Payoff::Constant { value } => *value,
        }
    }

    fn lambda_grid(&self, grid: &TimeGrid) -> Vec<f64> {
        match self {
            Payoff::WienerIntegral { lambda } => lambda.on_grid(grid),
            _ => Vec::new(),
        }
    }

    /// Pathwise values of xi across the ensemble.
    pub fn eval_all(&self, paths: &PathEnsemble) -> Result<Vec<f64>> {
        let grid = paths.grid();
        self.cylinder_indices(grid)?;
        let lambda = self.lambda_grid(grid);
        let out: Vec<f64> = (0..paths.n_paths())
            .into_par_iter()
            .map(|i| self.eval_on(grid, paths.brownian_row(i), paths.increment_row(i), &lambda))
            .collect();
        Ok(out)
    }

    /// Exact Malliavin derivative D_t xi at a grid time, per path.
    pub fn malliavin_all(&self, paths: &PathEnsemble, t_idx: usize) -> Result<Vec<f64>> {
        let grid = paths.grid();
        if t_idx > grid.n_steps() {
            return Err(Error::InvalidConfig(format!("time index {t_idx} is off the grid")));
        }
        let t = grid.t(t_idx);
        match self {
            Payoff::WienerIntegral { lambda } => {
                Ok(vec![lambda.eval(t); paths.n_paths()])
            }
            Payoff::GeometricExponential { sign } => {
                let xi = self.eval_all(paths)?;
                let s = *sign as f64;
                Ok(xi.into_iter().map(|v| s * v).collect())
            }
            Payoff::Cylinder { times, g } => {
                let idx = self.cylinder_indices(grid)?;
                let times = times.clone();
                let out: Vec<f64> = (0..paths.n_paths())
                    .into_par_iter()
                    .map(|i| {
                        let b = paths.brownian_row(i);
                        let xs: Vec<f64> = idx.iter().map(|&j| b[j]).collect();
                        let mut d = 0.0;
                        for (c, &tc) in times.iter().enumerate() {
                            if t <= tc + 1e-12 {
                                d += g.partial(&xs, c);
                            }
                        }
                        d
                    })
                    .collect();
                Ok(out)
            }
            Payoff::Constant { .. } => Ok(vec![0.0; paths.n_paths()]),
        }
    }

    /// The derivative when it is a deterministic function of t only.
    pub fn deterministic_malliavin(&self) -> Option<&TimeFn> {
        match self {
            Payoff::WienerIntegral { lambda } => Some(lambda),
            _ => None,
        }
    }

    /// Independent derivative check: bump every increment from t on by eps,
    /// re-evaluate, and normalize by the number of bumped steps. Recovers the
    /// average of D_s xi over [t, T].
    pub fn malliavin_fd_oracle(
        &self,
        paths: &PathEnsemble,
        t_idx: usize,
        path: usize,
        eps: f64,
    ) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig("fd oracle step must be positive".into()));
        }
        let grid = paths.grid();
        let n = grid.n_steps();
        if t_idx >= n {
            return Ok(0.0);
        }
        self.cylinder_indices(grid)?;
        let lambda = self.lambda_grid(grid);
        let b = paths.brownian_row(path);
        let db = paths.increment_row(path);
        let bumped = (n - t_idx) as f64;

        let mut db2 = db.to_vec();
        let mut b2 = b.to_vec();
        for k in t_idx..n {
            db2[k] += eps;
        }
        for j in (t_idx + 1)..=n {
            b2[j] += eps * (j - t_idx) as f64;
        }
        let base = self.eval_on(grid, b, db, &lambda);
        let shifted = self.eval_on(grid, &b2, &db2, &lambda);
        Ok((shifted - base) / (eps * bumped))
    }

    /// Moment estimates of D_t xi^+/- entering the feasibility formulas.
    /// Deterministic derivatives (Wiener integrals, constants) are reported
    /// exactly with zero standard error.
    pub fn dxi_moments(
        &self,
        paths: &PathEnsemble,
        t_idx: usize,
        q_minus: f64,
        q_plus: f64,
    ) -> Result<DxiMoments> {
        if !(q_minus > 1.0) || !(q_plus > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "moment exponents must exceed 1, got q- = {q_minus}, q+ = {q_plus}"
            )));
        }
        let grid = paths.grid();
        let t = grid.t(t_idx);
        let n = paths.n_paths();

        let deterministic = match self {
            Payoff::WienerIntegral { lambda } => Some(lambda.eval(t)),
            Payoff::Constant { .. } => Some(0.0),
            _ => None,
        };
        if let Some(v) = deterministic {
            let pos = v.max(0.0);
            let neg = (-v).max(0.0);
            return Ok(DxiMoments {
                t,
                mean_pos: EstimateCI::exact(pos, n),
                mean_neg: EstimateCI::exact(neg, n),
                lp_pos: EstimateCI::exact(pos, n),
                lp_neg: EstimateCI::exact(neg, n),
                q_minus,
                q_plus,
            });
        }

        let d = self.malliavin_all(paths, t_idx)?;
        let pos: Vec<f64> = d.iter().map(|&x| x.max(0.0)).collect();
        let neg: Vec<f64> = d.iter().map(|&x| (-x).max(0.0)).collect();
        let pow_pos: Vec<f64> = pos.iter().map(|&x| x.powf(1.0 / q_plus)).collect();
        let pow_neg: Vec<f64> = neg.iter().map(|&x| x.powf(q_minus)).collect();
        Ok(DxiMoments {
            t,
            mean_pos: EstimateCI::from_slice(&pos),
            mean_neg: EstimateCI::from_slice(&neg),
            lp_pos: EstimateCI::from_slice(&pow_pos).powf(q_plus),
            lp_neg: EstimateCI::from_slice(&pow_neg).powf(1.0 / q_minus),
            q_minus,
            q_plus,
        })
    }
}
