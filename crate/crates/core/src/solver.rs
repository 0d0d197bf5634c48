//! BSDE solutions: closed forms for the recognized configurations and a
//! backward least-squares regression scheme in general.
//!
//! The regression scheme propagates the pathwise accumulated value
//! V_j = xi + sum_{l >= j} (f dt + dK) and extracts the control from the
//! centered increment identity Z_t ~ E_t[(V - E V) dB]/dt. Projections onto
//! the basis happen per step for the continuation estimate that feeds the
//! driver; the value accumulation itself stays pathwise, which keeps Y_0
//! unbiased for path-dependent terminal conditions.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::CompensatorPaths;
use crate::driver::{Driver, DriverKind};
use crate::error::{Error, Result};
use crate::paths::PathEnsemble;
use crate::payoff::Payoff;
use crate::stats::{det_mean, mean_stderr, EstimateCI, DET_CHUNK};
use crate::timefn::TimeFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// Polynomials in the Brownian state.
    PolyB,
    /// Monomials in (Brownian state, compensator density).
    PolyBk,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub family: BasisFamily,
    pub degree: u32,
}

impl RegressionBasis {
    pub fn poly_b(degree: u32) -> Self {
        Self { family: BasisFamily::PolyB, degree }
    }

    pub fn poly_bk(degree: u32) -> Self {
        Self { family: BasisFamily::PolyBk, degree }
    }

    fn monomials(&self) -> Result<Vec<(u32, u32)>> {
        if self.degree == 0 {
            return Err(Error::InvalidConfig("basis degree must be at least 1".into()));
        }
        let mut out = Vec::new();
        match self.family {
            BasisFamily::PolyB => {
                for a in 0..=self.degree {
                    out.push((a, 0));
                }
            }
            BasisFamily::PolyBk => {
                for total in 0..=self.degree {
                    for a in 0..=total {
                        out.push((a, total - a));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    Explicit,
    /// One fixed-point refinement of the y argument in the driver.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    Regression,
}

/// Per-path solution processes with diagnostics.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub y: Array2<f64>,
    pub z: Array2<f64>,
    pub comp: CompensatorPaths,
    pub terminal_residual: Vec<f64>,
    pub method: SolveMethod,
    /// False when the scheme leaves Z_T undefined (the terminal column then
    /// repeats the last interior one).
    pub z_terminal_defined: bool,
    /// Standard error of the E[Z_t] estimate per grid index. For regression
    /// solutions this is the raw target's mean noise, which dominates the
    /// spread of the fitted values.
    pub z_mean_stderr: Vec<f64>,
}

impl BsdeSolution {
    pub fn y0(&self) -> EstimateCI {
        let col: Vec<f64> = (0..self.y.nrows()).map(|i| self.y[[i, 0]]).collect();
        EstimateCI::from_slice(&col)
    }

    pub fn y_col(&self, k: usize) -> Vec<f64> {
        (0..self.y.nrows()).map(|i| self.y[[i, k]]).collect()
    }

    pub fn z_col(&self, k: usize) -> Vec<f64> {
        (0..self.z.nrows()).map(|i| self.z[[i, k]]).collect()
    }

    /// Last grid index at which Z is defined by the scheme.
    pub fn z_last_index(&self, n_steps: usize) -> usize {
        if self.z_terminal_defined {
            n_steps
        } else {
            n_steps - 1
        }
    }
}

fn alpha_is_one(comp: &CompensatorPaths, n: usize) -> bool {
    !comp.trivial
        && comp.p == 1.0
        && comp.alpha.len() > n - 1
        && comp.alpha[..n].iter().all(|a| (a - 1.0).abs() <= 1e-12)
}

fn lambda_matches_maturity_weight(lambda: &TimeFn, paths: &PathEnsemble) -> bool {
    let grid = paths.grid();
    let horizon = grid.horizon();
    grid.times().iter().all(|&t| (lambda.eval(t) + (horizon - t)).abs() <= 1e-12)
}

/// Exact pathwise solution for the recognized configurations:
/// the trivial families (constant payoff, or Wiener-integral payoff with a
/// zero driver and no compensator) and the two compensated worked examples.
pub fn solve_closed_form(
    payoff: &Payoff,
    driver: &Driver,
    comp: CompensatorPaths,
    paths: &PathEnsemble,
) -> Result<BsdeSolution> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let n_paths = paths.n_paths();
    let horizon = grid.horizon();

    enum Form {
        ConstantFlat(f64),
        WienerMartingale,
        CompensatedWiener,
        CompensatedGeometric,
    }

    let form = match (payoff, &driver.kind) {
        (Payoff::Constant { value }, DriverKind::Zero) if comp.trivial => {
            Form::ConstantFlat(*value)
        }
        (Payoff::WienerIntegral { .. }, DriverKind::Zero) if comp.trivial => {
            Form::WienerMartingale
        }
        (Payoff::WienerIntegral { lambda }, DriverKind::Zero)
            if alpha_is_one(&comp, n) && lambda_matches_maturity_weight(lambda, paths) =>
        {
            Form::CompensatedWiener
        }
        (Payoff::GeometricExponential { sign: 1 }, DriverKind::ExpInverse)
            if alpha_is_one(&comp, n) =>
        {
            Form::CompensatedGeometric
        }
        _ => {
            return Err(Error::NoClosedForm(format!(
                "payoff {:?} with driver {} and alpha {:?}",
                payoff,
                driver.name(),
                if comp.trivial { "none".to_string() } else { format!("{:?}...", comp.alpha.first()) }
            )))
        }
    };

    let mut y = Array2::zeros((n_paths, n + 1));
    let mut z = Array2::zeros((n_paths, n + 1));
    let lambda_grid: Vec<f64> = match payoff {
        Payoff::WienerIntegral { lambda } => lambda.on_grid(grid),
        _ => Vec::new(),
    };
    let times: Vec<f64> = grid.times().to_vec();

    {
        let ys = y.as_slice_mut().expect("standard layout");
        let zs = z.as_slice_mut().expect("standard layout");
        ys.par_chunks_mut(n + 1)
            .zip(zs.par_chunks_mut(n + 1))
            .enumerate()
            .for_each(|(i, (yrow, zrow))| {
                let b = paths.brownian_row(i);
                let db = paths.increment_row(i);
                match form {
                    Form::ConstantFlat(c) => {
                        for j in 0..=n {
                            yrow[j] = c;
                            zrow[j] = 0.0;
                        }
                    }
                    Form::WienerMartingale => {
                        // Y_t = int_0^t lambda dB, Z_t = lambda(t)
                        let mut acc = 0.0;
                        yrow[0] = 0.0;
                        zrow[0] = lambda_grid[0];
                        for j in 0..n {
                            acc += lambda_grid[j] * db[j];
                            yrow[j + 1] = acc;
                            zrow[j + 1] = lambda_grid[j + 1];
                        }
                    }
                    Form::CompensatedWiener => {
                        // Y_t = e^{B_t - t/2}(T - t) - int_0^t (T - s) dB_s
                        // Z_t = (e^{B_t - t/2} - 1)(T - t)
                        let mut past = 0.0;
                        for j in 0..=n {
                            let dt = horizon - times[j];
                            let exp_b = (b[j] - times[j] / 2.0).exp();
                            yrow[j] = exp_b * dt - past;
                            zrow[j] = (exp_b - 1.0) * dt;
                            if j < n {
                                past += -lambda_grid[j] * db[j];
                            }
                        }
                    }
                    Form::CompensatedGeometric => {
                        // Y_t = e^{B_t - t/2} + (T-t)(e^{-B_t - t/2} + e^{B_t - t/2})
                        // Z_t = e^{B_t - t/2} + (T-t)(e^{B_t - t/2} - e^{-B_t - t/2})
                        for j in 0..=n {
                            let dt = horizon - times[j];
                            let up = (b[j] - times[j] / 2.0).exp();
                            let dn = (-b[j] - times[j] / 2.0).exp();
                            yrow[j] = up + dt * (dn + up);
                            zrow[j] = up + dt * (up - dn);
                        }
                    }
                }
            });
    }

    let xi = payoff.eval_all(paths)?;
    let terminal_residual: Vec<f64> = (0..n_paths).map(|i| y[[i, n]] - xi[i]).collect();
    let z_mean_stderr: Vec<f64> = (0..=n)
        .map(|k| {
            let col: Vec<f64> = (0..n_paths).map(|i| z[[i, k]]).collect();
            mean_stderr(&col).1
        })
        .collect();

    Ok(BsdeSolution {
        y,
        z,
        comp,
        terminal_residual,
        method: SolveMethod::ClosedForm,
        z_terminal_defined: true,
        z_mean_stderr,
    })
}

const PIVOT_TOL: f64 = 1e-12;
const DROP_TOL: f64 = 1e-18;
const RIDGE_CONTINUATION: f64 = 1e-6;
const RIDGE_CONTROL: f64 = 1e-6;
const DUPLICATE_TOL: f64 = 1e-12;

#[inline]
fn pow_u(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => x.powi(e as i32),
    }
}

/// Cross-sectional least-squares design shared by the per-step fits.
/// Columns are centered and scaled to correlation form with a tiny ridge,
/// which keeps the exponential-of-Brownian regressors solvable at small
/// times. Constant columns drop out (the state is deterministic at t = 0);
/// exact duplicates raise the singular error.
struct StepDesign<'a> {
    b_col: &'a [f64],
    k_col: &'a [f64],
    step: usize,
    kept_monos: Vec<(u32, u32)>,
    mu: Vec<f64>,
    sdev: Vec<f64>,
    /// Ridged correlation matrix of the kept columns.
    corr: Vec<f64>,
}

impl<'a> StepDesign<'a> {
    fn build(
        b_col: &'a [f64],
        k_col: &'a [f64],
        monos: &[(u32, u32)],
        step: usize,
    ) -> Result<Self> {
        let n_paths = b_col.len();
        let m = monos.len();
        if n_paths < m {
            return Err(Error::RegressionSingular { step });
        }

        // Block-accumulated Gram matrix, deterministic under any worker count.
        let n_blocks = n_paths.div_ceil(DET_CHUNK);
        let blocks: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|bi| {
                let lo = bi * DET_CHUNK;
                let hi = ((bi + 1) * DET_CHUNK).min(n_paths);
                let mut gram = vec![0.0; m * m];
                let mut cols = vec![0.0; m];
                for i in lo..hi {
                    for (j, &(a, c)) in monos.iter().enumerate() {
                        cols[j] = pow_u(b_col[i], a) * pow_u(k_col[i], c);
                    }
                    for (j, &cj) in cols.iter().enumerate() {
                        for (l, &cl) in cols.iter().enumerate().take(j + 1) {
                            gram[j * m + l] += cj * cl;
                        }
                    }
                }
                gram
            })
            .collect();
        let mut gram = vec![0.0; m * m];
        for b in &blocks {
            for j in 0..m * m {
                gram[j] += b[j];
            }
        }
        let nf = n_paths as f64;
        let at = |j: usize, l: usize| -> f64 {
            if l <= j {
                gram[j * m + l]
            } else {
                gram[l * m + j]
            }
        };

        // Column means come from the intercept row; centered second moments
        // select the non-constant columns.
        let mu_all: Vec<f64> = (0..m).map(|j| at(j, 0) / nf).collect();
        let mut keep = Vec::new();
        let mut sdev = Vec::new();
        for j in 1..m {
            let var = (at(j, j) / nf - mu_all[j] * mu_all[j]).max(0.0);
            if var > DROP_TOL * (at(j, j) / nf).max(1.0) {
                keep.push(j);
                sdev.push(var.sqrt());
            }
        }
        let r = keep.len();

        let mut corr = vec![0.0; r * r];
        for jj in 0..r {
            for ll in 0..=jj {
                let (j, l) = (keep[jj], keep[ll]);
                let cov = at(j, l) / nf - mu_all[j] * mu_all[l];
                let c = cov / (sdev[jj] * sdev[ll]);
                if jj != ll && c.abs() >= 1.0 - DUPLICATE_TOL {
                    return Err(Error::RegressionSingular { step });
                }
                corr[jj * r + ll] = c;
                corr[ll * r + jj] = c;
            }
        }

        Ok(Self {
            b_col,
            k_col,
            step,
            kept_monos: keep.iter().map(|&j| monos[j]).collect(),
            mu: keep.iter().map(|&j| mu_all[j]).collect(),
            sdev,
            corr,
        })
    }

    /// Project a target onto the design; returns the fitted values. The
    /// ridge shrinks the near-degenerate correlation directions whose
    /// coefficient noise would otherwise explode at extreme paths; the
    /// conditional means sit in well-conditioned directions, so the induced
    /// bias is far below the Monte Carlo noise floor.
    fn fit(&self, target: &[f64], ridge: f64) -> Result<Vec<f64>> {
        let n_paths = self.b_col.len();
        let nf = n_paths as f64;
        let r = self.kept_monos.len();
        let ybar = det_mean(target);
        if r == 0 {
            // Deterministic state: the projection is the plain mean.
            return Ok(vec![ybar; n_paths]);
        }

        // Deterministic block accumulation of X^T y over kept columns.
        let n_blocks = n_paths.div_ceil(DET_CHUNK);
        let blocks: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|bi| {
                let lo = bi * DET_CHUNK;
                let hi = ((bi + 1) * DET_CHUNK).min(n_paths);
                let mut xty = vec![0.0; r];
                for i in lo..hi {
                    let y = target[i];
                    for (jj, &(a, c)) in self.kept_monos.iter().enumerate() {
                        xty[jj] += pow_u(self.b_col[i], a) * pow_u(self.k_col[i], c) * y;
                    }
                }
                xty
            })
            .collect();
        let mut xty = vec![0.0; r];
        for b in &blocks {
            for j in 0..r {
                xty[j] += b[j];
            }
        }
        let mut rhs: Vec<f64> =
            (0..r).map(|jj| (xty[jj] / nf - self.mu[jj] * ybar) / self.sdev[jj]).collect();

        // Gaussian elimination with partial pivoting on a copy of the
        // ridged correlation matrix (r is tiny).
        let mut a = self.corr.clone();
        for j in 0..r {
            a[j * r + j] += ridge;
        }
        let mut perm: Vec<usize> = (0..r).collect();
        for col in 0..r {
            let (pivot_row, pivot_val) = (col..r)
                .map(|row| (row, a[perm[row] * r + col].abs()))
                .fold((col, 0.0), |best, cand| if cand.1 > best.1 { cand } else { best });
            if pivot_val <= PIVOT_TOL {
                return Err(Error::RegressionSingular { step: self.step });
            }
            perm.swap(col, pivot_row);
            let prow = perm[col];
            for row in (col + 1)..r {
                let rrow = perm[row];
                let factor = a[rrow * r + col] / a[prow * r + col];
                if factor != 0.0 {
                    for l in col..r {
                        a[rrow * r + l] -= factor * a[prow * r + l];
                    }
                    rhs[rrow] -= factor * rhs[prow];
                }
            }
        }
        let mut theta = vec![0.0; r];
        for col in (0..r).rev() {
            let prow = perm[col];
            let mut acc = rhs[prow];
            for l in (col + 1)..r {
                acc -= a[prow * r + l] * theta[l];
            }
            theta[col] = acc / a[prow * r + col];
        }

        // Fold centering and scaling into affine coefficients.
        let mut constant = ybar;
        let coef: Vec<f64> = (0..r)
            .map(|jj| {
                let c = theta[jj] / self.sdev[jj];
                constant -= c * self.mu[jj];
                c
            })
            .collect();
        let mut fitted = vec![0.0; n_paths];
        fitted.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let mut acc = constant;
            for (jj, &(aexp, cexp)) in self.kept_monos.iter().enumerate() {
                acc += coef[jj] * pow_u(self.b_col[i], aexp) * pow_u(self.k_col[i], cexp);
            }
            *slot = acc;
        });
        Ok(fitted)
    }
}

/// How the backward value recursion treats the continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// Accumulate the value pathwise: unbiased Y_0 for path-dependent
    /// terminal conditions, with a martingale control variate built from
    /// the already-fitted controls.
    Pathwise,
    /// Replace the value by its fitted projection each step: the classic
    /// Markov recursion, which damps noise through stiff drivers but
    /// assumes the state carries the value.
    Projected,
}

/// Backward regression Monte Carlo for Y_t = xi + int f ds - int Z dB +
/// K_T - K_t, with the pathwise value recursion. `extra_source` adds a
/// deterministic per-step term to the driver (used by the law-penalized
/// iteration).
pub fn solve_regression(
    payoff: &Payoff,
    driver: &Driver,
    comp: CompensatorPaths,
    paths: &PathEnsemble,
    basis: RegressionBasis,
    scheme: TimeScheme,
    extra_source: Option<&[f64]>,
) -> Result<BsdeSolution> {
    solve_regression_with(
        payoff,
        driver,
        comp,
        paths,
        basis,
        scheme,
        extra_source,
        ValueMode::Pathwise,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn solve_regression_with(
    payoff: &Payoff,
    driver: &Driver,
    comp: CompensatorPaths,
    paths: &PathEnsemble,
    basis: RegressionBasis,
    scheme: TimeScheme,
    extra_source: Option<&[f64]>,
    value_mode: ValueMode,
) -> Result<BsdeSolution> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let n_paths = paths.n_paths();
    let monos = basis.monomials()?;
    if let Some(src) = extra_source {
        if src.len() < n {
            return Err(Error::ShapeMismatch(format!(
                "source term has {} values, grid needs {}",
                src.len(),
                n
            )));
        }
    }

    let xi = payoff.eval_all(paths)?;
    let mut y = Array2::zeros((n_paths, n + 1));
    let mut z = Array2::zeros((n_paths, n + 1));
    for i in 0..n_paths {
        y[[i, n]] = xi[i];
    }
    let mut z_mean_stderr = vec![0.0; n + 1];

    let ones = vec![1.0; n_paths];
    let mut value = xi.clone();
    // Accumulated martingale of the already-fitted controls,
    // sum_{l > step} Z_l dB_l per path. Subtracting it from the value
    // targets removes the future noise they cannot predict; the conditional
    // expectations are unchanged because every summand has zero mean given
    // the time-step state.
    let mut mart = vec![0.0; n_paths];
    let mut dk = vec![0.0; n_paths];
    let mut resid = vec![0.0; n_paths];
    let mut w = vec![0.0; n_paths];

    for step in (0..n).rev() {
        let t = grid.t(step);
        let dt = grid.dt(step);
        comp.delta_k(paths, step, &mut dk);

        let b_col: Vec<f64> = (0..n_paths).map(|i| paths.brownian()[[i, step]]).collect();
        let k_col: Vec<f64> = if comp.trivial {
            ones.clone()
        } else {
            (0..n_paths).map(|i| comp.k[[i, step]]).collect()
        };
        let design = StepDesign::build(&b_col, &k_col, &monos, step)?;

        // In projected mode the value is already a smooth function of the
        // state and the control-variate martingale stays empty.
        for i in 0..n_paths {
            resid[i] = value[i] - mart[i];
        }
        let c_fit = design.fit(&resid, RIDGE_CONTINUATION)?;
        let db = paths.increments();
        for i in 0..n_paths {
            w[i] = (resid[i] - c_fit[i]) * db[[i, step]] / dt;
        }
        z_mean_stderr[step] = mean_stderr(&w).1;
        let z_fit = design.fit(&w, RIDGE_CONTROL)?;
        if value_mode == ValueMode::Pathwise {
            for i in 0..n_paths {
                mart[i] += z_fit[i] * db[[i, step]];
            }
        }

        // Driver evaluation at the continuation proxy (one refinement pass
        // for the implicit variant), then pathwise value update.
        let src = extra_source.map_or(0.0, |s| s[step]);
        for i in 0..n_paths {
            let f_val = match scheme {
                TimeScheme::Explicit => driver.eval(t, b_col[i], c_fit[i], z_fit[i]) + src,
                TimeScheme::Implicit => {
                    let f0 = driver.eval(t, b_col[i], c_fit[i], z_fit[i]) + src;
                    let y1 = c_fit[i] + f0 * dt + dk[i];
                    driver.eval(t, b_col[i], y1, z_fit[i]) + src
                }
            };
            y[[i, step]] = c_fit[i] + f_val * dt + dk[i];
            z[[i, step]] = z_fit[i];
            value[i] = match value_mode {
                ValueMode::Pathwise => value[i] + f_val * dt + dk[i],
                ValueMode::Projected => y[[i, step]],
            };
        }
    }

    // The scheme defines Z up to the last interior point.
    for i in 0..n_paths {
        z[[i, n]] = z[[i, n - 1]];
    }
    z_mean_stderr[n] = z_mean_stderr[n - 1];

    let terminal_residual = vec![0.0; n_paths];
    Ok(BsdeSolution {
        y,
        z,
        comp,
        terminal_residual,
        method: SolveMethod::Regression,
        z_terminal_defined: false,
        z_mean_stderr,
    })
}

/// Closed form first, regression as the fallback.
pub fn solve_auto(
    payoff: &Payoff,
    driver: &Driver,
    comp: CompensatorPaths,
    paths: &PathEnsemble,
    basis: RegressionBasis,
    scheme: TimeScheme,
) -> Result<BsdeSolution> {
    match solve_closed_form(payoff, driver, comp.clone(), paths) {
        Ok(sol) => Ok(sol),
        Err(Error::NoClosedForm(_)) => {
            solve_regression(payoff, driver, comp, paths, basis, scheme, None)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub enum PenalizedMethod {
    /// Exact representation when the driver vanishes:
    /// Y_0^n = E[xi] + n int (E[D_s xi])^- ds.
    ClosedFormF0,
    /// Picard iteration on the deterministic profile m(s) = E[Z_s], each
    /// pass solving the BSDE with the frozen penalty n m(s)^-.
    MeanField { basis: RegressionBasis, scheme: TimeScheme, tol: f64, max_iter: usize },
}

impl PenalizedMethod {
    pub fn mean_field(basis: RegressionBasis) -> Self {
        PenalizedMethod::MeanField { basis, scheme: TimeScheme::Explicit, tol: 1e-3, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PenalizedOutcome {
    pub y0: f64,
    /// E[Z_s] on the grid.
    pub profile: Vec<f64>,
    pub iterations: usize,
}

/// Solve the law-penalized equation with penalty level `n_level`.
pub fn solve_penalized(
    payoff: &Payoff,
    driver: &Driver,
    n_level: f64,
    paths: &PathEnsemble,
    method: &PenalizedMethod,
) -> Result<PenalizedOutcome> {
    let grid = paths.grid();
    let n = grid.n_steps();
    match method {
        PenalizedMethod::ClosedFormF0 => {
            if !matches!(driver.kind, DriverKind::Zero) {
                return Err(Error::InvalidConfig(
                    "the closed-form penalized representation needs a zero driver".into(),
                ));
            }
            let xi = payoff.eval_all(paths)?;
            let xi_mean = det_mean(&xi);
            let mut profile = Vec::with_capacity(n + 1);
            for k in 0..=n {
                profile.push(payoff.dxi_moments(paths, k, 2.0, 2.0)?.mean_dxi());
            }
            // Trapezoid quadrature of (E[D_s xi])^-; exact for the affine
            // profiles of the Wiener-integral payoffs.
            let mut quad = 0.0;
            for k in 0..n {
                let f0 = (-profile[k]).max(0.0);
                let f1 = (-profile[k + 1]).max(0.0);
                quad += 0.5 * (f0 + f1) * grid.dt(k);
            }
            Ok(PenalizedOutcome { y0: xi_mean + n_level * quad, profile, iterations: 1 })
        }
        PenalizedMethod::MeanField { basis, scheme, tol, max_iter } => {
            let mut profile = vec![0.0; n + 1];
            let mut last_delta = f64::INFINITY;
            for iter in 1..=*max_iter {
                let source: Vec<f64> =
                    profile.iter().map(|&m: &f64| n_level * (-m).max(0.0)).collect();
                let sol = solve_regression(
                    payoff,
                    driver,
                    CompensatorPaths::zero(paths),
                    paths,
                    *basis,
                    *scheme,
                    Some(&source),
                )?;
                let mut next = vec![0.0; n + 1];
                for (k, slot) in next.iter_mut().enumerate() {
                    *slot = det_mean(&sol.z_col(k));
                }
                last_delta = profile
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                profile = next;
                if last_delta <= *tol {
                    return Ok(PenalizedOutcome {
                        y0: sol.y0().mean,
                        profile,
                        iterations: iter,
                    });
                }
            }
            Err(Error::NonConvergence { iterations: *max_iter, sup_delta: last_delta })
        }
    }
}
