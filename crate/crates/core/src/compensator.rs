//! Construction of the nondecreasing compensator K from explicit exponent
//! choices, with feasibility diagnostics and a finite-difference check of
//! its Malliavin derivative.
//!
//! The exponent alpha is constant in the unilateral constructions (the sup
//! over time is taken inside the formula); the bilateral search and the
//! custom mode allow time-varying exponents. An alpha that clamps to zero
//! means no compensator is needed and K stays identically zero.

use ndarray::Array2;
use serde::Serialize;

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::paths::PathEnsemble;
use crate::payoff::Payoff;
use crate::stats::{det_mean, EstimateCI};

/// Default cap on the feasibility ratio before the construction reports an
/// infeasible (diverging) bracket.
pub const DEFAULT_ALPHA_CAP: f64 = 1e6;

/// exp(c x) integrated over [0, dt]: (e^{c dt} - 1)/c, with the c -> 0 limit.
fn expm1_over(c: f64, dt: f64) -> f64 {
    if c.abs() <= 1e-12 {
        dt
    } else {
        (c * dt).exp_m1() / c
    }
}

/// The two integral factors of the unilateral construction:
/// i(t) from the infimum of dY f, s(t) from its supremum.
pub fn integral_factors(t: f64, horizon: f64, driver: &Driver) -> Result<(f64, f64)> {
    if t >= horizon {
        return Err(Error::Domain(format!(
            "integral factors need t < T, got t = {t}, T = {horizon}"
        )));
    }
    let dt = horizon - t;
    Ok((expm1_over(driver.inf_dy, dt), expm1_over(driver.sup_dy, dt)))
}

/// The i(t) factor with the Hoelder-corrected exponent used when the driver
/// depends on z: c = p/(1-p) * sup|dZ f|^2/2 + inf dY f.
pub fn integral_factor_z(t: f64, horizon: f64, driver: &Driver, p: f64) -> Result<f64> {
    if t >= horizon {
        return Err(Error::Domain(format!(
            "integral factor needs t < T, got t = {t}, T = {horizon}"
        )));
    }
    let c = p / (1.0 - p) * driver.sup_abs_dz * driver.sup_abs_dz / 2.0 + driver.inf_dy;
    Ok(expm1_over(c, horizon - t))
}

/// Per-time diagnostics of an exponent search.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaRow {
    pub t: f64,
    /// Moment-based lower bound on E[Z_t] before any compensation.
    pub lower_bound: f64,
    /// Constraint level minus that bound.
    pub bracket: f64,
    pub integral_factor: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub p: f64,
    pub rows: Vec<AlphaRow>,
    /// Terminal slack E[D_T xi] - nu(T) with its standard error.
    pub terminal_slack: f64,
    pub terminal_stderr: f64,
}

impl AlphaReport {
    /// True when the positive-part clamp did not fire: K must be built.
    pub fn needs_compensator(&self) -> bool {
        self.alpha > 0.0
    }
}

fn check_terminal(payoff: &Payoff, paths: &PathEnsemble, nu_terminal: f64) -> Result<(f64, f64)> {
    let n = paths.grid().n_steps();
    let m = payoff.dxi_moments(paths, n, 2.0, 2.0)?;
    let mean = m.mean_dxi();
    let se = m.mean_dxi_stderr();
    if nu_terminal > mean + 3.0 * se {
        return Err(Error::Infeasible {
            t: paths.grid().horizon(),
            detail: format!(
                "terminal constraint level {nu_terminal} exceeds E[D_T xi] = {mean} (+3se); \
                 the bracket map diverges near the horizon"
            ),
        });
    }
    Ok((mean - nu_terminal, se))
}

/// Constant exponent for a lower constraint when the driver ignores z.
/// Monte Carlo moment means feed the bracket; deterministic derivatives
/// (Wiener-integral payoffs) make the result exact.
pub fn alpha_case1(
    payoff: &Payoff,
    driver: &Driver,
    nu: &[f64],
    paths: &PathEnsemble,
    cap: f64,
) -> Result<AlphaReport> {
    if driver.sup_abs_dz != 0.0 {
        return Err(Error::InvalidConfig(
            "the z-free construction requires sup|dZ f| = 0; use the z-dependent variant".into(),
        ));
    }
    let grid = paths.grid();
    let n = grid.n_steps();
    if nu.len() != n + 1 {
        return Err(Error::ShapeMismatch(format!(
            "constraint level has {} values, grid has {}",
            nu.len(),
            n + 1
        )));
    }
    let horizon = grid.horizon();
    let (terminal_slack, terminal_stderr) = check_terminal(payoff, paths, nu[n])?;

    let mut rows = Vec::with_capacity(n);
    let mut sup_ratio = f64::NEG_INFINITY;
    for k in 0..n {
        let t = grid.t(k);
        let dt = horizon - t;
        let m = payoff.dxi_moments(paths, k, 2.0, 2.0)?;
        let lower_bound = -(dt * driver.sup_dy).exp() * m.mean_neg.mean
            + (dt * driver.inf_dy).exp() * m.mean_pos.mean
            - driver.malliavin_bound * (dt * driver.sup_abs_dy()).exp() * dt;
        let bracket = nu[k] - lower_bound;
        let (i_t, _) = integral_factors(t, horizon, driver)?;
        let ratio = bracket / i_t;
        if !ratio.is_finite() || ratio > cap {
            return Err(Error::Infeasible {
                t,
                detail: format!("feasibility ratio {ratio:.3e} exceeds the cap {cap:.1e}"),
            });
        }
        rows.push(AlphaRow { t, lower_bound, bracket, integral_factor: i_t, ratio });
        sup_ratio = sup_ratio.max(ratio);
    }
    Ok(AlphaReport { alpha: sup_ratio.max(0.0), p: 1.0, rows, terminal_slack, terminal_stderr })
}

/// Constant exponent for a lower constraint with a z-dependent driver.
/// Hoelder corrections with exponents q-(t), q+(t) > 1 enter the moment
/// terms, and the compensator uses the p-normalized exponential.
#[allow(clippy::too_many_arguments)]
pub fn alpha_case2(
    payoff: &Payoff,
    driver: &Driver,
    nu: &[f64],
    paths: &PathEnsemble,
    q_minus: &crate::timefn::TimeFn,
    q_plus: &crate::timefn::TimeFn,
    p: f64,
    cap: f64,
) -> Result<AlphaReport> {
    let grid = paths.grid();
    let n = grid.n_steps();
    if nu.len() != n + 1 {
        return Err(Error::ShapeMismatch(format!(
            "constraint level has {} values, grid has {}",
            nu.len(),
            n + 1
        )));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "the z-dependent construction needs p > 1, got {p}"
        )));
    }
    let horizon = grid.horizon();
    let (terminal_slack, terminal_stderr) = check_terminal(payoff, paths, nu[n])?;
    let sigma2 = driver.sup_abs_dz * driver.sup_abs_dz;

    let mut rows = Vec::with_capacity(n);
    let mut sup_ratio = f64::NEG_INFINITY;
    for k in 0..n {
        let t = grid.t(k);
        let dt = horizon - t;
        let qm = q_minus.eval(t);
        let qp = q_plus.eval(t);
        if !(qm > 1.0) || !(qp > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "moment exponents must exceed 1 on the grid, got q-({t}) = {qm}, q+({t}) = {qp}"
            )));
        }
        let m = payoff.dxi_moments(paths, k, qm, qp)?;
        let f_neg = (1.0 / (qm - 1.0) * sigma2 / 2.0 * dt).exp();
        let f_pos = (qp / (1.0 - qp) * sigma2 / 2.0 * dt).exp();
        let lower_bound = -(dt * driver.sup_dy).exp() * f_neg * m.lp_neg.mean
            + (dt * driver.inf_dy).exp() * f_pos * m.lp_pos.mean
            - driver.malliavin_bound * (dt * driver.sup_abs_dy()).exp() * dt;
        let bracket = nu[k] - lower_bound;
        let i_t = integral_factor_z(t, horizon, driver, p)?;
        let ratio = bracket / i_t;
        if !ratio.is_finite() || ratio > cap {
            return Err(Error::Infeasible {
                t,
                detail: format!("feasibility ratio {ratio:.3e} exceeds the cap {cap:.1e}"),
            });
        }
        rows.push(AlphaRow { t, lower_bound, bracket, integral_factor: i_t, ratio });
        sup_ratio = sup_ratio.max(ratio);
    }
    Ok(AlphaReport { alpha: sup_ratio.max(0.0), p, rows, terminal_slack, terminal_stderr })
}

/// The compensator over an ensemble: the density process k (a stochastic
/// exponential) and the terminal values K_T. Intermediate K values are
/// derived on demand by left-rectangle quadrature of k.
#[derive(Debug, Clone)]
pub struct CompensatorPaths {
    /// The density process k; empty for the trivial compensator.
    pub k: Array2<f64>,
    /// K_T per path.
    pub k_terminal: Vec<f64>,
    /// Exponent values on the grid (empty when trivial).
    pub alpha: Vec<f64>,
    pub p: f64,
    pub trivial: bool,
}

impl CompensatorPaths {
    pub fn zero(paths: &PathEnsemble) -> Self {
        Self {
            k: Array2::zeros((0, 0)),
            k_terminal: vec![0.0; paths.n_paths()],
            alpha: Vec::new(),
            p: 1.0,
            trivial: true,
        }
    }

    /// dK over step `step`, per path (F_{t_step}-measurable by the left rule).
    pub fn delta_k(&self, paths: &PathEnsemble, step: usize, out: &mut [f64]) {
        if self.trivial {
            out.fill(0.0);
            return;
        }
        let dt = paths.grid().dt(step);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.k[[i, step]] * dt;
        }
    }

    /// K at a grid index, per path.
    pub fn big_k_at(&self, paths: &PathEnsemble, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; paths.n_paths()];
        if self.trivial {
            return out;
        }
        let grid = paths.grid();
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..idx {
                acc += self.k[[i, j]] * grid.dt(j);
            }
            *slot = acc;
        }
        out
    }

    /// Mean of K at every grid index.
    pub fn mean_profile(&self, paths: &PathEnsemble) -> Vec<f64> {
        let grid = paths.grid();
        let n = grid.n_steps();
        let mut out = vec![0.0; n + 1];
        if self.trivial {
            return out;
        }
        let mut acc = 0.0;
        for j in 0..n {
            let col: Vec<f64> = (0..paths.n_paths()).map(|i| self.k[[i, j]]).collect();
            acc += det_mean(&col) * grid.dt(j);
            out[j + 1] = acc;
        }
        out
    }
}

/// Build K = int k ds from exponent values on the grid, normalization p.
pub fn build_k(paths: &PathEnsemble, alpha: &[f64], p: f64) -> Result<CompensatorPaths> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let k = paths.stochastic_exponential(alpha, p)?;
    let k_terminal: Vec<f64> = (0..paths.n_paths())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += k[[i, j]] * grid.dt(j);
            }
            acc
        })
        .collect();
    Ok(CompensatorPaths {
        k,
        k_terminal,
        alpha: alpha[..(n + 1).min(alpha.len())].to_vec(),
        p,
        trivial: false,
    })
}

/// Which closed-form Malliavin identity the finite difference supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedForm {
    /// alpha_u (K_t - K_u): the chain-rule value.
    ChainRule,
    /// alpha_u K_t: the flat form.
    Flat,
    Both,
    Neither,
}

#[derive(Debug, Clone, Serialize)]
pub struct MalliavinKReport {
    pub u: f64,
    pub t: f64,
    pub epsilon: f64,
    pub n_paths: usize,
    /// Worst relative error of the finite difference against each form.
    pub max_rel_chain: f64,
    pub max_rel_flat: f64,
    pub matched: MatchedForm,
}

/// Finite-difference check of D_u K_t: bump the single increment at u by
/// epsilon, rebuild K_t, and compare the directional derivative against the
/// two candidate closed forms at relative tolerance 1e-3.
pub fn malliavin_k_check(
    paths: &PathEnsemble,
    alpha: &[f64],
    p: f64,
    u: f64,
    t: f64,
    epsilon: f64,
) -> Result<MalliavinKReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig("bump size must be positive".into()));
    }
    let grid = paths.grid();
    let iu = grid.index_of(u)?;
    let it = grid.index_of(t)?;
    let n = grid.n_steps();
    if alpha.len() < n {
        return Err(Error::ShapeMismatch("alpha shorter than the grid".into()));
    }

    let mut max_rel_chain: f64 = 0.0;
    let mut max_rel_flat: f64 = 0.0;
    const ZERO_TOL: f64 = 1e-12;
    let rel = |fd: f64, reference: f64| -> f64 {
        if reference.abs() <= ZERO_TOL {
            if fd.abs() <= ZERO_TOL {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((fd - reference) / reference).abs()
        }
    };

    for i in 0..paths.n_paths() {
        let db = paths.increment_row(i);
        let mut log_k: f64 = 0.0;
        let mut log_k_bumped: f64 = 0.0;
        let mut k_u = 0.0;
        let mut k_t = 0.0;
        let mut k_t_bumped = 0.0;
        for j in 0..it {
            let dt_j = grid.dt(j);
            let k_val = log_k.exp();
            let k_val_b = log_k_bumped.exp();
            if j < iu {
                k_u += k_val * dt_j;
            }
            k_t += k_val * dt_j;
            k_t_bumped += k_val_b * dt_j;
            let bump = if j == iu { epsilon } else { 0.0 };
            log_k += alpha[j] * db[j] - alpha[j] * alpha[j] * dt_j / (2.0 * p);
            log_k_bumped += alpha[j] * (db[j] + bump) - alpha[j] * alpha[j] * dt_j / (2.0 * p);
        }
        let (fd, chain, flat) = if iu >= it {
            // adaptedness: bumping a later increment cannot move K_t
            (0.0, 0.0, 0.0)
        } else {
            let a_u = alpha[iu];
            ((k_t_bumped - k_t) / epsilon, a_u * (k_t - k_u), a_u * k_t)
        };
        max_rel_chain = max_rel_chain.max(rel(fd, chain));
        max_rel_flat = max_rel_flat.max(rel(fd, flat));
    }

    const REL_TOL: f64 = 1e-3;
    let matched = match (max_rel_chain <= REL_TOL, max_rel_flat <= REL_TOL) {
        (true, true) => MatchedForm::Both,
        (true, false) => MatchedForm::ChainRule,
        (false, true) => MatchedForm::Flat,
        (false, false) => MatchedForm::Neither,
    };
    Ok(MalliavinKReport {
        u,
        t,
        epsilon,
        n_paths: paths.n_paths(),
        max_rel_chain,
        max_rel_flat,
        matched,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BilateralRow {
    pub t: f64,
    /// Admissible interval under the nonnegative branch.
    pub lo_pos: f64,
    pub hi_pos: f64,
    /// Admissible interval under the nonpositive branch.
    pub lo_neg: f64,
    pub hi_neg: f64,
    pub chosen: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BilateralReport {
    pub alpha: Vec<f64>,
    pub rows: Vec<BilateralRow>,
}

/// Exponent search under two-sided constraints nu_low <= E[Z_t] <= nu_high
/// (either side may be absent). At each grid time the admissible interval is
/// computed under both sign branches and the feasible value of smallest
/// magnitude wins.
pub fn bilateral_alpha_search(
    payoff: &Payoff,
    driver: &Driver,
    nu_low: Option<&[f64]>,
    nu_high: Option<&[f64]>,
    paths: &PathEnsemble,
) -> Result<BilateralReport> {
    if driver.sup_abs_dz != 0.0 {
        return Err(Error::InvalidConfig(
            "the bilateral construction requires sup|dZ f| = 0".into(),
        ));
    }
    let grid = paths.grid();
    let n = grid.n_steps();
    let horizon = grid.horizon();
    for side in [nu_low, nu_high].into_iter().flatten() {
        if side.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!(
                "constraint level has {} values, grid has {}",
                side.len(),
                n + 1
            )));
        }
    }

    // Terminal admissibility within Monte Carlo noise.
    let m_t = payoff.dxi_moments(paths, n, 2.0, 2.0)?;
    let mean_t = m_t.mean_dxi();
    let se_t = m_t.mean_dxi_stderr();
    if let Some(lo) = nu_low {
        if lo[n] > mean_t + 3.0 * se_t {
            return Err(Error::Infeasible {
                t: horizon,
                detail: format!("terminal lower level {} exceeds E[D_T xi] = {mean_t}", lo[n]),
            });
        }
    }
    if let Some(hi) = nu_high {
        if hi[n] < mean_t - 3.0 * se_t {
            return Err(Error::Infeasible {
                t: horizon,
                detail: format!("terminal upper level {} sits below E[D_T xi] = {mean_t}", hi[n]),
            });
        }
    }

    let d = driver.malliavin_bound;
    let mut rows = Vec::with_capacity(n);
    let mut alpha = vec![0.0; n + 1];
    let mut bad_times = Vec::new();
    for k in 0..n {
        let t = grid.t(k);
        let dt = horizon - t;
        let m = payoff.dxi_moments(paths, k, 2.0, 2.0)?;
        // Worst-case-down bound on E[Z_t] for the lower side; worst-case-up
        // (drift roles swapped, +d) for the upper side.
        let m_lower = -(dt * driver.sup_dy).exp() * m.mean_neg.mean
            + (dt * driver.inf_dy).exp() * m.mean_pos.mean
            - d * (dt * driver.sup_abs_dy()).exp() * dt;
        let m_upper = -(dt * driver.inf_dy).exp() * m.mean_neg.mean
            + (dt * driver.sup_dy).exp() * m.mean_pos.mean
            + d * (dt * driver.sup_abs_dy()).exp() * dt;
        let (i_t, s_t) = integral_factors(t, horizon, driver)?;

        let lo_req = nu_low.map(|v| v[k] - m_lower);
        let hi_req = nu_high.map(|v| v[k] - m_upper);

        // alpha >= 0 branch: lower requirement through i, upper through s.
        let lo_pos = lo_req.map_or(f64::NEG_INFINITY, |r| r / i_t).max(0.0);
        let hi_pos = hi_req.map_or(f64::INFINITY, |r| r / s_t);
        // alpha <= 0 branch: factors swapped.
        let lo_neg = lo_req.map_or(f64::NEG_INFINITY, |r| r / s_t);
        let hi_neg = hi_req.map_or(f64::INFINITY, |r| r / i_t).min(0.0);

        let pos_ok = lo_pos <= hi_pos;
        let neg_ok = lo_neg <= hi_neg;
        let chosen = match (pos_ok, neg_ok) {
            (false, false) => {
                bad_times.push(t);
                f64::NAN
            }
            (true, false) => lo_pos,
            (false, true) => hi_neg,
            (true, true) => {
                if lo_pos.abs() <= hi_neg.abs() {
                    lo_pos
                } else {
                    hi_neg
                }
            }
        };
        alpha[k] = chosen;
        rows.push(BilateralRow { t, lo_pos, hi_pos, lo_neg, hi_neg, chosen, feasible: pos_ok || neg_ok });
    }
    if !bad_times.is_empty() {
        return Err(Error::BilateralInfeasible { first: bad_times[0], times: bad_times });
    }
    alpha[n] = alpha[n - 1];
    Ok(BilateralReport { alpha, rows })
}

/// E[K_T^2] with its standard error, for the regularity bound test.
pub fn terminal_second_moment(comp: &CompensatorPaths) -> EstimateCI {
    let sq: Vec<f64> = comp.k_terminal.iter().map(|k| k * k).collect();
    EstimateCI::from_slice(&sq)
}
