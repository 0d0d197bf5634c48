//! Statistical verification of the constraint along the grid, impossibility
//! detectors for deterministic compensators, sufficient-condition reports,
//! and the minimality criterion K_T = 0.

use serde::Serialize;

use crate::driver::{gamma_weights, Constraint, Driver};
use crate::error::{Error, Result};
use crate::paths::PathEnsemble;
use crate::payoff::Payoff;
use crate::solver::BsdeSolution;
use crate::stats::{det_mean, EstimateCI};
use crate::timefn::TimeFn;

/// Verdict of a three-standard-error band test. The constraint itself is
/// exact; Monte Carlo cannot be, so estimates straddling zero inside the
/// band count as satisfied within noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    SatisfiedWithinNoise,
    Violated,
    Inconclusive,
}

pub fn classify(mean: f64, stderr: f64) -> Verdict {
    if mean - 3.0 * stderr >= 0.0 {
        Verdict::Satisfied
    } else if mean + 3.0 * stderr < 0.0 {
        Verdict::Violated
    } else if mean.abs() <= 3.0 * stderr {
        Verdict::SatisfiedWithinNoise
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintRow {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Constraint level for linear constraints, absent for general ones.
    pub level: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub rows: Vec<ConstraintRow>,
    /// Second set of rows for the upper side of a bilateral constraint.
    pub upper_rows: Vec<ConstraintRow>,
    pub overall: Verdict,
    /// The constraint holds between grid points only up to grid resolution.
    pub grid_caveat: String,
    /// True when the scheme left Z_T undefined and the last row sits at the
    /// final interior point.
    pub terminal_excluded: bool,
}

impl ConstraintReport {
    pub fn any_violated(&self) -> bool {
        self.rows
            .iter()
            .chain(self.upper_rows.iter())
            .any(|r| r.verdict == Verdict::Violated)
    }
}

fn overall_of(rows: &[ConstraintRow]) -> Verdict {
    let mut overall = Verdict::Satisfied;
    for r in rows {
        match r.verdict {
            Verdict::Violated => return Verdict::Violated,
            Verdict::Inconclusive => overall = Verdict::Inconclusive,
            Verdict::SatisfiedWithinNoise => {
                if overall == Verdict::Satisfied {
                    overall = Verdict::SatisfiedWithinNoise;
                }
            }
            Verdict::Satisfied => {}
        }
    }
    overall
}

/// Monte Carlo check of E[l(t, Z_t)] >= 0 at every grid time where the
/// solution defines Z. The standard error combines the pathwise spread of
/// l(Z) with the solution's own uncertainty about the mean of Z.
pub fn verify_constraint(
    sol: &BsdeSolution,
    constraint: &Constraint,
    paths: &PathEnsemble,
) -> Result<ConstraintReport> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let last = sol.z_last_index(n);

    let build_rows = |eval: &dyn Fn(f64, f64) -> f64,
                      level_fn: &dyn Fn(f64) -> Option<f64>|
     -> Vec<ConstraintRow> {
        (0..=last)
            .map(|k| {
                let t = grid.t(k);
                let z = sol.z_col(k);
                let vals: Vec<f64> = z.iter().map(|&zi| eval(t, zi)).collect();
                let ci = EstimateCI::from_slice(&vals);
                // Extra mean-level variance beyond the pathwise spread.
                let z_ci = EstimateCI::from_slice(&z);
                let extra = (sol.z_mean_stderr[k] * sol.z_mean_stderr[k]
                    - z_ci.stderr * z_ci.stderr)
                    .max(0.0);
                let slope = match constraint {
                    Constraint::General(g) => (g.dx)(t, det_mean(&z)),
                    _ => 1.0,
                };
                let stderr = (ci.stderr * ci.stderr + slope * slope * extra).sqrt();
                ConstraintRow {
                    t,
                    mean: ci.mean,
                    stderr,
                    level: level_fn(t),
                    verdict: classify(ci.mean, stderr),
                }
            })
            .collect()
    };

    let (rows, upper_rows) = match constraint {
        Constraint::LinearLower { nu } => {
            (build_rows(&|t, z| z - nu.eval(t), &|t| Some(nu.eval(t))), Vec::new())
        }
        Constraint::LinearUpper { nu } => {
            (build_rows(&|t, z| nu.eval(t) - z, &|t| Some(nu.eval(t))), Vec::new())
        }
        Constraint::Bilateral { nu_low, nu_high } => (
            build_rows(&|t, z| z - nu_low.eval(t), &|t| Some(nu_low.eval(t))),
            build_rows(&|t, z| nu_high.eval(t) - z, &|t| Some(nu_high.eval(t))),
        ),
        Constraint::General(g) => {
            let l = g.l.clone();
            (build_rows(&move |t, z| l(t, z), &|_| None), Vec::new())
        }
    };

    let mut all = rows.clone();
    all.extend(upper_rows.iter().cloned());
    let overall = overall_of(&all);
    Ok(ConstraintReport {
        rows,
        upper_rows,
        overall,
        grid_caveat: format!(
            "constraint checked at {} grid times with spacing {:.3e}; behaviour between grid \
             points is not observed",
            last + 1,
            grid.dt(0)
        ),
        terminal_excluded: !sol.z_terminal_defined,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InfeasibilityRow {
    pub t: f64,
    /// Estimate of E[Z_t] forced by any deterministic compensator.
    pub mean: f64,
    pub stderr: f64,
    pub level: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfeasibilityReport {
    pub rows: Vec<InfeasibilityRow>,
    pub any_flagged: bool,
    pub conclusion: String,
}

/// With a deterministic compensator the control's mean is pinned to
/// m(t) = E[Gamma_t^T D_t xi + int_t^T Gamma_t^s D_t f ds]; whenever m(t)
/// falls below the constraint level beyond noise, no deterministic
/// compensator can work. For state-dependent drivers an unconstrained prior
/// solve supplies the (Y, Z) the weights are evaluated at.
pub fn deterministic_k_infeasibility(
    payoff: &Payoff,
    driver: &Driver,
    nu: &TimeFn,
    paths: &PathEnsemble,
    prior: Option<&BsdeSolution>,
) -> Result<InfeasibilityReport> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let state_free = driver.sup_dy == 0.0 && driver.inf_dy == 0.0 && driver.sup_abs_dz == 0.0;
    let zero_driver = matches!(driver.kind, crate::driver::DriverKind::Zero);
    if !zero_driver && !driver.has_df() {
        return Err(Error::MissingDerivative(driver.name()));
    }
    if !state_free && prior.is_none() {
        return Err(Error::InvalidConfig(
            "state-dependent driver: supply an unconstrained prior solution for the weights"
                .into(),
        ));
    }

    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = grid.t(k);
        let level = nu.eval(t);
        let (mean, stderr) = if zero_driver {
            let m = payoff.dxi_moments(paths, k, 2.0, 2.0)?;
            (m.mean_dxi(), m.mean_dxi_stderr())
        } else {
            let dxi = payoff.malliavin_all(paths, k)?;
            let y = prior.map(|s| &s.y);
            let z = prior.map(|s| &s.z);
            let weights = gamma_weights(paths, driver, y, z, k, n)?;
            // Accumulate the Gamma_t^s D_t f quadrature along each path.
            let vals: Vec<f64> = (0..paths.n_paths())
                .map(|i| {
                    let b = paths.brownian_row(i);
                    let db = paths.increment_row(i);
                    let mut log_g: f64 = 0.0;
                    let mut acc = 0.0;
                    for l in k..n {
                        let tl = grid.t(l);
                        let dt = grid.dt(l);
                        let df = driver.df(tl, t, b[l]).unwrap_or(0.0);
                        acc += log_g.exp() * df * dt;
                        let yv = prior.map_or(0.0, |s| s.y[[i, l]]);
                        let zv = prior.map_or(0.0, |s| s.z[[i, l]]);
                        let fy = driver.dy(tl, b[l], yv, zv);
                        let fz = driver.dz(tl, b[l], yv, zv);
                        log_g += fy * dt + fz * db[l] - fz * fz / 2.0 * dt;
                    }
                    weights.gamma[i] * dxi[i] + acc
                })
                .collect();
            let ci = EstimateCI::from_slice(&vals);
            (ci.mean, ci.stderr)
        };
        let flagged = mean + 3.0 * stderr < level;
        rows.push(InfeasibilityRow { t, mean, stderr, level, flagged });
    }
    let any_flagged = rows.iter().any(|r| r.flagged);
    let conclusion = if any_flagged {
        "no supersolution with a deterministic compensator exists: the forced mean of the \
         control falls below the constraint level"
            .to_string()
    } else {
        "no impossibility detected at grid resolution".to_string()
    };
    Ok(InfeasibilityReport { rows, any_flagged, conclusion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCheck {
    HoldsStrictly,
    Boundary,
    Fails,
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyRow {
    pub t: f64,
    /// Bracket numerator nu(t) minus the moment lower bound.
    pub numerator: f64,
    /// numerator / (T - t).
    pub ratio: f64,
    /// phi(t) when running in envelope mode.
    pub phi: Option<f64>,
    pub phi_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyReport {
    pub rows: Vec<SufficiencyRow>,
    pub max_ratio: f64,
    pub terminal: TerminalCheck,
    /// Candidate constant exponent implied by the report.
    pub alpha_candidate: f64,
    pub verdict: String,
}

pub enum SufficiencyMode {
    /// Evaluate the bracket map and the strict terminal inequality.
    Continuity,
    /// Verify numerator <= phi pointwise with phi(T) <= 0.
    Envelope { phi: TimeFn },
}

/// Checks the simple sufficient conditions that imply feasibility of the
/// compensator construction for a lower constraint.
pub fn sufficient_condition_check(
    payoff: &Payoff,
    driver: &Driver,
    nu: &TimeFn,
    paths: &PathEnsemble,
    mode: &SufficiencyMode,
    q_minus: f64,
    q_plus: f64,
) -> Result<SufficiencyReport> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let horizon = grid.horizon();
    if let SufficiencyMode::Envelope { phi } = mode {
        if phi.eval(horizon) > 0.0 {
            return Err(Error::InvalidConfig(format!(
                "envelope must satisfy phi(T) <= 0, got {}",
                phi.eval(horizon)
            )));
        }
    }
    let sigma2 = driver.sup_abs_dz * driver.sup_abs_dz;

    let mut rows = Vec::with_capacity(n);
    let mut max_ratio = f64::NEG_INFINITY;
    for k in 0..n {
        let t = grid.t(k);
        let dt = horizon - t;
        let m = payoff.dxi_moments(paths, k, q_minus, q_plus)?;
        let lower_bound = if sigma2 == 0.0 {
            -(dt * driver.sup_dy).exp() * m.mean_neg.mean
                + (dt * driver.inf_dy).exp() * m.mean_pos.mean
                - driver.malliavin_bound * (dt * driver.sup_abs_dy()).exp() * dt
        } else {
            let f_neg = (1.0 / (q_minus - 1.0) * sigma2 / 2.0 * dt).exp();
            let f_pos = (q_plus / (1.0 - q_plus) * sigma2 / 2.0 * dt).exp();
            -(dt * driver.sup_dy).exp() * f_neg * m.lp_neg.mean
                + (dt * driver.inf_dy).exp() * f_pos * m.lp_pos.mean
                - driver.malliavin_bound * (dt * driver.sup_abs_dy()).exp() * dt
        };
        let numerator = nu.eval(t) - lower_bound;
        let ratio = numerator / dt;
        max_ratio = max_ratio.max(ratio);
        let (phi_val, phi_ok) = match mode {
            SufficiencyMode::Continuity => (None, None),
            SufficiencyMode::Envelope { phi } => {
                let pv = phi.eval(t);
                (Some(pv), Some(numerator <= pv + 1e-12))
            }
        };
        rows.push(SufficiencyRow { t, numerator, ratio, phi: phi_val, phi_ok });
    }

    let mt = payoff.dxi_moments(paths, n, q_minus, q_plus)?;
    let slack = mt.mean_dxi() - nu.eval(horizon);
    let se = mt.mean_dxi_stderr();
    let terminal = if slack > 3.0 * se {
        TerminalCheck::HoldsStrictly
    } else if slack >= -3.0 * se {
        TerminalCheck::Boundary
    } else {
        TerminalCheck::Fails
    };

    let alpha_candidate = match mode {
        SufficiencyMode::Continuity => max_ratio.max(0.0),
        SufficiencyMode::Envelope { phi } => (0..n)
            .map(|k| phi.eval(grid.t(k)) / (horizon - grid.t(k)))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0),
    };
    let verdict = match (terminal, mode) {
        (TerminalCheck::Fails, _) => "terminal condition fails: the bracket map diverges".into(),
        (_, SufficiencyMode::Envelope { .. }) => {
            if rows.iter().all(|r| r.phi_ok == Some(true)) {
                format!("envelope holds; exponent candidate {alpha_candidate:.6}")
            } else {
                "envelope violated at some grid times".into()
            }
        }
        _ => format!("bracket map bounded; exponent candidate {alpha_candidate:.6}"),
    };
    Ok(SufficiencyReport { rows, max_ratio, terminal, alpha_candidate, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub k_terminal_mean: f64,
    pub k_terminal_max: f64,
    pub fraction_positive: f64,
    pub is_solution: bool,
    pub verdict: String,
}

const K_ZERO_TOL: f64 = 1e-12;

/// The minimality criterion: a supersolution is minimal iff its compensator
/// vanishes at the horizon on every path.
pub fn minimality_report(sol: &BsdeSolution) -> MinimalityReport {
    let kt = &sol.comp.k_terminal;
    let mean = det_mean(kt);
    let max = kt.iter().cloned().fold(0.0f64, f64::max);
    let fraction_positive =
        kt.iter().filter(|&&v| v > K_ZERO_TOL).count() as f64 / kt.len() as f64;
    let is_solution = max <= K_ZERO_TOL;
    let verdict = if is_solution {
        "minimal supersolution (solution): K_T = 0 on all paths".to_string()
    } else {
        format!(
            "supersolution, provably non-minimal: K_T > 0 on {:.1}% of paths",
            100.0 * fraction_positive
        )
    };
    MinimalityReport {
        k_terminal_mean: mean,
        k_terminal_max: max,
        fraction_positive,
        is_solution,
        verdict,
    }
}
