//! Configuration-driven pipeline: build the ensemble, resolve the
//! compensator, solve, verify, run the requested experiments, and emit
//! deterministic CSV / JSON / SVG artifacts.
//!
//! Scientific negatives (violated constraints, witnessed impossibilities)
//! are findings recorded in the summary; only computational faults abort
//! the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::compensator::{
    alpha_case1, alpha_case2, bilateral_alpha_search, build_k, malliavin_k_check, AlphaReport,
    CompensatorPaths,
};
use crate::config::{
    CompensatorMode, ExperimentConfig, PenalizedMode, RunConfig, SolveMode,
    SufficiencyModeConfig,
};
use crate::driver::{convex_reduction_threshold, Constraint, Driver};
use crate::error::{Error, Result};
use crate::experiments::{
    as_constraint_blowup, case_b_bound_t0, concave_feasibility, hedging_demo,
    moment_bound_experiment, penalization_sweep, CaseBParams, HedgingScenario, SigmaSpec,
};
use crate::paths::{PathEnsemble, TimeGrid};
use crate::payoff::Payoff;
use crate::report::{fmt_f64, write_text, Csv, CsvCell};
use crate::solver::{
    solve_auto, solve_closed_form, solve_regression, BasisFamily, BsdeSolution, PenalizedMethod,
    RegressionBasis, TimeScheme,
};
use crate::stats::det_mean;
use crate::svg::{line_plot, Series};
use crate::timefn::TimeFn;
use crate::verify::{
    deterministic_k_infeasibility, minimality_report, sufficient_condition_check,
    verify_constraint, SufficiencyMode,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub no_figures: bool,
}

pub struct RunOutcome {
    pub summary: serde_json::Value,
    pub summary_path: PathBuf,
}

/// Execute a full run. The summary (including any error) is written to
/// `output_dir/summary.json`; the returned result mirrors whether the run
/// completed without computational faults.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let out_dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let summary_path = out_dir.join("summary.json");

    let result = run_inner(cfg, opts, &out_dir);
    let wall_clock = started.elapsed().as_secs_f64();
    match result {
        Ok(mut summary) => {
            summary["wall_clock_seconds"] = json!(wall_clock);
            let text = serde_json::to_string_pretty(&summary).expect("serializable summary");
            write_text(&summary_path, &text)?;
            Ok(RunOutcome { summary, summary_path })
        }
        Err(e) => {
            let summary = json!({
                "config": cfg,
                "seed": cfg.mc.seed,
                "crate_version": env!("CARGO_PKG_VERSION"),
                "wall_clock_seconds": wall_clock,
                "errors": [e.to_string()],
            });
            let text = serde_json::to_string_pretty(&summary).expect("serializable summary");
            // Best effort: the output directory may itself be the problem.
            let _ = write_text(&summary_path, &text);
            Err(e)
        }
    }
}

fn effective_basis(basis: RegressionBasis, comp: &CompensatorPaths) -> RegressionBasis {
    if comp.trivial && matches!(basis.family, BasisFamily::PolyBk) {
        RegressionBasis::poly_b(basis.degree)
    } else {
        basis
    }
}

struct ResolvedCompensator {
    comp: CompensatorPaths,
    alpha_report: Option<AlphaReport>,
    alpha_values: Vec<f64>,
    mode: CompensatorMode,
}

fn lower_levels(constraint: &Constraint, grid: &TimeGrid) -> Result<Vec<f64>> {
    match constraint {
        Constraint::LinearLower { nu } => Ok(nu.on_grid(grid)),
        Constraint::General(g) if g.convex => grid
            .times()
            .iter()
            .map(|&t| convex_reduction_threshold(g, t))
            .collect(),
        Constraint::General(_) => Err(Error::InvalidConfig(
            "non-convex general constraints support feasibility reports only; use the \
             concave_feasibility experiment or a custom exponent"
                .into(),
        )),
        _ => Err(Error::InvalidConfig(
            "the unilateral construction needs a lower or convex constraint".into(),
        )),
    }
}

fn resolve_compensator(
    cfg: &RunConfig,
    payoff: &Payoff,
    driver: &Driver,
    constraint: &Constraint,
    paths: &PathEnsemble,
) -> Result<ResolvedCompensator> {
    let grid = paths.grid();
    let n = grid.n_steps();
    let comp_cfg = &cfg.compensator;
    match comp_cfg.mode {
        CompensatorMode::None => Ok(ResolvedCompensator {
            comp: CompensatorPaths::zero(paths),
            alpha_report: None,
            alpha_values: vec![0.0; n + 1],
            mode: comp_cfg.mode,
        }),
        CompensatorMode::Case1 | CompensatorMode::Case2 => {
            let nu = lower_levels(constraint, grid)?;
            let report = if comp_cfg.mode == CompensatorMode::Case1 {
                alpha_case1(payoff, driver, &nu, paths, comp_cfg.cap)?
            } else {
                alpha_case2(
                    payoff,
                    driver,
                    &nu,
                    paths,
                    &comp_cfg.q_minus,
                    &comp_cfg.q_plus,
                    comp_cfg.p,
                    comp_cfg.cap,
                )?
            };
            let alpha_values = vec![report.alpha; n + 1];
            let comp = if report.needs_compensator() {
                build_k(paths, &alpha_values, report.p)?
            } else {
                CompensatorPaths::zero(paths)
            };
            Ok(ResolvedCompensator {
                comp,
                alpha_report: Some(report),
                alpha_values,
                mode: comp_cfg.mode,
            })
        }
        CompensatorMode::Bilateral => {
            let (lo, hi) = match constraint {
                Constraint::Bilateral { nu_low, nu_high } => {
                    (Some(nu_low.on_grid(grid)), Some(nu_high.on_grid(grid)))
                }
                Constraint::LinearUpper { nu } => (None, Some(nu.on_grid(grid))),
                Constraint::LinearLower { nu } => (Some(nu.on_grid(grid)), None),
                Constraint::General(_) => {
                    return Err(Error::InvalidConfig(
                        "the bilateral construction needs linear constraint levels".into(),
                    ))
                }
            };
            let rep =
                bilateral_alpha_search(payoff, driver, lo.as_deref(), hi.as_deref(), paths)?;
            let nontrivial = rep.alpha.iter().any(|&a| a != 0.0);
            let comp = if nontrivial {
                build_k(paths, &rep.alpha, 1.0)?
            } else {
                CompensatorPaths::zero(paths)
            };
            Ok(ResolvedCompensator {
                comp,
                alpha_report: None,
                alpha_values: rep.alpha,
                mode: comp_cfg.mode,
            })
        }
        CompensatorMode::CustomAlpha => {
            let alpha_fn = comp_cfg
                .alpha
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("compensator.alpha missing".into()))?;
            let alpha_values = alpha_fn.on_grid(grid);
            let nontrivial = alpha_values.iter().any(|&a| a != 0.0);
            // Custom exponents use the martingale normalization p = 1; the
            // p field only shapes the z-dependent construction.
            let comp = if nontrivial {
                build_k(paths, &alpha_values, 1.0)?
            } else {
                CompensatorPaths::zero(paths)
            };
            Ok(ResolvedCompensator {
                comp,
                alpha_report: None,
                alpha_values,
                mode: comp_cfg.mode,
            })
        }
    }
}

fn solve(
    cfg: &RunConfig,
    payoff: &Payoff,
    driver: &Driver,
    comp: CompensatorPaths,
    paths: &PathEnsemble,
) -> Result<BsdeSolution> {
    let basis = effective_basis(cfg.solver.basis(), &comp);
    match cfg.solver.method {
        SolveMode::Auto => solve_auto(payoff, driver, comp, paths, basis, cfg.solver.scheme),
        SolveMode::ClosedForm => solve_closed_form(payoff, driver, comp, paths),
        SolveMode::Regression => {
            solve_regression(payoff, driver, comp, paths, basis, cfg.solver.scheme, None)
        }
    }
}

fn solution_csv(sol: &BsdeSolution, paths: &PathEnsemble) -> String {
    let grid = paths.grid();
    let mut csv = Csv::new(&["t", "mean_y", "stderr_y", "mean_z", "stderr_mean_z", "mean_k"]);
    let k_profile = sol.comp.mean_profile(paths);
    for k in 0..=grid.n_steps() {
        let y = sol.y_col(k);
        let (my, sy) = crate::stats::mean_stderr(&y);
        let mz = det_mean(&sol.z_col(k));
        csv.row(&[
            CsvCell::Float(grid.t(k)),
            CsvCell::Float(my),
            CsvCell::Float(sy),
            CsvCell::Float(mz),
            CsvCell::Float(sol.z_mean_stderr[k]),
            CsvCell::Float(k_profile[k]),
        ]);
    }
    csv.finish()
}

fn constraint_csv(rows: &[crate::verify::ConstraintRow]) -> String {
    let mut csv = Csv::new(&["t", "mean", "stderr", "level", "verdict"]);
    for r in rows {
        csv.row(&[
            CsvCell::Float(r.t),
            CsvCell::Float(r.mean),
            CsvCell::Float(r.stderr),
            match r.level {
                Some(l) => CsvCell::Float(l),
                None => CsvCell::Empty,
            },
            CsvCell::Str(&format!("{:?}", r.verdict).to_lowercase()),
        ]);
    }
    csv.finish()
}

fn alpha_csv(report: &AlphaReport) -> String {
    let mut csv = Csv::new(&["t", "bracket", "integral_factor", "ratio", "alpha"]);
    for r in &report.rows {
        csv.row(&[
            CsvCell::Float(r.t),
            CsvCell::Float(r.bracket),
            CsvCell::Float(r.integral_factor),
            CsvCell::Float(r.ratio),
            CsvCell::Float(report.alpha),
        ]);
    }
    csv.finish()
}

fn run_inner(
    cfg: &RunConfig,
    opts: &RunOptions,
    out_dir: &Path,
) -> Result<serde_json::Value> {
    let grid = TimeGrid::uniform(cfg.grid.horizon, cfg.grid.n_steps)?;
    let paths = PathEnsemble::simulate(grid.clone(), cfg.mc.n_paths, cfg.mc.seed)?;
    let payoff = cfg.payoff.build()?;
    let driver = cfg.driver.build();
    driver.validate(&grid)?;
    let constraint = cfg.constraint.build();

    // Compensator, solution, verification.
    let resolved = resolve_compensator(cfg, &payoff, &driver, &constraint, &paths)?;
    if let Some(rep) = &resolved.alpha_report {
        write_text(&out_dir.join("alpha_diagnostics.csv"), &alpha_csv(rep))?;
    }
    let alpha_values = resolved.alpha_values.clone();
    let sol = solve(cfg, &payoff, &driver, resolved.comp, &paths)?;
    let constraint_report = verify_constraint(&sol, &constraint, &paths)?;
    let minimality = minimality_report(&sol);

    write_text(&out_dir.join("solution_summary.csv"), &solution_csv(&sol, &paths))?;
    write_text(&out_dir.join("constraint_report.csv"), &constraint_csv(&constraint_report.rows))?;
    if !constraint_report.upper_rows.is_empty() {
        write_text(
            &out_dir.join("constraint_report_upper.csv"),
            &constraint_csv(&constraint_report.upper_rows),
        )?;
    }
    if !opts.no_figures {
        let mean_z: Vec<(f64, f64)> = constraint_report
            .rows
            .iter()
            .map(|r| (r.t, r.mean + r.level.unwrap_or(0.0)))
            .collect();
        let levels: Vec<(f64, f64)> = constraint_report
            .rows
            .iter()
            .map(|r| (r.t, r.level.unwrap_or(0.0)))
            .collect();
        let svg = line_plot(
            "mean of the control vs constraint level",
            "t",
            "E[Z_t]",
            &[
                Series { label: "estimate", points: mean_z },
                Series { label: "level", points: levels },
            ],
        );
        write_text(&out_dir.join("constraint_report.svg"), &svg)?;
    }

    let y0 = sol.y0();
    let pipeline = json!({
        "alpha": alpha_values.first(),
        "alpha_time_varying": alpha_values.windows(2).any(|w| w[0] != w[1]),
        "compensator_mode": format!("{:?}", resolved.mode).to_lowercase(),
        "alpha_search": resolved.alpha_report,
        "method": sol.method,
        "y0": { "mean": y0.mean, "stderr": y0.stderr },
        "constraint": constraint_report,
        "minimality": minimality,
    });

    // Experiments.
    let mut experiment_blocks = Vec::new();
    for (idx, exp) in cfg.experiments.iter().enumerate() {
        let block = run_experiment(cfg, exp, idx, &payoff, &driver, &constraint, &paths, out_dir, opts, &sol)?;
        experiment_blocks.push(block);
    }

    Ok(json!({
        "config": cfg,
        "seed": cfg.mc.seed,
        "n_paths": cfg.mc.n_paths,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "pipeline": pipeline,
        "experiments": experiment_blocks,
        "errors": [],
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_experiment(
    cfg: &RunConfig,
    exp: &ExperimentConfig,
    idx: usize,
    payoff: &Payoff,
    driver: &Driver,
    constraint: &Constraint,
    paths: &PathEnsemble,
    out_dir: &Path,
    opts: &RunOptions,
    sol: &BsdeSolution,
) -> Result<serde_json::Value> {
    let name = exp.name();
    let file_stem = format!("{:02}_{}", idx, name);
    let grid = paths.grid();
    match exp {
        ExperimentConfig::PenalizationSweep { n_levels, mode, n_paths } => {
            let local;
            let ens = match n_paths {
                Some(np) => {
                    local = PathEnsemble::simulate(grid.clone(), *np, cfg.mc.seed)?;
                    &local
                }
                None => paths,
            };
            let method = match mode {
                PenalizedMode::ClosedForm => PenalizedMethod::ClosedFormF0,
                PenalizedMode::MeanField => PenalizedMethod::mean_field(RegressionBasis::poly_b(
                    cfg.solver.degree,
                )),
            };
            let sweep = penalization_sweep(payoff, driver, n_levels, ens, &method)?;
            let mut csv = Csv::new(&["n_level", "y0", "iterations"]);
            for r in &sweep.rows {
                csv.row(&[
                    CsvCell::Float(r.n_level),
                    CsvCell::Float(r.y0),
                    CsvCell::Int(r.iterations as i64),
                ]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            if !opts.no_figures {
                let pts: Vec<(f64, f64)> =
                    sweep.rows.iter().map(|r| (r.n_level, r.y0)).collect();
                let svg = line_plot(
                    "penalized value vs penalty level",
                    "n",
                    "Y_0^n",
                    &[Series { label: "Y_0^n", points: pts }],
                );
                write_text(&out_dir.join(format!("{file_stem}.svg")), &svg)?;
            }
            Ok(json!({
                "name": name,
                "slope": sweep.fit.slope,
                "intercept": sweep.fit.intercept,
                "slope_stderr": sweep.fit.slope_stderr,
                "divergent": sweep.divergent,
                "verdict": if sweep.divergent {
                    "penalized values diverge linearly in the penalty level"
                } else {
                    "penalty inactive"
                },
            }))
        }
        ExperimentConfig::MomentBounds { constant_sigmas, clipped_sigmas, p_values, t } => {
            let mut specs: Vec<SigmaSpec> =
                constant_sigmas.iter().map(|&s| SigmaSpec::Constant(s)).collect();
            specs.extend(clipped_sigmas.iter().map(|&s| SigmaSpec::Clipped(s)));
            let rep = moment_bound_experiment(&specs, p_values, *t, paths)?;
            let mut csv = Csv::new(&[
                "sigma", "constant", "p", "estimate", "stderr", "bound", "satisfied", "tight",
            ]);
            for r in &rep.rows {
                csv.row(&[
                    CsvCell::Float(r.sigma),
                    CsvCell::Str(if r.constant_sigma { "yes" } else { "no" }),
                    CsvCell::Float(r.p),
                    CsvCell::Float(r.estimate),
                    CsvCell::Float(r.stderr),
                    CsvCell::Float(r.bound),
                    CsvCell::Str(if r.satisfied { "yes" } else { "no" }),
                    match r.tight {
                        Some(true) => CsvCell::Str("yes"),
                        Some(false) => CsvCell::Str("no"),
                        None => CsvCell::Empty,
                    },
                ]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            if !opts.no_figures {
                let est: Vec<(f64, f64)> =
                    rep.rows.iter().map(|r| (r.sigma, r.estimate)).collect();
                let bound: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.sigma, r.bound)).collect();
                let svg = line_plot(
                    "moment estimates vs bound",
                    "sigma",
                    "E[|G|^p]^(1/p)",
                    &[
                        Series { label: "estimate", points: est },
                        Series { label: "bound", points: bound },
                    ],
                );
                write_text(&out_dir.join(format!("{file_stem}.svg")), &svg)?;
            }
            Ok(json!({
                "name": name,
                "all_satisfied": rep.all_satisfied,
                "verdict": if rep.all_satisfied { "all moment bounds hold" } else { "bound violated" },
            }))
        }
        ExperimentConfig::CaseBBound { c, m_lower, m_bar, d } => {
            let params = CaseBParams { c: *c, m_lower: *m_lower, m_bar: *m_bar, d: *d };
            let rep = case_b_bound_t0(payoff, driver, constraint, &params, paths)?;
            let mut csv = Csv::new(&["quantity", "stderr", "witnessed"]);
            csv.row(&[
                CsvCell::Float(rep.quantity),
                CsvCell::Float(rep.stderr),
                CsvCell::Str(if rep.witnessed { "yes" } else { "no" }),
            ]);
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            Ok(json!({
                "name": name,
                "quantity": rep.quantity,
                "stderr": rep.stderr,
                "witnessed": rep.witnessed,
                "verdict": rep.detail,
            }))
        }
        ExperimentConfig::ConcaveFeasibility { q_minus, q_plus, cap } => {
            let rep =
                concave_feasibility(payoff, driver, constraint, *q_minus, *q_plus, *cap, paths)?;
            let mut csv = Csv::new(&["t", "map_value"]);
            for r in &rep.rows {
                csv.row(&[CsvCell::Float(r.t), CsvCell::Float(r.map_value)]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            Ok(json!({
                "name": name,
                "max_map": rep.max_map,
                "bounded": rep.bounded,
                "terminal_mean": rep.terminal_mean,
                "terminal_ok": rep.terminal_ok,
                "verdict": if rep.bounded && rep.terminal_ok {
                    "concave feasibility conditions hold"
                } else {
                    "concave feasibility conditions fail"
                },
            }))
        }
        ExperimentConfig::AsBlowup { inf_xi, inf_f, n_levels, n_paths } => {
            let local;
            let ens = match n_paths {
                Some(np) => {
                    local = PathEnsemble::simulate(grid.clone(), *np, cfg.mc.seed)?;
                    &local
                }
                None => paths,
            };
            let rep = as_constraint_blowup(
                payoff,
                driver,
                *inf_xi,
                *inf_f,
                n_levels,
                ens,
                RegressionBasis::poly_b(cfg.solver.degree),
            )?;
            let mut csv = Csv::new(&["n_level", "lower_bound", "y0_simulated"]);
            for r in &rep.rows {
                csv.row(&[
                    CsvCell::Float(r.n_level),
                    CsvCell::Float(r.lower_bound),
                    CsvCell::Float(r.y0_simulated),
                ]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            if !opts.no_figures {
                let lb: Vec<(f64, f64)> =
                    rep.rows.iter().map(|r| (r.n_level, r.lower_bound)).collect();
                let sim: Vec<(f64, f64)> =
                    rep.rows.iter().map(|r| (r.n_level, r.y0_simulated)).collect();
                let svg = line_plot(
                    "pathwise penalty growth",
                    "n",
                    "Y_0^n",
                    &[
                        Series { label: "lower bound", points: lb },
                        Series { label: "simulated", points: sim },
                    ],
                );
                write_text(&out_dir.join(format!("{file_stem}.svg")), &svg)?;
            }
            Ok(json!({
                "name": name,
                "nondecreasing": rep.nondecreasing,
                "verdict": rep.verdict,
                "caveat": rep.caveat,
            }))
        }
        ExperimentConfig::HedgingDemo { rate, drift, volatility, sigma_min, floor } => {
            let scenario = HedgingScenario {
                rate: rate.clone(),
                drift: drift.clone(),
                volatility: volatility.clone(),
                sigma_min: *sigma_min,
                claim: payoff.clone(),
                floor: floor.clone(),
            };
            let (rep, _) = hedging_demo(&scenario, paths, cfg.solver.basis())?;
            write_text(
                &out_dir.join(format!("{file_stem}.csv")),
                &constraint_csv(&rep.constraint.rows),
            )?;
            Ok(json!({
                "name": name,
                "alpha": rep.alpha,
                "price": rep.price,
                "price_stderr": rep.price_stderr,
                "method": rep.method,
                "constraint_overall": rep.constraint.overall,
                "minimality": rep.minimality,
                "verdict": format!("hedging price {:.6}; {}", rep.price, rep.minimality.verdict),
            }))
        }
        ExperimentConfig::MalliavinKCheck { u, t, epsilon, n_steps, n_paths, alpha } => {
            let fine = TimeGrid::uniform(grid.horizon(), *n_steps)?;
            let ens = PathEnsemble::simulate(fine, *n_paths, cfg.mc.seed)?;
            let alpha_values = match alpha {
                Some(f) => f.on_grid(ens.grid()),
                None => {
                    let level = sol.comp.alpha.first().copied().unwrap_or(0.0);
                    vec![level; n_steps + 1]
                }
            };
            let rep = malliavin_k_check(&ens, &alpha_values, sol.comp.p, *u, *t, *epsilon)?;
            let mut csv =
                Csv::new(&["u", "t", "epsilon", "max_rel_chain", "max_rel_flat", "matched"]);
            csv.row(&[
                CsvCell::Float(rep.u),
                CsvCell::Float(rep.t),
                CsvCell::Float(rep.epsilon),
                CsvCell::Float(rep.max_rel_chain),
                CsvCell::Float(rep.max_rel_flat),
                CsvCell::Str(&format!("{:?}", rep.matched)),
            ]);
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            Ok(json!({
                "name": name,
                "matched": rep.matched,
                "max_rel_chain": rep.max_rel_chain,
                "max_rel_flat": rep.max_rel_flat,
                "verdict": format!(
                    "finite difference matches the {:?} form (chain err {:.2e}, flat err {:.2e})",
                    rep.matched, rep.max_rel_chain, rep.max_rel_flat
                ),
            }))
        }
        ExperimentConfig::Impossibility => {
            let nu = match constraint {
                Constraint::LinearLower { nu } => nu.clone(),
                Constraint::LinearUpper { nu } => nu.clone(),
                _ => TimeFn::constant(0.0),
            };
            let prior = if driver.is_state_free()
                || (driver.sup_dy == 0.0 && driver.inf_dy == 0.0 && driver.sup_abs_dz == 0.0)
            {
                None
            } else {
                Some(solve_regression(
                    payoff,
                    driver,
                    CompensatorPaths::zero(paths),
                    paths,
                    RegressionBasis::poly_b(cfg.solver.degree),
                    TimeScheme::Explicit,
                    None,
                )?)
            };
            let rep = deterministic_k_infeasibility(payoff, driver, &nu, paths, prior.as_ref())?;
            let mut csv = Csv::new(&["t", "mean", "stderr", "level", "flagged"]);
            for r in &rep.rows {
                csv.row(&[
                    CsvCell::Float(r.t),
                    CsvCell::Float(r.mean),
                    CsvCell::Float(r.stderr),
                    CsvCell::Float(r.level),
                    CsvCell::Str(if r.flagged { "yes" } else { "no" }),
                ]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            Ok(json!({
                "name": name,
                "any_flagged": rep.any_flagged,
                "verdict": rep.conclusion,
            }))
        }
        ExperimentConfig::SufficientConditions { mode, phi, q_minus, q_plus } => {
            let nu = match constraint {
                Constraint::LinearLower { nu } => nu.clone(),
                _ => TimeFn::constant(0.0),
            };
            let mode = match mode {
                SufficiencyModeConfig::Continuity => SufficiencyMode::Continuity,
                SufficiencyModeConfig::Envelope => SufficiencyMode::Envelope {
                    phi: phi.clone().ok_or_else(|| {
                        Error::InvalidConfig("sufficient_conditions.phi required in envelope mode".into())
                    })?,
                },
            };
            let rep =
                sufficient_condition_check(payoff, driver, &nu, paths, &mode, *q_minus, *q_plus)?;
            let mut csv = Csv::new(&["t", "numerator", "ratio", "phi", "phi_ok"]);
            for r in &rep.rows {
                csv.row(&[
                    CsvCell::Float(r.t),
                    CsvCell::Float(r.numerator),
                    CsvCell::Float(r.ratio),
                    match r.phi {
                        Some(v) => CsvCell::Float(v),
                        None => CsvCell::Empty,
                    },
                    match r.phi_ok {
                        Some(true) => CsvCell::Str("yes"),
                        Some(false) => CsvCell::Str("no"),
                        None => CsvCell::Empty,
                    },
                ]);
            }
            write_text(&out_dir.join(format!("{file_stem}.csv")), &csv.finish())?;
            Ok(json!({
                "name": name,
                "max_ratio": rep.max_ratio,
                "terminal": rep.terminal,
                "alpha_candidate": rep.alpha_candidate,
                "verdict": rep.verdict,
            }))
        }
    }
}

/// Echo helper used by the CLI to print a terse outcome per experiment.
pub fn verdict_lines(summary: &serde_json::Value) -> Vec<String> {
    let mut lines = Vec::new();
    if let Some(p) = summary.get("pipeline") {
        let y0 = p["y0"]["mean"].as_f64().unwrap_or(f64::NAN);
        lines.push(format!(
            "pipeline: method {}, y0 = {}, constraint {}, minimality: {}",
            p["method"].as_str().unwrap_or("?"),
            fmt_f64(y0),
            p["constraint"]["overall"].as_str().unwrap_or("?"),
            p["minimality"]["verdict"].as_str().unwrap_or("?"),
        ));
    }
    if let Some(arr) = summary.get("experiments").and_then(|e| e.as_array()) {
        for e in arr {
            lines.push(format!(
                "{}: {}",
                e["name"].as_str().unwrap_or("?"),
                e["verdict"].as_str().unwrap_or("done"),
            ));
        }
    }
    lines
}
