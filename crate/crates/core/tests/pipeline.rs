//! End-to-end runs through the configuration-driven pipeline: fixture
//! parsing, artifact layout, rerun determinism, error propagation, and the
//! soundness of the constructed exponent on fresh configurations.

use mrbsde::compensator::{alpha_case1, bilateral_alpha_search, build_k, DEFAULT_ALPHA_CAP};
use mrbsde::config::parse_config;
use mrbsde::driver::{Constraint, Driver};
use mrbsde::error::Error;
use mrbsde::paths::{PathEnsemble, TimeGrid};
use mrbsde::payoff::Payoff;
use mrbsde::runner::{run, RunOptions};
use mrbsde::solver::{solve_regression, RegressionBasis, TimeScheme};
use mrbsde::timefn::TimeFn;
use mrbsde::verify::verify_constraint;

const EXAMPLE_A: &str = include_str!("../configs/example_a.toml");
const EXAMPLE_B: &str = include_str!("../configs/example_b.toml");
const IMPOSSIBILITY: &str = include_str!("../configs/impossibility.toml");
const HEDGING: &str = include_str!("../configs/hedging.toml");

fn run_fixture(text: &str, n_paths: usize) -> (serde_json::Value, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(text).unwrap();
    cfg.output_dir = dir.path().to_string_lossy().into_owned();
    cfg.mc.n_paths = n_paths;
    let outcome = run(&cfg, &RunOptions { no_figures: false }).unwrap();
    (outcome.summary, dir)
}

#[test]
fn example_a_fixture_end_to_end() {
    let (summary, dir) = run_fixture(EXAMPLE_A, 20_000);
    let y0 = summary["pipeline"]["y0"]["mean"].as_f64().unwrap();
    assert_eq!(y0, 1.0);
    assert_eq!(summary["pipeline"]["alpha"].as_f64().unwrap(), 1.0);
    assert_eq!(summary["pipeline"]["method"].as_str().unwrap(), "closed_form");
    let overall = summary["pipeline"]["constraint"]["overall"].as_str().unwrap();
    assert!(overall == "satisfied_within_noise" || overall == "satisfied");
    for file in [
        "summary.json",
        "solution_summary.csv",
        "constraint_report.csv",
        "alpha_diagnostics.csv",
        "constraint_report.svg",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    // The compensated run is provably non-minimal.
    assert!(!summary["pipeline"]["minimality"]["is_solution"].as_bool().unwrap());
}

#[test]
fn example_b_fixture_end_to_end() {
    let (summary, _dir) = run_fixture(EXAMPLE_B, 20_000);
    assert_eq!(summary["pipeline"]["y0"]["mean"].as_f64().unwrap(), 3.0);
    assert_eq!(summary["pipeline"]["method"].as_str().unwrap(), "closed_form");
}

#[test]
fn impossibility_fixture_is_a_finding_not_a_failure() {
    let (summary, _dir) = run_fixture(IMPOSSIBILITY, 10_000);
    assert_eq!(summary["pipeline"]["constraint"]["overall"].as_str().unwrap(), "violated");
    let experiments = summary["experiments"].as_array().unwrap();
    let imp = experiments.iter().find(|e| e["name"] == "impossibility").unwrap();
    assert!(imp["any_flagged"].as_bool().unwrap());
    let case_b = experiments.iter().find(|e| e["name"] == "case_b_bound").unwrap();
    assert!(case_b["witnessed"].as_bool().unwrap());
}

#[test]
fn hedging_fixture_reproduces_example_a_numbers() {
    let (summary, _dir) = run_fixture(HEDGING, 20_000);
    let experiments = summary["experiments"].as_array().unwrap();
    let hedge = experiments.iter().find(|e| e["name"] == "hedging_demo").unwrap();
    assert_eq!(hedge["price"].as_f64().unwrap(), 1.0);
    assert_eq!(hedge["alpha"].as_f64().unwrap(), 1.0);
}

#[test]
fn rerun_produces_byte_identical_csv() {
    let mut payloads: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for _ in 0..2 {
        let (_, dir) = run_fixture(EXAMPLE_A, 5_000);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| {
                let e = e.unwrap();
                let name = e.file_name().to_string_lossy().into_owned();
                name.ends_with(".csv").then(|| (name, std::fs::read(e.path()).unwrap()))
            })
            .collect();
        files.sort();
        payloads.push(files);
    }
    assert_eq!(payloads[0], payloads[1]);
}

#[test]
fn unwritable_output_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "file, not a directory").unwrap();
    let mut cfg = parse_config(EXAMPLE_A).unwrap();
    cfg.output_dir = blocker.join("nested").to_string_lossy().into_owned();
    cfg.mc.n_paths = 10;
    assert!(matches!(run(&cfg, &RunOptions::default()), Err(Error::Io(_))));
}

#[test]
fn constructed_exponent_holds_constraint_end_to_end() {
    // A fresh feasible configuration: exponential payoff, level rising
    // above the derivative mean in the interior but meeting it at the
    // horizon. The construction must produce an exponent whose compensated
    // solution never violates the constraint.
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    let paths = PathEnsemble::simulate(grid.clone(), 30_000, 21).unwrap();
    let payoff = Payoff::GeometricExponential { sign: 1 };
    let driver = Driver::zero();
    // nu(t) = 1 + 0.3 t (1 - t)
    let nu_fn = TimeFn::Poly { coeffs: vec![1.0, 0.3, -0.3] };
    let nu = nu_fn.on_grid(&grid);
    let report = alpha_case1(&payoff, &driver, &nu, &paths, DEFAULT_ALPHA_CAP).unwrap();
    assert!(report.alpha > 0.2 && report.alpha < 0.45, "alpha = {}", report.alpha);

    let comp = build_k(&paths, &vec![report.alpha; 51], 1.0).unwrap();
    let sol = solve_regression(
        &payoff,
        &driver,
        comp,
        &paths,
        RegressionBasis::poly_bk(3),
        TimeScheme::Explicit,
        None,
    )
    .unwrap();
    let verdicts =
        verify_constraint(&sol, &Constraint::LinearLower { nu: nu_fn }, &paths).unwrap();
    assert!(!verdicts.any_violated(), "constructed exponent failed: {:?}", verdicts.overall);
}

#[test]
fn binding_upper_constraint_via_negative_exponent() {
    // E[D_t xi] = 0.5 everywhere; the upper level dips below it in the
    // interior, forcing a negative exponent whose compensator pushes the
    // mean of the control down onto the level.
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    let paths = PathEnsemble::simulate(grid.clone(), 30_000, 22).unwrap();
    let payoff = Payoff::WienerIntegral { lambda: TimeFn::constant(0.5) };
    let driver = Driver::zero();
    // nu_high(t) = 0.5 - 0.2 (1 - t)
    let nu_fn = TimeFn::Poly { coeffs: vec![0.3, 0.2] };
    let nu_high = nu_fn.on_grid(&grid);
    let rep =
        bilateral_alpha_search(&payoff, &driver, None, Some(&nu_high), &paths).unwrap();
    for k in 0..50 {
        assert!((rep.alpha[k] + 0.2).abs() < 1e-12, "alpha[{k}] = {}", rep.alpha[k]);
    }
    let comp = build_k(&paths, &rep.alpha, 1.0).unwrap();
    let sol = solve_regression(
        &payoff,
        &driver,
        comp,
        &paths,
        RegressionBasis::poly_bk(3),
        TimeScheme::Explicit,
        None,
    )
    .unwrap();
    let verdicts =
        verify_constraint(&sol, &Constraint::LinearUpper { nu: nu_fn }, &paths).unwrap();
    assert!(!verdicts.any_violated(), "{:?}", verdicts.overall);
}

#[test]
fn convex_constraint_reduces_and_runs() {
    // l(t, x) = e^x - 1 has root zero: the pipeline reduces it to the
    // linear level zero and the compensated run satisfies it.
    let mut cfg = parse_config(EXAMPLE_A).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_string_lossy().into_owned();
    cfg.mc.n_paths = 20_000;
    cfg.constraint = toml::from_str::<mrbsde::config::RunConfig>(
        &EXAMPLE_A.replace(
            "kind = \"linear_lower\"\nnu = { kind = \"constant\", value = 0.0 }",
            "kind = \"general\"\nname = \"exp_minus_one\"",
        ),
    )
    .unwrap()
    .constraint;
    let outcome = run(&cfg, &RunOptions { no_figures: true }).unwrap();
    assert_eq!(outcome.summary["pipeline"]["alpha"].as_f64().unwrap(), 1.0);
    let overall = outcome.summary["pipeline"]["constraint"]["overall"].as_str().unwrap();
    assert_ne!(overall, "violated");
}
