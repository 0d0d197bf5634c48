//! BSDE generators with declared derivative bounds, the exponential weights
//! built from those derivatives, and constraint functions on the control.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paths::{PathEnsemble, TimeGrid};
use crate::timefn::TimeFn;

type GenFn = dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync;
type MallFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// Generator variants. `b` below is the Brownian value at the evaluation
/// time, the only path state the built-in generators look at.
#[derive(Clone)]
pub enum DriverKind {
    Zero,
    /// f = exp(-B_t - t/2)
    ExpInverse,
    /// f = a y + b z + c
    Linear { a: f64, b: f64, c: f64 },
    /// f = scale * tanh(B_t) * z: a path-dependent, bounded dZ-derivative.
    TanhZ { scale: f64 },
    Custom {
        name: String,
        f: Arc<GenFn>,
        dy: Option<Arc<GenFn>>,
        dz: Option<Arc<GenFn>>,
        /// D_r f(t) as a function of (t, r, B_t).
        df: Option<Arc<MallFn>>,
    },
}

impl fmt::Debug for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverKind::Zero => write!(f, "Zero"),
            DriverKind::ExpInverse => write!(f, "ExpInverse"),
            DriverKind::Linear { a, b, c } => write!(f, "Linear({a}, {b}, {c})"),
            DriverKind::TanhZ { scale } => write!(f, "TanhZ({scale})"),
            DriverKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A generator f(t, omega, y, z) together with the uniform bounds on its
/// derivatives that every feasibility formula consumes.
#[derive(Debug, Clone)]
pub struct Driver {
    pub kind: DriverKind,
    pub sup_dy: f64,
    pub inf_dy: f64,
    pub sup_abs_dz: f64,
    /// Uniform bound on |D f|; infinite when no finite bound exists.
    pub malliavin_bound: f64,
}

impl Driver {
    pub fn zero() -> Self {
        Self { kind: DriverKind::Zero, sup_dy: 0.0, inf_dy: 0.0, sup_abs_dz: 0.0, malliavin_bound: 0.0 }
    }

    /// The generator exp(-B_t - t/2). Its Malliavin derivative is unbounded,
    /// so constructions that need a finite `d` refuse this driver.
    pub fn exp_inverse() -> Self {
        Self {
            kind: DriverKind::ExpInverse,
            sup_dy: 0.0,
            inf_dy: 0.0,
            sup_abs_dz: 0.0,
            malliavin_bound: f64::INFINITY,
        }
    }

    pub fn linear(a: f64, b: f64, c: f64) -> Self {
        Self { kind: DriverKind::Linear { a, b, c }, sup_dy: a, inf_dy: a, sup_abs_dz: b.abs(), malliavin_bound: 0.0 }
    }

    pub fn tanh_z(scale: f64) -> Self {
        Self { kind: DriverKind::TanhZ { scale }, sup_dy: 0.0, inf_dy: 0.0, sup_abs_dz: scale.abs(), malliavin_bound: 0.0 }
    }

    pub fn custom(
        name: impl Into<String>,
        f: Arc<GenFn>,
        dy: Option<Arc<GenFn>>,
        dz: Option<Arc<GenFn>>,
        df: Option<Arc<MallFn>>,
        sup_dy: f64,
        inf_dy: f64,
        sup_abs_dz: f64,
        malliavin_bound: f64,
    ) -> Self {
        Self {
            kind: DriverKind::Custom { name: name.into(), f, dy, dz, df },
            sup_dy,
            inf_dy,
            sup_abs_dz,
            malliavin_bound,
        }
    }

    pub fn name(&self) -> String {
        format!("{:?}", self.kind)
    }

    pub fn eval(&self, t: f64, b: f64, y: f64, z: f64) -> f64 {
        match &self.kind {
            DriverKind::Zero => 0.0,
            DriverKind::ExpInverse => (-b - t / 2.0).exp(),
            DriverKind::Linear { a, b: bz, c } => a * y + bz * z + c,
            DriverKind::TanhZ { scale } => scale * b.tanh() * z,
            DriverKind::Custom { f, .. } => f(t, b, y, z),
        }
    }

    pub fn dy(&self, t: f64, b: f64, y: f64, z: f64) -> f64 {
        match &self.kind {
            DriverKind::Zero | DriverKind::ExpInverse | DriverKind::TanhZ { .. } => 0.0,
            DriverKind::Linear { a, .. } => *a,
            DriverKind::Custom { dy, .. } => match dy {
                Some(g) => g(t, b, y, z),
                None => self.fd_partial(t, b, y, z, true),
            },
        }
    }

    pub fn dz(&self, t: f64, b: f64, y: f64, z: f64) -> f64 {
        match &self.kind {
            DriverKind::Zero | DriverKind::ExpInverse => 0.0,
            DriverKind::Linear { b: bz, .. } => *bz,
            DriverKind::TanhZ { scale } => scale * b.tanh(),
            DriverKind::Custom { dz, .. } => match dz {
                Some(g) => g(t, b, y, z),
                None => self.fd_partial(t, b, y, z, false),
            },
        }
    }

    fn fd_partial(&self, t: f64, b: f64, y: f64, z: f64, in_y: bool) -> f64 {
        let h = 1e-6 * if in_y { y.abs().max(1.0) } else { z.abs().max(1.0) };
        let (up, dn) = if in_y {
            (self.eval(t, b, y + h, z), self.eval(t, b, y - h, z))
        } else {
            (self.eval(t, b, y, z + h), self.eval(t, b, y, z - h))
        };
        (up - dn) / (2.0 * h)
    }

    /// Exact Malliavin derivative D_r f(t), when the variant has one.
    pub fn df(&self, t: f64, r: f64, b: f64) -> Option<f64> {
        match &self.kind {
            DriverKind::Zero | DriverKind::Linear { .. } => Some(0.0),
            DriverKind::ExpInverse => Some(if r <= t { -(-b - t / 2.0).exp() } else { 0.0 }),
            DriverKind::TanhZ { .. } => None,
            DriverKind::Custom { df, .. } => df.as_ref().map(|g| g(t, r, b)),
        }
    }

    pub fn has_df(&self) -> bool {
        match &self.kind {
            DriverKind::Zero | DriverKind::Linear { .. } | DriverKind::ExpInverse => true,
            DriverKind::TanhZ { .. } => false,
            DriverKind::Custom { df, .. } => df.is_some(),
        }
    }

    pub fn sup_abs_dy(&self) -> f64 {
        self.sup_dy.abs().max(self.inf_dy.abs())
    }

    /// True when the generator does not look at (y, z) at all.
    pub fn is_state_free(&self) -> bool {
        matches!(self.kind, DriverKind::Zero | DriverKind::ExpInverse)
    }

    /// Spot-check the declared derivative bounds by sampled finite
    /// differences on a (t, b, y, z) lattice.
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        const TOL: f64 = 1e-6;
        let n = grid.n_steps();
        let stride = (n / 8).max(1);
        let states = [-2.0, -0.5, 0.0, 0.5, 2.0];
        for k in (0..=n).step_by(stride) {
            let t = grid.t(k);
            for &b in &states {
                for &y in &states {
                    for &z in &states {
                        let fy = self.fd_partial(t, b, y, z, true);
                        if fy > self.sup_dy + TOL || fy < self.inf_dy - TOL {
                            return Err(Error::InvalidConfig(format!(
                                "driver {}: sampled dY f = {fy:.6} at (t={t}, b={b}, y={y}, z={z}) violates [{}, {}]",
                                self.name(), self.inf_dy, self.sup_dy
                            )));
                        }
                        let fz = self.fd_partial(t, b, y, z, false);
                        if fz.abs() > self.sup_abs_dz + TOL {
                            return Err(Error::InvalidConfig(format!(
                                "driver {}: sampled |dZ f| = {:.6} at (t={t}, b={b}, y={y}, z={z}) exceeds {}",
                                self.name(), fz.abs(), self.sup_abs_dz
                            )));
                        }
                        if self.malliavin_bound.is_finite() {
                            if let Some(df) = self.df(t, t * 0.5, b) {
                                if df.abs() > self.malliavin_bound + TOL {
                                    return Err(Error::InvalidConfig(format!(
                                        "driver {}: |D f| = {:.6} exceeds declared bound {}",
                                        self.name(), df.abs(), self.malliavin_bound
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pathwise exponential weights of the linearized generator between two grid
/// times: `gamma` carries the dY drift term, `tilde` omits it.
#[derive(Debug, Clone)]
pub struct GammaWeights {
    pub gamma: Vec<f64>,
    pub tilde: Vec<f64>,
}

/// Left-point evaluation of
/// Gamma_t^s = exp( int_t^s dY f dr + dZ f dB - (dZ f)^2/2 dr ).
/// `y`/`z` supply the state the derivatives are evaluated at; absent
/// processes read as zero (exact when the derivatives ignore them).
pub fn gamma_weights(
    paths: &PathEnsemble,
    driver: &Driver,
    y: Option<&Array2<f64>>,
    z: Option<&Array2<f64>>,
    t_idx: usize,
    s_idx: usize,
) -> Result<GammaWeights> {
    let grid = paths.grid();
    if t_idx > s_idx {
        return Err(Error::Ordering(format!(
            "gamma weights need t <= s, got indices {t_idx} > {s_idx}"
        )));
    }
    if s_idx > grid.n_steps() {
        return Err(Error::Domain(format!("index {s_idx} is off the grid")));
    }
    let n_paths = paths.n_paths();
    let mut gamma = vec![0.0; n_paths];
    let mut tilde = vec![0.0; n_paths];
    gamma
        .par_iter_mut()
        .zip(tilde.par_iter_mut())
        .enumerate()
        .for_each(|(i, (g, tl))| {
            let b = paths.brownian_row(i);
            let db = paths.increment_row(i);
            let mut log_g = 0.0;
            let mut log_t = 0.0;
            for k in t_idx..s_idx {
                let t = grid.t(k);
                let dt = grid.dt(k);
                let yv = y.map_or(0.0, |m| m[[i, k]]);
                let zv = z.map_or(0.0, |m| m[[i, k]]);
                let fy = driver.dy(t, b[k], yv, zv);
                let fz = driver.dz(t, b[k], yv, zv);
                let marty = fz * db[k] - fz * fz / 2.0 * dt;
                log_g += fy * dt + marty;
                log_t += marty;
            }
            *g = log_g.exp();
            *tl = log_t.exp();
        });
    Ok(GammaWeights { gamma, tilde })
}

/// Constraint function on the law of the control.
#[derive(Clone)]
pub enum Constraint {
    /// E[Z_t] >= nu(t), i.e. l(t, x) = x - nu(t).
    LinearLower { nu: TimeFn },
    /// E[Z_t] <= nu(t), reported as l(t, x) = nu(t) - x.
    LinearUpper { nu: TimeFn },
    Bilateral { nu_low: TimeFn, nu_high: TimeFn },
    General(GeneralConstraint),
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::LinearLower { nu } => write!(f, "LinearLower({nu:?})"),
            Constraint::LinearUpper { nu } => write!(f, "LinearUpper({nu:?})"),
            Constraint::Bilateral { nu_low, nu_high } => {
                write!(f, "Bilateral({nu_low:?}, {nu_high:?})")
            }
            Constraint::General(g) => write!(f, "General({})", g.name),
        }
    }
}

type ConstraintEval = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A smooth constraint with declared curvature and slope bounds.
#[derive(Clone)]
pub struct GeneralConstraint {
    pub name: String,
    pub l: Arc<ConstraintEval>,
    pub dx: Arc<ConstraintEval>,
    pub dxx: Arc<ConstraintEval>,
    pub dt: Arc<ConstraintEval>,
    pub convex: bool,
    /// Lower bound on dx l (must be positive).
    pub slope_lower: f64,
    /// Bounds on dxx l / (dx l)^2: value in [-c_lower, c_upper].
    pub c_upper: f64,
    pub c_lower: f64,
    /// Bound on |dt l|.
    pub m_bar: f64,
    /// Optional upper bound on dx l.
    pub slope_upper: Option<f64>,
}

impl GeneralConstraint {
    /// l(t, x) = e^x - 1: convex, strictly increasing, root at 0.
    pub fn exp_minus_one() -> Self {
        Self {
            name: "exp_minus_one".into(),
            l: Arc::new(|_t, x| x.exp() - 1.0),
            dx: Arc::new(|_t, x| x.exp()),
            dxx: Arc::new(|_t, x| x.exp()),
            dt: Arc::new(|_t, _x| 0.0),
            convex: true,
            slope_lower: 1e-6,
            c_upper: 1e6,
            c_lower: 0.0,
            m_bar: 0.0,
            slope_upper: None,
        }
    }

    /// l(t, x) = x^3 + x - 2: convex and strictly increasing on x >= 0,
    /// root at 1.
    pub fn cubic_shift() -> Self {
        Self {
            name: "cubic_shift".into(),
            l: Arc::new(|_t, x| x * x * x + x - 2.0),
            dx: Arc::new(|_t, x| 3.0 * x * x + 1.0),
            dxx: Arc::new(|_t, x| 6.0 * x),
            dt: Arc::new(|_t, _x| 0.0),
            convex: true,
            slope_lower: 1.0,
            c_upper: 1e6,
            c_lower: 0.0,
            m_bar: 0.0,
            slope_upper: None,
        }
    }

    /// l(t, x) = 1 - e^{-x}: concave, strictly increasing, root at 0.
    pub fn one_minus_exp_neg() -> Self {
        Self {
            name: "one_minus_exp_neg".into(),
            l: Arc::new(|_t, x| 1.0 - (-x).exp()),
            dx: Arc::new(|_t, x| (-x).exp()),
            dxx: Arc::new(|_t, x| -(-x).exp()),
            dt: Arc::new(|_t, _x| 0.0),
            convex: false,
            slope_lower: 1e-6,
            c_upper: 0.0,
            c_lower: 1e6,
            m_bar: 0.0,
            slope_upper: None,
        }
    }
}

impl Constraint {
    /// l(t, z); bilateral constraints report through their own two-sided
    /// machinery and are rejected here.
    pub fn eval(&self, t: f64, z: f64) -> Result<f64> {
        match self {
            Constraint::LinearLower { nu } => Ok(z - nu.eval(t)),
            Constraint::LinearUpper { nu } => Ok(nu.eval(t) - z),
            Constraint::Bilateral { .. } => Err(Error::InvalidConfig(
                "bilateral constraints are evaluated by their two-sided report".into(),
            )),
            Constraint::General(g) => Ok((g.l)(t, z)),
        }
    }

    /// Slope of l(t, .) at x, for error propagation in reports.
    pub fn slope(&self, t: f64, x: f64) -> f64 {
        match self {
            Constraint::LinearLower { .. } | Constraint::LinearUpper { .. } => 1.0,
            Constraint::Bilateral { .. } => 1.0,
            Constraint::General(g) => (g.dx)(t, x),
        }
    }
}

/// Root of a strictly increasing convex l(t, .), by bisection to absolute
/// tolerance 1e-10. Reduces E[l(t, Z_t)] >= 0 to E[Z_t] >= root.
pub fn convex_reduction_threshold(g: &GeneralConstraint, t: f64) -> Result<f64> {
    if !g.convex {
        return Err(Error::InvalidConfig(format!(
            "constraint {} is not declared convex",
            g.name
        )));
    }
    const LIMIT: f64 = 1e6;
    let f = |x: f64| (g.l)(t, x);
    let mut lo = -1.0;
    let mut hi = 1.0;
    while f(lo) > 0.0 || f(hi) < 0.0 {
        if f(lo) > 0.0 {
            lo *= 4.0;
        }
        if f(hi) < 0.0 {
            hi *= 4.0;
        }
        if lo < -LIMIT || hi > LIMIT {
            return Err(Error::RootNotBracketed { lo, hi });
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{PathEnsemble, TimeGrid};
    use crate::stats::EstimateCI;

    fn paths(n_steps: usize, n_paths: usize, seed: u64) -> PathEnsemble {
        let grid = TimeGrid::uniform(1.0, n_steps).unwrap();
        PathEnsemble::simulate(grid, n_paths, seed).unwrap()
    }

    #[test]
    fn driver_eval_examples() {
        assert_eq!(Driver::zero().eval(0.3, 1.0, 2.0, 3.0), 0.0);
        assert_eq!(Driver::exp_inverse().eval(0.0, 0.0, 9.0, 9.0), 1.0);
        assert_eq!(Driver::linear(0.0, 0.0, 1.0).eval(0.5, 0.0, 7.0, 8.0), 1.0);
    }

    #[test]
    fn gamma_weights_zero_driver_is_one() {
        let p = paths(20, 30, 1);
        let w = gamma_weights(&p, &Driver::zero(), None, None, 5, 15).unwrap();
        assert!(w.gamma.iter().all(|&g| g == 1.0));
        assert!(w.tilde.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn gamma_weights_identity_at_t_equals_s() {
        let p = paths(20, 10, 2);
        let w = gamma_weights(&p, &Driver::linear(0.5, 0.7, 0.0), None, None, 7, 7).unwrap();
        assert!(w.gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn gamma_weights_deterministic_drift() {
        let p = paths(100, 20, 3);
        let a = 0.8;
        let w = gamma_weights(&p, &Driver::linear(a, 0.0, 0.0), None, None, 25, 75).unwrap();
        let expect = (a * 0.5f64).exp();
        for g in &w.gamma {
            assert!((g - expect).abs() < 1e-12, "{g} vs {expect}");
        }
        assert!(w.tilde.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn gamma_tilde_is_mean_one() {
        let p = paths(50, 50_000, 4);
        let w = gamma_weights(&p, &Driver::linear(0.0, 0.5, 0.0), None, None, 0, 50).unwrap();
        let ci = EstimateCI::from_slice(&w.tilde);
        assert!(ci.within(1.0, 3.0), "{} +- {}", ci.mean, ci.stderr);
    }

    #[test]
    fn gamma_tilde_lemma_moment_bounds() {
        // For constant sigma the p-th moment bound holds with equality.
        let p = paths(50, 60_000, 50);
        let sigma = 0.5;
        let w = gamma_weights(&p, &Driver::linear(0.0, sigma, 0.0), None, None, 0, 50).unwrap();
        for pw in [2.0, 3.0] {
            let xs: Vec<f64> = w.tilde.iter().map(|g| g.abs().powf(pw)).collect();
            let est = EstimateCI::from_slice(&xs).powf(1.0 / pw);
            let bound = ((pw - 1.0) * sigma * sigma / 2.0).exp();
            assert!(
                (est.mean - bound).abs() <= 3.0 * est.stderr,
                "p = {pw}: {} +- {} vs bound {bound}",
                est.mean,
                est.stderr
            );
        }
        // Negative moment: estimate sits above the lower bound.
        let xs: Vec<f64> = w.tilde.iter().map(|g| g.abs().powf(-1.0)).collect();
        let est = EstimateCI::from_slice(&xs).powf(-1.0);
        let bound = ((-1.0 - 1.0) * sigma * sigma / 2.0 as f64).exp();
        let rel = est.stderr / est.mean;
        assert!(est.mean >= bound * (1.0 - 3.0 * rel), "{} vs {bound}", est.mean);
    }

    #[test]
    fn gamma_tilde_bounded_for_path_dependent_sigma() {
        let p = paths(50, 40_000, 6);
        let scale = 0.5;
        let w = gamma_weights(&p, &Driver::tanh_z(scale), None, None, 0, 50).unwrap();
        let pw = 2.0;
        let xs: Vec<f64> = w.tilde.iter().map(|g| g.abs().powf(pw)).collect();
        let est = EstimateCI::from_slice(&xs).powf(1.0 / pw);
        let bound = ((pw - 1.0) * scale * scale / 2.0).exp();
        assert!(est.mean <= bound + 3.0 * est.stderr, "{} vs {bound}", est.mean);
    }

    #[test]
    fn gamma_ordering_error() {
        let p = paths(10, 5, 7);
        assert!(matches!(
            gamma_weights(&p, &Driver::zero(), None, None, 8, 3),
            Err(Error::Ordering(_))
        ));
    }

    #[test]
    fn constraint_eval_examples() {
        let lower = Constraint::LinearLower { nu: TimeFn::constant(0.0) };
        assert_eq!(lower.eval(0.1, 0.3).unwrap(), 0.3);
        let at_boundary = Constraint::LinearLower { nu: TimeFn::constant(1.0) };
        assert_eq!(at_boundary.eval(0.5, 1.0).unwrap(), 0.0);
        let general = Constraint::General(GeneralConstraint::exp_minus_one());
        assert_eq!(general.eval(0.0, 0.0).unwrap(), 0.0);
        let bilateral = Constraint::Bilateral {
            nu_low: TimeFn::constant(0.0),
            nu_high: TimeFn::constant(1.0),
        };
        assert!(bilateral.eval(0.0, 0.5).is_err());
    }

    #[test]
    fn convex_reduction_examples() {
        let root = convex_reduction_threshold(&GeneralConstraint::exp_minus_one(), 0.0).unwrap();
        assert!(root.abs() <= 1e-10);
        let g = GeneralConstraint::cubic_shift();
        let root = convex_reduction_threshold(&g, 0.0).unwrap();
        assert!((root - 1.0).abs() <= 1e-10, "root {root}");
        assert!((g.l)(0.0, root).abs() <= 1e-9);
    }

    #[test]
    fn convex_reduction_rejects_unbracketable() {
        let g = GeneralConstraint {
            name: "always_positive".into(),
            l: Arc::new(|_t, _x| 1.0),
            dx: Arc::new(|_t, _x| 0.0),
            dxx: Arc::new(|_t, _x| 0.0),
            dt: Arc::new(|_t, _x| 0.0),
            convex: true,
            slope_lower: 0.0,
            c_upper: 0.0,
            c_lower: 0.0,
            m_bar: 0.0,
            slope_upper: None,
        };
        assert!(matches!(
            convex_reduction_threshold(&g, 0.0),
            Err(Error::RootNotBracketed { .. })
        ));
    }

    #[test]
    fn validate_catches_wrong_bounds() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        // Declared dZ bound smaller than the actual slope.
        let mut d = Driver::linear(0.0, 2.0, 0.0);
        d.sup_abs_dz = 1.0;
        assert!(matches!(d.validate(&grid), Err(Error::InvalidConfig(_))));
        assert!(Driver::linear(0.3, 2.0, 1.0).validate(&grid).is_ok());
        assert!(Driver::exp_inverse().validate(&grid).is_ok());
    }
}
