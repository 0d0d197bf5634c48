//! Run configuration: a strict TOML schema (unknown keys rejected) mapped
//! onto the domain types. Every field is documented in the README schema
//! table.

use serde::{Deserialize, Serialize};

use crate::driver::{Constraint, Driver, GeneralConstraint};
use crate::error::{Error, Result};
use crate::payoff::{CylinderFn, Payoff};
use crate::solver::{BasisFamily, RegressionBasis, TimeScheme};
use crate::timefn::TimeFn;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    WienerIntegral { lambda: TimeFn },
    GeometricExponential { sign: i8 },
    Cylinder { g: CylinderKind, times: Vec<f64>, #[serde(default)] weights: Vec<f64> },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CylinderKind {
    SinSum,
    TanhMean,
}

impl PayoffConfig {
    pub fn build(&self) -> Result<Payoff> {
        match self {
            PayoffConfig::WienerIntegral { lambda } => {
                Ok(Payoff::WienerIntegral { lambda: lambda.clone() })
            }
            PayoffConfig::GeometricExponential { sign } => Payoff::geometric(*sign),
            PayoffConfig::Cylinder { g, times, weights } => {
                let func = match g {
                    CylinderKind::SinSum => {
                        let w = if weights.is_empty() {
                            vec![1.0; times.len()]
                        } else if weights.len() == times.len() {
                            weights.clone()
                        } else {
                            return Err(Error::InvalidConfig(
                                "payoff.weights must match payoff.times in length".into(),
                            ));
                        };
                        CylinderFn::sin_sum(w)
                    }
                    CylinderKind::TanhMean => CylinderFn::tanh_mean(),
                };
                Ok(Payoff::Cylinder { times: times.clone(), g: func })
            }
            PayoffConfig::Constant { value } => Ok(Payoff::Constant { value: *value }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    Zero,
    ExpInverse,
    Linear { a: f64, b: f64, c: f64 },
    TanhZ { scale: f64 },
}

impl DriverConfig {
    pub fn build(&self) -> Driver {
        match self {
            DriverConfig::Zero => Driver::zero(),
            DriverConfig::ExpInverse => Driver::exp_inverse(),
            DriverConfig::Linear { a, b, c } => Driver::linear(*a, *b, *c),
            DriverConfig::TanhZ { scale } => Driver::tanh_z(*scale),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    LinearLower { nu: TimeFn },
    LinearUpper { nu: TimeFn },
    Bilateral { nu_low: TimeFn, nu_high: TimeFn },
    General { name: GeneralKind },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralKind {
    ExpMinusOne,
    CubicShift,
    OneMinusExpNeg,
}

impl ConstraintConfig {
    pub fn build(&self) -> Constraint {
        match self {
            ConstraintConfig::LinearLower { nu } => Constraint::LinearLower { nu: nu.clone() },
            ConstraintConfig::LinearUpper { nu } => Constraint::LinearUpper { nu: nu.clone() },
            ConstraintConfig::Bilateral { nu_low, nu_high } => {
                Constraint::Bilateral { nu_low: nu_low.clone(), nu_high: nu_high.clone() }
            }
            ConstraintConfig::General { name } => Constraint::General(match name {
                GeneralKind::ExpMinusOne => GeneralConstraint::exp_minus_one(),
                GeneralKind::CubicShift => GeneralConstraint::cubic_shift(),
                GeneralKind::OneMinusExpNeg => GeneralConstraint::one_minus_exp_neg(),
            }),
        }
    }
}

fn default_cap() -> f64 {
    crate::compensator::DEFAULT_ALPHA_CAP
}

fn default_p() -> f64 {
    2.0
}

fn default_q() -> TimeFn {
    TimeFn::constant(2.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensatorConfig {
    pub mode: CompensatorMode,
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Exponent normalization for the z-dependent construction.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q_minus: TimeFn,
    #[serde(default = "default_q")]
    pub q_plus: TimeFn,
    /// Exponent function for the custom mode.
    #[serde(default)]
    pub alpha: Option<TimeFn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensatorMode {
    None,
    Case1,
    Case2,
    Bilateral,
    CustomAlpha,
}

fn default_degree() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: SolveMode,
    #[serde(default = "default_basis_family")]
    pub basis_family: BasisFamily,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub scheme: TimeScheme,
}

fn default_basis_family() -> BasisFamily {
    BasisFamily::PolyBk
}

impl SolverConfig {
    pub fn basis(&self) -> RegressionBasis {
        RegressionBasis { family: self.basis_family, degree: self.degree }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    Auto,
    ClosedForm,
    Regression,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenalizedMode {
    ClosedForm,
    MeanField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    PenalizationSweep {
        n_levels: Vec<f64>,
        mode: PenalizedMode,
        #[serde(default)]
        n_paths: Option<usize>,
    },
    MomentBounds {
        #[serde(default)]
        constant_sigmas: Vec<f64>,
        #[serde(default)]
        clipped_sigmas: Vec<f64>,
        p_values: Vec<f64>,
        t: f64,
    },
    CaseBBound {
        c: f64,
        m_lower: f64,
        #[serde(default)]
        m_bar: f64,
        #[serde(default)]
        d: f64,
    },
    ConcaveFeasibility {
        #[serde(default = "default_p")]
        q_minus: f64,
        #[serde(default = "default_p")]
        q_plus: f64,
        #[serde(default = "default_cap")]
        cap: f64,
    },
    AsBlowup {
        inf_xi: f64,
        inf_f: f64,
        n_levels: Vec<f64>,
        #[serde(default)]
        n_paths: Option<usize>,
    },
    HedgingDemo {
        rate: TimeFn,
        drift: TimeFn,
        volatility: TimeFn,
        sigma_min: f64,
        floor: TimeFn,
    },
    MalliavinKCheck {
        u: f64,
        t: f64,
        epsilon: f64,
        n_steps: usize,
        n_paths: usize,
        #[serde(default)]
        alpha: Option<TimeFn>,
    },
    Impossibility,
    SufficientConditions {
        mode: SufficiencyModeConfig,
        #[serde(default)]
        phi: Option<TimeFn>,
        #[serde(default = "default_p")]
        q_minus: f64,
        #[serde(default = "default_p")]
        q_plus: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyModeConfig {
    Continuity,
    Envelope,
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::PenalizationSweep { .. } => "penalization_sweep",
            ExperimentConfig::MomentBounds { .. } => "moment_bounds",
            ExperimentConfig::CaseBBound { .. } => "case_b_bound",
            ExperimentConfig::ConcaveFeasibility { .. } => "concave_feasibility",
            ExperimentConfig::AsBlowup { .. } => "as_blowup",
            ExperimentConfig::HedgingDemo { .. } => "hedging_demo",
            ExperimentConfig::MalliavinKCheck { .. } => "malliavin_k_check",
            ExperimentConfig::Impossibility => "impossibility",
            ExperimentConfig::SufficientConditions { .. } => "sufficient_conditions",
        }
    }
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub payoff: PayoffConfig,
    pub driver: DriverConfig,
    pub constraint: ConstraintConfig,
    pub compensator: CompensatorConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid.horizon must be positive, got {}",
                self.grid.horizon
            )));
        }
        if self.grid.n_steps == 0 {
            return Err(Error::InvalidConfig("grid.n_steps must be at least 1".into()));
        }
        if self.mc.n_paths == 0 {
            return Err(Error::InvalidConfig("mc.n_paths must be at least 1".into()));
        }
        if self.solver.degree == 0 {
            return Err(Error::InvalidConfig("solver.degree must be at least 1".into()));
        }
        if self.compensator.mode == CompensatorMode::CustomAlpha
            && self.compensator.alpha.is_none()
        {
            return Err(Error::InvalidConfig(
                "compensator.alpha is required for the custom_alpha mode".into(),
            ));
        }
        if self.compensator.mode == CompensatorMode::Case2 && !(self.compensator.p > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "compensator.p must exceed 1 for case2, got {}",
                self.compensator.p
            )));
        }
        Ok(())
    }
}

/// Parse and validate a config document (strict: unknown keys rejected).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
