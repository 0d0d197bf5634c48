use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Scientific negatives (a violated constraint, a
/// witnessed impossibility) are *reports*, not errors; only computational
/// faults and bad configurations surface here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time ordering error: {0}")]
    Ordering(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("compensator infeasible at t = {t}: {detail}")]
    Infeasible { t: f64, detail: String },

    #[error("bilateral constraint infeasible at {} grid times starting at t = {first}", times.len())]
    BilateralInfeasible { times: Vec<f64>, first: f64 },

    #[error("no closed form for this configuration: {0}")]
    NoClosedForm(String),

    #[error("singular regression design matrix at step {step}")]
    RegressionSingular { step: usize },

    #[error("missing Malliavin derivative for driver `{0}`")]
    MissingDerivative(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (sup |delta| = {sup_delta:.3e})")]
    NonConvergence { iterations: usize, sup_delta: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}
