//! Monte Carlo laboratory for backward stochastic differential equations
//! whose control process carries a constraint in expectation.
//!
//! The crate simulates Brownian ensembles, evaluates terminal payoffs with
//! their Malliavin derivatives, builds nondecreasing compensators from
//! stochastic exponentials, solves the resulting BSDEs (closed form where
//! available, least-squares regression otherwise), and verifies the
//! constraint statistically. A configuration-driven CLI packages the
//! pipeline and a set of reproducible experiments.

pub mod compensator;
pub mod config;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod paths;
pub mod payoff;
pub mod report;
pub mod runner;
pub mod solver;
pub mod stats;
pub mod svg;
pub mod timefn;
pub mod verify;

pub use error::{Error, Result};
pub use paths::{PathEnsemble, TimeGrid};
pub use stats::EstimateCI;
pub use timefn::TimeFn;
