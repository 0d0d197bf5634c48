//! Time grids, reproducible Brownian ensembles, Ito integration, and
//! stochastic exponentials.
//!
//! Reproducibility contract: every path draws from its own counter-based
//! substream keyed by `(seed, path index)`. Generation order and worker
//! count cannot change the numbers, and the first `m` paths of a larger
//! ensemble coincide with an `m`-path ensemble at the same seed.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

const GRID_TOL: f64 = 1e-9;

/// Strictly increasing grid 0 = t_0 < ... < t_n = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with spacing T / n_steps.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidConfig("grid.n_steps must be at least 1".into()));
        }
        let mut times: Vec<f64> = (0..=n_steps)
            .map(|k| horizon * k as f64 / n_steps as f64)
            .collect();
        times[0] = 0.0;
        times[n_steps] = horizon;
        Ok(Self { times })
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of a grid time, within absolute tolerance 1e-9.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() <= GRID_TOL {
                return Ok(k);
            }
        }
        Err(Error::InvalidConfig(format!("time {t} is not on the grid")))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn substream_seed(seed: u64, path: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ path.wrapping_mul(0xA0761D6478BD642F))
}

/// A seeded ensemble of discretized Brownian paths on a shared grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    /// Gaussian increments, shape (n_paths, n_steps), variance dt_k per column.
    increments: Array2<f64>,
    /// Brownian values, shape (n_paths, n_steps + 1), first column zero.
    values: Array2<f64>,
}

impl PathEnsemble {
    pub fn simulate(grid: TimeGrid, n_paths: usize, seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::InvalidConfig("mc.n_paths must be at least 1".into()));
        }
        let n = grid.n_steps();
        let sqrt_dt: Vec<f64> = (0..n).map(|k| grid.dt(k).sqrt()).collect();

        let mut increments = Array2::zeros((n_paths, n));
        increments
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, i as u64));
                for (k, slot) in row.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = sqrt_dt[k] * z;
                }
            });

        let mut values = Array2::zeros((n_paths, n + 1));
        {
            let inc = increments.as_slice().expect("standard layout");
            values
                .as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(n + 1)
                .enumerate()
                .for_each(|(i, row)| {
                    let mut acc = 0.0;
                    row[0] = 0.0;
                    for k in 0..n {
                        acc += inc[i * n + k];
                        row[k + 1] = acc;
                    }
                });
        }

        Ok(Self { grid, n_paths, seed, increments, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Brownian values B_{t_k}, shape (n_paths, n_steps + 1).
    pub fn brownian(&self) -> &Array2<f64> {
        &self.values
    }

    /// Increments dB_k, shape (n_paths, n_steps).
    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    pub fn brownian_row(&self, path: usize) -> &[f64] {
        let n1 = self.grid.n_steps() + 1;
        let s = self.values.as_slice().expect("standard layout");
        &s[path * n1..(path + 1) * n1]
    }

    pub fn increment_row(&self, path: usize) -> &[f64] {
        let n = self.grid.n_steps();
        let s = self.increments.as_slice().expect("standard layout");
        &s[path * n..(path + 1) * n]
    }

    /// Left-point Ito integral of a sampled adapted process:
    /// sum_k g(t_k) dB_k per path. The integrand may carry n_steps or
    /// n_steps + 1 columns; a terminal column is ignored.
    pub fn ito_integral(&self, integrand: &Array2<f64>) -> Result<Vec<f64>> {
        let n = self.grid.n_steps();
        if integrand.nrows() != self.n_paths
            || (integrand.ncols() != n && integrand.ncols() != n + 1)
        {
            return Err(Error::ShapeMismatch(format!(
                "integrand is {}x{}, expected {}x{} (or {} columns)",
                integrand.nrows(),
                integrand.ncols(),
                self.n_paths,
                n,
                n + 1
            )));
        }
        let m = integrand.ncols();
        let g = integrand.as_slice().expect("standard layout");
        let db = self.increments.as_slice().expect("standard layout");
        let out: Vec<f64> = (0..self.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += g[i * m + k] * db[i * n + k];
                }
                acc
            })
            .collect();
        Ok(out)
    }

    /// Ito integral of a deterministic integrand evaluated at left endpoints.
    pub fn ito_integral_fn(&self, f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let n = self.grid.n_steps();
        let weights: Vec<f64> = (0..n).map(|k| f(self.grid.t(k))).collect();
        let db = self.increments.as_slice().expect("standard layout");
        (0..self.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += weights[k] * db[i * n + k];
                }
                acc
            })
            .collect()
    }

    /// Exponent-normalized stochastic exponential on the grid:
    /// k_{t_j} = exp( sum_{k<j} a_k dB_k - (1/2p) sum_{k<j} a_k^2 dt_k ),
    /// accumulated in log space. `alpha` holds grid values (at least n_steps).
    pub fn stochastic_exponential(&self, alpha: &[f64], p: f64) -> Result<Array2<f64>> {
        let n = self.grid.n_steps();
        if !(p >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "stochastic exponential normalization p must be >= 1, got {p}"
            )));
        }
        if alpha.len() < n {
            return Err(Error::ShapeMismatch(format!(
                "alpha has {} values, grid needs {}",
                alpha.len(),
                n
            )));
        }
        if alpha[..n].iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be finite on the grid".into()));
        }
        let drift: Vec<f64> = (0..n)
            .map(|k| alpha[k] * alpha[k] * self.grid.dt(k) / (2.0 * p))
            .collect();
        let db = self.increments.as_slice().expect("standard layout");
        let mut out = Array2::zeros((self.n_paths, n + 1));
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n + 1)
            .enumerate()
            .for_each(|(i, row)| {
                let mut log_k = 0.0;
                row[0] = 1.0;
                for k in 0..n {
                    log_k += alpha[k] * db[i * n + k] - drift[k];
                    row[k + 1] = log_k.exp();
                }
            });
        Ok(out)
    }
}
