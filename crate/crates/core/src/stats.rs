//! Monte Carlo summary statistics with deterministic reductions.
//!
//! Every cross-path sum in this crate goes through [`det_sum`], which splits
//! the data into fixed-size blocks, sums each block sequentially, and folds
//! the block totals in index order. The grouping is independent of the rayon
//! worker count, so estimates are bit-identical under 1, 2, or 64 threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Block length for deterministic parallel reductions.
pub const DET_CHUNK: usize = 4096;

/// Sum with a thread-count-independent summation tree.
pub fn det_sum(xs: &[f64]) -> f64 {
    if xs.len() <= DET_CHUNK {
        return xs.iter().sum();
    }
    let partials: Vec<f64> = xs
        .par_chunks(DET_CHUNK)
        .map(|chunk| chunk.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub fn det_mean(xs: &[f64]) -> f64 {
    det_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error (Bessel-corrected, two-pass).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = det_mean(xs);
    if n < 2 {
        return (mean, 0.0);
    }
    let ssq: f64 = if n <= DET_CHUNK {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum()
    } else {
        let partials: Vec<f64> = xs
            .par_chunks(DET_CHUNK)
            .map(|chunk| chunk.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>())
            .collect();
        partials.iter().sum()
    };
    let var = ssq / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// A point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateCI {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl EstimateCI {
    pub fn from_slice(xs: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self { mean, stderr, n_samples: xs.len() }
    }

    /// An exactly-known value reported with zero standard error.
    pub fn exact(value: f64, n_samples: usize) -> Self {
        Self { mean: value, stderr: 0.0, n_samples }
    }

    /// Delta-method propagation through `x -> x^e`.
    pub fn powf(&self, e: f64) -> Self {
        if self.mean <= 0.0 {
            // Power of a non-positive moment estimate: report the plain power
            // with no propagated error (the transform is not differentiable).
            return Self { mean: self.mean.max(0.0).powf(e), stderr: 0.0, n_samples: self.n_samples };
        }
        Self {
            mean: self.mean.powf(e),
            stderr: e.abs() * self.mean.powf(e - 1.0) * self.stderr,
            n_samples: self.n_samples,
        }
    }

    pub fn within(&self, target: f64, n_sigmas: f64) -> bool {
        (self.mean - target).abs() <= n_sigmas * self.stderr
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares y = a + b x with the slope's standard error.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let m = xs.len();
    if m != ys.len() {
        return Err(Error::ShapeMismatch(format!("fit points: {} xs vs {} ys", m, ys.len())));
    }
    if m < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {m}")));
    }
    let xbar = xs.iter().sum::<f64>() / m as f64;
    let ybar = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae identical".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_stderr = if m > 2 {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        (ss_res / (m - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_sum_matches_sequential() {
        let xs: Vec<f64> = (0..20_000).map(|i| (i as f64) * 0.1).collect();
        let expected: f64 = {
            let partials: Vec<f64> = xs.chunks(DET_CHUNK).map(|c| c.iter().sum()).collect();
            partials.iter().sum()
        };
        assert_eq!(det_sum(&xs), expected);
    }

    #[test]
    fn det_sum_thread_count_invariant() {
        let xs: Vec<f64> = (0..50_000).map(|i| ((i * 2654435761u64 % 1000) as f64).sin()).collect();
        let mut results = Vec::new();
        for threads in [1usize, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            results.push(pool.install(|| det_sum(&xs)));
        }
        assert_eq!(results[0].to_bits(), results[1].to_bits());
        assert_eq!(results[0].to_bits(), results[2].to_bits());
    }

    #[test]
    fn estimate_ci_basics() {
        let ci = EstimateCI::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ci.mean, 2.5);
        // sample std = sqrt(5/3), stderr = that / 2
        let expected = (5.0f64 / 3.0).sqrt() / 2.0;
        assert!((ci.stderr - expected).abs() < 1e-15);
        assert_eq!(EstimateCI::exact(7.0, 10).stderr, 0.0);
    }

    #[test]
    fn linear_fit_recovers_affine() {
        let xs = [0.0, 10.0, 20.0, 30.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 0.5 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn linear_fit_needs_two_points() {
        assert!(matches!(linear_fit(&[1.0], &[2.0]), Err(Error::DegenerateFit(_))));
    }
}
