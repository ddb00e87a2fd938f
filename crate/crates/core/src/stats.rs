//! Monte Carlo estimators with compensated summation.
//!
//! Every reduction in the crate goes through [`NeumaierSum`] over values
//! collected in path-index order, so the result does not depend on how the
//! per-path work was scheduled across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Neumaier's improved Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum<S> {
    sum: S,
    compensation: S,
}

impl<S: Scalar> NeumaierSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            compensation: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> S {
        self.sum + self.compensation
    }
}

impl<S: Scalar> FromIterator<S> for NeumaierSum<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum<S: Scalar>(values: &[S]) -> S {
    values.iter().copied().collect::<NeumaierSum<S>>().total()
}

/// Sample mean with its standard error and a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate<S> {
    pub mean: S,
    pub stderr: S,
    pub count: usize,
    pub ci95: (S, S),
    pub seed_base: u64,
}

impl<S: Scalar> McEstimate<S> {
    /// Estimate from raw samples. The standard error uses the unbiased
    /// sample variance (two-pass, compensated).
    pub fn from_samples(values: &[S], seed_base: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = S::from_usize(values.len()).unwrap();
        let mean = compensated_sum(values) / n;
        let var = if values.len() > 1 {
            let ss: NeumaierSum<S> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
            ss.total() / (n - S::one())
        } else {
            S::zero()
        };
        let stderr = (var / n).sqrt();
        Ok(Self::new(mean, stderr, values.len(), seed_base))
    }

    pub fn new(mean: S, stderr: S, count: usize, seed_base: u64) -> Self {
        let half = S::lit(1.96) * stderr;
        Self {
            mean,
            stderr,
            count,
            ci95: (mean - half, mean + half),
            seed_base,
        }
    }

    /// Standardized distance of the mean from `target`. Zero when the mean is
    /// exactly on target, infinite when it is off target with zero spread.
    pub fn z_score(&self, target: S) -> S {
        let d = self.mean - target;
        if d == S::zero() {
            S::zero()
        } else if self.stderr == S::zero() {
            S::infinity() * d.signum()
        } else {
            d / self.stderr
        }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: S, k: S) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    pub fn to_f64(&self) -> McEstimate<f64> {
        McEstimate {
            mean: self.mean.as_f64(),
            stderr: self.stderr.as_f64(),
            count: self.count,
            ci95: (self.ci95.0.as_f64(), self.ci95.1.as_f64()),
            seed_base: self.seed_base,
        }
    }
}

/// Estimate of a population variance with the delta-method standard error
/// `sqrt((m4 - s^4) / n)`.
pub fn variance_estimate<S: Scalar>(values: &[S], seed_base: u64) -> Result<McEstimate<S>> {
    if values.len() < 2 {
        return Err(Error::EmptyBatch);
    }
    let n = S::from_usize(values.len()).unwrap();
    let mean = compensated_sum(values) / n;
    let m2: NeumaierSum<S> = values.iter().map(|&v| (v - mean).powi(2)).collect();
    let m4: NeumaierSum<S> = values.iter().map(|&v| (v - mean).powi(4)).collect();
    let s2 = m2.total() / (n - S::one());
    let m4 = m4.total() / n;
    let se = ((m4 - s2 * s2).max(S::zero()) / n).sqrt();
    Ok(McEstimate::new(s2, se, values.len(), seed_base))
}
