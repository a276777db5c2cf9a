//! Truncated Gaussian over integer Hamming distances.
//!
//! The density `φ(x; μ, σ²) / (Φ(b) − Φ(a))` on `[a, b]` is evaluated at the
//! integers `a..=b` and renormalized; the continuous normalizer cancels.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGaussSpec {
    pub mu: f64,
    pub sigma: f64,
    pub a: i64,
    pub b: i64,
}

impl TruncGaussSpec {
    pub fn new(mu: f64, sigma: f64, a: i64, b: i64) -> Result<Self> {
        let s = Self { mu, sigma, a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a > self.b {
            return Err(Error::DegenerateSupport {
                a: self.a,
                b: self.b,
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }

    /// Support as an iterator over integers.
    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        self.a..=self.b
    }
}

/// Probabilities for `x = a..=b`, in that order.
pub fn trunc_gauss_pmf(spec: &TruncGaussSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let logw: Vec<f64> = spec
        .support()
        .map(|x| {
            let z = x as f64 - spec.mu;
            -z * z / two_var
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Inverse-CDF sampler over a finite integer support.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    first: i64,
    cdf: Vec<f64>,
}

impl DiscreteSampler {
    /// `weights[k]` is the (unnormalized) mass at `first + k`. Returns `None`
    /// if the total mass is zero.
    pub fn new(first: i64, weights: &[f64]) -> Option<Self> {
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(weights.len());
        for &w in weights {
            acc += w.max(0.0);
            cdf.push(acc);
        }
        if acc <= 0.0 || !acc.is_finite() {
            return None;
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Some(Self { first, cdf })
    }

    pub fn from_spec(spec: &TruncGaussSpec) -> Result<Self> {
        let pmf = trunc_gauss_pmf(spec)?;
        Ok(Self::new(spec.a, &pmf).expect("normalized pmf has mass"))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.first + k as i64
    }
}
