//! Affine Gaussian feedback policies `u ~ N(a x + c, s^2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Feedback density `N(. | slope * x + intercept, variance)`.
///
/// `variance == 0` encodes the deterministic (Dirac) feedback `u = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineGaussianPolicy {
    pub slope: f64,
    pub intercept: f64,
    pub variance: f64,
}

impl AffineGaussianPolicy {
    pub fn new(slope: f64, intercept: f64, variance: f64) -> Self {
        Self { slope, intercept, variance }
    }

    pub fn deterministic(slope: f64, intercept: f64) -> Self {
        Self::new(slope, intercept, 0.0)
    }

    #[inline]
    pub fn mean(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn is_deterministic(&self) -> bool {
        self.variance == 0.0
    }

    /// Gaussian density of action `u` at state `x`.
    pub fn pdf(&self, x: f64, u: f64) -> f64 {
        let z = u - self.mean(x);
        (-0.5 * z * z / self.variance).exp() / (2.0 * PI * self.variance).sqrt()
    }

    /// Differential entropy `0.5 ln(2 pi e s^2)`, independent of the state.
    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.variance)
    }
}

/// `0.5 * ln(2 pi e s2)`, written as `0.5 * (ln(2 pi) + 1 + ln s2)`.
pub fn gaussian_entropy(s2: f64) -> f64 {
    0.5 * ((2.0 * PI).ln() + 1.0 + s2.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdf_integrates_to_one() {
        let p = AffineGaussianPolicy::new(-0.7, 0.3, 0.45);
        for x in [-4.0, 0.0, 2.5] {
            let mu = p.mean(x);
            let (lo, hi, n) = (mu - 12.0, mu + 12.0, 4000);
            let h = (hi - lo) / n as f64;
            let mut s = p.pdf(x, lo) + p.pdf(x, hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * p.pdf(x, lo + i as f64 * h);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_zero_point() {
        let s2 = 1.0 / (2.0 * PI * std::f64::consts::E);
        assert!(gaussian_entropy(s2).abs() < 1e-15);
    }
}
