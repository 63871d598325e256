//! Normal-distribution helpers and small summary statistics.

use libm::erfc;
use std::f64::consts::SQRT_2;

/// Standard normal upper tail `Q(z) = 1 - Phi(z)`.
pub fn q_function(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(z / SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    q_function(-z)
}

/// Binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Streaming mean/variance/covariance accumulator for a pair of variables.
#[derive(Debug, Clone, Default)]
pub struct PairMoments {
    n: u64,
    mean_a: f64,
    mean_b: f64,
    m2_a: f64,
    m2_b: f64,
    c_ab: f64,
}

impl PairMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.mean_a;
        let db = b - self.mean_b;
        self.mean_a += da / n;
        self.mean_b += db / n;
        self.m2_a += da * (a - self.mean_a);
        self.m2_b += db * (b - self.mean_b);
        self.c_ab += da * (b - self.mean_b);
    }

    pub fn count(&self) -> u64 {
        self.n
    }
    pub fn mean_a(&self) -> f64 {
        self.mean_a
    }
    pub fn mean_b(&self) -> f64 {
        self.mean_b
    }
    pub fn var_a(&self) -> f64 {
        self.m2_a / (self.n as f64 - 1.0)
    }
    pub fn var_b(&self) -> f64 {
        self.m2_b / (self.n as f64 - 1.0)
    }
    pub fn cov(&self) -> f64 {
        self.c_ab / (self.n as f64 - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_at_zero_is_half() {
        assert_eq!(q_function(0.0), 0.5);
    }

    #[test]
    fn q_tail_values() {
        // reference values from mpmath at 30 digits
        let q4 = q_function(4.0);
        assert!(
            (q4 - 3.167_124_183_311_992e-5).abs() < 1e-14 * 3.2e-5,
            "{q4:e}"
        );
        assert!((q_function(-4.0) - 0.999_968_328_758_166_9).abs() < 1e-14);
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn pair_moments_simple() {
        let mut m = PairMoments::default();
        for (a, b) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)] {
            m.push(a, b);
        }
        assert!((m.mean_a() - 2.0).abs() < 1e-15);
        assert!((m.var_a() - 1.0).abs() < 1e-15);
        assert!((m.var_b() - 4.0).abs() < 1e-15);
        assert!((m.cov() - 2.0).abs() < 1e-15);
    }
}
