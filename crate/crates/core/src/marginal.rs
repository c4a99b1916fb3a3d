//! Univariate marginals for Gaussian-copula (nonparanormal) features, and the
//! standard normal CDF / quantile used to move between data and latent scales.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(u: f64) -> f64 {
    std_normal().inverse_cdf(u)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// A continuous, strictly increasing marginal distribution `F` with quantile `F⁻¹`.
pub trait Marginal: Send + Sync {
    fn cdf(&self, x: f64) -> f64;

    fn quantile(&self, u: f64) -> f64;

    /// Closed support `[lo, hi]`; infinite endpoints mark an unbounded marginal.
    fn support(&self) -> (f64, f64);

    /// True for data-driven estimates `F̂`, which must stay inside
    /// `[1/(2n), 1 - 1/(2n)]` on the sample.
    fn is_estimated(&self) -> bool {
        false
    }

    /// `F⁻¹(Φ(v))`.
    fn from_latent(&self, v: f64) -> f64 {
        self.quantile(normal_cdf(v))
    }

    /// `Φ⁻¹(F(x))`.
    fn to_latent(&self, x: f64) -> f64 {
        normal_quantile(self.cdf(x))
    }

    fn is_bounded(&self) -> bool {
        let (lo, hi) = self.support();
        lo.is_finite() && hi.is_finite() && lo < hi
    }
}

/// The standard normal marginal; the copula transform is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl Marginal for StandardNormal {
    fn cdf(&self, x: f64) -> f64 {
        normal_cdf(x)
    }
    fn quantile(&self, u: f64) -> f64 {
        normal_quantile(u)
    }
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn from_latent(&self, v: f64) -> f64 {
        v
    }
    fn to_latent(&self, x: f64) -> f64 {
        x
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Uniform {
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl Marginal for Uniform {
    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
    fn quantile(&self, u: f64) -> f64 {
        self.lo + u.clamp(0.0, 1.0) * (self.hi - self.lo)
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Beta(a, b) rescaled to `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct ScaledBeta {
    beta: Beta,
    lo: f64,
    hi: f64,
}

impl ScaledBeta {
    pub fn new(a: f64, b: f64, lo: f64, hi: f64) -> Option<Self> {
        if !(lo < hi) {
            return None;
        }
        Beta::new(a, b).ok().map(|beta| Self { beta, lo, hi })
    }
}

impl Marginal for ScaledBeta {
    fn cdf(&self, x: f64) -> f64 {
        self.beta.cdf(((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0))
    }
    fn quantile(&self, u: f64) -> f64 {
        self.lo + self.beta.inverse_cdf(u.clamp(0.0, 1.0)) * (self.hi - self.lo)
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_roundtrip() {
        for &x in &[-5.0, -1.3, 0.0, 0.7, 4.0] {
            assert!((normal_quantile(normal_cdf(x)) - x).abs() < 1e-9);
        }
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn scaled_beta_is_monotone_and_bounded() {
        let m = ScaledBeta::new(2.0, 3.0, -1.0, 1.0).unwrap();
        assert!(m.is_bounded());
        let mut last = f64::NEG_INFINITY;
        for k in 1..100 {
            let q = m.quantile(k as f64 / 100.0);
            assert!(q >= last && (-1.0..=1.0).contains(&q));
            assert!((m.cdf(q) - k as f64 / 100.0).abs() < 1e-6);
            last = q;
        }
        assert!(!StandardNormal.is_bounded());
        assert!(ScaledBeta::new(2.0, 2.0, 1.0, 1.0).is_none());
    }
}
