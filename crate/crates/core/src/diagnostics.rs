//! Knockoff quality diagnostics: the coupling norm between approximate and
//! perfect knockoffs, its shared-noise Wasserstein estimate, the Gaussian
//! coupling constant, and the empirical KL statistic for t data against
//! Gaussian knockoffs.

use ndarray::{Array1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoffs::coupled_gaussian_pair;
use crate::linalg::SymMatrix;
use crate::rng::{derive_seed, tag};

/// `‖A - B‖₁,₂ = max_j n^{-1/2} ‖A_j - B_j‖₂`.
pub fn coupling_norm(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = a.nrows().max(1) as f64;
    let norm = a
        .axis_iter(Axis(1))
        .zip(b.axis_iter(Axis(1)))
        .map(|(ca, cb)| (ca.iter().zip(cb.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / n).sqrt())
        .fold(0.0, f64::max);
    Ok(norm)
}

/// Shared-noise coupling estimate of the conditional (1,2)-Wasserstein distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingEstimate {
    /// Mean of `per_resample`; an upper bound on the infimum over couplings.
    pub mean: f64,
    pub per_resample: Vec<f64>,
}

impl CouplingEstimate {
    pub fn std_error(&self) -> f64 {
        let m = self.per_resample.len() as f64;
        if m < 2.0 {
            return f64::NAN;
        }
        let var = self.per_resample.iter().map(|v| (v - self.mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    }
}

/// Averages `‖X̂ - X̃‖₁,₂` over `resamples` draws of the shared noise `Z`,
/// with `X̂` built from `omega_hat` and `X̃` from `omega_true` at a common `r`.
pub fn wasserstein_coupling_estimate(
    x: ArrayView2<f64>,
    omega_hat: &SymMatrix,
    omega_true: &SymMatrix,
    r: f64,
    resamples: usize,
    seed: u64,
) -> Result<CouplingEstimate> {
    if resamples == 0 {
        return Err(Error::InvalidParameter("resamples must be at least 1".into()));
    }
    let per_resample = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let pair = coupled_gaussian_pair(x, omega_hat, omega_true, r, derive_seed(seed, &[tag::RESAMPLE, i as u64]))?;
            coupling_norm(pair.x_hat.view(), pair.x_tilde.as_ref().expect("coupled pair").view())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_resample.iter().sum::<f64>() / resamples as f64;
    Ok(CouplingEstimate { mean, per_resample })
}

/// `max_j (‖D̂_j‖‖D_j‖ - D̂_jᵀD_j) / ‖D̂_j - D_j‖²`, with `0/0 = 0`.
///
/// The numerator is evaluated through the Lagrange identity
/// `(‖a‖‖b‖)² - (aᵀb)² = ½ Σ_ik (a_i b_k - a_k b_i)²` to avoid cancellation
/// for nearly parallel columns.
pub fn lemma2_condition_constant(d_hat: &SymMatrix, d: &SymMatrix) -> Result<f64> {
    if d_hat.dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", d_hat.dim(), d.dim())));
    }
    let (a_all, b_all) = (d_hat.view(), d.view());
    let p = d.dim();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let a = a_all.column(j);
        let b = b_all.column(j);
        let denom: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
        if denom == 0.0 {
            continue;
        }
        let mut cross = 0.0;
        for i in 0..p {
            for k in (i + 1)..p {
                let t = a[i] * b[k] - a[k] * b[i];
                cross += t * t;
            }
        }
        let norms = a.dot(&a).sqrt() * b.dot(&b).sqrt();
        let dot = a.dot(&b);
        let num = if dot > 0.0 { cross / (norms + dot) } else { norms - dot };
        worst = worst.max(num / denom);
    }
    Ok(worst)
}

/// Per-coordinate empirical KL statistic between t features `x` and Gaussian
/// knockoffs `x_hat`, with the conditioning norm `‖X_{i,-j}‖²` taken from `x`:
///
/// `KL_j = Σ_i [g(X_ij) - g(X̂_ij)]`,
/// `g(u) = u²(ν-2)/(2ν) - ((ν+p)/2) log(1 + u²/(ν + ‖X_{i,-j}‖²))`.
pub fn empirical_kl_t_vs_gaussian(x: ArrayView2<f64>, x_hat: ArrayView2<f64>, nu: f64) -> Result<Array1<f64>> {
    empirical_kl_with_context(x, x_hat, x, nu)
}

/// [`empirical_kl_t_vs_gaussian`] with the conditioning rows taken from `context`.
pub fn empirical_kl_with_context(
    x: ArrayView2<f64>,
    x_hat: ArrayView2<f64>,
    context: ArrayView2<f64>,
    nu: f64,
) -> Result<Array1<f64>> {
    if !(nu > 2.0) || nu.is_nan() {
        return Err(Error::InvalidNu(nu));
    }
    if x.dim() != x_hat.dim() || x.dim() != context.dim() {
        return Err(Error::DimensionMismatch(format!(
            "X {:?}, X̂ {:?}, context {:?}",
            x.dim(),
            x_hat.dim(),
            context.dim()
        )));
    }
    let (n, p) = x.dim();
    let row_sq: Vec<f64> = context.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let quad = (nu - 2.0) / (2.0 * nu);
    let half = (nu + p as f64) / 2.0;
    let mut kl = Array1::zeros(p);
    for j in 0..p {
        let mut total = 0.0;
        for i in 0..n {
            let c = context[[i, j]];
            let denom = nu + row_sq[i] - c * c;
            let g = |u: f64| u * u * quad - half * (u * u / denom).ln_1p();
            total += g(x[[i, j]]) - g(x_hat[[i, j]]);
        }
        kl[j] = total;
    }
    Ok(kl)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub norm_1_2: f64,
    /// Shared-noise coupling estimate (upper bound), when a model pair was supplied.
    pub wasserstein_estimate: Option<f64>,
    pub lemma2_constant: Option<f64>,
    pub kl_stats: Option<Vec<f64>>,
}

impl CouplingReport {
    pub fn from_pair(x_hat: ArrayView2<f64>, x_tilde: ArrayView2<f64>) -> Result<Self> {
        Ok(Self {
            norm_1_2: coupling_norm(x_hat, x_tilde)?,
            wasserstein_estimate: None,
            lemma2_constant: None,
            kl_stats: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_gaussian, sample_t};
    use crate::knockoffs::{choose_r, noise_factor};
    use crate::linalg::{build_banded_precision, shrinkage_covariance};
    use crate::rng::normal_matrix;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coupling_norm_examples() {
        let a = normal_matrix(4, 3, 1);
        assert_eq!(coupling_norm(a.view(), a.view()).unwrap(), 0.0);
        let mut b = a.clone();
        b[[2, 2]] += 2.0;
        assert!((coupling_norm(a.view(), b.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(coupling_norm(a.view(), normal_matrix(4, 2, 1).view()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn coupling_norm_is_a_norm(seed in 0u64..100_000, c in -5.0f64..5.0) {
            let a = normal_matrix(6, 4, seed);
            let b = normal_matrix(6, 4, seed + 1);
            let cm = normal_matrix(6, 4, seed + 2);
            let ab = coupling_norm(a.view(), b.view()).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!(coupling_norm(a.view(), cm.view()).unwrap()
                <= ab + coupling_norm(b.view(), cm.view()).unwrap() + 1e-12);
            let scaled = &b + &((&a - &b) * (1.0 - c));
            // A - (B + (1-c)(A-B)) = c (A - B)
            let lhs = coupling_norm(a.view(), scaled.view()).unwrap();
            prop_assert!((lhs - c.abs() * ab).abs() <= 1e-10 * (1.0 + ab));
        }
    }

    #[test]
    fn wasserstein_identical_models_is_zero() {
        let sigma = crate::linalg::build_ar_covariance(5, 0.5).unwrap();
        let om = sigma.inverse().unwrap();
        let x = sample_gaussian(100, &sigma, 1).unwrap();
        let est = wasserstein_coupling_estimate(x.view(), &om, &om, 0.5, 5, 2).unwrap();
        assert!(est.per_resample.iter().all(|&v| v == 0.0));
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn wasserstein_estimate_is_stable_and_bracketed() {
        let omega = build_banded_precision(20, 0.2, 5).unwrap();
        let sigma = omega.inverse().unwrap();
        let x = sample_gaussian(300, &sigma, 3).unwrap();
        let est = shrinkage_covariance(x.view()).unwrap();
        let r = choose_r(&est.sigma).unwrap().min(choose_r(&sigma).unwrap());
        let a = wasserstein_coupling_estimate(x.view(), &est.omega, &omega, r, 30, 10).unwrap();
        let b = wasserstein_coupling_estimate(x.view(), &est.omega, &omega, r, 30, 11).unwrap();
        let lo = a.per_resample.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.per_resample.iter().copied().fold(0.0, f64::max);
        assert!(a.mean >= lo && a.mean <= hi && a.mean > 0.0);
        let se = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    }

    #[test]
    fn wasserstein_shrinks_with_n() {
        let p = 50;
        let omega = build_banded_precision(p, 0.2, 10).unwrap();
        let sigma = omega.inverse().unwrap();
        let r_true = choose_r(&sigma).unwrap();
        let estimate = |n: usize, seed: u64| {
            let x = sample_gaussian(n, &sigma, seed).unwrap();
            let est = shrinkage_covariance(x.view()).unwrap();
            let r = choose_r(&est.sigma).unwrap().min(r_true);
            wasserstein_coupling_estimate(x.view(), &est.omega, &omega, r, 3, seed + 1).unwrap().mean
        };
        let wins = (0..20u64).filter(|&t| estimate(4000, 700 + 2 * t) < estimate(1000, 500 + 2 * t)).count();
        assert!(wins >= 18, "{wins} of 20");
    }

    #[test]
    fn lemma2_constant_examples() {
        let om = crate::linalg::build_ar_covariance(4, 0.5).unwrap().inverse().unwrap();
        let d = noise_factor(&om, 0.5).unwrap();
        assert_eq!(lemma2_condition_constant(&d, &d).unwrap(), 0.0);
        let a = SymMatrix::from_diag(&[1.0, 2.0, 0.5]);
        let b = SymMatrix::from_diag(&[1.5, 1.0, 0.7]);
        assert_eq!(lemma2_condition_constant(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn lemma2_constant_small_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let diag: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..2.0)).collect();
            let d = SymMatrix::from_diag(&diag);
            let mut pert = Array2::<f64>::zeros((5, 5));
            for i in 0..5 {
                for j in i..5 {
                    let e: f64 = rng.random_range(-0.01..0.01);
                    pert[[i, j]] = e;
                    pert[[j, i]] = e;
                }
            }
            let d_hat = SymMatrix::new(d.as_array() + &pert).unwrap();
            let c = lemma2_condition_constant(&d_hat, &d).unwrap();
            assert!(c < 0.5, "{c}");
        }
    }

    #[test]
    fn kl_examples_and_antisymmetry() {
        let x = sample_t(50, &SymMatrix::identity(6), 8.0, 1).unwrap().x;
        let g = normal_matrix(50, 6, 2);
        assert!(empirical_kl_t_vs_gaussian(x.view(), x.view(), 8.0).unwrap().iter().all(|&v| v == 0.0));
        let fwd = empirical_kl_with_context(x.view(), g.view(), x.view(), 8.0).unwrap();
        let back = empirical_kl_with_context(g.view(), x.view(), x.view(), 8.0).unwrap();
        for j in 0..6 {
            assert_eq!(fwd[j], -back[j]);
        }
        assert!(matches!(empirical_kl_t_vs_gaussian(x.view(), g.view(), 2.0), Err(Error::InvalidNu(_))));
    }

    fn mean_kl(n: usize, p: usize, nu: f64, seed: u64) -> f64 {
        let x = sample_t(n, &SymMatrix::identity(p), nu, seed).unwrap().x;
        let g = normal_matrix(n, p, derive_seed(seed, &[tag::KNOCKOFF]));
        empirical_kl_t_vs_gaussian(x.view(), g.view(), nu).unwrap().mean().unwrap()
    }

    #[test]
    fn kl_mean_is_positive() {
        let positive = (0..50u64).filter(|&rep| mean_kl(200, 50, 10.0, 100 + rep) > 0.0).count();
        assert!(positive >= 48, "{positive} of 50");
    }

    #[test]
    fn kl_scaling_in_nu() {
        let (n, p) = (200, 50);
        let avg = |nu: f64| (0..200u64).map(|rep| mean_kl(n, p, nu, 9000 + rep)).sum::<f64>() / 200.0;
        let ratio = avg(10.0) / avg(40.0);
        let theory = (p as f64 / (10.0 * (10.0 + p as f64))) / (p as f64 / (40.0 * (40.0 + p as f64)));
        assert!(ratio >= theory / 2.0 && ratio <= theory * 2.0, "ratio {ratio}, theory {theory}");
    }
}
