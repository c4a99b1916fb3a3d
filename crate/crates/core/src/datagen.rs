//! Seeded samplers for features (Gaussian, multivariate t, nonparanormal) and
//! responses (linear, logistic), plus the ground truth used to score selections.
//!
//! All samplers are pure functions of their arguments and seed; see [`crate::rng`]
//! for the stream-splitting scheme.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::marginal::Marginal;
use crate::rng::{derive_seed, normal_matrix, stream_rng, tag};

/// Response model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Linear,
    Logistic,
}

/// True coefficients with their support `H₁` and null set `H₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub nulls: Vec<usize>,
}

impl GroundTruth {
    pub fn from_beta(beta: Vec<f64>) -> Self {
        let (support, nulls): (Vec<usize>, Vec<usize>) = (0..beta.len()).partition(|&j| beta[j] != 0.0);
        Self { beta, support, nulls }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn is_null(&self, j: usize) -> bool {
        self.beta[j] == 0.0
    }
}

/// `k_nonzero` positions drawn uniformly without replacement, each set to
/// `±magnitude` with equal probability.
pub fn make_truth(p: usize, k_nonzero: usize, magnitude: f64, seed: u64) -> Result<GroundTruth> {
    if k_nonzero > p {
        return Err(Error::InvalidParameter(format!(
            "cannot place {k_nonzero} nonzeros among {p} coefficients"
        )));
    }
    let mut rng = stream_rng(derive_seed(seed, &[tag::BETA]), 0);
    let mut beta = vec![0.0; p];
    let mut positions = index::sample(&mut rng, p, k_nonzero).into_vec();
    positions.sort_unstable();
    for j in positions {
        beta[j] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    }
    Ok(GroundTruth::from_beta(beta))
}

/// Rows i.i.d. `N(0, Σ)`, generated as `Z Lᵀ` with `L` the Cholesky factor of `Σ`.
pub fn sample_gaussian(n: usize, sigma: &SymMatrix, seed: u64) -> Result<Array2<f64>> {
    let l = sigma.cholesky()?;
    Ok(sample_gaussian_with_factor(n, &l, seed))
}

/// Same as [`sample_gaussian`] with a precomputed lower Cholesky factor.
pub fn sample_gaussian_with_factor(n: usize, chol_lower: &Array2<f64>, seed: u64) -> Array2<f64> {
    let z = normal_matrix(n, chol_lower.nrows(), seed);
    z.dot(&chol_lower.t())
}

/// Multivariate t sample retaining its Gaussian / chi-square latents.
#[derive(Debug, Clone)]
pub struct TSample {
    pub x: Array2<f64>,
    pub eta: Array2<f64>,
    pub q: Option<Array1<f64>>,
    pub nu: f64,
}

impl TSample {
    /// Row scale `1 / sqrt(Q_i / ν)`.
    pub fn row_scale(&self) -> Result<Array1<f64>> {
        let q = self.q.as_ref().ok_or(Error::MissingLatents)?;
        Ok(q.mapv(|qi| 1.0 / (qi / self.nu).sqrt()))
    }

    /// Recomputes `x` from `(eta, Q, ν)`.
    pub fn reassemble(&self) -> Result<Array2<f64>> {
        let s = self.row_scale()?;
        Ok(assemble_t(&self.eta, &s))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

fn assemble_t(eta: &Array2<f64>, scale: &Array1<f64>) -> Array2<f64> {
    let mut x = eta.clone();
    for (mut row, &s) in x.axis_iter_mut(Axis(0)).zip(scale.iter()) {
        row.mapv_inplace(|v| v * s);
    }
    x
}

/// Rows `x_i = η_i / sqrt(Q_i/ν)` with `η_i ~ N(0, Ω⁻¹)` and `Q_i ~ χ²_ν`.
pub fn sample_t(n: usize, omega: &SymMatrix, nu: f64, seed: u64) -> Result<TSample> {
    if !(nu > 2.0) {
        return Err(Error::InvalidNu(nu));
    }
    let sigma = omega.inverse()?;
    sample_t_with_factor(n, &sigma.cholesky()?, nu, seed)
}

/// [`sample_t`] given the lower Cholesky factor of the scale matrix `Ω⁻¹`.
pub fn sample_t_with_factor(n: usize, chol_lower: &Array2<f64>, nu: f64, seed: u64) -> Result<TSample> {
    if !(nu > 2.0) {
        return Err(Error::InvalidNu(nu));
    }
    let eta = sample_gaussian_with_factor(n, chol_lower, derive_seed(seed, &[tag::FEATURES]));
    let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream_rng(derive_seed(seed, &[tag::CHI2]), 0);
    let q: Array1<f64> = (0..n).map(|_| chi.sample(&mut rng)).collect();
    let scale = q.mapv(|qi| 1.0 / (qi / nu).sqrt());
    let x = assemble_t(&eta, &scale);
    Ok(TSample { x, eta, q: Some(q), nu })
}

fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Linear: `y = Xβ + ε`, `ε ~ N(0, 1)`. Logistic: `y_i ∈ {0, 1}` with
/// `P(y_i = 1) = 1 / (1 + exp(-x_iᵀβ))`, no intercept.
pub fn sample_response(x: ArrayView2<f64>, truth: &GroundTruth, family: Family, seed: u64) -> Result<Array1<f64>> {
    if x.ncols() != truth.p() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} columns but beta has length {}",
            x.ncols(),
            truth.p()
        )));
    }
    let beta = Array1::from(truth.beta.clone());
    let eta = x.dot(&beta);
    let mut rng = stream_rng(derive_seed(seed, &[tag::RESPONSE]), 0);
    let y = match family {
        Family::Linear => eta.mapv(|m| m + rng.sample::<f64, _>(StandardNormal)),
        Family::Logistic => eta.mapv(|m| {
            let u: f64 = rng.random();
            if u < logistic(m) {
                1.0
            } else {
                0.0
            }
        }),
    };
    Ok(y)
}

/// Correlation matrix of the latent Gaussian: `Ω⁻¹` rescaled to unit diagonal.
pub fn latent_correlation(omega: &SymMatrix) -> Result<SymMatrix> {
    let sigma = omega.inverse()?;
    let d: Vec<f64> = sigma.diag().iter().map(|v| v.sqrt()).collect();
    Ok(SymMatrix::from_fn(sigma.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            sigma.view()[[i, j]] / (d[i] * d[j])
        }
    }))
}

/// Nonparanormal sample with its latent Gaussian matrix.
#[derive(Debug, Clone)]
pub struct NonparanormalSample {
    pub x: Array2<f64>,
    pub latent: Array2<f64>,
    /// Columns whose marginal has unbounded support; accepted but flagged.
    pub unbounded_columns: Vec<usize>,
}

/// `X_ij = F_j⁻¹(Φ(V_ij))` with rows of `V` drawn from `N(0, R)`, `R` the
/// correlation matrix of `Ω⁻¹`.
pub fn sample_nonparanormal(
    n: usize,
    omega: &SymMatrix,
    marginals: &[&dyn Marginal],
    seed: u64,
) -> Result<NonparanormalSample> {
    let p = omega.dim();
    if marginals.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} marginals for {p} columns",
            marginals.len()
        )));
    }
    let mut unbounded_columns = Vec::new();
    for (j, m) in marginals.iter().enumerate() {
        let (lo, hi) = m.support();
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::UnboundedMarginal { column: j });
        }
        if !m.is_bounded() {
            unbounded_columns.push(j);
        }
    }
    if !unbounded_columns.is_empty() {
        log::debug!("nonparanormal marginals with unbounded support: {unbounded_columns:?}");
    }
    let corr = latent_correlation(omega)?;
    let latent = sample_gaussian(n, &corr, seed)?;
    let mut x = latent.clone();
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| marginals[j].from_latent(v));
    }
    Ok(NonparanormalSample { x, latent, unbounded_columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{build_ar_covariance, max_norm};
    use crate::marginal::{StandardNormal as NormalMarginal, Uniform};

    fn sample_cov(x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let xc = x - &mean;
        xc.t().dot(&xc) / (n - 1.0)
    }

    /// O(n²) Kendall tau-a.
    fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
                s += v as i64;
            }
        }
        s as f64 / (n * (n - 1) / 2) as f64
    }

    /// Two-sample Kolmogorov–Smirnov distance.
    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn gaussian_moments() {
        let x = sample_gaussian(50_000, &SymMatrix::identity(2), 3).unwrap();
        let c = sample_cov(&x);
        assert!(max_norm(&(&c - &Array2::<f64>::eye(2)).view()) < 0.05);
        let x = sample_gaussian(10_000, &SymMatrix::from_diag(&[4.0]), 4).unwrap();
        let v = sample_cov(&x)[[0, 0]];
        assert!((3.7..=4.3).contains(&v), "{v}");
    }

    #[test]
    fn gaussian_is_deterministic() {
        let s = build_ar_covariance(4, 0.5).unwrap();
        assert_eq!(sample_gaussian(100, &s, 42).unwrap(), sample_gaussian(100, &s, 42).unwrap());
        assert_ne!(sample_gaussian(100, &s, 42).unwrap(), sample_gaussian(100, &s, 43).unwrap());
    }

    #[test]
    fn gaussian_prefix_columns_stable_in_p() {
        let a = sample_gaussian(30, &build_ar_covariance(3, 0.5).unwrap(), 8).unwrap();
        let b = sample_gaussian(30, &build_ar_covariance(6, 0.5).unwrap(), 8).unwrap();
        for j in 0..3 {
            for i in 0..30 {
                assert!((a[[i, j]] - b[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_near_gaussian_for_huge_nu() {
        let ts = sample_t(20_000, &SymMatrix::identity(1), 1e8, 5).unwrap();
        let reference = normal_matrix(20_000, 1, 999);
        let d = ks_distance(&ts.x.column(0).to_vec(), &reference.column(0).to_vec());
        assert!(d <= 0.02, "KS = {d}");
    }

    #[test]
    fn t_second_moment() {
        let nu = 10.0;
        let sigma = build_ar_covariance(2, 0.5).unwrap();
        let omega = sigma.inverse().unwrap();
        let ts = sample_t(50_000, &omega, nu, 6).unwrap();
        let c = sample_cov(&ts.x);
        let factor = nu / (nu - 2.0);
        for i in 0..2 {
            for j in 0..2 {
                let expect = factor * sigma.view()[[i, j]];
                assert!(((c[[i, j]] - expect) / expect).abs() < 0.1, "({i},{j}) {} vs {expect}", c[[i, j]]);
            }
        }
    }

    #[test]
    fn t_chi_square_latents() {
        let ts = sample_t(20_000, &SymMatrix::identity(2), 20.0, 7).unwrap();
        let q = ts.q.as_ref().unwrap();
        assert!(q.iter().all(|&v| v > 0.0));
        let m = q.mean().unwrap() / 20.0;
        assert!((0.95..=1.05).contains(&m), "{m}");
        assert_eq!(ts.reassemble().unwrap(), ts.x);
    }

    #[test]
    fn t_rejects_small_nu() {
        assert!(matches!(sample_t(10, &SymMatrix::identity(2), 2.0, 1), Err(Error::InvalidNu(_))));
    }

    #[test]
    fn truth_edge_cases() {
        let t = make_truth(10, 0, 3.0, 1).unwrap();
        assert!(t.support.is_empty() && t.nulls.len() == 10);
        let t = make_truth(10, 10, 3.0, 1).unwrap();
        assert_eq!(t.support.len(), 10);
        let t = make_truth(400, 50, 3.0, 1).unwrap();
        assert_eq!(t.support.len(), 50);
        assert!(t.support.iter().all(|&j| t.beta[j].abs() == 3.0));
        assert!(t.beta.contains(&3.0) && t.beta.contains(&-3.0));
        assert_eq!(t, make_truth(400, 50, 3.0, 1).unwrap());
        assert!(make_truth(3, 4, 1.0, 1).is_err());
    }

    #[test]
    fn null_responses() {
        let n = 2000;
        let x = sample_gaussian(n, &SymMatrix::identity(3), 1).unwrap();
        let truth = GroundTruth::from_beta(vec![0.0; 3]);
        let y = sample_response(x.view(), &truth, Family::Linear, 2).unwrap();
        assert!(y.mean().unwrap().abs() < 3.0 / (n as f64).sqrt());
        let y = sample_response(x.view(), &truth, Family::Logistic, 2).unwrap();
        let frac = y.mean().unwrap();
        assert!((0.45..=0.55).contains(&frac), "{frac}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 1.0));
        let wrong = GroundTruth::from_beta(vec![1.0; 4]);
        assert!(matches!(
            sample_response(x.view(), &wrong, Family::Linear, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn nonparanormal_normal_marginals_match_gaussian_path() {
        let m: Vec<&dyn Marginal> = vec![&NormalMarginal; 3];
        let np = sample_nonparanormal(200, &SymMatrix::identity(3), &m, 12).unwrap();
        assert_eq!(np.x, sample_gaussian(200, &SymMatrix::identity(3), 12).unwrap());
        assert_eq!(np.unbounded_columns, vec![0, 1, 2]);

        let omega = build_ar_covariance(3, 0.5).unwrap().inverse().unwrap();
        let np = sample_nonparanormal(200, &omega, &m, 12).unwrap();
        let direct = sample_gaussian(200, &latent_correlation(&omega).unwrap(), 12).unwrap();
        assert!(max_norm(&(&np.x - &direct).view()) < 1e-12);
    }

    #[test]
    fn nonparanormal_uniform_range_and_kendall() {
        let u = Uniform::unit();
        let m: Vec<&dyn Marginal> = vec![&u, &u];
        let rho = 0.5;
        let omega = build_ar_covariance(2, rho).unwrap().inverse().unwrap();
        let np = sample_nonparanormal(20_000, &omega, &m, 13).unwrap();
        assert!(np.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(np.unbounded_columns.is_empty());
        let tau = kendall_tau(&np.x.column(0).to_vec(), &np.x.column(1).to_vec());
        let expect = 2.0 / std::f64::consts::PI * rho.asin();
        assert!((tau - expect).abs() < 0.03, "{tau} vs {expect}");
    }

    #[test]
    fn nonparanormal_rejects_invalid_support() {
        let bad = Uniform { lo: 1.0, hi: 1.0 };
        let m: Vec<&dyn Marginal> = vec![&bad];
        assert!(matches!(
            sample_nonparanormal(10, &SymMatrix::identity(1), &m, 1),
            Err(Error::UnboundedMarginal { column: 0 })
        ));
    }
}
