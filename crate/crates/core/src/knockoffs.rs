//! Approximate knockoff generation under a Gaussian working model, and the
//! explicitly coupled perfect knockoffs used for diagnostics.
//!
//! All constructions use the equicorrelated form
//! `X(I - rΩ) + Z (2rI - r²Ω)^{1/2}`. A coupled pair shares the same `Z` and
//! `r` and differs only in the precision (and, for t data, the row scaling of
//! the noise).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::TSample;
use crate::error::{Error, Result};
use crate::linalg::{shrinkage_covariance, SymEigen, SymMatrix, PSD_TOL};
use crate::marginal::Marginal;
use crate::rng::{derive_seed, normal_matrix, tag};

/// Gaussian working distribution for knockoff generation.
#[derive(Debug, Clone)]
pub struct WorkingModel {
    pub sigma_hat: SymMatrix,
    pub omega_hat: SymMatrix,
    pub r: f64,
    /// `(2rI - r²Ω̂)^{1/2}`
    pub sqrt_factor: SymMatrix,
}

impl WorkingModel {
    /// Validates both invariants (`2rI - r²Ω̂ ⪰ 0`, `r < min_j Σ̂_jj`) and caches the square root.
    pub fn new(sigma_hat: SymMatrix, omega_hat: SymMatrix, r: f64) -> Result<Self> {
        if sigma_hat.dim() != omega_hat.dim() {
            return Err(Error::DimensionMismatch("sigma_hat and omega_hat differ in size".into()));
        }
        check_r_below_diagonal(&sigma_hat, r)?;
        let sqrt_factor = noise_factor(&omega_hat, r)?;
        Ok(Self { sigma_hat, omega_hat, r, sqrt_factor })
    }

    /// Working model for a known covariance, with `r` from [`choose_r`].
    pub fn from_covariance(sigma: SymMatrix) -> Result<Self> {
        let eigen = sigma.eigen();
        Self::from_eigen(sigma, &eigen, None)
    }

    /// Working model from the shrinkage estimate of `x`'s covariance.
    pub fn estimate(x: ArrayView2<f64>) -> Result<Self> {
        let est = shrinkage_covariance(x)?;
        Self::from_eigen(est.sigma, &est.eigen, None)
    }

    /// Builds everything from one eigendecomposition of `Σ̂`:
    /// `Ω̂ = V Λ⁻¹ Vᵀ` and `(2rI - r²Ω̂)^{1/2} = V (2r - r²/Λ)^{1/2} Vᵀ`.
    pub fn from_eigen(sigma: SymMatrix, eigen: &SymEigen, r: Option<f64>) -> Result<Self> {
        let lmin = eigen.min();
        if !(lmin > 0.0) {
            return Err(Error::NotPsd { min_eigenvalue: lmin });
        }
        let r = match r {
            Some(r) => r,
            None => r_rule(lmin, &sigma),
        };
        check_r_below_diagonal(&sigma, r)?;
        let worst = 2.0 * r - r * r / lmin;
        if worst < -PSD_TOL * (2.0 * r).max(1.0) {
            return Err(Error::NotPsd { min_eigenvalue: worst });
        }
        let omega_hat = eigen.map_spectrum(|l| 1.0 / l);
        let sqrt_factor = eigen.map_spectrum(|l| (2.0 * r - r * r / l).max(0.0).sqrt());
        Ok(Self { sigma_hat: sigma, omega_hat, r, sqrt_factor })
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.dim()
    }
}

fn r_rule(lambda_min: f64, sigma: &SymMatrix) -> f64 {
    let min_diag = sigma.diag().into_iter().fold(f64::INFINITY, f64::min);
    0.95 * (2.0 * lambda_min).min(min_diag)
}

fn check_r_below_diagonal(sigma: &SymMatrix, r: f64) -> Result<()> {
    let min_diag = sigma.diag().into_iter().fold(f64::INFINITY, f64::min);
    if !(r > 0.0 && r < min_diag) {
        return Err(Error::InvalidParameter(format!(
            "knockoff parameter r = {r} must lie in (0, min diag = {min_diag})"
        )));
    }
    Ok(())
}

/// `r = 0.95 · min(2 λ_min(Σ̂), min_j Σ̂_jj)`.
pub fn choose_r(sigma: &SymMatrix) -> Result<f64> {
    let lmin = sigma.min_eigenvalue();
    if !(lmin > 0.0) {
        return Err(Error::NotPsd { min_eigenvalue: lmin });
    }
    Ok(r_rule(lmin, sigma))
}

/// `(2rI - r²Ω)^{1/2}`, failing with `NotPsd` outside the admissible range of `r`.
pub fn noise_factor(omega: &SymMatrix, r: f64) -> Result<SymMatrix> {
    omega.affine(2.0 * r, -r * r).eigen().psd_sqrt()
}

/// `X (I - rΩ) + Z S`. Shared by generation and regeneration so both agree bitwise.
pub fn knockoffs_from_noise(
    x: ArrayView2<f64>,
    omega: &SymMatrix,
    r: f64,
    sqrt_factor: &SymMatrix,
    z: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let p = omega.dim();
    if x.ncols() != p || z.dim() != x.dim() || sqrt_factor.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?}, Z is {:?}, model dimension {p}",
            x.dim(),
            z.dim()
        )));
    }
    let mut out = x.to_owned();
    out.scaled_add(-r, &x.dot(&omega.view()));
    out += &z.dot(&sqrt_factor.view());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Gaussian,
    TCoupled,
    Nonparanormal,
}

/// Approximate knockoffs, optional coupled perfect knockoffs, and the noise that couples them.
#[derive(Debug, Clone)]
pub struct KnockoffBundle {
    pub x_hat: Array2<f64>,
    pub x_tilde: Option<Array2<f64>>,
    pub z: Array2<f64>,
    pub r: f64,
    pub construction: Construction,
}

fn knockoff_noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
    normal_matrix(n, p, derive_seed(seed, &[tag::KNOCKOFF]))
}

/// `X̂ = X(I - rΩ̂) + Z(2rI - r²Ω̂)^{1/2}` with fresh noise `Z`.
pub fn gaussian_knockoffs(x: ArrayView2<f64>, model: &WorkingModel, seed: u64) -> Result<KnockoffBundle> {
    let z = knockoff_noise(x.nrows(), x.ncols(), seed);
    gaussian_knockoffs_with_noise(x, model, z)
}

/// [`gaussian_knockoffs`] with caller-supplied noise.
pub fn gaussian_knockoffs_with_noise(x: ArrayView2<f64>, model: &WorkingModel, z: Array2<f64>) -> Result<KnockoffBundle> {
    let x_hat = knockoffs_from_noise(x, &model.omega_hat, model.r, &model.sqrt_factor, z.view())?;
    Ok(KnockoffBundle { x_hat, x_tilde: None, z, r: model.r, construction: Construction::Gaussian })
}

/// Approximate (`Ω̂`) and perfect (`Ω_true`) Gaussian knockoffs sharing `Z` and `r`.
pub fn coupled_gaussian_pair(
    x: ArrayView2<f64>,
    omega_hat: &SymMatrix,
    omega_true: &SymMatrix,
    r: f64,
    seed: u64,
) -> Result<KnockoffBundle> {
    let d_hat = noise_factor(omega_hat, r)?;
    let d_true = noise_factor(omega_true, r)?;
    let z = knockoff_noise(x.nrows(), x.ncols(), seed);
    let x_hat = knockoffs_from_noise(x, omega_hat, r, &d_hat, z.view())?;
    let x_tilde = knockoffs_from_noise(x, omega_true, r, &d_true, z.view())?;
    Ok(KnockoffBundle { x_hat, x_tilde: Some(x_tilde), z, r, construction: Construction::Gaussian })
}

/// Knockoffs for multivariate t features.
///
/// Approximate: `X̂ = X(I - rΘ̂) + Z(2rI - r²Θ̂)^{1/2}` from the moment-matched
/// Gaussian. Coupled perfect: `X̃ = X(I - rΩ) + diag(1/sqrt(Q/ν)) Z (2rI - r²Ω)^{1/2}`,
/// reusing the sample's chi-square latents `Q`.
pub fn t_coupled_knockoffs(
    ts: &TSample,
    theta_hat: &SymMatrix,
    omega_true: &SymMatrix,
    r: f64,
    seed: u64,
) -> Result<KnockoffBundle> {
    let scale = ts.row_scale()?;
    let x = ts.x.view();
    let d_hat = noise_factor(theta_hat, r)?;
    let d_true = noise_factor(omega_true, r)?;
    let z = knockoff_noise(x.nrows(), x.ncols(), seed);
    let x_hat = knockoffs_from_noise(x, theta_hat, r, &d_hat, z.view())?;
    let scaled_z = scale_rows(&z, &scale);
    let x_tilde = knockoffs_from_noise(x, omega_true, r, &d_true, scaled_z.view())?;
    Ok(KnockoffBundle { x_hat, x_tilde: Some(x_tilde), z, r, construction: Construction::TCoupled })
}

fn scale_rows(z: &Array2<f64>, scale: &Array1<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for (mut row, &s) in out.axis_iter_mut(Axis(0)).zip(scale.iter()) {
        row.mapv_inplace(|v| v * s);
    }
    out
}

/// Winsorized empirical CDF with order-statistic quantiles.
///
/// `F̂(x) = clamp(#{x_i ≤ x} / n, 1/(2n), 1 - 1/(2n))`; `F̂⁻¹(u)` linearly
/// interpolates the order statistics at fractional index `n·u - 1`, so
/// `F̂⁻¹(F̂(x_(i))) = x_(i)` away from the clamped ends.
#[derive(Debug, Clone)]
pub struct WinsorizedEcdf {
    sorted: Vec<f64>,
}

impl WinsorizedEcdf {
    pub fn new(column: &[f64]) -> Result<Self> {
        if column.len() < 2 {
            return Err(Error::InvalidParameter("empirical CDF needs at least 2 points".into()));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("empirical CDF input must be finite".into()));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }
}

/// Builds `(F̂, F̂⁻¹)` for one column; see [`WinsorizedEcdf`].
pub fn winsorized_ecdf(column: &[f64]) -> Result<WinsorizedEcdf> {
    WinsorizedEcdf::new(column)
}

impl Marginal for WinsorizedEcdf {
    fn cdf(&self, x: f64) -> f64 {
        let n = self.n() as f64;
        let rank = self.sorted.partition_point(|&v| v <= x) as f64;
        (rank / n).clamp(0.5 / n, 1.0 - 0.5 / n)
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.n();
        let h = (n as f64 * u - 1.0).clamp(0.0, (n - 1) as f64);
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = h - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }

    fn support(&self) -> (f64, f64) {
        (self.sorted[0], self.sorted[self.n() - 1])
    }

    fn is_estimated(&self) -> bool {
        true
    }
}

/// Latent scores `Φ⁻¹(F_j(X_ij))`, validating the CDF range.
///
/// Estimated CDFs must map the sample into `[1/(2n), 1 - 1/(2n)]`; known
/// CDFs only need to stay strictly inside `(0, 1)`.
fn latent_scores(x: ArrayView2<f64>, cdfs: &[&dyn Marginal]) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if cdfs.len() != p {
        return Err(Error::DimensionMismatch(format!("{} CDFs for {p} columns", cdfs.len())));
    }
    let lo = 0.5 / n as f64;
    let mut v = Array2::zeros((n, p));
    for j in 0..p {
        let f = cdfs[j];
        for i in 0..n {
            let u = f.cdf(x[[i, j]]);
            let ok = if f.is_estimated() {
                u >= lo * (1.0 - 1e-12) && u <= (1.0 - lo) + 1e-12
            } else {
                u > 0.0 && u < 1.0
            };
            if !ok {
                return Err(Error::CdfRangeViolation { column: j, value: u });
            }
            v[[i, j]] = f.to_latent(x[[i, j]]);
        }
    }
    Ok(v)
}

fn from_latent_scores(u: &Array2<f64>, cdfs: &[&dyn Marginal]) -> Array2<f64> {
    let mut out = u.clone();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| cdfs[j].from_latent(v));
    }
    out
}

/// Nonparanormal knockoffs: `V̂ = Φ⁻¹(F̂(X))`, `Û = V̂(I - rΩ̂) + Z(2rI - r²Ω̂)^{1/2}`,
/// `X̂ = F̂⁻¹(Φ(Û))`.
pub fn nonparanormal_knockoffs(
    x: ArrayView2<f64>,
    cdf_estimates: &[&dyn Marginal],
    omega_hat: &SymMatrix,
    r: f64,
    seed: u64,
) -> Result<KnockoffBundle> {
    let v_hat = latent_scores(x, cdf_estimates)?;
    let d_hat = noise_factor(omega_hat, r)?;
    let z = knockoff_noise(x.nrows(), x.ncols(), seed);
    let u_hat = knockoffs_from_noise(v_hat.view(), omega_hat, r, &d_hat, z.view())?;
    let x_hat = from_latent_scores(&u_hat, cdf_estimates);
    Ok(KnockoffBundle { x_hat, x_tilde: None, z, r, construction: Construction::Nonparanormal })
}

/// Nonparanormal approximate knockoffs together with the perfect knockoffs
/// built from the true marginals and precision, on the same `Z` and `r`.
pub fn coupled_nonparanormal_pair(
    x: ArrayView2<f64>,
    cdf_estimates: &[&dyn Marginal],
    cdf_true: &[&dyn Marginal],
    omega_hat: &SymMatrix,
    omega_true: &SymMatrix,
    r: f64,
    seed: u64,
) -> Result<KnockoffBundle> {
    let mut bundle = nonparanormal_knockoffs(x, cdf_estimates, omega_hat, r, seed)?;
    let v_tilde = latent_scores(x, cdf_true)?;
    let d_true = noise_factor(omega_true, r)?;
    let u_tilde = knockoffs_from_noise(v_tilde.view(), omega_true, r, &d_true, bundle.z.view())?;
    bundle.x_tilde = Some(from_latent_scores(&u_tilde, cdf_true));
    Ok(bundle)
}

/// `F̂⁻¹` and `F̂` for every column of `x`.
pub fn column_ecdfs(x: ArrayView2<f64>) -> Result<Vec<WinsorizedEcdf>> {
    x.axis_iter(Axis(1)).map(|c| WinsorizedEcdf::new(&c.to_vec())).collect()
}
