//! Dense symmetric linear algebra: PSD square roots, shrinkage covariance
//! estimation and the structured covariance / precision builders used by the
//! simulation settings.
//!
//! Eigendecompositions are delegated to `nalgebra`; everything else works on
//! `ndarray` matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative tolerance for PSD checks and eigenvalue clamping.
pub const PSD_TOL: f64 = 1e-8;

/// A dense symmetric matrix. Symmetry is exact: the lower triangle is a copy
/// of the upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    a: Array2<f64>,
}

impl SymMatrix {
    /// Accepts a square matrix whose asymmetry is at rounding level and
    /// mirrors the upper triangle onto the lower one.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        let scale = max_abs(&a.view()).max(1.0);
        let mut asym = 0.0f64;
        for i in 0..r {
            for j in (i + 1)..r {
                asym = asym.max((a[[i, j]] - a[[j, i]]).abs());
            }
        }
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self::symmetrized(a))
    }

    /// Builds from the upper triangle of `a`, ignoring the lower one.
    pub fn symmetrized(mut a: Array2<f64>) -> Self {
        let d = a.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                a[[j, i]] = a[[i, j]];
            }
        }
        Self { a }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let a = Array2::from_shape_fn((dim, dim), |(i, j)| if i <= j { f(i, j) } else { f(j, i) });
        Self { a }
    }

    pub fn identity(dim: usize) -> Self {
        Self { a: Array2::eye(dim) }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        Self { a: Array2::from_diag(&Array1::from(d.to_vec())) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn into_array(self) -> Array2<f64> {
        self.a
    }

    pub fn diag(&self) -> Vec<f64> {
        self.a.diag().to_vec()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.a.view())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { a: &self.a * c }
    }

    pub fn eigen(&self) -> SymEigen {
        SymEigen::new(self)
    }

    /// `a * I + b * self`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let mut m = &self.a * b;
        for i in 0..self.dim() {
            m[[i, i]] += a;
        }
        Self { a: m }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min()
    }

    /// Lower Cholesky factor. Fails with `NotPsd` unless strictly positive definite.
    pub fn cholesky(&self) -> Result<Array2<f64>> {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.a[[i, j]]);
        let chol = nalgebra::Cholesky::new(m).ok_or_else(|| Error::NotPsd {
            min_eigenvalue: self.min_eigenvalue(),
        })?;
        let l = chol.l();
        Ok(Array2::from_shape_fn((d, d), |(i, j)| l[(i, j)]))
    }

    /// Inverse via symmetric eigendecomposition, so the result is exactly symmetric.
    pub fn inverse(&self) -> Result<Self> {
        let e = self.eigen();
        if !(e.min() > 1e-14 * e.max_abs()) {
            return Err(Error::NotPsd { min_eigenvalue: e.min() });
        }
        Ok(e.map_spectrum(|l| 1.0 / l))
    }
}

fn max_abs(a: &ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Eigendecomposition `M = V diag(values) Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored column-wise.
    pub vectors: Array2<f64>,
}

impl SymEigen {
    pub fn new(m: &SymMatrix) -> Self {
        let d = m.dim();
        let nm = DMatrix::from_fn(d, d, |i, j| m.a[[i, j]]);
        let eig = SymmetricEigen::new(nm);
        let values = eig.eigenvalues.iter().copied().collect();
        let vectors = Array2::from_shape_fn((d, d), |(i, j)| eig.eigenvectors[(i, j)]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `V diag(f(values)) Vᵀ`, symmetrized exactly.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
            let fj = f(self.values[j]);
            col.mapv_inplace(|v| v * fj);
        }
        let m = scaled.dot(&self.vectors.t());
        SymMatrix::symmetrized(m)
    }

    fn psd_scale(&self) -> f64 {
        self.max().max(1.0)
    }

    /// Errors with `NotPsd` when the smallest eigenvalue is below `-PSD_TOL * scale`.
    pub fn check_psd(&self) -> Result<()> {
        let min = self.min();
        if !min.is_finite() || min < -PSD_TOL * self.psd_scale() {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Square root of a PSD matrix with eigenvalues inside the tolerance clamped to zero.
    pub fn psd_sqrt(&self) -> Result<SymMatrix> {
        self.check_psd()?;
        Ok(self.map_spectrum(|l| l.max(0.0).sqrt()))
    }
}

/// Symmetric PSD square root `S` with `S S = M`.
pub fn sym_psd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    m.eigen().psd_sqrt()
}

/// Output of [`shrinkage_covariance`].
#[derive(Debug, Clone)]
pub struct ShrinkageEstimate {
    pub sigma: SymMatrix,
    pub omega: SymMatrix,
    /// Shrinkage intensity toward the diagonal target, in `[0, 1]`.
    pub intensity: f64,
    /// Eigendecomposition of `sigma`, reused by the knockoff working model.
    pub eigen: SymEigen,
}

/// Shrinkage covariance toward the diagonal of the sample covariance.
///
/// `Σ̂ = (1 - δ) S + δ diag(S)` where `δ = Σ_{i≠j} Var̂(s_ij) / Σ_{i≠j} s_ij²`
/// clamped to `[0, 1]` (Schäfer–Strimmer "target D"). With
/// `w_kij = (x_ki - x̄_i)(x_kj - x̄_j)`, `s_ij = n/(n-1) · mean_k w_kij` and
/// `Var̂(s_ij) = n/(n-1)³ · Σ_k (w_kij - w̄_ij)²`.
pub fn shrinkage_covariance(x: ArrayView2<f64>) -> Result<ShrinkageEstimate> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "shrinkage covariance needs n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let xc = &x - &mean;
    // Σ_k w_kij = (Xcᵀ Xc)_ij and Σ_k w_kij² = ((Xc∘Xc)ᵀ (Xc∘Xc))_ij
    let cross = xc.t().dot(&xc);
    for j in 0..p {
        let var = cross[[j, j]] / (nf - 1.0);
        if !(var > 1e-12) {
            return Err(Error::DegenerateData { column: j, variance: var });
        }
    }
    let sq = xc.mapv(|v| v * v);
    let cross_sq = sq.t().dot(&sq);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let wbar = cross[[i, j]] / nf;
            let s_ij = nf / (nf - 1.0) * wbar;
            let ss = (cross_sq[[i, j]] - nf * wbar * wbar).max(0.0);
            num += nf / (nf - 1.0).powi(3) * ss;
            den += s_ij * s_ij;
        }
    }
    let intensity = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 1.0 };

    let mut sigma = cross / (nf - 1.0);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                sigma[[i, j]] *= 1.0 - intensity;
            }
        }
    }
    let sigma = SymMatrix::symmetrized(sigma);
    let eigen = sigma.eigen();
    if !(eigen.min() > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let omega = eigen.map_spectrum(|l| 1.0 / l);
    if omega.as_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok(ShrinkageEstimate { sigma, omega, intensity, eigen })
}

/// Banded precision `Ω_ij = base^|i-j|` for `|i-j| < band`, zero otherwise.
pub fn build_banded_precision(p: usize, base: f64, band: usize) -> Result<SymMatrix> {
    if p == 0 || !(base > 0.0 && base < 1.0) || band == 0 {
        return Err(Error::InvalidParameter(format!(
            "banded precision needs p >= 1, 0 < base < 1, band >= 1 (got p={p}, base={base}, band={band})"
        )));
    }
    let m = SymMatrix::from_fn(p, |i, j| {
        let k = i.abs_diff(j);
        if k < band {
            base.powi(k as i32)
        } else {
            0.0
        }
    });
    let min = m.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(m)
}

/// AR(1) covariance `Σ_ij = rho^|i-j|`.
pub fn build_ar_covariance(p: usize, rho: f64) -> Result<SymMatrix> {
    if p == 0 || !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "AR covariance needs p >= 1 and |rho| < 1 (got p={p}, rho={rho})"
        )));
    }
    Ok(SymMatrix::from_fn(p, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// `‖A‖_max`, the largest absolute entry.
pub fn max_norm(a: &ArrayView2<f64>) -> f64 {
    max_abs(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let s = sym_psd_sqrt(&SymMatrix::identity(2)).unwrap();
        assert!((&s.view() - &Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-14));
        let s = sym_psd_sqrt(&SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!((s.view()[[0, 0]] - 2.0).abs() < 1e-14);
        assert!((s.view()[[1, 1]] - 3.0).abs() < 1e-14);
        assert!(s.view()[[0, 1]].abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = SymMatrix::new(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let s = sym_psd_sqrt(&m).unwrap();
        let back = s.view().dot(&s.view());
        assert!(max_norm(&(&back - &m.view()).view()) <= 1e-10);
    }

    #[test]
    fn sqrt_clamps_tiny_negative_and_rejects_indefinite() {
        let m = SymMatrix::new(array![[1.0, 1.0], [1.0, 1.0 - 1e-12]]).unwrap();
        assert!(sym_psd_sqrt(&m).is_ok());
        let bad = SymMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(sym_psd_sqrt(&bad), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn rejects_asymmetric_input() {
        assert!(matches!(
            SymMatrix::new(array![[1.0, 0.5], [0.4, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn shrinkage_one_dim_is_sample_variance() {
        let x = array![[1.0], [2.0], [4.0], [7.0]];
        let est = shrinkage_covariance(x.view()).unwrap();
        let mean = 3.5;
        let var = [1.0f64, 2.0, 4.0, 7.0].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((est.sigma.view()[[0, 0]] - var).abs() < 1e-12);
        assert!((est.omega.view()[[0, 0]] - 1.0 / var).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_concentrates_on_identity() {
        let x = gaussian(10_000, 5, 11);
        let est = shrinkage_covariance(x.view()).unwrap();
        let diff = &est.sigma.view() - &Array2::<f64>::eye(5);
        assert!(max_norm(&diff.view()) <= 0.1);
        assert!((0.0..=1.0).contains(&est.intensity));
    }

    #[test]
    fn shrinkage_handles_near_collinear_columns() {
        let z = gaussian(200, 3, 5);
        let noise = gaussian(200, 1, 6);
        let mut x = z.clone();
        for i in 0..200 {
            x[[i, 1]] = x[[i, 0]] + 1e-3 * noise[[i, 0]];
        }
        let est = shrinkage_covariance(x.view()).unwrap();
        assert!(est.omega.as_array().iter().all(|v| v.is_finite()));
        let prod = est.sigma.view().dot(&est.omega.view());
        assert!(max_norm(&(&prod - &Array2::<f64>::eye(3)).view()) <= 1e-6);
        // Σ̂ ⪰ δ·diag(S) ≻ 0
        let mut shifted = est.sigma.as_array().clone();
        for j in 0..3 {
            let s_jj = est.sigma.view()[[j, j]];
            shifted[[j, j]] -= est.intensity * s_jj;
        }
        assert!(SymMatrix::symmetrized(shifted).min_eigenvalue() > -1e-10);
    }

    #[test]
    fn shrinkage_rejects_constant_column() {
        let x = array![[1.0, 3.0], [2.0, 3.0], [5.0, 3.0]];
        assert!(matches!(
            shrinkage_covariance(x.view()),
            Err(Error::DegenerateData { column: 1, .. })
        ));
    }

    #[test]
    fn banded_precision_entries() {
        let m = build_banded_precision(3, 0.2, 10).unwrap();
        let expect = array![[1.0, 0.2, 0.04], [0.2, 1.0, 0.2], [0.04, 0.2, 1.0]];
        assert!(max_norm(&(&m.view() - &expect).view()) < 1e-15);
        let id = build_banded_precision(6, 0.9, 1).unwrap();
        assert_eq!(id.as_array(), &Array2::<f64>::eye(6));
    }

    #[test]
    fn banded_precision_paper_scale_is_pd() {
        let m = build_banded_precision(400, 0.2, 10).unwrap();
        assert!(m.min_eigenvalue() > 0.0);
    }

    #[test]
    fn banded_precision_rejects_indefinite() {
        // base close to 1 with a narrow band: tridiagonal with off-diagonal 0.9 is indefinite for large p
        assert!(matches!(build_banded_precision(50, 0.9, 2), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn ar_covariance_entries_and_tridiagonal_inverse() {
        let m = build_ar_covariance(2, 0.5).unwrap();
        assert_eq!(m.as_array(), &array![[1.0, 0.5], [0.5, 1.0]]);
        assert_eq!(build_ar_covariance(4, 0.0).unwrap().as_array(), &Array2::<f64>::eye(4));
        let inv = build_ar_covariance(50, 0.5).unwrap().inverse().unwrap();
        for i in 0..50usize {
            for j in 0..50 {
                if i.abs_diff(j) > 1 {
                    assert!(inv.view()[[i, j]].abs() < 1e-8, "({i},{j}) = {}", inv.view()[[i, j]]);
                }
            }
        }
        // known AR(1) precision entries
        assert!((inv.view()[[0, 1]] + 0.5 / 0.75).abs() < 1e-8);
        assert!((inv.view()[[10, 10]] - 1.25 / 0.75).abs() < 1e-8);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = build_ar_covariance(6, 0.5).unwrap();
        let l = m.cholesky().unwrap();
        let back = l.dot(&l.t());
        assert!(max_norm(&(&back - &m.view()).view()) < 1e-12);
    }
}
