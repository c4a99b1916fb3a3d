//! One-step debiased Lasso (linear) and its GLM counterpart (logistic).

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use super::design::{symmetrize, Design};
use super::lasso::{lasso_fit, GramLasso, LassoFit};
use crate::datagen::Family;
use crate::error::{Error, Result};

/// `τ² ≤ DEGENERATE_REL · Σ̂_jj` marks a column that is (numerically) a combination of the others.
const DEGENERATE_REL: f64 = 1e-10;

/// Nodewise regression of column `j` on the rest.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    /// Length `d` with `gamma[j] = 0`.
    pub gamma: Array1<f64>,
    /// `Σ̂_jj - Σ̂_{j,-j} γ̂`, equal to `z_jᵀX_j / n`.
    pub tau2: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Nodewise Lasso on a (possibly weighted) Gram matrix, with both the target
/// column and the regressors standardized.
fn nodewise_on_gram(g: &Array2<f64>, j: usize, lambda_j: f64) -> NodewiseFit {
    let d = g.nrows();
    let s: Vec<f64> = (0..d).map(|k| g[[k, k]].max(0.0).sqrt()).collect();
    let problem = GramLasso {
        g: g.as_slice().expect("gram is contiguous"),
        d,
        c: g.row(j).to_vec(),
        pen: s.iter().map(|sk| lambda_j * s[j] * sk).collect(),
        kkt_scale: s.iter().map(|sk| s[j] * sk).collect(),
        exclude: Some(j),
    };
    let LassoFit { coef, kkt_residual, converged, .. } = problem.solve();
    let tau2 = g[[j, j]] - g.row(j).dot(&coef);
    NodewiseFit { gamma: coef, tau2, kkt_residual, converged }
}

/// Score vector `z_j = X_j - X_{-j} γ̂_j` from a nodewise Lasso at `lambda_j`.
///
/// Fails with `DegenerateScore` when `|z_jᵀX_j| ≤ 1e-10 · n · s_j²`, which
/// happens when column `j` is duplicated.
pub fn nodewise_score(design: &impl AsRef<Design>, j: usize, lambda_j: f64) -> Result<(Array1<f64>, NodewiseFit)> {
    let design = design.as_ref();
    if j >= design.d() {
        return Err(Error::DimensionMismatch(format!("column {j} out of range for d = {}", design.d())));
    }
    check_lambda(lambda_j)?;
    let g = design.gram();
    let fit = nodewise_on_gram(g, j, lambda_j);
    if !fit.converged {
        return Err(Error::NoConvergence { column: Some(j), kkt_residual: fit.kkt_residual });
    }
    let x = design.x();
    let z = &x.column(j) - &x.dot(&fit.gamma);
    if !(z.dot(&x.column(j)).abs() > DEGENERATE_REL * design.n() as f64 * g[[j, j]]) {
        return Err(Error::DegenerateScore { column: j });
    }
    Ok((z, fit))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")))
    }
}

#[derive(Debug, Clone)]
pub struct DebiasedFit {
    pub coef: Array1<f64>,
    pub init: LassoFit,
    pub tau2: Array1<f64>,
    pub lambda: f64,
    pub lambda_j: f64,
    /// Largest KKT residual over the initial fit and all nodewise fits.
    pub max_kkt: f64,
}

enum Degenerate {
    Score,
    Tau,
}

/// `b_j = β_j + (u_j - Σ_{k≠j} γ_jk u_k) / τ_j²`, with `u = -n⁻¹Xᵀρ̇` and
/// nodewise fits on `gram`.
fn one_step(
    gram: &Array2<f64>,
    u: &Array1<f64>,
    beta: &Array1<f64>,
    lambda_j: f64,
    kind: Degenerate,
) -> Result<(Array1<f64>, Array1<f64>, f64)> {
    let d = gram.nrows();
    let fits: Vec<NodewiseFit> = (0..d).into_par_iter().map(|j| nodewise_on_gram(gram, j, lambda_j)).collect();
    let mut coef = Array1::zeros(d);
    let mut tau2 = Array1::zeros(d);
    let mut max_kkt: f64 = 0.0;
    for (j, fit) in fits.iter().enumerate() {
        if !fit.converged {
            return Err(Error::NoConvergence { column: Some(j), kkt_residual: fit.kkt_residual });
        }
        max_kkt = max_kkt.max(fit.kkt_residual);
        if !(fit.tau2 > DEGENERATE_REL * gram[[j, j]]) {
            return Err(match kind {
                Degenerate::Score => Error::DegenerateScore { column: j },
                Degenerate::Tau => Error::DegenerateTau { column: j, tau2: fit.tau2 },
            });
        }
        coef[j] = beta[j] + (u[j] - fit.gamma.dot(u)) / fit.tau2;
        tau2[j] = fit.tau2;
    }
    Ok((coef, tau2, max_kkt))
}

/// Linear debiased Lasso:
/// `β̂_j = β̂ᵢₙᵢₜ_j + z_jᵀ(y - Xβ̂ᵢₙᵢₜ) / (z_jᵀX_j)`.
pub fn debiased_lasso(design: &impl AsRef<Design>, y: ArrayView1<f64>, lambda: f64, lambda_j: f64) -> Result<DebiasedFit> {
    let design = design.as_ref();
    check_lambda(lambda_j)?;
    let init = lasso_fit(design, y, lambda, Family::Linear)?.require_converged(None)?;
    let resid = &y - &design.predict(init.coef.view());
    let u = design.correlate(resid.view());
    let (coef, tau2, nodewise_kkt) = one_step(design.gram(), &u, &init.coef, lambda_j, Degenerate::Score)?;
    let max_kkt = nodewise_kkt.max(init.kkt_residual);
    Ok(DebiasedFit { coef, init, tau2, lambda, lambda_j, max_kkt })
}

/// Loss for the GLM one-step correction: weights `D̂_ii = b''(η_i)` and
/// derivative `ρ̇_i = b'(η_i) - y_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Squared,
    Logistic,
}

impl Loss {
    pub fn weights_and_derivative(self, eta: &Array1<f64>, y: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        match self {
            Loss::Squared => (Array1::ones(eta.len()), eta - &y),
            Loss::Logistic => {
                let p = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
                (eta.mapv(|e| {
                    let t = (-e.abs()).exp();
                    t / ((1.0 + t) * (1.0 + t))
                }), &p - &y)
            }
        }
    }
}

/// `Σ̂ = n⁻¹ XᵀD̂X`.
pub fn weighted_gram(design: &Design, weights: &Array1<f64>) -> Array2<f64> {
    let mut xw = design.xt().clone();
    let root = weights.mapv(|w| w.max(0.0).sqrt());
    for mut row in xw.rows_mut() {
        row *= &root;
    }
    let mut g = xw.dot(&xw.t()) / design.n() as f64;
    symmetrize(&mut g);
    g
}

/// GLM one-step correction at a given initial estimate:
/// `b̂_j = β̂_j - n⁻¹ρ̇ᵀ(X_j - X_{-j}γ̂_j) / τ̂_j²`, nodewise fits in the
/// `D̂`-weighted metric.
pub fn glm_one_step(
    design: &impl AsRef<Design>,
    y: ArrayView1<f64>,
    init: LassoFit,
    lambda: f64,
    lambda_j: f64,
    loss: Loss,
) -> Result<DebiasedFit> {
    let design = design.as_ref();
    check_lambda(lambda_j)?;
    let eta = design.predict(init.coef.view());
    let (weights, rho) = loss.weights_and_derivative(&eta, y);
    let gram = weighted_gram(design, &weights);
    let u = -design.correlate(rho.view());
    let (coef, tau2, nodewise_kkt) = one_step(&gram, &u, &init.coef, lambda_j, Degenerate::Tau)?;
    let max_kkt = nodewise_kkt.max(init.kkt_residual);
    Ok(DebiasedFit { coef, init, tau2, lambda, lambda_j, max_kkt })
}

/// Logistic GLM debiased Lasso.
pub fn glm_debiased(design: &impl AsRef<Design>, y: ArrayView1<f64>, lambda: f64, lambda_j: f64) -> Result<DebiasedFit> {
    let d = design.as_ref();
    let init = lasso_fit(d, y, lambda, Family::Logistic)?.require_converged(None)?;
    glm_one_step(design, y, init, lambda, lambda_j, Loss::Logistic)
}
