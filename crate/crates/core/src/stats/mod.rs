//! Knockoff statistics `W_j`: marginal correlation differences and regression
//! coefficient differences from (debiased) Lasso fits on `[X, X̂]`.

mod debiased;
mod design;
mod lasso;

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use debiased::{
    debiased_lasso, glm_debiased, glm_one_step, nodewise_score, weighted_gram, DebiasedFit, Loss, NodewiseFit,
};
pub use design::{AugmentedDesign, Design};
pub use lasso::{
    default_lambda_linear, default_lambda_logistic, default_lambda_nodewise, lasso_fit, logistic_gradient,
    logistic_loss, soft_threshold, LassoFit, KKT_TOL, MAX_SWEEPS,
};

use crate::datagen::Family;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMethod {
    MarginalCorr,
    RcdLasso,
    RcdDebiased,
    RcdDebiasedGlm,
}

impl StatMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            StatMethod::MarginalCorr => "marginal_corr",
            StatMethod::RcdLasso => "rcd_lasso",
            StatMethod::RcdDebiased => "rcd_debiased",
            StatMethod::RcdDebiasedGlm => "rcd_debiased_glm",
        }
    }
}

impl fmt::Display for StatMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal_corr" => Ok(StatMethod::MarginalCorr),
            "rcd_lasso" => Ok(StatMethod::RcdLasso),
            "rcd_debiased" => Ok(StatMethod::RcdDebiased),
            "rcd_debiased_glm" => Ok(StatMethod::RcdDebiasedGlm),
            other => Err(Error::Config(format!("unknown statistic method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVector {
    pub w: Vec<f64>,
    pub method: StatMethod,
    pub lambda: Option<f64>,
    pub lambda_j: Option<f64>,
}

impl StatVector {
    pub fn new(w: Vec<f64>, method: StatMethod) -> Self {
        Self { w, method, lambda: None, lambda_j: None }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `W_j = (√n ‖y‖)⁻¹ (|X_jᵀy| - |X̂_jᵀy|)`.
pub fn marginal_corr_stats(x: ArrayView2<f64>, x_hat: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<StatVector> {
    if x.dim() != x_hat.dim() || y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X {:?}, X̂ {:?}, y length {}",
            x.dim(),
            x_hat.dim(),
            y.len()
        )));
    }
    let norm = y.dot(&y).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroResponse);
    }
    let scale = (x.nrows() as f64).sqrt() * norm;
    let a = x.t().dot(&y);
    let b = x_hat.t().dot(&y);
    let w = a.iter().zip(b.iter()).map(|(u, v)| (u.abs() - v.abs()) / scale).collect();
    Ok(StatVector::new(w, StatMethod::MarginalCorr))
}

/// `W_j = |β_j| - |β_{j+p}|`.
pub fn rcd_stats(beta_aug: ArrayView1<f64>, method: StatMethod) -> Result<StatVector> {
    if !beta_aug.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!("augmented coefficient vector has odd length {}", beta_aug.len())));
    }
    let p = beta_aug.len() / 2;
    let w = (0..p).map(|j| beta_aug[j].abs() - beta_aug[j + p].abs()).collect();
    Ok(StatVector::new(w, method))
}

/// Penalty levels for the initial fit and the nodewise regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda: f64,
    pub lambda_j: f64,
}

impl Regularization {
    /// `λ = σ̂ sqrt(log(2p)/n)` (linear) or `0.5 sqrt(log(2p)/n)` (logistic);
    /// `λ_j = sqrt(log(2p)/n)`.
    pub fn default_for(design: &impl AsRef<Design>, y: ArrayView1<f64>, family: Family) -> Result<Self> {
        let d = design.as_ref();
        let lambda = match family {
            Family::Linear => default_lambda_linear(d, y)?,
            Family::Logistic => default_lambda_logistic(d.n(), d.d()),
        };
        Ok(Self { lambda, lambda_j: default_lambda_nodewise(d.n(), d.d()) })
    }
}

/// Statistics plus the solver certificate behind them.
#[derive(Debug, Clone)]
pub struct StatResult {
    pub stats: StatVector,
    /// Largest KKT residual over every Lasso fit used (0 for marginal statistics).
    pub max_kkt: f64,
    pub n_fits: usize,
}

/// Computes `W` for the augmented design with the given method.
///
/// `RcdDebiased` requires a linear family and `RcdDebiasedGlm` a logistic one;
/// `RcdLasso` uses the Lasso for `family`.
pub fn knockoff_stats(
    design: &AugmentedDesign,
    y: ArrayView1<f64>,
    method: StatMethod,
    family: Family,
    reg: &Regularization,
) -> Result<StatResult> {
    let tagged = |mut sv: StatVector, lambda_j: Option<f64>| {
        sv.lambda = Some(reg.lambda);
        sv.lambda_j = lambda_j;
        sv
    };
    match method {
        StatMethod::MarginalCorr => Ok(StatResult {
            stats: marginal_corr_stats(design.original(), design.knockoffs(), y)?,
            max_kkt: 0.0,
            n_fits: 0,
        }),
        StatMethod::RcdLasso => {
            let fit = lasso_fit(design.design(), y, reg.lambda, family)?.require_converged(None)?;
            Ok(StatResult {
                stats: tagged(rcd_stats(fit.coef.view(), method)?, None),
                max_kkt: fit.kkt_residual,
                n_fits: 1,
            })
        }
        StatMethod::RcdDebiased | StatMethod::RcdDebiasedGlm => {
            let fit = match (method, family) {
                (StatMethod::RcdDebiased, Family::Linear) => debiased_lasso(design, y, reg.lambda, reg.lambda_j)?,
                (StatMethod::RcdDebiasedGlm, Family::Logistic) => glm_debiased(design, y, reg.lambda, reg.lambda_j)?,
                _ => {
                    return Err(Error::Config(format!("statistic {method} does not apply to the {family:?} family")));
                }
            };
            Ok(StatResult {
                stats: tagged(rcd_stats(fit.coef.view(), method)?, Some(reg.lambda_j)),
                max_kkt: fit.max_kkt,
                n_fits: 1 + fit.coef.len(),
            })
        }
    }
}

/// The statistic the settings use for each response family.
pub fn default_method(family: Family) -> StatMethod {
    match family {
        Family::Linear => StatMethod::RcdDebiased,
        Family::Logistic => StatMethod::RcdDebiasedGlm,
    }
}
