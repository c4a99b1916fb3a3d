//! Lasso solvers.
//!
//! Linear fits run coordinate descent on the Gram form
//! `½ bᵀGb - cᵀb + Σ_k pen_k |b_k|`, keeping the gradient residual
//! `r = c - Gb` up to date. Columns are standardized implicitly: a penalty
//! `λ s_k` on the raw coefficient is the plain Lasso on columns scaled to unit
//! mean square, and coefficients come back on the original scale. There is no
//! intercept, so columns are not centered.
//!
//! Logistic fits use proximal Newton steps with an inner coordinate descent on
//! the weighted quadratic model and a backtracking line search.

use ndarray::{Array1, ArrayView1};

use super::design::Design;
use crate::datagen::Family;
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100_000;
/// Acceptance bound on the standardized subgradient residual.
pub const KKT_TOL: f64 = 1e-6;
/// Solvers aim below [`KKT_TOL`] so accepted fits pass with margin.
const KKT_TARGET: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: Array1<f64>,
    /// Max-norm subgradient residual in standardized coordinates.
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn require_converged(self, column: Option<usize>) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { column, kkt_residual: self.kkt_residual })
        }
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// A Lasso problem in Gram form. `kkt_scale[k]` converts raw gradients to the
/// standardized scale; `pen[k] = λ · kkt_scale[k]`.
const POLISH_EVERY: usize = 200;

pub(crate) struct GramLasso<'a> {
    pub g: &'a [f64],
    pub d: usize,
    pub c: Vec<f64>,
    pub pen: Vec<f64>,
    pub kkt_scale: Vec<f64>,
    pub exclude: Option<usize>,
}

impl GramLasso<'_> {
    fn row(&self, k: usize) -> &[f64] {
        &self.g[k * self.d..(k + 1) * self.d]
    }

    fn skip(&self, k: usize) -> bool {
        self.exclude == Some(k) || !(self.g[k * self.d + k] > 0.0)
    }

    fn update(&self, k: usize, b: &mut [f64], r: &mut [f64]) -> f64 {
        if self.skip(k) {
            return 0.0;
        }
        let gkk = self.g[k * self.d + k];
        let z = r[k] + gkk * b[k];
        let new = soft_threshold(z, self.pen[k]) / gkk;
        let diff = new - b[k];
        if diff != 0.0 {
            b[k] = new;
            for (ri, gi) in r.iter_mut().zip(self.row(k)) {
                *ri -= gi * diff;
            }
        }
        diff.abs()
    }

    fn residual(&self, b: &[f64]) -> Vec<f64> {
        let mut r = self.c.clone();
        for (k, &bk) in b.iter().enumerate() {
            if bk != 0.0 {
                for (ri, gi) in r.iter_mut().zip(self.row(k)) {
                    *ri -= gi * bk;
                }
            }
        }
        r
    }

    fn kkt(&self, b: &[f64], r: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.d {
            if self.skip(k) || !(self.kkt_scale[k] > 0.0) {
                continue;
            }
            let grad = r[k] / self.kkt_scale[k];
            let lam = self.pen[k] / self.kkt_scale[k];
            let v = if b[k] != 0.0 { (grad - lam * b[k].signum()).abs() } else { (grad.abs() - lam).max(0.0) };
            worst = worst.max(v);
        }
        worst
    }

    /// Active-set Newton step: moves `b` toward the exact minimizer for the
    /// current active set and signs, `b_A = G_AA⁻¹ (c_A - pen_A ∘ sign(b_A))`,
    /// stopping at the first coordinate that would change sign (which is
    /// dropped). The objective never increases. Returns true when the full
    /// step was taken; `r` is refreshed whenever `b` moves.
    fn newton_step(&self, b: &mut [f64], r: &mut Vec<f64>) -> bool {
        let active: Vec<usize> = (0..self.d).filter(|&k| b[k] != 0.0).collect();
        let m = active.len();
        if m == 0 {
            return false;
        }
        let gaa = nalgebra::DMatrix::from_fn(m, m, |i, j| self.g[active[i] * self.d + active[j]]);
        let rhs = nalgebra::DVector::from_fn(m, |i, _| {
            let k = active[i];
            self.c[k] - self.pen[k] * b[k].signum()
        });
        let Some(chol) = gaa.cholesky() else { return false };
        let sol = chol.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut t = 1.0;
        let mut hit = None;
        for (i, &k) in active.iter().enumerate() {
            if sol[i].signum() != b[k].signum() {
                let tk = b[k] / (b[k] - sol[i]);
                if tk < t {
                    t = tk;
                    hit = Some(k);
                }
            }
        }
        for (i, &k) in active.iter().enumerate() {
            b[k] += t * (sol[i] - b[k]);
        }
        if let Some(k) = hit {
            b[k] = 0.0;
        }
        *r = self.residual(b);
        hit.is_none()
    }

    pub fn solve(&self) -> LassoFit {
        let d = self.d;
        let mut b = vec![0.0; d];
        let mut r = self.c.clone();
        let mut sweeps = 0;
        let mut rel_tol = 1e-8;
        let mut kkt = f64::INFINITY;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::new();
        'outer: while sweeps < MAX_SWEEPS {
            for k in 0..d {
                self.update(k, &mut b, &mut r);
            }
            sweeps += 1;
            loop {
                active.clear();
                active.extend((0..d).filter(|&k| b[k] != 0.0));
                let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut delta: f64 = 0.0;
                for &k in &active {
                    delta = delta.max(self.update(k, &mut b, &mut r));
                }
                sweeps += 1;
                if delta < rel_tol * scale {
                    break;
                }
                // slow progress on an ill-conditioned active set; try the exact solve
                if sweeps % POLISH_EVERY == 0 && self.newton_step(&mut b, &mut r) {
                    kkt = self.kkt(&b, &r);
                    if kkt <= KKT_TARGET {
                        converged = true;
                        break 'outer;
                    }
                    // active set solved exactly; only a full sweep can help now
                    break;
                }
                if sweeps >= MAX_SWEEPS {
                    break 'outer;
                }
            }
            r = self.residual(&b);
            kkt = self.kkt(&b, &r);
            if kkt <= KKT_TARGET {
                converged = true;
                break;
            }
            if self.newton_step(&mut b, &mut r) {
                kkt = self.kkt(&b, &r);
                if kkt <= KKT_TARGET {
                    converged = true;
                    break;
                }
            }
            rel_tol = (rel_tol * 0.01).max(1e-14);
        }
        if !converged {
            r = self.residual(&b);
            kkt = self.kkt(&b, &r);
            converged = kkt <= KKT_TOL;
        }
        LassoFit { coef: Array1::from(b), kkt_residual: kkt, sweeps, converged }
    }
}

/// Lasso on `design` at level `lambda`: minimizes
/// `(2n)⁻¹‖y - Xb‖² + λ Σ s_k |b_k|` (linear) or the mean logistic deviance
/// plus the same penalty (logistic), with `s_k` the column root mean square.
///
/// A fit that exhausts [`MAX_SWEEPS`] is returned with `converged = false`.
pub fn lasso_fit(design: &Design, y: ArrayView1<f64>, lambda: f64, family: Family) -> Result<LassoFit> {
    design.check_response(y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    match family {
        Family::Linear => Ok(linear_lasso(design, y, lambda)),
        Family::Logistic => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidParameter("logistic response must be 0/1".into()));
            }
            Ok(logistic_lasso(design, y, lambda))
        }
    }
}

fn linear_lasso(design: &Design, y: ArrayView1<f64>, lambda: f64) -> LassoFit {
    let g = design.gram();
    let s = design.column_scales().to_vec();
    let problem = GramLasso {
        g: g.as_slice().expect("gram is contiguous"),
        d: design.d(),
        c: design.correlate(y).to_vec(),
        pen: s.iter().map(|sk| lambda * sk).collect(),
        kkt_scale: s,
        exclude: None,
    };
    problem.solve()
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic deviance `n⁻¹ Σ_i [log(1 + e^{η_i}) - y_i η_i]` at `η = Xb`.
pub fn logistic_loss(design: &Design, y: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let eta = design.predict(b);
    eta.iter().zip(y.iter()).map(|(&e, &yi)| softplus(e) - yi * e).sum::<f64>() / design.n() as f64
}

/// Gradient of [`logistic_loss`]: `n⁻¹ Xᵀ(σ(Xb) - y)`.
pub fn logistic_gradient(design: &Design, y: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let eta = design.predict(b);
    let rho: Array1<f64> = eta.iter().zip(y.iter()).map(|(&e, &yi)| sigmoid(e) - yi).collect();
    design.correlate(rho.view())
}

fn logistic_lasso(design: &Design, y: ArrayView1<f64>, lambda: f64) -> LassoFit {
    let n = design.n();
    let d = design.d();
    let nf = n as f64;
    let xt = design.xt();
    let xs = xt.as_slice().expect("transpose is contiguous");
    let col = |k: usize| &xs[k * n..(k + 1) * n];
    let s: Vec<f64> = (0..d).map(|k| (col(k).iter().map(|v| v * v).sum::<f64>() / nf).sqrt()).collect();
    let pen: Vec<f64> = s.iter().map(|sk| lambda * sk).collect();
    let y = y.to_vec();

    let penalty = |b: &[f64]| b.iter().zip(&pen).map(|(bk, pk)| pk * bk.abs()).sum::<f64>();
    let eta_of = |b: &[f64]| {
        let mut eta = vec![0.0; n];
        for (k, &bk) in b.iter().enumerate() {
            if bk != 0.0 {
                for (e, x) in eta.iter_mut().zip(col(k)) {
                    *e += x * bk;
                }
            }
        }
        eta
    };
    let smooth = |eta: &[f64]| eta.iter().zip(&y).map(|(&e, &yi)| softplus(e) - yi * e).sum::<f64>() / nf;

    let kkt_of = |b: &[f64], resid: &[f64]| {
        let mut worst: f64 = 0.0;
        for k in 0..d {
            if !(s[k] > 0.0) {
                continue;
            }
            // resid = y - p, so the loss gradient is -X_kᵀ resid / n
            let grad = -col(k).iter().zip(resid).map(|(x, r)| x * r).sum::<f64>() / nf / s[k];
            let v = if b[k] != 0.0 { (grad + lambda * b[k].signum()).abs() } else { (grad.abs() - lambda).max(0.0) };
            worst = worst.max(v);
        }
        worst
    };

    let mut b = vec![0.0; d];
    let mut eta = vec![0.0; n];
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    let mut converged = false;
    let mut inner_tol: f64 = 1e-6;
    let mut active: Vec<usize> = Vec::new();
    for _newton in 0..500 {
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&prob).map(|(yi, pi)| yi - pi).collect();
        kkt = kkt_of(&b, &resid);
        if kkt <= KKT_TARGET {
            converged = true;
            break;
        }
        if sweeps >= MAX_SWEEPS {
            break;
        }
        let w: Vec<f64> = prob.iter().map(|p| (p * (1.0 - p)).max(1e-10)).collect();
        let h: Vec<f64> = (0..d).map(|k| col(k).iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / nf).collect();

        // inner coordinate descent on the quadratic model; e = resid - W X (a - b)
        let mut a = b.clone();
        let mut e = resid.clone();
        let update = |k: usize, a: &mut [f64], e: &mut [f64]| -> f64 {
            if !(h[k] > 0.0) {
                return 0.0;
            }
            let xk = col(k);
            let g = xk.iter().zip(e.iter()).map(|(x, ei)| x * ei).sum::<f64>() / nf;
            let new = soft_threshold(h[k] * a[k] + g, pen[k]) / h[k];
            let diff = new - a[k];
            if diff != 0.0 {
                a[k] = new;
                for ((ei, x), wi) in e.iter_mut().zip(xk).zip(&w) {
                    *ei -= wi * x * diff;
                }
            }
            diff.abs()
        };
        for _round in 0..100 {
            let mut full_delta: f64 = 0.0;
            for k in 0..d {
                full_delta = full_delta.max(update(k, &mut a, &mut e));
            }
            sweeps += 1;
            let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if full_delta < inner_tol * scale {
                break;
            }
            for _ in 0..1000 {
                active.clear();
                active.extend((0..d).filter(|&k| a[k] != 0.0));
                let mut delta: f64 = 0.0;
                for &k in &active {
                    delta = delta.max(update(k, &mut a, &mut e));
                }
                sweeps += 1;
                let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if delta < inner_tol * scale {
                    break;
                }
            }
        }

        let dir: Vec<f64> = a.iter().zip(&b).map(|(ak, bk)| ak - bk).collect();
        if dir.iter().all(|&v| v == 0.0) {
            inner_tol = (inner_tol * 0.01).max(1e-16);
            continue;
        }
        let f0 = smooth(&eta) + penalty(&b);
        let slope: f64 = dir
            .iter()
            .enumerate()
            .map(|(k, dk)| -col(k).iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / nf * dk)
            .sum::<f64>()
            + penalty(&a)
            - penalty(&b);
        let eta_dir = eta_of(&dir);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = b.iter().zip(&dir).map(|(bk, dk)| bk + t * dk).collect();
            let eta_c: Vec<f64> = eta.iter().zip(&eta_dir).map(|(e, de)| e + t * de).collect();
            let f = smooth(&eta_c) + penalty(&cand);
            if f <= f0 + 1e-4 * t * slope.min(0.0) || t < 1e-12 {
                b = cand;
                eta = eta_of(&b);
                break;
            }
            t *= 0.5;
        }
        inner_tol = (inner_tol * 0.1).max(1e-14);
    }
    if !converged {
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&prob).map(|(yi, pi)| yi - pi).collect();
        kkt = kkt_of(&b, &resid);
        converged = kkt <= KKT_TOL;
    }
    LassoFit { coef: Array1::from(b), kkt_residual: kkt, sweeps, converged }
}

/// `λ₀ = sqrt(2 log(d) / n)` fit, `σ̂ = ‖y - Xβ̂‖ / sqrt(n)`, then `λ = σ̂ sqrt(log(d) / n)`.
pub fn default_lambda_linear(design: &Design, y: ArrayView1<f64>) -> Result<f64> {
    let n = design.n() as f64;
    let rate = rate(design.n(), design.d());
    let pre = lasso_fit(design, y, (2.0f64).sqrt() * rate, Family::Linear)?;
    let resid = &y - &design.predict(pre.coef.view());
    let sigma = (resid.dot(&resid) / n).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::ZeroResponse);
    }
    Ok(sigma * rate)
}

pub fn default_lambda_logistic(n: usize, d: usize) -> f64 {
    0.5 * rate(n, d)
}

pub fn default_lambda_nodewise(n: usize, d: usize) -> f64 {
    rate(n, d)
}

/// `sqrt(log(d) / n)`; `d` is the number of design columns (`2p` for an augmented design).
fn rate(n: usize, d: usize) -> f64 {
    ((d.max(2) as f64).ln() / n as f64).sqrt()
}
