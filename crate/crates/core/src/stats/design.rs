use std::sync::OnceLock;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An `n x d` design with lazily cached transpose and Gram matrix `XᵀX / n`.
#[derive(Debug)]
pub struct Design {
    x: Array2<f64>,
    xt: OnceLock<Array2<f64>>,
    gram: OnceLock<Array2<f64>>,
}

impl Clone for Design {
    fn clone(&self) -> Self {
        Self { x: self.x.clone(), xt: OnceLock::new(), gram: OnceLock::new() }
    }
}

impl Design {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("empty design {:?}", x.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("design contains non-finite values".into()));
        }
        Ok(Self { x, xt: OnceLock::new(), gram: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// `Xᵀ` in standard layout, so row `k` is column `k` of `X`, contiguous.
    pub fn xt(&self) -> &Array2<f64> {
        self.xt.get_or_init(|| self.x.t().as_standard_layout().into_owned())
    }

    pub fn gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| {
            let xt = self.xt();
            let mut g = xt.dot(&xt.t()) / self.n() as f64;
            symmetrize(&mut g);
            g
        })
    }

    /// Root mean square of each column, `sqrt(X_kᵀX_k / n)`.
    pub fn column_scales(&self) -> Array1<f64> {
        self.gram().diag().mapv(|v| v.max(0.0).sqrt())
    }

    /// `X b`.
    pub fn predict(&self, b: ArrayView1<f64>) -> Array1<f64> {
        self.x.dot(&b)
    }

    /// `Xᵀ v / n`.
    pub fn correlate(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.xt().dot(&v) / self.n() as f64
    }

    pub(crate) fn check_response(&self, y: ArrayView1<f64>) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("y has length {}, design has {} rows", y.len(), self.n())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("response contains non-finite values".into()));
        }
        Ok(())
    }
}

pub(crate) fn symmetrize(g: &mut Array2<f64>) {
    let d = g.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (g[[i, j]] + g[[j, i]]);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
}

impl AsRef<Design> for Design {
    fn as_ref(&self) -> &Design {
        self
    }
}

/// `[X, X̂]`: column `j + p` is the knockoff of column `j`.
#[derive(Debug, Clone)]
pub struct AugmentedDesign {
    design: Design,
    p: usize,
}

impl AugmentedDesign {
    pub fn new(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<Self> {
        if x.dim() != x_hat.dim() {
            return Err(Error::DimensionMismatch(format!("X is {:?}, knockoffs are {:?}", x.dim(), x_hat.dim())));
        }
        let p = x.ncols();
        let cols = concatenate(Axis(1), &[x, x_hat]).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Ok(Self { design: Design::new(cols)?, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn original(&self) -> ArrayView2<'_, f64> {
        self.design.x.slice(ndarray::s![.., ..self.p])
    }

    pub fn knockoffs(&self) -> ArrayView2<'_, f64> {
        self.design.x.slice(ndarray::s![.., self.p..])
    }

    /// The same design with original and knockoff columns exchanged for every `j` in `swap`.
    pub fn swapped(&self, swap: &[usize]) -> Result<Self> {
        let mut x = self.design.x.clone();
        for &j in swap {
            if j >= self.p {
                return Err(Error::DimensionMismatch(format!("swap index {j} out of range for p = {}", self.p)));
            }
            let orig = x.column(j).to_owned();
            let knock = x.column(j + self.p).to_owned();
            x.column_mut(j).assign(&knock);
            x.column_mut(j + self.p).assign(&orig);
        }
        Ok(Self { design: Design::new(x)?, p: self.p })
    }
}

impl AsRef<Design> for AugmentedDesign {
    fn as_ref(&self) -> &Design {
        &self.design
    }
}
