use nalgebra::{Cholesky, DMatrix};

use crate::data::regressor_width;
use crate::error::{Error, Result};

/// A Cholesky pivot `L_jj^2` at or below this fraction of `Sigma_jj` means
/// the covariance is numerically rank deficient.
pub(crate) const SIGMA_COND_TOL: f64 = 1e-12;
/// A pivot at or below this fraction of the data's second moment means the
/// residuals vanished (an exact fit).
pub(crate) const SIGMA_SCALE_TOL: f64 = 1e-20;

/// Parameters of one Gaussian VAR(p) cluster model
/// `Y_t = A_0 + A_1 Y_{t-1} + ... + A_p Y_{t-p} + e_t`, `e_t ~ N(0, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarParams {
    a: DMatrix<f64>,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    p: usize,
}

impl VarParams {
    /// `a` is `m x (1 + m p)` laid out as `[A_0, A_1, ..., A_p]`.
    pub fn new(a: DMatrix<f64>, sigma: DMatrix<f64>, p: usize) -> Result<Self> {
        let m = sigma.nrows();
        check_shapes(&a, &sigma, p)?;
        let sigma = symmetrize(&sigma);
        let chol = factor_sigma(&sigma, &vec![0.0; m]).ok_or(Error::SingularSigma { series: None })?;
        Ok(Self { a, sigma, chol, p })
    }

    pub(crate) fn from_parts(a: DMatrix<f64>, sigma: DMatrix<f64>, chol: DMatrix<f64>, p: usize) -> Self {
        Self { a, sigma, chol, p }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn order(&self) -> usize {
        self.p
    }

    /// Coefficients `[A_0, A_1, ..., A_p]`.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower-triangular `L` with `Sigma = L L'`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn intercept(&self) -> DMatrix<f64> {
        self.a.columns(0, 1).into_owned()
    }

    /// Lag matrix `A_lag` for `lag` in `1..=p`.
    pub fn lag(&self, lag: usize) -> DMatrix<f64> {
        let m = self.dim();
        self.a.columns(1 + (lag - 1) * m, m).into_owned()
    }

    pub fn log_det_sigma(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Coefficients zero-padded on the right to `1 + m p_common` columns.
    pub fn padded_coefficients(&self, p_common: usize) -> DMatrix<f64> {
        let m = self.dim();
        let width = regressor_width(m, p_common);
        if width == self.a.ncols() {
            return self.a.clone();
        }
        let mut out = DMatrix::zeros(m, width);
        out.columns_mut(0, self.a.ncols()).copy_from(&self.a);
        out
    }

    /// Returns a copy with every lag-`l` block multiplied by `scale^l`.
    pub fn scale_lags(&self, scale: f64) -> Self {
        let m = self.dim();
        let mut a = self.a.clone();
        for lag in 1..=self.p {
            let f = scale.powi(lag as i32);
            a.columns_mut(1 + (lag - 1) * m, m).scale_mut(f);
        }
        Self {
            a,
            sigma: self.sigma.clone(),
            chol: self.chol.clone(),
            p: self.p,
        }
    }

    /// `max(||A - A'||_F, ||Sigma - Sigma'||_F)`; coefficient blocks of
    /// different orders are compared after zero-padding.
    pub fn distance(&self, other: &Self) -> f64 {
        let p = self.p.max(other.p);
        let da = (self.padded_coefficients(p) - other.padded_coefficients(p)).norm();
        let ds = (&self.sigma - &other.sigma).norm();
        da.max(ds)
    }
}

fn check_shapes(a: &DMatrix<f64>, sigma: &DMatrix<f64>, p: usize) -> Result<()> {
    let m = sigma.nrows();
    if m == 0 || sigma.ncols() != m || a.shape() != (m, regressor_width(m, p)) {
        return Err(Error::InvalidConfig(format!(
            "VAR({p}) parameters need A of shape {m}x{} and square Sigma, got A {:?} and Sigma {:?}",
            regressor_width(m, p),
            a.shape(),
            sigma.shape()
        )));
    }
    if a.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("VAR parameters must be finite".into()));
    }
    Ok(())
}

pub(crate) fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Cholesky factor of `sigma`, or `None` when it is singular relative to
/// its own diagonal or to the per-coordinate data scale `scale`.
pub(crate) fn factor_sigma(sigma: &DMatrix<f64>, scale: &[f64]) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(sigma.clone())?.unpack();
    for j in 0..sigma.nrows() {
        let pivot = l[(j, j)] * l[(j, j)];
        let own = sigma[(j, j)];
        if !(pivot > 0.0) || pivot <= SIGMA_COND_TOL * own || pivot <= SIGMA_SCALE_TOL * scale[j] {
            return None;
        }
    }
    Some(l)
}

/// Adds `delta I` with `delta = 1e-10 trace / m` (or `1e-10` for a zero trace).
pub(crate) fn ridge_jitter(s: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let dim = s.nrows() as f64;
    let tr = s.trace();
    let delta = if tr > 0.0 { 1e-10 * tr / dim } else { 1e-10 };
    let mut out = s.clone();
    for i in 0..s.nrows() {
        out[(i, i)] += delta;
    }
    (out, delta)
}
