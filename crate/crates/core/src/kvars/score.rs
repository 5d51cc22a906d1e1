//! Cluster scores `D_{n,k} = (T - p) ln|Sigma_k| + sum_t e' Sigma_k^{-1} e`.
//!
//! Lower is better. The conditional Gaussian log-likelihood of a series is
//! `-(D + (T - p) m ln 2 pi) / 2`; quadratic forms always go through a
//! triangular solve against the Cholesky factor, never an explicit inverse.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::params::VarParams;
use super::qr::QrCache;
use crate::data::build_regressors;
use crate::error::{Error, Result};

/// `||L^{-1} B||_F^2` for lower-triangular `L`.
fn whitened_norm2(chol: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    chol.solve_lower_triangular(b)
        .map(|xi| xi.norm_squared())
        .unwrap_or(f64::INFINITY)
}

/// Score from raw regressors: builds the residuals `e_t` for
/// `t = p_common + 1 ..= T` and whitens them column by column.
pub fn score_series(series: &DMatrix<f64>, params: &VarParams, p_common: usize) -> Result<f64> {
    if params.order() > p_common {
        return Err(Error::InvalidConfig(format!(
            "model order {} exceeds the common order {p_common}",
            params.order()
        )));
    }
    if series.nrows() != params.dim() {
        return Err(Error::LengthMismatch {
            left: series.nrows(),
            right: params.dim(),
        });
    }
    let block = build_regressors(series, p_common)?;
    let a = params.coefficients();
    let x = block.x.columns(0, a.ncols());
    let residuals_t = block.y.transpose() - a * x.transpose();
    let rows = block.y.nrows() as f64;
    Ok(rows * params.log_det_sigma() + whitened_norm2(params.chol(), &residuals_t))
}

/// Same score through the cached factorization: the residual Gram matrix is
/// `W'W` with `W = [Y_Q - R A'; S]`, so the cost does not depend on `T`.
pub fn score_cached(cache: &QrCache, params: &VarParams) -> f64 {
    let w = cache.residual_factor(params.coefficients());
    cache.rows as f64 * params.log_det_sigma() + whitened_norm2(params.chol(), &w.transpose())
}

/// Converts a score into the series log-likelihood.
pub fn score_to_loglik(score: f64, rows: usize, m: usize) -> f64 {
    -0.5 * (score + (rows * m) as f64 * (2.0 * PI).ln())
}
