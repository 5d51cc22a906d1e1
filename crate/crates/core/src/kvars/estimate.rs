//! Least-squares VAR estimation from cached QR factors.

use log::warn;
use nalgebra::{Cholesky, DMatrix};

use super::params::{factor_sigma, ridge_jitter, symmetrize, VarParams};
use super::qr::{QrCache, RANK_TOL};
use crate::data::regressor_width;
use crate::error::{Error, Result};

fn leading(cache: &QrCache, qk: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if qk > cache.width() {
        return Err(Error::InvalidConfig(format!(
            "model width {qk} exceeds cached regressor width {}",
            cache.width()
        )));
    }
    Ok((
        cache.r.view((0, 0), (qk, qk)).into_owned(),
        cache.yq.rows(0, qk).into_owned(),
    ))
}

fn factor_gram(g: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(g.clone())?;
    let l = chol.l_dirty();
    let ok = (0..g.nrows()).all(|j| {
        let pivot = l[(j, j)] * l[(j, j)];
        pivot > RANK_TOL * RANK_TOL * g[(j, j)]
    });
    ok.then_some(chol)
}

/// Pooled least squares for one cluster: solves
/// `(sum R'R) A' = sum R' Y_Q` through a Cholesky factorization of the
/// pooled Gram matrix. Returns `A` of shape `m x (1 + m p)`.
pub fn fit_var(caches: &[&QrCache], p: usize, ridge: bool) -> Result<DMatrix<f64>> {
    let first = caches.first().ok_or(Error::Empty)?;
    let m = first.dim();
    let qk = regressor_width(m, p);
    let mut g = DMatrix::zeros(qk, qk);
    let mut b = DMatrix::zeros(qk, m);
    for cache in caches {
        let (r, yq) = leading(cache, qk)?;
        g += r.transpose() * &r;
        b += r.transpose() * yq;
    }
    let chol = match factor_gram(&g) {
        Some(c) => c,
        None if ridge => {
            let (jittered, delta) = ridge_jitter(&g);
            warn!("pooled Gram matrix is singular; adding ridge {delta:e}");
            Cholesky::new(jittered).ok_or(Error::RankDeficient { series: None })?
        }
        None => return Err(Error::RankDeficient { series: None }),
    };
    Ok(chol.solve(&b).transpose())
}

/// Noise covariance `sum E'E / ((T - p) |I_k|)` and its Cholesky factor.
///
/// The residual blocks `[Y_Q - R A'; S]` of all members are stacked and
/// reduced by one QR factorization, so `E'E` is never formed from raw
/// residuals.
pub fn fit_sigma(caches: &[&QrCache], a: &DMatrix<f64>, ridge: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let first = caches.first().ok_or(Error::Empty)?;
    let m = first.dim();
    let blocks: Vec<DMatrix<f64>> = caches.iter().map(|c| c.residual_factor(a)).collect();
    let rows: usize = caches.iter().map(|c| c.rows).sum();
    let mut scale = vec![0.0; m];
    for c in caches {
        for (s, y) in scale.iter_mut().zip(&c.y_moment) {
            *s += y / caches.len() as f64;
        }
    }
    let sigma = pooled_outer(&blocks, m) / rows as f64;
    finish_sigma(sigma, &scale, ridge)
}

/// Covariance from raw residual blocks (`(T - p) x m` each), divided by the
/// total number of rows.
pub fn sigma_from_residuals(residuals: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = residuals.first().ok_or(Error::Empty)?;
    let m = first.ncols();
    let rows: usize = residuals.iter().map(|e| e.nrows()).sum();
    let sigma = pooled_outer(residuals, m) / rows as f64;
    finish_sigma(sigma, &vec![0.0; m], false).map(|(s, _)| s)
}

/// `sum_b B'B` computed as `V'V` with `V` the triangular factor of the
/// vertically stacked blocks.
fn pooled_outer(blocks: &[DMatrix<f64>], m: usize) -> DMatrix<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut stacked = DMatrix::zeros(total, m);
    let mut at = 0;
    for b in blocks {
        stacked.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    let v = stacked.qr().r();
    symmetrize(&(v.transpose() * v))
}

fn finish_sigma(sigma: DMatrix<f64>, scale: &[f64], ridge: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if let Some(l) = factor_sigma(&sigma, scale) {
        return Ok((sigma, l));
    }
    if !ridge {
        return Err(Error::SingularSigma { series: None });
    }
    let (jittered, delta) = ridge_jitter(&sigma);
    warn!("noise covariance is singular; adding ridge {delta:e}");
    let l = Cholesky::new(jittered.clone())
        .ok_or(Error::SingularSigma { series: None })?
        .unpack();
    Ok((jittered, l))
}

/// Maximum-likelihood VAR(p) parameters of a cluster.
pub fn fit_cluster(caches: &[&QrCache], p: usize, ridge: bool) -> Result<VarParams> {
    let a = fit_var(caches, p, ridge)?;
    let (sigma, chol) = fit_sigma(caches, &a, ridge)?;
    Ok(VarParams::from_parts(a, sigma, chol, p))
}

/// Per-series fit `A' = R^{-1} Y_Q` by back substitution, with the
/// covariance from the same series' residual factor.
pub fn fit_single_series(cache: &QrCache, p: usize, ridge: bool) -> Result<VarParams> {
    let qk = regressor_width(cache.dim(), p);
    let (r, yq) = leading(cache, qk)?;
    let full_rank = (0..qk).all(|j| {
        let col = r.column(j).norm();
        col > 0.0 && r[(j, j)].abs() > RANK_TOL * col
    });
    let a = match (full_rank, r.solve_upper_triangular(&yq)) {
        (true, Some(at)) => at.transpose(),
        _ if ridge => fit_var(&[cache], p, true)?,
        _ => return Err(Error::RankDeficient { series: None }),
    };
    let (sigma, chol) = fit_sigma(&[cache], &a, ridge)?;
    Ok(VarParams::from_parts(a, sigma, chol, p))
}
