use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{build_regressors, check_order, Dataset, RegressorBlock};
use crate::error::Result;

/// Relative threshold on `|R_jj| / ||X_j||` below which a regressor column
/// is treated as a linear combination of the preceding ones.
pub(crate) const RANK_TOL: f64 = 1e-6;

/// Per-series QR factorization of the augmented block `[X | Y] = Q [[R, Y_Q], [0, S]]`.
///
/// `R` is the triangular factor of the regressors, `Y_Q = Q' Y`, and `S`
/// carries the part of `Y` orthogonal to the regressor span, so that for any
/// coefficient matrix `A` the residual Gram matrix is
/// `E'E = (Y_Q - R A')'(Y_Q - R A') + S'S`.
#[derive(Debug, Clone)]
pub struct QrCache {
    pub r: DMatrix<f64>,
    pub yq: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// Number of regression rows `T - p`.
    pub rows: usize,
    /// Per-coordinate uncentred second moment of the targets.
    pub y_moment: Vec<f64>,
    pub rank_deficient: bool,
}

impl QrCache {
    pub fn from_block(block: &RegressorBlock) -> Self {
        let rows = block.x.nrows();
        let q = block.x.ncols();
        let m = block.y.ncols();
        let mut z = DMatrix::zeros(rows, q + m);
        z.columns_mut(0, q).copy_from(&block.x);
        z.columns_mut(q, m).copy_from(&block.y);
        let r_thin = z.qr().r();
        // short series give fewer than q + m rows; the missing rows are zero
        let mut full = DMatrix::zeros(q + m, q + m);
        full.rows_mut(0, r_thin.nrows()).copy_from(&r_thin);

        let r = full.view((0, 0), (q, q)).into_owned();
        let yq = full.view((0, q), (q, m)).into_owned();
        let s = full.view((q, q), (m, m)).into_owned();
        let y_moment = (0..m)
            .map(|i| block.y.column(i).norm_squared() / rows as f64)
            .collect();
        let rank_deficient = is_rank_deficient(&r);
        Self {
            r,
            yq,
            s,
            rows,
            y_moment,
            rank_deficient,
        }
    }

    /// Regressor width `1 + m p` of the cached factorization.
    pub fn width(&self) -> usize {
        self.r.ncols()
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// `R' R`, equal to `X' X`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.r.transpose() * &self.r
    }

    /// `[Y_Q - R A'; S]`, whose Gram matrix is the residual Gram `E'E`.
    /// `a` may have fewer columns than the cache width (a lower order).
    pub fn residual_factor(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.width();
        let m = self.dim();
        let qk = a.ncols();
        let mut w = DMatrix::zeros(q + m, m);
        let fitted = self.r.columns(0, qk) * a.transpose();
        w.rows_mut(0, q).copy_from(&(&self.yq - fitted));
        w.rows_mut(q, m).copy_from(&self.s);
        w
    }
}

fn is_rank_deficient(r: &DMatrix<f64>) -> bool {
    (0..r.ncols()).any(|j| {
        let col_norm = r.column(j).norm();
        r[(j, j)].abs() <= RANK_TOL * col_norm || col_norm == 0.0
    })
}

/// One cache per series for a common order `p`.
pub fn precompute_qr(dataset: &Dataset, p: usize, parallel: bool) -> Result<Vec<QrCache>> {
    check_order(p, dataset.length())?;
    let one = |s: &DMatrix<f64>| build_regressors(s, p).map(|b| QrCache::from_block(&b));
    if parallel {
        dataset.series().par_iter().map(one).collect()
    } else {
        dataset.series().iter().map(one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matches_explicit() {
        let s = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let block = build_regressors(&s, 1).unwrap();
        let cache = QrCache::from_block(&block);
        let explicit = DMatrix::from_row_slice(2, 2, &[3.0, 6.0, 6.0, 14.0]);
        assert!((cache.gram() - explicit).norm() < 1e-12);
        assert!(!cache.rank_deficient);
        // the series is an exact linear recursion, so S vanishes
        assert!(cache.s.norm() < 1e-12);
    }

    #[test]
    fn constant_series_is_flagged() {
        let s = DMatrix::from_element(2, 20, 3.0);
        let block = build_regressors(&s, 1).unwrap();
        assert!(QrCache::from_block(&block).rank_deficient);
    }

    #[test]
    fn residual_factor_reproduces_residual_gram() {
        let s = DMatrix::from_fn(2, 15, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * (j as f64).sin());
        let block = build_regressors(&s, 2).unwrap();
        let cache = QrCache::from_block(&block);
        let a = DMatrix::from_fn(2, 5, |i, j| 0.1 * (i as f64 + 1.0) - 0.05 * j as f64);
        let e = &block.y - &block.x * a.transpose();
        let w = cache.residual_factor(&a);
        let lhs = e.transpose() * &e;
        let rhs = w.transpose() * &w;
        assert!((lhs - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn short_series_pads() {
        // T - p = 3 rows but q + m = 4 columns
        let s = DMatrix::from_fn(1, 5, |_, j| (j * j) as f64);
        let block = build_regressors(&s, 2).unwrap();
        let cache = QrCache::from_block(&block);
        assert_eq!(cache.s.shape(), (1, 1));
        assert!((cache.gram() - block.x.transpose() * &block.x).norm() < 1e-10);
    }
}
