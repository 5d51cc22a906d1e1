//! Dataset, hard assignment and VAR regressor construction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A validated collection of `N` multivariate series, each stored as an
/// `m x T` matrix whose column `t` is the observation `Y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    series: Vec<DMatrix<f64>>,
    ids: Option<Vec<String>>,
    m: usize,
    t: usize,
}

impl Dataset {
    /// Validates shapes and finiteness. All series must share `m >= 1` and `T >= 2`.
    pub fn new(series: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = series.first().ok_or(Error::Empty)?;
        let (m, t) = first.shape();
        if m < 1 || t < 2 {
            return Err(Error::TooShort { m, t });
        }
        for (index, s) in series.iter().enumerate() {
            if s.shape() != (m, t) {
                return Err(Error::MixedDims {
                    index,
                    rows: s.nrows(),
                    cols: s.ncols(),
                    expected_rows: m,
                    expected_cols: t,
                });
            }
            if let Some(pos) = s.iter().position(|v| !v.is_finite()) {
                // column-major storage
                return Err(Error::NonFinite {
                    index,
                    row: pos % m,
                    col: pos / m,
                });
            }
        }
        Ok(Self {
            series,
            ids: None,
            m,
            t,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.series.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: self.series.len(),
            });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Series dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Series length `T`.
    pub fn length(&self) -> usize {
        self.t
    }

    pub fn series(&self) -> &[DMatrix<f64>] {
        &self.series
    }

    pub fn get(&self, n: usize) -> &DMatrix<f64> {
        &self.series[n]
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Largest admissible VAR order for this series length.
    pub fn max_order(&self) -> usize {
        self.t - 2
    }
}

/// Hard assignment of `N` items to `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("cluster count must be positive".into()));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange { index, label, k });
        }
        Ok(Self { labels, k })
    }

    /// Builds an assignment from arbitrary labels, numbering clusters by
    /// first appearance.
    pub fn from_raw_labels(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self {
            labels,
            k: map.len().max(1),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices of the items assigned to `cluster`.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(n, &l)| (l == cluster).then_some(n))
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// The `N x K` binary membership matrix; every row sums to one.
    pub fn to_indicator(&self) -> DMatrix<f64> {
        let mut tau = DMatrix::zeros(self.labels.len(), self.k);
        for (n, &l) in self.labels.iter().enumerate() {
            tau[(n, l)] = 1.0;
        }
        tau
    }

    /// Inverse of [`Assignment::to_indicator`]. Rejects rows that are not
    /// exactly one-hot.
    pub fn from_indicator(tau: &DMatrix<f64>) -> Result<Self> {
        let k = tau.ncols();
        let mut labels = Vec::with_capacity(tau.nrows());
        for n in 0..tau.nrows() {
            let row = tau.row(n);
            let ones: Vec<usize> = (0..k).filter(|&j| row[j] == 1.0).collect();
            let binary = row.iter().all(|&v| v == 0.0 || v == 1.0);
            if ones.len() != 1 || !binary {
                return Err(Error::InvalidConfig(format!(
                    "row {n} of the membership matrix is not one-hot"
                )));
            }
            labels.push(ones[0]);
        }
        Self::new(labels, k)
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }
}

/// Stacked regressors and targets of one series for a VAR of order `p`.
///
/// Row `r` corresponds to time `t = p + 1 + r` (1-based) and holds
/// `x = [1, Y_{t-1}', ..., Y_{t-p}']`, `y = Y_t'`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBlock {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub p: usize,
}

/// Number of regressor columns `1 + m p`.
pub fn regressor_width(m: usize, p: usize) -> usize {
    1 + m * p
}

pub fn check_order(p: usize, t: usize) -> Result<()> {
    if p + 2 > t {
        return Err(Error::OrderTooLarge { p, t });
    }
    Ok(())
}

pub fn build_regressors(series: &DMatrix<f64>, p: usize) -> Result<RegressorBlock> {
    let (m, t) = series.shape();
    check_order(p, t)?;
    let rows = t - p;
    let width = regressor_width(m, p);
    let mut x = DMatrix::zeros(rows, width);
    let mut y = DMatrix::zeros(rows, m);
    for r in 0..rows {
        // 0-based column of Y_t
        let col = p + r;
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            let src = series.column(col - lag);
            for i in 0..m {
                x[(r, 1 + (lag - 1) * m + i)] = src[i];
            }
        }
        for i in 0..m {
            y[(r, i)] = series[(i, col)];
        }
    }
    Ok(RegressorBlock { x, y, p })
}
