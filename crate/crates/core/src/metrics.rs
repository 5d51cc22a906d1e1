//! Partition agreement measures: Rand index, adjusted Rand index, normalized
//! mutual information and the normalized information distance.
//!
//! Labels are arbitrary integers; only the induced partitions matter.
//! Entropies use natural logarithms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n_ij` counts of items in cluster `i` of `u` and cluster `j` of `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    total: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

fn check_lengths(u: &[usize], v: &[usize]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

impl ContingencyTable {
    pub fn new(u: &[usize], v: &[usize]) -> Result<Self> {
        check_lengths(u, v)?;
        let (cu, ku) = compact(u);
        let (cv, kv) = compact(v);
        let mut counts = vec![vec![0u64; kv]; ku];
        for (&i, &j) in cu.iter().zip(&cv) {
            counts[i][j] += 1;
        }
        let rows = counts.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kv).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            rows,
            cols,
            total: u.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.rows
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.cols
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of non-empty clusters in `u` and in `v`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    fn identical_partitions(&self) -> bool {
        // every non-empty row and column holds exactly one non-zero cell
        self.rows.len() == self.cols.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

/// Pair-type counts over all `N (N - 1) / 2` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Different clusters in both.
    pub n00: u64,
    /// Same cluster in `u`, different in `v`.
    pub n01: u64,
    /// Different in `u`, same in `v`.
    pub n10: u64,
    /// Same cluster in both.
    pub n11: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

pub fn pair_counts(u: &[usize], v: &[usize]) -> Result<PairCounts> {
    let table = ContingencyTable::new(u, v)?;
    let n11: u64 = table.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let same_u: u64 = table.rows.iter().map(|&a| choose2(a)).sum();
    let same_v: u64 = table.cols.iter().map(|&b| choose2(b)).sum();
    let total = choose2(table.total);
    let n01 = same_u - n11;
    let n10 = same_v - n11;
    Ok(PairCounts {
        n00: total - n11 - n01 - n10,
        n01,
        n10,
        n11,
    })
}

/// `(N00 + N11) / (N choose 2)`; 1 when there are no pairs.
pub fn rand_index(u: &[usize], v: &[usize]) -> Result<f64> {
    let c = pair_counts(u, v)?;
    if c.total() == 0 {
        return Ok(1.0);
    }
    Ok((c.n00 + c.n11) as f64 / c.total() as f64)
}

/// `2 (N00 N11 - N01 N10) / ((N00 + N01)(N01 + N11) + (N00 + N10)(N10 + N11))`.
///
/// When the denominator vanishes the index is 1 for identical partitions
/// and 0 otherwise.
pub fn ari(u: &[usize], v: &[usize]) -> Result<f64> {
    let c = pair_counts(u, v)?;
    let (n00, n01, n10, n11) = (c.n00 as f64, c.n01 as f64, c.n10 as f64, c.n11 as f64);
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0.0 {
        let same = ContingencyTable::new(u, v)?.identical_partitions();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok(2.0 * (n00 * n11 - n01 * n10) / denom)
}

fn entropy_of(sums: &[u64], total: u64) -> f64 {
    let n = total as f64;
    sums.iter()
        .filter(|&&a| a > 0)
        .map(|&a| {
            let p = a as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `H(U) = -sum (a_i / N) ln (a_i / N)`.
pub fn entropy(u: &[usize]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    let table = ContingencyTable::new(u, u).expect("equal lengths");
    entropy_of(&table.rows, table.total)
}

fn mi_of(table: &ContingencyTable) -> f64 {
    let n = table.total as f64;
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let nij = c as f64;
            let expected = table.rows[i] as f64 * table.cols[j] as f64;
            mi += nij / n * (nij * n / expected).ln();
        }
    }
    mi.max(0.0)
}

pub fn mutual_information(u: &[usize], v: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(u, v)?;
    if table.total == 0 {
        return Ok(0.0);
    }
    Ok(mi_of(&table))
}

/// Full set of agreement measures between two labelings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub ri: f64,
    pub ari: f64,
    pub nmi_sqrt: f64,
    pub nmi_max: f64,
    pub nid: f64,
    pub n: usize,
    pub k_u: usize,
    pub k_v: usize,
}

pub fn evaluate(u: &[usize], v: &[usize]) -> Result<Agreement> {
    let table = ContingencyTable::new(u, v)?;
    let (k_u, k_v) = table.shape();
    let nmi = nmi_max(u, v)?;
    Ok(Agreement {
        ri: rand_index(u, v)?,
        ari: ari(u, v)?,
        nmi_sqrt: nmi_sqrt(u, v)?,
        nmi_max: nmi,
        nid: 1.0 - nmi,
        n: u.len(),
        k_u,
        k_v,
    })
}

fn normalized(u: &[usize], v: &[usize], norm: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let table = ContingencyTable::new(u, v)?;
    if table.total == 0 {
        return Ok(1.0);
    }
    // I(U, U) = H(U) exactly; avoid the rounding of the ratio
    if table.identical_partitions() {
        return Ok(1.0);
    }
    let hu = entropy_of(&table.rows, table.total);
    let hv = entropy_of(&table.cols, table.total);
    let d = norm(hu, hv);
    if d <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi_of(&table) / d).clamp(0.0, 1.0))
}

/// `I(U, V) / max(H(U), H(V))`.
pub fn nmi_max(u: &[usize], v: &[usize]) -> Result<f64> {
    normalized(u, v, f64::max)
}

/// `I(U, V) / sqrt(H(U) H(V))`.
pub fn nmi_sqrt(u: &[usize], v: &[usize]) -> Result<f64> {
    normalized(u, v, |a, b| (a * b).sqrt())
}

/// `1 - NMI_max`.
pub fn nid(u: &[usize], v: &[usize]) -> Result<f64> {
    Ok(1.0 - nmi_max(u, v)?)
}
