//! Reference implementations used as oracles. They share no numerical code
//! with the library: regressors are built by hand, least squares goes
//! through the normal equations with an explicit inverse, and quadratic
//! forms use `Sigma^{-1}` directly.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// `(X, Y)` with rows `t = p+1..=T` and `X_t = [1, Y_{t-1}', ..., Y_{t-p}']`.
pub fn lagged(series: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, t) = series.shape();
    let rows = t - p;
    let mut x = DMatrix::zeros(rows, 1 + m * p);
    let mut y = DMatrix::zeros(rows, m);
    for r in 0..rows {
        let now = p + r;
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            for i in 0..m {
                x[(r, 1 + (lag - 1) * m + i)] = series[(i, now - lag)];
            }
        }
        for i in 0..m {
            y[(r, i)] = series[(i, now)];
        }
    }
    (x, y)
}

/// Pooled least squares and residual covariance for one cluster of series.
pub fn naive_fit(series: &[&DMatrix<f64>], p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = series[0].nrows();
    let q = 1 + m * p;
    let mut g = DMatrix::zeros(q, q);
    let mut h = DMatrix::zeros(q, m);
    for s in series {
        let (x, y) = lagged(s, p);
        g += x.transpose() * &x;
        h += x.transpose() * &y;
    }
    let a = (g.try_inverse().expect("invertible Gram") * h).transpose();
    let mut sigma = DMatrix::zeros(m, m);
    let mut count = 0.0;
    for s in series {
        let (x, y) = lagged(s, p);
        let e = y - x * a.transpose();
        sigma += e.transpose() * &e;
        count += e.nrows() as f64;
    }
    (a, sigma / count)
}

/// `(T - p) ln|Sigma| + sum_t e_t' Sigma^{-1} e_t` on rows `t = p_common+1..=T`.
pub fn naive_score(series: &DMatrix<f64>, a: &DMatrix<f64>, sigma: &DMatrix<f64>, p_common: usize) -> f64 {
    let (x, y) = lagged(series, p_common);
    let xa = x.columns(0, a.ncols()).into_owned();
    let e = y - xa * a.transpose();
    let inv = sigma.clone().try_inverse().expect("invertible Sigma");
    let mut quad = 0.0;
    for r in 0..e.nrows() {
        let row = e.row(r).transpose();
        quad += (row.transpose() * &inv * &row)[(0, 0)];
    }
    e.nrows() as f64 * sigma.determinant().ln() + quad
}

/// Conditional Gaussian log-likelihood evaluated term by term from the density.
pub fn direct_loglik(series: &DMatrix<f64>, a: &DMatrix<f64>, sigma: &DMatrix<f64>, p_common: usize) -> f64 {
    let (x, y) = lagged(series, p_common);
    let xa = x.columns(0, a.ncols()).into_owned();
    let m = sigma.nrows() as f64;
    let inv = sigma.clone().try_inverse().unwrap();
    let det = sigma.determinant();
    let mut ll = 0.0;
    for r in 0..y.nrows() {
        let e: DVector<f64> = (y.row(r) - xa.row(r) * a.transpose()).transpose();
        let dens = (-(0.5) * (e.transpose() * &inv * &e)[(0, 0)]).exp() / ((2.0 * PI).powf(m) * det).sqrt();
        ll += dens.ln();
    }
    ll
}

pub fn score_to_loglik(d: f64, rows: usize, m: usize) -> f64 {
    -0.5 * (d + (rows * m) as f64 * (2.0 * PI).ln())
}

pub struct NaiveRun {
    /// Labels used by each parameter step.
    pub history: Vec<Vec<usize>>,
    pub params: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Plain alternating minimization from the given parameters. Returns `None`
/// if a cluster empties (the reference has no rescue step).
pub fn naive_kvars(
    series: &[DMatrix<f64>],
    init: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    p: usize,
    max_iters: usize,
) -> Option<NaiveRun> {
    let k = init.len();
    let mut params = init;
    let mut labels: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    for _ in 0..max_iters {
        let proposal: Vec<usize> = series
            .iter()
            .map(|s| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, (a, sigma)) in params.iter().enumerate() {
                    let d = naive_score(s, a, sigma, p);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect();
        if labels.as_ref() == Some(&proposal) {
            break;
        }
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let members: Vec<&DMatrix<f64>> = series.iter().zip(&proposal).filter(|(_, &l)| l == c).map(|(s, _)| s).collect();
            if members.is_empty() {
                return None;
            }
            next.push(naive_fit(&members, p));
        }
        params = next;
        history.push(proposal.clone());
        labels = Some(proposal);
    }
    Some(NaiveRun { history, params })
}

/// Lloyd's algorithm with ties to the lowest index. Returns the label
/// vectors used for each mean update and the smallest assignment margin
/// seen (to reject near-tie instances), or `None` if a cluster empties.
pub fn lloyd(points: &[Vec<f64>], centers: &[Vec<f64>], max_iters: usize) -> Option<(Vec<Vec<usize>>, f64)> {
    let mut centers = centers.to_vec();
    let mut labels: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut margin = f64::INFINITY;
    for _ in 0..max_iters {
        let mut proposal = Vec::with_capacity(points.len());
        for x in points {
            let d: Vec<f64> = centers
                .iter()
                .map(|c| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let mut best = 0;
            for j in 1..d.len() {
                if d[j] < d[best] {
                    best = j;
                }
            }
            let second = d.iter().enumerate().filter(|&(j, _)| j != best).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
            margin = margin.min(second - d[best]);
            proposal.push(best);
        }
        if labels.as_ref() == Some(&proposal) {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&proposal).filter(|(_, &l)| l == c).map(|(x, _)| x).collect();
            if members.is_empty() {
                return None;
            }
            for (i, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|x| x[i]).sum::<f64>() / members.len() as f64;
            }
        }
        history.push(proposal.clone());
        labels = Some(proposal);
    }
    Some((history, margin))
}

fn comb2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index in the contingency-table form (index minus its
/// expectation under the hypergeometric model, over max minus expectation).
pub fn hubert_arabie(u: &[usize], v: &[usize]) -> f64 {
    let ku = u.iter().max().map_or(0, |m| m + 1);
    let kv = v.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; kv]; ku];
    for (&a, &b) in u.iter().zip(v) {
        table[a][b] += 1.0;
    }
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let b: f64 = (0..kv).map(|j| comb2(table.iter().map(|r| r[j]).sum())).sum();
    let total = comb2(u.len() as f64);
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    (index - expected) / (max - expected)
}

/// Global maximum of the classification log-likelihood over all
/// two-cluster partitions with both clusters non-empty.
pub fn brute_force_two_clusters(series: &[DMatrix<f64>], p: usize) -> f64 {
    let n = series.len();
    let m = series[0].nrows();
    let rows = series[0].ncols() - p;
    let mut best = f64::NEG_INFINITY;
    // item 0 always in cluster 0: halves the search by symmetry
    for mask in 1u32..(1 << (n - 1)) {
        let in_one = |i: usize| i > 0 && (mask >> (i - 1)) & 1 == 1;
        let mut total = 0.0;
        for c in [false, true] {
            let members: Vec<&DMatrix<f64>> = (0..n).filter(|&i| in_one(i) == c).map(|i| &series[i]).collect();
            let (a, sigma) = naive_fit(&members, p);
            for s in &members {
                total += score_to_loglik(naive_score(s, &a, &sigma, p), rows, m);
            }
        }
        best = best.max(total);
    }
    best
}

/// Sample covariance of a long simulated path of the VAR, computed with an
/// independent recursion.
pub fn simulated_covariance(a: &DMatrix<f64>, chol: &DMatrix<f64>, p: usize, steps: usize, seed: u64) -> DMatrix<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let m = a.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut hist: Vec<DVector<f64>> = vec![DVector::zeros(m); p.max(1)];
    let burn = 2000;
    let mut sum = DVector::zeros(m);
    let mut outer = DMatrix::zeros(m, m);
    for step in 0..steps + burn {
        let mut y = a.column(0).into_owned();
        for lag in 1..=p {
            y += a.columns(1 + (lag - 1) * m, m) * &hist[lag - 1];
        }
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        y += chol * z;
        if p > 0 {
            hist.rotate_right(1);
            hist[0] = y.clone();
        }
        if step >= burn {
            sum += &y;
            outer += &y * y.transpose();
        }
    }
    let n = steps as f64;
    let mean = sum / n;
    outer / n - &mean * mean.transpose()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
