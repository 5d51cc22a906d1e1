//! Coordinate-ascent solver for the classification-likelihood (k-MLE) problem.
//!
//! The solver alternates a label step (each item goes to the cluster under
//! which its log-density is largest) and a parameter step (each cluster's
//! parameters are refit by maximum likelihood on its members). Both steps
//! can only increase the joint log-likelihood
//! `L(tau, Theta) = sum_n sum_k tau_{n,k} l(x_n, theta_k)`, and since there
//! are finitely many label vectors the iteration halts.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Assignment;
use crate::error::{Error, Result};

/// A parametric cluster model bound to a fixed collection of items.
///
/// Items are addressed by index so that implementations can keep per-item
/// caches (the VAR model keeps one QR factorization per series).
pub trait ClusterFamily: Sync {
    type Params: Clone + Send + Sync;

    fn n_items(&self) -> usize;

    /// `l(x_n, theta)`: the log-density of item `item` under `params`.
    fn log_density(&self, item: usize, params: &Self::Params) -> f64;

    /// Maximum-likelihood parameters of cluster `cluster` given its members.
    /// Must be deterministic for a fixed member set.
    fn fit_mle(&self, cluster: usize, members: &[usize]) -> Result<Self::Params>;

    /// Distance used by the parameter stopping rule.
    fn params_distance(&self, a: &Self::Params, b: &Self::Params) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Stop when no cluster's parameters move more than epsilon.
    ParamTol,
    /// Stop when the joint log-likelihood changes by less than epsilon.
    LogLikTol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub mode: StopMode,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            mode: StopMode::LogLikTol,
            epsilon: 1e-6,
            max_iters: 200,
        }
    }
}

impl StopRule {
    pub fn new(mode: StopMode, epsilon: f64, max_iters: usize) -> Result<Self> {
        let rule = Self {
            mode,
            epsilon,
            max_iters,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be finite and positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }

    /// Applies the configured rule to one parameter step.
    ///
    /// `param_moves` holds the per-cluster parameter distances between the
    /// previous and the updated parameters.
    pub fn is_satisfied(&self, param_moves: &[f64], prev_loglik: f64, next_loglik: f64) -> bool {
        match self.mode {
            StopMode::ParamTol => param_moves.iter().all(|&d| d < self.epsilon),
            StopMode::LogLikTol => (next_loglik - prev_loglik).abs() < self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyClusterPolicy {
    /// Re-seed an emptied cluster with the worst-fitting item.
    #[default]
    Rescue,
    /// Fail with [`Error::DegenerateCluster`].
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub stop: StopRule,
    pub empty_clusters: EmptyClusterPolicy,
    pub parallel: bool,
    /// Keep every visited label vector in [`FitResult::label_history`].
    pub record_history: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            stop: StopRule::default(),
            empty_clusters: EmptyClusterPolicy::Rescue,
            parallel: true,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The stopping rule fired and the next label step confirmed the labels.
    Converged,
    MaxIters,
    /// The label step reproduced the current labels.
    LabelFixedPoint,
}

/// Checkable part of the partial-maximum conditions: neither half-step can
/// improve the final point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialMaxCertificate {
    pub tau_stable: bool,
    pub theta_stable: bool,
}

impl PartialMaxCertificate {
    pub fn holds(&self) -> bool {
        self.tau_stable && self.theta_stable
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<P> {
    pub assignment: Assignment,
    pub params: Vec<P>,
    /// Joint log-likelihood after each parameter step.
    pub trace: Vec<f64>,
    /// Number of completed parameter steps.
    pub iters: usize,
    pub stop_reason: StopReason,
    pub certificate: PartialMaxCertificate,
    /// Label vector after each parameter step; empty unless requested.
    pub label_history: Vec<Vec<usize>>,
}

impl<P> FitResult<P> {
    pub fn final_loglik(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Fills the `N x K` matrix of `l(x_n, theta_k)`.
pub fn loglik_matrix<F: ClusterFamily>(family: &F, params: &[F::Params], parallel: bool) -> DMatrix<f64> {
    let n = family.n_items();
    let k = params.len();
    let row = |i: usize| -> Vec<f64> { params.iter().map(|p| family.log_density(i, p)).collect() };
    let rows: Vec<Vec<f64>> = if parallel {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    DMatrix::from_fn(n, k, |i, j| rows[i][j])
}

/// Label step: row-wise argmax, ties to the lowest cluster index.
pub fn tau_step(loglik: &DMatrix<f64>) -> Result<Assignment> {
    let (n, k) = loglik.shape();
    if k == 0 {
        return Err(Error::InvalidConfig("log-likelihood matrix has no clusters".into()));
    }
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let mut best = 0;
        for cluster in 0..k {
            let v = loglik[(row, cluster)];
            if !v.is_finite() {
                return Err(Error::NonFiniteLoglik { row, cluster });
            }
            if v > loglik[(row, best)] {
                best = cluster;
            }
        }
        labels.push(best);
    }
    Assignment::new(labels, k)
}

#[derive(Debug, Clone)]
pub struct ThetaStep<P> {
    /// Labels after any empty-cluster rescue.
    pub assignment: Assignment,
    pub params: Vec<P>,
    /// Items moved into previously empty clusters, in rescue order.
    pub rescued: Vec<usize>,
}

/// Parameter step: per-cluster maximum likelihood.
///
/// `fit_scores[n]` is the log-density of item `n` under its current cluster;
/// the rescue policy moves the lowest-scoring item (from a cluster with at
/// least two members) into each empty cluster.
pub fn theta_step<F: ClusterFamily>(
    family: &F,
    assignment: &Assignment,
    fit_scores: &[f64],
    policy: EmptyClusterPolicy,
    parallel: bool,
) -> Result<ThetaStep<F::Params>> {
    let k = assignment.k();
    let mut labels = assignment.labels().to_vec();
    let mut sizes = assignment.cluster_sizes();
    let mut rescued = Vec::new();
    for cluster in 0..k {
        if sizes[cluster] > 0 {
            continue;
        }
        if policy == EmptyClusterPolicy::Strict {
            return Err(Error::DegenerateCluster {
                cluster,
                source: Box::new(Error::EmptyCluster { cluster }),
            });
        }
        let donor = (0..labels.len())
            .filter(|&n| sizes[labels[n]] >= 2 && !rescued.contains(&n))
            .min_by(|&a, &b| fit_scores[a].total_cmp(&fit_scores[b]).then(a.cmp(&b)));
        let Some(item) = donor else {
            return Err(Error::DegenerateCluster {
                cluster,
                source: Box::new(Error::EmptyCluster { cluster }),
            });
        };
        sizes[labels[item]] -= 1;
        labels[item] = cluster;
        sizes[cluster] += 1;
        rescued.push(item);
    }
    let assignment = Assignment::new(labels, k)?;
    let fit = |cluster: usize| -> Result<F::Params> {
        family
            .fit_mle(cluster, &assignment.members(cluster))
            .map_err(|e| Error::DegenerateCluster {
                cluster,
                source: Box::new(e),
            })
    };
    let params: Result<Vec<F::Params>> = if parallel {
        (0..k).into_par_iter().map(fit).collect()
    } else {
        (0..k).map(fit).collect()
    };
    Ok(ThetaStep {
        assignment,
        params: params?,
        rescued,
    })
}

/// `L(tau, Theta)`, summed in item order.
pub fn total_loglik<F: ClusterFamily>(family: &F, assignment: &Assignment, params: &[F::Params]) -> f64 {
    assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(n, &l)| family.log_density(n, &params[l]))
        .sum()
}

pub fn run_kmle<F: ClusterFamily>(
    family: &F,
    init_params: Vec<F::Params>,
    config: &EngineConfig,
) -> Result<FitResult<F::Params>> {
    config.stop.validate()?;
    let k = init_params.len();
    let n = family.n_items();
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one cluster".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds the number of items {n}")));
    }

    let mut params = init_params;
    let mut current: Option<Assignment> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let mut rule_fired = false;
    let stop_reason = loop {
        let loglik = loglik_matrix(family, &params, config.parallel);
        let proposal = tau_step(&loglik)?;
        if current.as_ref() == Some(&proposal) {
            break if rule_fired {
                StopReason::Converged
            } else {
                StopReason::LabelFixedPoint
            };
        }
        if trace.len() >= config.stop.max_iters {
            break StopReason::MaxIters;
        }

        let scores: Vec<f64> = (0..n).map(|i| loglik[(i, proposal.labels()[i])]).collect();
        let prev_loglik = match trace.last() {
            Some(&v) => v,
            None => scores.iter().sum(),
        };
        let step = theta_step(family, &proposal, &scores, config.empty_clusters, config.parallel)?;
        let next_loglik = total_loglik(family, &step.assignment, &step.params);
        let moves: Vec<f64> = if config.stop.mode == StopMode::ParamTol {
            params
                .iter()
                .zip(&step.params)
                .map(|(a, b)| family.params_distance(a, b))
                .collect()
        } else {
            Vec::new()
        };
        rule_fired = config.stop.is_satisfied(&moves, prev_loglik, next_loglik);

        params = step.params;
        trace.push(next_loglik);
        if config.record_history {
            history.push(step.assignment.labels().to_vec());
        }
        current = Some(step.assignment);
    };

    let assignment = current.expect("at least one parameter step runs");
    let certificate = check_partial_maximum(family, &assignment, &params, config.stop.epsilon, config.parallel);
    Ok(FitResult {
        assignment,
        params,
        iters: trace.len(),
        trace,
        stop_reason,
        certificate,
        label_history: history,
    })
}

/// Re-runs both half-steps from the final point.
///
/// The label step is stable when every item's current cluster attains the
/// row maximum (ties allowed); the parameter step is stable when refitting
/// moves no cluster by `epsilon` or more.
pub fn check_partial_maximum<F: ClusterFamily>(
    family: &F,
    assignment: &Assignment,
    params: &[F::Params],
    epsilon: f64,
    parallel: bool,
) -> PartialMaxCertificate {
    let loglik = loglik_matrix(family, params, parallel);
    let tau_stable = assignment.labels().iter().enumerate().all(|(n, &l)| {
        let own = loglik[(n, l)];
        let best = loglik.row(n).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        own.is_finite() && own >= best - 1e-12 * best.abs().max(1.0)
    });
    let theta_stable = (0..assignment.k()).all(|cluster| {
        let members = assignment.members(cluster);
        match family.fit_mle(cluster, &members) {
            Ok(refit) => family.params_distance(&params[cluster], &refit) < epsilon,
            Err(_) => false,
        }
    });
    PartialMaxCertificate {
        tau_stable,
        theta_stable,
    }
}
