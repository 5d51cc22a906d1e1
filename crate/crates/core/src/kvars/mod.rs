//! k-VARs: hard clustering of multivariate time series with one Gaussian
//! vector autoregression per cluster.
//!
//! Each series is factorized once (`[X | Y] = Q R`); afterwards every label
//! step and every parameter step works on the small triangular factors only.
//! Scores for all clusters are evaluated on the same rows
//! `t = p + 1 ..= T` with `p` the largest cluster order, so they are
//! directly comparable.

mod estimate;
mod init;
mod params;
mod qr;
mod score;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use estimate::{fit_cluster, fit_sigma, fit_single_series, fit_var, sigma_from_residuals};
pub use init::{init_params, InitMode, InitSelection};
pub use params::VarParams;
pub use qr::{precompute_qr, QrCache};
pub use score::{score_cached, score_series, score_to_loglik};

use crate::data::Dataset;
use crate::engine::{run_kmle, ClusterFamily, EmptyClusterPolicy, EngineConfig, FitResult, StopRule};
use crate::error::{Error, Result};

/// The VAR cluster family bound to a dataset's cached factorizations.
#[derive(Debug, Clone)]
pub struct KVarsModel {
    caches: Vec<QrCache>,
    m: usize,
    p: usize,
    orders: Vec<usize>,
    ridge: bool,
}

impl KVarsModel {
    /// All clusters share order `p`.
    pub fn new(dataset: &Dataset, p: usize, ridge: bool, parallel: bool) -> Result<Self> {
        Ok(Self {
            caches: precompute_qr(dataset, p, parallel)?,
            m: dataset.dim(),
            p,
            orders: Vec::new(),
            ridge,
        })
    }

    /// Per-cluster orders; scoring uses their maximum as the common order.
    pub fn with_orders(dataset: &Dataset, orders: Vec<usize>, ridge: bool, parallel: bool) -> Result<Self> {
        let p = orders
            .iter()
            .copied()
            .max()
            .ok_or_else(|| Error::InvalidConfig("need at least one cluster order".into()))?;
        let mut model = Self::new(dataset, p, ridge, parallel)?;
        model.orders = orders;
        Ok(model)
    }

    pub fn n_series(&self) -> usize {
        self.caches.len()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Common order `p` that fixes the scoring rows.
    pub fn common_order(&self) -> usize {
        self.p
    }

    /// Rows per series, `T - p`.
    pub fn rows(&self) -> usize {
        self.caches[0].rows
    }

    pub fn cluster_order(&self, cluster: usize) -> usize {
        self.orders.get(cluster).copied().unwrap_or(self.p)
    }

    pub fn ridge(&self) -> bool {
        self.ridge
    }

    pub fn cache(&self, series: usize) -> &QrCache {
        &self.caches[series]
    }

    pub fn caches(&self) -> &[QrCache] {
        &self.caches
    }

    pub fn score(&self, series: usize, params: &VarParams) -> f64 {
        score_cached(&self.caches[series], params)
    }

    /// `N x K` matrix of scores.
    pub fn score_matrix(&self, params: &[VarParams], parallel: bool) -> Result<DMatrix<f64>> {
        for p in params {
            if p.order() > self.p || p.dim() != self.m {
                return Err(Error::InvalidConfig(format!(
                    "model VAR({}) of dimension {} is incompatible with common order {} and dimension {}",
                    p.order(),
                    p.dim(),
                    self.p,
                    self.m
                )));
            }
        }
        let row = |n: usize| -> Vec<f64> { params.iter().map(|p| self.score(n, p)).collect() };
        let rows: Vec<Vec<f64>> = if parallel {
            (0..self.n_series()).into_par_iter().map(row).collect()
        } else {
            (0..self.n_series()).map(row).collect()
        };
        Ok(DMatrix::from_fn(self.n_series(), params.len(), |i, j| rows[i][j]))
    }
}

impl ClusterFamily for KVarsModel {
    type Params = VarParams;

    fn n_items(&self) -> usize {
        self.caches.len()
    }

    fn log_density(&self, item: usize, params: &VarParams) -> f64 {
        score_to_loglik(self.score(item, params), self.rows(), self.m)
    }

    fn fit_mle(&self, cluster: usize, members: &[usize]) -> Result<VarParams> {
        if members.is_empty() {
            return Err(Error::EmptyCluster { cluster });
        }
        let caches: Vec<&QrCache> = members.iter().map(|&n| &self.caches[n]).collect();
        fit_cluster(&caches, self.cluster_order(cluster), self.ridge).map_err(|e| match (e, members) {
            (Error::SingularSigma { .. }, [only]) => Error::SingularSigma { series: Some(*only) },
            (Error::RankDeficient { .. }, [only]) => Error::RankDeficient { series: Some(*only) },
            (e, _) => e,
        })
    }

    fn params_distance(&self, a: &VarParams, b: &VarParams) -> f64 {
        a.distance(b)
    }
}

/// Evaluates the configured stopping rule between two parameter iterates.
pub fn stopping_check(prev: &[VarParams], next: &[VarParams], prev_loglik: f64, next_loglik: f64, rule: &StopRule) -> bool {
    let moves: Vec<f64> = prev.iter().zip(next).map(|(a, b)| a.distance(b)).collect();
    rule.is_satisfied(&moves, prev_loglik, next_loglik)
}

#[derive(Debug, Clone)]
pub struct KVarsConfig {
    pub k: usize,
    pub p: usize,
    pub init: InitMode,
    pub stop: StopRule,
    pub restarts: usize,
    pub seed: u64,
    pub ridge: bool,
    pub empty_clusters: EmptyClusterPolicy,
    pub parallel: bool,
    /// Only restarts whose final log-likelihood reaches this value compete.
    pub loglik_threshold: Option<f64>,
}

impl KVarsConfig {
    pub fn new(k: usize, p: usize) -> Self {
        Self {
            k,
            p,
            init: InitMode::Random,
            stop: StopRule::default(),
            restarts: 1,
            seed: 0,
            ridge: false,
            empty_clusters: EmptyClusterPolicy::Rescue,
            parallel: true,
            loglik_threshold: None,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        self.stop.validate()?;
        if self.k == 0 || self.k > dataset.len() {
            return Err(Error::InvalidConfig(format!(
                "k = {} must be in 1..={}",
                self.k,
                dataset.len()
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        crate::data::check_order(self.p, dataset.length())
    }
}

#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub seed: u64,
    /// Final log-likelihood, or the error that ended the run.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct KVarsFit {
    pub result: FitResult<VarParams>,
    /// Seed of the winning restart.
    pub seed: u64,
    /// Series used to seed each cluster in the winning restart.
    pub init_series: Vec<usize>,
    pub restarts: Vec<RestartOutcome>,
}

/// Per-restart seeds derived deterministically from the base seed.
pub fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts).map(|_| master.next_u64()).collect()
}

fn single_run(model: &KVarsModel, config: &KVarsConfig, seed: u64) -> Result<(FitResult<VarParams>, Vec<usize>)> {
    let init = init_params(model, config.k, seed, &config.init)?;
    let engine = EngineConfig {
        stop: config.stop,
        empty_clusters: config.empty_clusters,
        parallel: config.parallel,
        record_history: false,
    };
    let result = run_kmle(model, init.params, &engine)?;
    Ok((result, init.series))
}

/// Runs k-VARs on a prepared model, keeping the restart with the largest
/// final log-likelihood (ties go to the earliest restart).
pub fn run_kvars_with_model(model: &KVarsModel, config: &KVarsConfig) -> Result<KVarsFit> {
    config.stop.validate()?;
    if config.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let seeds = restart_seeds(config.seed, config.restarts);
    let runs: Vec<Result<(FitResult<VarParams>, Vec<usize>)>> = if config.parallel && seeds.len() > 1 {
        seeds.par_iter().map(|&s| single_run(model, config, s)).collect()
    } else {
        seeds.iter().map(|&s| single_run(model, config, s)).collect()
    };

    let restarts = seeds
        .iter()
        .zip(&runs)
        .map(|(&seed, run)| RestartOutcome {
            seed,
            outcome: match run {
                Ok((r, _)) => Ok(r.final_loglik()),
                Err(e) => Err(e.to_string()),
            },
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    let mut any_ok = false;
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok((r, _)) => {
                any_ok = true;
                let ll = r.final_loglik();
                if config.loglik_threshold.is_some_and(|t| ll < t) {
                    continue;
                }
                if best.is_none_or(|(_, b)| ll > b) {
                    best = Some((i, ll));
                }
            }
            Err(_) if first_err.is_none() => first_err = Some(i),
            Err(_) => {}
        }
    }
    let Some((winner, _)) = best else {
        if any_ok {
            return Err(Error::NoQualifyingRun {
                threshold: config.loglik_threshold.unwrap_or(f64::NEG_INFINITY),
            });
        }
        let i = first_err.expect("some run failed");
        return Err(runs.into_iter().nth(i).unwrap().unwrap_err());
    };
    let (result, init_series) = runs.into_iter().nth(winner).unwrap().unwrap();
    Ok(KVarsFit {
        result,
        seed: seeds[winner],
        init_series,
        restarts,
    })
}

pub fn run_kvars(dataset: &Dataset, config: &KVarsConfig) -> Result<KVarsFit> {
    config.validate(dataset)?;
    let model = KVarsModel::new(dataset, config.p, config.ridge, config.parallel)?;
    run_kvars_with_model(&model, config)
}
