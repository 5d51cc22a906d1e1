//! Choosing the number of clusters `K` and the VAR order `p` by BIC,
//! either over a full grid or by cyclic coordinate descent on the grid.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_order, Dataset};
use crate::engine::{EmptyClusterPolicy, StopRule};
use crate::error::{Error, Result};
use crate::kvars::{run_kvars_with_model, InitMode, KVarsConfig, KVarsModel};

const MAX_SWEEPS: usize = 20;

/// `{K [(p + 1/2) m^2 + 3m/2] + N} ln[N (T - p)]`.
pub fn bic_penalty(k: usize, p: usize, m: usize, n_series: usize, t: usize) -> f64 {
    let m = m as f64;
    let per_cluster = (p as f64 + 0.5) * m * m + 1.5 * m;
    let count = k as f64 * per_cluster + n_series as f64;
    let samples = n_series as f64 * t.saturating_sub(p) as f64;
    count * samples.ln()
}

#[derive(Debug, Clone)]
pub struct SelectConfig {
    pub restarts: usize,
    pub seed: u64,
    pub stop: StopRule,
    pub ridge: bool,
    pub empty_clusters: EmptyClusterPolicy,
    pub parallel: bool,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            stop: StopRule::default(),
            ridge: false,
            empty_clusters: EmptyClusterPolicy::Rescue,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub k: usize,
    pub p: usize,
    /// `+inf` when the cell failed.
    pub bic: f64,
    /// Best final log-likelihood over the restarts; `NaN` on failure.
    pub loglik: f64,
    pub restarts: usize,
    /// `"ok"` or the reason the cell failed.
    pub status: String,
}

impl CellResult {
    fn failed(k: usize, p: usize, restarts: usize, reason: &Error) -> Self {
        Self {
            k,
            p,
            bic: f64::INFINITY,
            loglik: f64::NAN,
            restarts,
            status: reason.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.bic.is_finite()
    }
}

/// Restart seed for one grid cell, independent of evaluation order.
pub fn cell_seed(seed: u64, k: usize, p: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | p as u64);
    rng.next_u64()
}

fn cell_config(k: usize, p: usize, config: &SelectConfig) -> KVarsConfig {
    KVarsConfig {
        k,
        p,
        init: InitMode::Random,
        stop: config.stop,
        restarts: config.restarts,
        seed: cell_seed(config.seed, k, p),
        ridge: config.ridge,
        empty_clusters: config.empty_clusters,
        parallel: config.parallel,
        loglik_threshold: None,
    }
}

fn score_with_model(dataset: &Dataset, model: &KVarsModel, k: usize, config: &SelectConfig) -> CellResult {
    let p = model.common_order();
    let cell = cell_config(k, p, config);
    let run = cell.validate(dataset).and_then(|_| run_kvars_with_model(model, &cell));
    match run {
        Ok(fit) => {
            let ll = fit.result.final_loglik();
            CellResult {
                k,
                p,
                bic: -2.0 * ll + bic_penalty(k, p, dataset.dim(), dataset.len(), dataset.length()),
                loglik: ll,
                restarts: config.restarts,
                status: "ok".into(),
            }
        }
        Err(e) => CellResult::failed(k, p, config.restarts, &e),
    }
}

fn model_for(dataset: &Dataset, p: usize, config: &SelectConfig) -> Result<KVarsModel> {
    check_order(p, dataset.length())?;
    KVarsModel::new(dataset, p, config.ridge, config.parallel)
}

/// BIC of one `(K, p)` cell; failures are reported in the cell, not raised.
pub fn bic_score(dataset: &Dataset, k: usize, p: usize, config: &SelectConfig) -> CellResult {
    match model_for(dataset, p, config) {
        Ok(model) => score_with_model(dataset, &model, k, config),
        Err(e) => CellResult::failed(k, p, config.restarts, &e),
    }
}

/// Scored cells over `k_values x p_values`; unvisited cells are `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicTable {
    pub k_values: Vec<usize>,
    pub p_values: Vec<usize>,
    pub cells: Vec<Vec<Option<CellResult>>>,
    /// Indices `(i, j)` of the minimal finite score.
    pub best: Option<(usize, usize)>,
    /// Cells in evaluation order, as `(K, p)`.
    pub visited: Vec<(usize, usize)>,
}

fn normalize_grid(values: &[usize], what: &str) -> Result<Vec<usize>> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} grid is empty")));
    }
    Ok(v)
}

impl BicTable {
    fn empty(k_values: Vec<usize>, p_values: Vec<usize>) -> Self {
        let cells = vec![vec![None; p_values.len()]; k_values.len()];
        Self {
            k_values,
            p_values,
            cells,
            best: None,
            visited: Vec::new(),
        }
    }

    pub fn cell(&self, k: usize, p: usize) -> Option<&CellResult> {
        let i = self.k_values.iter().position(|&v| v == k)?;
        let j = self.p_values.iter().position(|&v| v == p)?;
        self.cells[i][j].as_ref()
    }

    pub fn best_cell(&self) -> Option<&CellResult> {
        self.best.and_then(|(i, j)| self.cells[i][j].as_ref())
    }

    /// Scored cells, row-major over `(K, p)`.
    pub fn scored(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().flatten().flatten()
    }

    /// Minimal finite score; ties favour smaller `K`, then smaller `p`.
    fn update_best(&mut self) {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let Some(c) = cell else { continue };
                if c.bic.is_finite() && best.is_none_or(|(_, _, b)| c.bic < b) {
                    best = Some((i, j, c.bic));
                }
            }
        }
        self.best = best.map(|(i, j, _)| (i, j));
    }

    fn score(&self, i: usize, j: usize) -> f64 {
        self.cells[i][j].as_ref().map_or(f64::INFINITY, |c| c.bic)
    }

    /// CSV with header `K,p,bic,loglik,status`, one row per scored cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::format("BIC table", e.to_string());
        w.write_record(["K", "p", "bic", "loglik", "status"]).map_err(fmt)?;
        for c in self.scored() {
            w.write_record([
                c.k.to_string(),
                c.p.to_string(),
                c.bic.to_string(),
                c.loglik.to_string(),
                c.status.clone(),
            ])
            .map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::io("BIC table", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Scores every cell of the grid. Models (the per-series factorizations)
/// are built once per order and shared across `K`.
pub fn grid_search(dataset: &Dataset, k_grid: &[usize], p_grid: &[usize], config: &SelectConfig) -> Result<BicTable> {
    let ks = normalize_grid(k_grid, "K")?;
    let ps = normalize_grid(p_grid, "p")?;
    let models: Vec<Result<KVarsModel>> = ps.iter().map(|&p| model_for(dataset, p, config)).collect();
    let jobs: Vec<(usize, usize)> = (0..ks.len()).flat_map(|i| (0..ps.len()).map(move |j| (i, j))).collect();
    let eval = |&(i, j): &(usize, usize)| match &models[j] {
        Ok(model) => score_with_model(dataset, model, ks[i], config),
        Err(e) => CellResult::failed(ks[i], ps[j], config.restarts, e),
    };
    let results: Vec<CellResult> = if config.parallel {
        jobs.par_iter().map(eval).collect()
    } else {
        jobs.iter().map(eval).collect()
    };
    let mut table = BicTable::empty(ks.clone(), ps.clone());
    for (&(i, j), r) in jobs.iter().zip(results) {
        table.cells[i][j] = Some(r);
        table.visited.push((ks[i], ps[j]));
    }
    table.update_best();
    Ok(table)
}

/// Alternates a scan over `K` at fixed `p` and a scan over `p` at fixed `K`,
/// moving only on strict improvement, until a full sweep leaves the
/// incumbent unchanged or 20 sweeps have run. Each cell is scored once.
pub fn cyclic_descent(
    dataset: &Dataset,
    k_grid: &[usize],
    p_grid: &[usize],
    start: (usize, usize),
    config: &SelectConfig,
) -> Result<BicTable> {
    let ks = normalize_grid(k_grid, "K")?;
    let ps = normalize_grid(p_grid, "p")?;
    let (Some(mut ki), Some(mut pj)) = (
        ks.iter().position(|&k| k == start.0),
        ps.iter().position(|&p| p == start.1),
    ) else {
        return Err(Error::InvalidConfig(format!(
            "start cell ({}, {}) is not on the grid",
            start.0, start.1
        )));
    };
    let mut table = BicTable::empty(ks.clone(), ps.clone());
    let mut models: Vec<Option<Result<KVarsModel>>> = (0..ps.len()).map(|_| None).collect();

    let mut evaluate = |table: &mut BicTable, cells: Vec<(usize, usize)>| {
        let todo: Vec<(usize, usize)> = cells.into_iter().filter(|&(i, j)| table.cells[i][j].is_none()).collect();
        for &(_, j) in &todo {
            if models[j].is_none() {
                models[j] = Some(model_for(dataset, ps[j], config));
            }
        }
        let eval = |&(i, j): &(usize, usize)| match models[j].as_ref().expect("model built") {
            Ok(model) => score_with_model(dataset, model, ks[i], config),
            Err(e) => CellResult::failed(ks[i], ps[j], config.restarts, e),
        };
        let results: Vec<CellResult> = if config.parallel {
            todo.par_iter().map(eval).collect()
        } else {
            todo.iter().map(eval).collect()
        };
        for (&(i, j), r) in todo.iter().zip(results) {
            table.cells[i][j] = Some(r);
            table.visited.push((ks[i], ps[j]));
        }
    };

    evaluate(&mut table, vec![(ki, pj)]);
    for _ in 0..MAX_SWEEPS {
        let before = (ki, pj);
        evaluate(&mut table, (0..ks.len()).map(|i| (i, pj)).collect());
        for i in 0..ks.len() {
            if table.score(i, pj) < table.score(ki, pj) {
                ki = i;
            }
        }
        evaluate(&mut table, (0..ps.len()).map(|j| (ki, j)).collect());
        for j in 0..ps.len() {
            if table.score(ki, j) < table.score(ki, pj) {
                pj = j;
            }
        }
        if (ki, pj) == before {
            break;
        }
    }
    table.best = table.score(ki, pj).is_finite().then_some((ki, pj));
    Ok(table)
}

/// Parses `start:step:end` (inclusive) or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("grid `{text}` is not `start:step:end`"));
    let parts: Vec<usize> = text
        .split(':')
        .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [v] => Ok(vec![v]),
        [start, step, end] if step > 0 && start <= end => Ok((start..=end).step_by(step).collect()),
        _ => Err(bad()),
    }
}
