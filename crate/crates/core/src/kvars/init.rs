//! Seeding cluster parameters from individual series.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::estimate::fit_single_series;
use super::params::VarParams;
use super::KVarsModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `k` distinct series drawn uniformly.
    Random,
    /// One series drawn from each true cluster (labels in `0..k`).
    Oracle(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct InitSelection {
    /// Series index that seeded each cluster.
    pub series: Vec<usize>,
    pub params: Vec<VarParams>,
}

/// Fits a per-series VAR to the selected series. A series whose fit is
/// degenerate is skipped and the next candidate in the shuffled order is
/// tried, so at most `N` fits are attempted.
pub fn init_params(model: &KVarsModel, k: usize, seed: u64, mode: &InitMode) -> Result<InitSelection> {
    let n = model.n_series();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = |cluster: usize, series: usize| {
        fit_single_series(model.cache(series), model.cluster_order(cluster), model.ridge())
    };

    let mut chosen = Vec::with_capacity(k);
    let mut params = Vec::with_capacity(k);
    match mode {
        InitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut last_err = None;
            for s in order {
                if chosen.len() == k {
                    break;
                }
                match fit(chosen.len(), s) {
                    Ok(p) => {
                        chosen.push(s);
                        params.push(p);
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            if chosen.len() < k {
                log::debug!("initialisation ran out of series: {last_err:?}");
                return Err(Error::TooFewSeries {
                    needed: k,
                    available: chosen.len(),
                });
            }
        }
        InitMode::Oracle(truth) => {
            if truth.len() != n {
                return Err(Error::LengthMismatch { left: truth.len(), right: n });
            }
            if let Some((index, &label)) = truth.iter().enumerate().find(|(_, &l)| l >= k) {
                return Err(Error::LabelOutOfRange { index, label, k });
            }
            for cluster in 0..k {
                let mut members: Vec<usize> = (0..n).filter(|&i| truth[i] == cluster).collect();
                if members.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "oracle initialisation: true cluster {cluster} has no series"
                    )));
                }
                members.shuffle(&mut rng);
                let picked = members.iter().find_map(|&s| fit(cluster, s).ok().map(|p| (s, p)));
                let Some((s, p)) = picked else {
                    return Err(Error::TooFewSeries {
                        needed: k,
                        available: chosen.len(),
                    });
                };
                chosen.push(s);
                params.push(p);
            }
        }
    }
    Ok(InitSelection { series: chosen, params })
}
