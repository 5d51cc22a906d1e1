use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kmle::engine::{EmptyClusterPolicy, StopMode, StopRule};
use kmle::io::{self, ResultJson, TruthJson};
use kmle::kvars::{run_kvars, score_series, InitMode, KVarsConfig};
use kmle::metrics;
use kmle::select::{cyclic_descent, grid_search, parse_grid, SelectConfig};
use kmle::synth::{gen_dataset, GenSpec, Noise};
use kmle::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::{InitArg, NoiseArg, RunFlags, SearchMode, StopArg};

/// Maps an error chain to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 2;
    };
    match e {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::NoQualifyingRun { .. } => 5,
        e if e.is_numeric_degeneracy() => 4,
        _ => 2,
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
pub fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn stop_rule(run: &RunFlags) -> Result<StopRule> {
    let mode = match run.stop {
        StopArg::Param => StopMode::ParamTol,
        StopArg::Loglik => StopMode::LogLikTol,
    };
    Ok(StopRule::new(mode, run.tol, run.max_iter)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    run: &RunFlags,
    m: usize,
    p: usize,
    k: usize,
    nc: usize,
    t: usize,
    radius: f64,
    snr_db: Option<f64>,
    noise: NoiseArg,
    dof: f64,
    out: &Path,
) -> Result<()> {
    let spec = GenSpec {
        m,
        p,
        t,
        k,
        n_per_cluster: nc,
        noise: match noise {
            NoiseArg::Gaussian => Noise::Gaussian,
            NoiseArg::T => Noise::StudentT { dof },
        },
        target_snr_db: snr_db,
        spectral_radius: radius,
        seed: run.seed,
    };
    let data = gen_dataset(&spec)?;
    let manifest = io::write_dataset(out, &data.dataset)?;
    io::write_json(&out.join("truth.json"), &TruthJson::from(&data))?;
    log::info!("wrote {} series to {}", manifest.n, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cluster(
    run: &RunFlags,
    data_dir: &Path,
    k: usize,
    p: usize,
    init: InitArg,
    truth: Option<&Path>,
    no_rescue: bool,
    out: Option<&Path>,
) -> Result<()> {
    let stop = stop_rule(run)?;
    let dataset = io::read_dataset(data_dir)?;
    let init = match init {
        InitArg::Random => InitMode::Random,
        InitArg::Oracle => {
            let path = truth.map_or_else(|| data_dir.join("truth.json"), Path::to_path_buf);
            let raw = io::read_labels(&path).context("oracle initialisation needs a truth file")?;
            let labels = kmle::Assignment::from_raw_labels(&raw).into_labels();
            InitMode::Oracle(labels)
        }
    };
    let config = KVarsConfig {
        k,
        p,
        init,
        stop,
        restarts: run.restarts,
        seed: run.seed,
        ridge: run.ridge,
        empty_clusters: if no_rescue {
            EmptyClusterPolicy::Strict
        } else {
            EmptyClusterPolicy::Rescue
        },
        parallel: true,
        loglik_threshold: run.loglik_threshold,
    };
    let fit = run_kvars(&dataset, &config)?;
    log::info!(
        "final log-likelihood {} after {} steps ({:?})",
        fit.result.final_loglik(),
        fit.result.iters,
        fit.result.stop_reason
    );
    emit_json(out, &ResultJson::from(&fit))
}

fn parse_start(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    let [k, p] = parts[..] else {
        bail!("--start must be `K,p`, got `{text}`");
    };
    Ok((
        k.trim().parse().map_err(|_| anyhow!("--start: `{k}` is not a count"))?,
        p.trim().parse().map_err(|_| anyhow!("--start: `{p}` is not an order"))?,
    ))
}

#[derive(Serialize)]
struct BestJson {
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    bic: f64,
    loglik: f64,
    mode: &'static str,
    cells_scored: usize,
}

pub fn select(
    run: &RunFlags,
    data_dir: &Path,
    k_grid: &str,
    p_grid: &str,
    mode: SearchMode,
    start: Option<&str>,
    out: &Path,
) -> Result<()> {
    let ks = parse_grid(k_grid).context("--k-grid")?;
    let ps = parse_grid(p_grid).context("--p-grid")?;
    let start = start.map(parse_start).transpose()?;
    let config = SelectConfig {
        restarts: run.restarts,
        seed: run.seed,
        stop: stop_rule(run)?,
        ridge: run.ridge,
        empty_clusters: EmptyClusterPolicy::Rescue,
        parallel: true,
    };
    let dataset = io::read_dataset(data_dir)?;
    let (table, mode_name) = match mode {
        SearchMode::Grid => (grid_search(&dataset, &ks, &ps, &config)?, "grid"),
        SearchMode::Cyclic => {
            let start = start.unwrap_or((ks[0], ps[0]));
            (cyclic_descent(&dataset, &ks, &ps, start, &config)?, "cyclic")
        }
    };
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    table.save_csv(&out.join("bic.csv"))?;
    let best = table
        .best_cell()
        .ok_or_else(|| anyhow!("no grid cell produced a finite BIC"))?;
    let best = BestJson {
        k: best.k,
        p: best.p,
        bic: best.bic,
        loglik: best.loglik,
        mode: mode_name,
        cells_scored: table.visited.len(),
    };
    io::write_json(&out.join("best.json"), &best)?;
    Ok(())
}

pub fn evaluate(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let u = io::read_labels(a)?;
    let v = io::read_labels(b)?;
    emit_json(out, &metrics::evaluate(&u, &v)?)
}

pub fn score(data_dir: &Path, model_path: &Path, out: Option<&Path>) -> Result<()> {
    let dataset = io::read_dataset(data_dir)?;
    let models = io::read_models(model_path)?;
    let p_common = models.iter().map(|m| m.order()).max().unwrap_or(0);
    kmle::data::check_order(p_common, dataset.length())?;
    if let Some(bad) = models.iter().find(|m| m.dim() != dataset.dim()) {
        return Err(Error::LengthMismatch {
            left: bad.dim(),
            right: dataset.dim(),
        }
        .into());
    }
    let rows: Vec<Vec<f64>> = dataset
        .series()
        .par_iter()
        .map(|s| models.iter().map(|m| score_series(s, m, p_common)).collect::<kmle::Result<Vec<f64>>>())
        .collect::<kmle::Result<_>>()?;

    let mut text = String::new();
    let header: Vec<String> = (1..=models.len()).map(|k| format!("D{k}")).collect();
    text.push_str(&header.join(","));
    text.push_str(",label\n");
    for row in &rows {
        // ties go to the lowest cluster index, as in the label step
        let mut best = 0;
        for (k, &d) in row.iter().enumerate() {
            if d < row[best] {
                best = k;
            }
        }
        let cells: Vec<String> = row.iter().map(|d| d.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push_str(&format!(",{}\n", best + 1));
    }
    emit(out, &text)
}
