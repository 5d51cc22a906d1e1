//! On-disk formats: dataset directories, result/truth/label JSON files.
//!
//! A dataset directory holds `manifest.json` (`{m, T, N, files}`) and one
//! headerless CSV per series with `T` rows and `m` columns. Labels written
//! to JSON are 1-based; matrices are `{shape: [rows, cols], data}` with
//! `data` in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{PartialMaxCertificate, StopReason};
use crate::error::{Error, Result};
use crate::kvars::{KVarsFit, VarParams};
use crate::synth::{GenSpec, SyntheticData};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            shape: [m.nrows(), m.ncols()],
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let [r, c] = self.shape;
        if r * c != self.data.len() {
            return Err(Error::InvalidConfig(format!(
                "matrix of shape {r}x{c} has {} entries",
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(r, c, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "Sigma")]
    pub sigma: MatrixJson,
    pub p: usize,
}

impl From<&VarParams> for ModelJson {
    fn from(v: &VarParams) -> Self {
        Self {
            a: v.coefficients().into(),
            sigma: v.sigma().into(),
            p: v.order(),
        }
    }
}

impl ModelJson {
    pub fn to_params(&self) -> Result<VarParams> {
        VarParams::new(self.a.to_matrix()?, self.sigma.to_matrix()?, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    /// 1-based cluster labels.
    pub labels: Vec<usize>,
    pub clusters: Vec<ModelJson>,
    pub loglik_trace: Vec<f64>,
    pub iters: usize,
    pub stop_reason: StopReason,
    pub certificate: PartialMaxCertificate,
    pub seed: u64,
}

impl From<&KVarsFit> for ResultJson {
    fn from(fit: &KVarsFit) -> Self {
        let r = &fit.result;
        Self {
            labels: r.assignment.labels().iter().map(|l| l + 1).collect(),
            clusters: r.params.iter().map(ModelJson::from).collect(),
            loglik_trace: r.trace.clone(),
            iters: r.iters,
            stop_reason: r.stop_reason,
            certificate: r.certificate,
            seed: fit.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthJson {
    /// 1-based true cluster labels.
    pub labels: Vec<usize>,
    pub models: Vec<ModelJson>,
    pub achieved_snr_db: Vec<f64>,
    pub spec: GenSpec,
}

impl From<&SyntheticData> for TruthJson {
    fn from(d: &SyntheticData) -> Self {
        Self {
            labels: d.truth.labels().iter().map(|l| l + 1).collect(),
            models: d.models.iter().map(ModelJson::from).collect(),
            achieved_snr_db: d.achieved_snr_db.clone(),
            spec: d.spec.clone(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_series(path: &Path, m: usize, t: usize) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let mut values = Vec::with_capacity(m * t);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e))?;
        if record.len() != m {
            return Err(Error::format(
                path,
                format!("row {} has {} columns, expected {m}", rows + 1, record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: `{field}` is not a number", rows + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != t {
        return Err(Error::format(path, format!("{rows} rows, manifest says T = {t}")));
    }
    // rows are time points, so the row-major buffer is the transpose of m x T
    Ok(DMatrix::from_row_slice(t, m, &values).transpose())
}

/// Loads a dataset directory; series ids are the file paths from the manifest.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.files.len() != manifest.n {
        return Err(Error::format(
            dir.join(MANIFEST),
            format!("N = {} but {} files listed", manifest.n, manifest.files.len()),
        ));
    }
    let series = manifest
        .files
        .iter()
        .map(|f| read_series(&dir.join(f), manifest.m, manifest.t))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(series)?.with_ids(manifest.files)
}

fn write_series(path: &Path, series: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    for t in 0..series.ncols() {
        w.write_record(series.column(t).iter().map(|v| v.to_string()))
            .map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `series_0001.csv`, ... and the manifest; creates `dir` if needed.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = dataset.len().to_string().len().max(4);
    let files: Vec<String> = (1..=dataset.len())
        .map(|i| format!("series_{i:0width$}.csv"))
        .collect();
    for (name, s) in files.iter().zip(dataset.series()) {
        write_series(&dir.join(name), s)?;
    }
    let manifest = Manifest {
        m: dataset.dim(),
        t: dataset.length(),
        n: dataset.len(),
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Raw labels from a JSON array or an object with a `labels` array.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let value: serde_json::Value = read_json(path)?;
    let array = match &value {
        serde_json::Value::Array(_) => &value,
        serde_json::Value::Object(map) => map
            .get("labels")
            .ok_or_else(|| Error::format(path, "object has no `labels` field"))?,
        _ => return Err(Error::format(path, "expected an array or an object with `labels`")),
    };
    serde_json::from_value(array.clone()).map_err(|e| Error::format(path, e))
}

/// Cluster models from a result file (`clusters`) or a truth file (`models`).
pub fn read_models(path: &Path) -> Result<Vec<VarParams>> {
    let value: serde_json::Value = read_json(path)?;
    let list = value
        .get("clusters")
        .or_else(|| value.get("models"))
        .ok_or_else(|| Error::format(path, "expected a `clusters` or `models` array"))?;
    let models: Vec<ModelJson> = serde_json::from_value(list.clone()).map_err(|e| Error::format(path, e))?;
    if models.is_empty() {
        return Err(Error::format(path, "no models"));
    }
    models.iter().map(ModelJson::to_params).collect()
}

/// Converts 1-based labels to 0-based; a 0 label is rejected.
pub fn zero_based(labels: &[usize], path: impl Into<PathBuf>) -> Result<Vec<usize>> {
    let path = path.into();
    labels
        .iter()
        .map(|&l| l.checked_sub(1).ok_or_else(|| Error::format(&path, "labels must be 1-based")))
        .collect()
}
