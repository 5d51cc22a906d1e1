//! Synthetic benchmarks: random stable VAR models, stationary covariance,
//! a scale-invariant SNR and labeled datasets with Gaussian or Student-t
//! driving noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Assignment, Dataset};
use crate::error::{Error, Result};
use crate::kvars::VarParams;

/// Largest spectral radius `scale_to_snr` may produce.
pub const RADIUS_CEILING: f64 = 0.999;
/// `10 log10(1/2)`, the SNR of white noise.
pub const WHITE_NOISE_SNR_DB: f64 = -3.010299956639812;
/// Model draws per cluster before an SNR target is declared unachievable.
pub const MAX_MODEL_DRAWS: usize = 100;

/// Companion matrix of the lag polynomial; `mp x mp`, empty for `p = 0`.
pub fn companion_matrix(params: &VarParams) -> DMatrix<f64> {
    let m = params.dim();
    let p = params.order();
    let n = m * p;
    let mut c = DMatrix::zeros(n, n);
    if n == 0 {
        return c;
    }
    c.rows_mut(0, m)
        .copy_from(&params.coefficients().columns(1, n));
    for i in m..n {
        c[(i, i - m)] = 1.0;
    }
    c
}

pub fn spectral_radius(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    matrix
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn companion_radius(params: &VarParams) -> f64 {
    spectral_radius(&companion_matrix(params))
}

/// Random VAR(p) whose companion spectral radius equals `radius`.
///
/// Lag coefficients and intercept are uniform on (-1, 1); lag `l` is then
/// scaled by `s^l` with `s = radius / rho`. The noise covariance is `L L'`
/// with `L` lower triangular, diagonal uniform on (0.5, 1.5) and
/// off-diagonal uniform on (-0.5, 0.5).
pub fn gen_stable_var<R: Rng + ?Sized>(m: usize, p: usize, radius: f64, rng: &mut R) -> Result<VarParams> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(Error::InvalidConfig(format!("spectral radius {radius} must lie in (0, 1)")));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let coef = Uniform::new(-1.0, 1.0).expect("valid range");
    let diag = Uniform::new(0.5, 1.5).expect("valid range");
    let off = Uniform::new(-0.5, 0.5).expect("valid range");
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        l[(i, i)] = diag.sample(rng);
        for j in 0..i {
            l[(i, j)] = off.sample(rng);
        }
    }
    let sigma = &l * l.transpose();
    loop {
        let a = DMatrix::from_fn(m, 1 + m * p, |_, _| coef.sample(rng));
        let raw = VarParams::new(a, sigma.clone(), p)?;
        if p == 0 {
            return Ok(raw);
        }
        let rho = companion_radius(&raw);
        if rho > 1e-8 {
            return Ok(raw.scale_lags(radius / rho));
        }
    }
}

/// Zero-lag autocovariance `Pi` of the stationary process, from the
/// discrete Lyapunov equation `P = C P C' + G Sigma G'` of the companion
/// state, solved as the vectorized linear system `(I - C (x) C) vec P = vec Q`.
pub fn stationary_covariance(params: &VarParams) -> Result<DMatrix<f64>> {
    let m = params.dim();
    if params.order() == 0 {
        return Ok(params.sigma().clone());
    }
    let c = companion_matrix(params);
    let rho = spectral_radius(&c);
    if rho >= 1.0 {
        return Err(Error::Unstable { radius: rho });
    }
    let n = c.nrows();
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (m, m)).copy_from(params.sigma());
    let system = DMatrix::identity(n * n, n * n) - c.kronecker(&c);
    let rhs = DVector::from_column_slice(q.as_slice());
    let vec_p = system.lu().solve(&rhs).ok_or(Error::Unstable { radius: rho })?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let pi = p.view((0, 0), (m, m)).into_owned();
    Ok((&pi + pi.transpose()) * 0.5)
}

fn inv_sqrt_spd(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// `lambda_max(Sigma^{-1/2} Pi Sigma^{-1/2}) / 2`.
pub fn vsnr(params: &VarParams) -> Result<f64> {
    let pi = stationary_covariance(params)?;
    let w = inv_sqrt_spd(params.sigma());
    let whitened = &w * pi * &w;
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let top = SymmetricEigen::new(sym).eigenvalues.max();
    Ok(0.5 * top)
}

pub fn vsnr_db(params: &VarParams) -> Result<f64> {
    Ok(10.0 * vsnr(params)?.log10())
}

/// Rescales the lag blocks (lag `l` by `s^l`) so that the SNR is within
/// `tol_db` of `target_db`. The SNR increases with `s`; `s` is found by
/// bisection on `(0, s_max]` where `s_max` keeps the spectral radius at
/// [`RADIUS_CEILING`].
pub fn scale_to_snr(params: &VarParams, target_db: f64, tol_db: f64) -> Result<VarParams> {
    if !target_db.is_finite() || !(tol_db > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "SNR target {target_db} dB and tolerance {tol_db} dB must be finite, tolerance positive"
        )));
    }
    let rho = companion_radius(params);
    let at = |s: f64| -> Result<(VarParams, f64)> {
        let scaled = params.scale_lags(s);
        let db = vsnr_db(&scaled)?;
        Ok((scaled, db))
    };
    if rho == 0.0 {
        let db = vsnr_db(params)?;
        if (db - target_db).abs() <= tol_db {
            return Ok(params.clone());
        }
        return Err(Error::Unachievable {
            target_db,
            min_db: db,
            max_db: db,
        });
    }
    let s_max = RADIUS_CEILING / rho;
    if s_max >= 1.0 {
        let (_, db) = at(1.0)?;
        if (db - target_db).abs() <= tol_db {
            return Ok(params.clone());
        }
    }
    let (_, max_db) = at(s_max)?;
    if target_db < WHITE_NOISE_SNR_DB - tol_db || target_db > max_db + tol_db {
        return Err(Error::Unachievable {
            target_db,
            min_db: WHITE_NOISE_SNR_DB,
            max_db,
        });
    }
    // bisect well inside the tolerance so boundary targets drive s to its limit
    let inner = tol_db / 100.0;
    let (mut lo, mut hi) = (0.0, s_max);
    let mut best: Option<(VarParams, f64)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (scaled, db) = at(mid)?;
        let err = (db - target_db).abs();
        if best.as_ref().is_none_or(|(_, e)| err < *e) {
            best = Some((scaled, err));
        }
        if err <= inner || hi - lo < 1e-15 {
            break;
        }
        if db < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (scaled, err) = best.expect("bisection ran");
    if err > tol_db {
        return Err(Error::Unachievable {
            target_db,
            min_db: WHITE_NOISE_SNR_DB,
            max_db,
        });
    }
    Ok(scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian,
    /// Student-t with `dof > 2`, standardized to unit variance.
    StudentT { dof: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub m: usize,
    pub p: usize,
    pub t: usize,
    pub k: usize,
    pub n_per_cluster: usize,
    pub noise: Noise,
    pub target_snr_db: Option<f64>,
    pub spectral_radius: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(m: usize, p: usize, t: usize, k: usize, n_per_cluster: usize, seed: u64) -> Self {
        Self {
            m,
            p,
            t,
            k,
            n_per_cluster,
            noise: Noise::Gaussian,
            target_snr_db: None,
            spectral_radius: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 || self.k == 0 || self.n_per_cluster == 0 {
            return bad("m, k and series per cluster must be positive".into());
        }
        if self.t < 2 {
            return bad(format!("series length {} must be at least 2", self.t));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return bad(format!("spectral radius {} must lie in (0, 1)", self.spectral_radius));
        }
        if let Noise::StudentT { dof } = self.noise {
            if !(dof > 2.0) {
                return bad(format!("Student-t degrees of freedom {dof} must exceed 2"));
            }
        }
        if let Some(db) = self.target_snr_db {
            if !db.is_finite() {
                return bad("SNR target must be finite".into());
            }
            if db < WHITE_NOISE_SNR_DB {
                return Err(Error::Unachievable {
                    target_db: db,
                    min_db: WHITE_NOISE_SNR_DB,
                    max_db: f64::INFINITY,
                });
            }
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        10 * self.p + 100
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: Assignment,
    pub models: Vec<VarParams>,
    pub achieved_snr_db: Vec<f64>,
    pub spec: GenSpec,
}

/// Unit-variance noise draw.
fn draw_noise<R: Rng + ?Sized>(noise: Noise, rng: &mut R) -> f64 {
    match noise {
        Noise::Gaussian => StandardNormal.sample(rng),
        Noise::StudentT { dof } => {
            let t: f64 = StudentT::new(dof).expect("dof validated").sample(rng);
            t * ((dof - 2.0) / dof).sqrt()
        }
    }
}

/// Simulates `t` observations after discarding `burn_in`, from a zero
/// initial state.
pub fn simulate_var<R: Rng + ?Sized>(params: &VarParams, t: usize, burn_in: usize, noise: Noise, rng: &mut R) -> DMatrix<f64> {
    let m = params.dim();
    let p = params.order();
    let total = burn_in + t;
    let a = params.coefficients();
    let l = params.chol();
    let mut y = DMatrix::zeros(m, total);
    let mut z = DVector::zeros(m);
    for step in 0..total {
        let mut next = a.column(0).into_owned();
        for lag in 1..=p.min(step) {
            next += a.columns(1 + (lag - 1) * m, m) * y.column(step - lag);
        }
        for v in z.iter_mut() {
            *v = draw_noise(noise, rng);
        }
        next += l * &z;
        y.set_column(step, &next);
    }
    y.columns(burn_in, t).into_owned()
}

/// Per-series random stream derived from the spec seed.
fn series_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Draws one cluster model. When an SNR target is set, models whose
/// attainable range misses it are redrawn, up to [`MAX_MODEL_DRAWS`] times.
fn draw_model(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<VarParams> {
    let mut last = None;
    for _ in 0..MAX_MODEL_DRAWS {
        let model = gen_stable_var(spec.m, spec.p, spec.spectral_radius, rng)?;
        let Some(db) = spec.target_snr_db else {
            return Ok(model);
        };
        match scale_to_snr(&model, db, 0.01) {
            Ok(scaled) => return Ok(scaled),
            Err(e @ Error::Unachievable { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one draw"))
}

pub fn gen_dataset(spec: &GenSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut models = Vec::with_capacity(spec.k);
    let mut achieved = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        let model = draw_model(spec, &mut rng)?;
        achieved.push(vsnr_db(&model)?);
        models.push(model);
    }
    let n = spec.k * spec.n_per_cluster;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.n_per_cluster).collect();
    let series: Vec<DMatrix<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = series_rng(spec.seed, i);
            simulate_var(&models[labels[i]], spec.t, spec.burn_in(), spec.noise, &mut r)
        })
        .collect();
    Ok(SyntheticData {
        dataset: Dataset::new(series)?,
        truth: Assignment::new(labels, spec.k)?,
        models,
        achieved_snr_db: achieved,
        spec: spec.clone(),
    })
}
