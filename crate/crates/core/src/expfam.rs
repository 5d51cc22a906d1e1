//! Regular exponential families as cluster models.
//!
//! Every regular exponential family has the decomposition
//! `ln p(x; theta) = -d_phi(x, mu(theta)) + ln b_phi(x)` with `d_phi` the
//! Bregman divergence of the convex conjugate of the log-partition. Running
//! the k-MLE solver with one of these families is therefore k-Bregman
//! clustering; with the spherical Gaussian it is k-means.
//!
//! Parameters are stored in natural coordinates. Multivariate families are
//! products of independent coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::engine::ClusterFamily;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ExpFamily {
    /// `N(mu, sigma2 I)` with known `sigma2`.
    SphericalGaussian { sigma2: f64 },
    /// `N(mu, diag(sigma2))` with known per-coordinate variances.
    DiagonalGaussian { sigma2: Vec<f64> },
    /// Independent Poisson counts.
    Poisson,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl ExpFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ExpFamily::SphericalGaussian { .. } => "spherical Gaussian",
            ExpFamily::DiagonalGaussian { .. } => "diagonal Gaussian",
            ExpFamily::Poisson => "Poisson",
        }
    }

    fn variance(&self, i: usize) -> f64 {
        match self {
            ExpFamily::SphericalGaussian { sigma2 } => *sigma2,
            ExpFamily::DiagonalGaussian { sigma2 } => sigma2[i],
            ExpFamily::Poisson => unreachable!("Poisson has no fixed variance"),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            ExpFamily::SphericalGaussian { sigma2 } => sigma2.is_finite() && *sigma2 > 0.0,
            ExpFamily::DiagonalGaussian { sigma2 } => {
                sigma2.len() == dim && sigma2.iter().all(|s| s.is_finite() && *s > 0.0)
            }
            ExpFamily::Poisson => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "{} variances must be positive and match dimension {dim}",
                self.name()
            )))
        }
    }

    pub fn check_support(&self, x: &[f64]) -> Result<()> {
        for &v in x {
            let ok = match self {
                ExpFamily::Poisson => v >= 0.0 && v.fract() == 0.0,
                _ => v.is_finite(),
            };
            if !ok {
                return Err(Error::OutOfSupport {
                    family: self.name(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Expectation parameter `mu(theta) = grad psi(theta)`.
    pub fn mean_from_natural(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| match self {
                ExpFamily::Poisson => t.exp(),
                _ => self.variance(i) * t,
            })
            .collect()
    }

    /// Inverse link. Fails when `mu` is on the boundary of the mean domain.
    pub fn natural_from_mean(&self, mu: &[f64]) -> Result<Vec<f64>> {
        mu.iter()
            .enumerate()
            .map(|(i, &m)| match self {
                ExpFamily::Poisson if m > 0.0 => Ok(m.ln()),
                ExpFamily::Poisson => Err(Error::BoundaryMle { component: i }),
                _ => Ok(m / self.variance(i)),
            })
            .collect()
    }

    /// Log-partition `psi(theta)`.
    pub fn log_partition(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| match self {
                ExpFamily::Poisson => t.exp(),
                _ => 0.5 * self.variance(i) * t * t,
            })
            .sum()
    }

    /// Base-measure term `ln h(x)` of `ln p = theta'x - psi(theta) + ln h(x)`.
    fn log_base_measure(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| match self {
                ExpFamily::Poisson => -ln_factorial(v as u64),
                _ => {
                    let s2 = self.variance(i);
                    -0.5 * v * v / s2 - 0.5 * (2.0 * PI * s2).ln()
                }
            })
            .sum()
    }

    /// Exact log-density in natural parameters.
    pub fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_support(x)?;
        let dot: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        Ok(dot - self.log_partition(theta) + self.log_base_measure(x))
    }

    /// Convex conjugate `phi(mu)` of the log-partition.
    fn conjugate(&self, mu: &[f64]) -> f64 {
        mu.iter()
            .enumerate()
            .map(|(i, &m)| match self {
                ExpFamily::Poisson => xlogy(m, m) - m,
                _ => 0.5 * m * m / self.variance(i),
            })
            .sum()
    }

    fn conjugate_grad(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .enumerate()
            .map(|(i, &m)| match self {
                ExpFamily::Poisson => m.ln(),
                _ => m / self.variance(i),
            })
            .collect()
    }

    /// `d_phi(x, mu) = phi(x) - phi(mu) - grad phi(mu)'(x - mu)`.
    pub fn bregman_divergence(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        self.check_support(x)?;
        if let ExpFamily::Poisson = self {
            if let Some(&m) = mu.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
                return Err(Error::OutOfSupport {
                    family: self.name(),
                    value: m,
                });
            }
            // closed form avoids cancellation in phi(x) - phi(mu)
            return Ok(x.iter().zip(mu).map(|(&a, &m)| xlogy(a, a / m) - a + m).sum());
        }
        let grad = self.conjugate_grad(mu);
        let lin: f64 = grad.iter().zip(x.iter().zip(mu)).map(|(g, (a, m))| g * (a - m)).sum();
        Ok((self.conjugate(x) - self.conjugate(mu) - lin).max(0.0))
    }

    /// `ln b_phi(x)`, the parameter-free remainder of the decomposition.
    pub fn log_bregman_base(&self, x: &[f64]) -> Result<f64> {
        self.check_support(x)?;
        Ok(x
            .iter()
            .enumerate()
            .map(|(i, &v)| match self {
                ExpFamily::Poisson => xlogy(v, v) - v - ln_factorial(v as u64),
                _ => -0.5 * (2.0 * PI * self.variance(i)).ln(),
            })
            .sum())
    }

    /// `|ln p(x; theta) - (-d_phi(x, mu(theta)) + ln b_phi(x))|`.
    pub fn decomposition_residual(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        let lhs = self.log_density(x, theta)?;
        let mu = self.mean_from_natural(theta);
        let rhs = -self.bregman_divergence(x, &mu)? + self.log_bregman_base(x)?;
        Ok((lhs - rhs).abs())
    }

    /// Score `d ln p / d theta = x - mu(theta)`.
    pub fn score(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let mu = self.mean_from_natural(theta);
        x.iter().zip(mu).map(|(a, m)| a - m).collect()
    }

    /// Diagonal of `-d^2 ln p / d theta^2 = Var(X)`; the families here are
    /// coordinate-independent, so the Hessian is diagonal.
    pub fn variance_diag(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| match self {
                ExpFamily::Poisson => t.exp(),
                _ => self.variance(i),
            })
            .collect()
    }

    /// MLE: the mean parameter equals the sample mean.
    pub fn fit_mle(&self, items: &[&[f64]]) -> Result<Vec<f64>> {
        let first = items.first().ok_or(Error::Empty)?;
        let d = first.len();
        let mut mean = vec![0.0; d];
        for x in items {
            if x.len() != d {
                return Err(Error::LengthMismatch { left: x.len(), right: d });
            }
            self.check_support(x)?;
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        let n = items.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        self.natural_from_mean(&mean)
    }
}

/// A fixed set of vectors clustered under one exponential family.
#[derive(Debug, Clone)]
pub struct ExpFamilyModel {
    family: ExpFamily,
    items: Vec<Vec<f64>>,
}

impl ExpFamilyModel {
    pub fn new(family: ExpFamily, items: Vec<Vec<f64>>) -> Result<Self> {
        let d = items.first().ok_or(Error::Empty)?.len();
        family.validate(d)?;
        for x in &items {
            if x.len() != d {
                return Err(Error::LengthMismatch { left: x.len(), right: d });
            }
            family.check_support(x)?;
        }
        Ok(Self { family, items })
    }

    pub fn family(&self) -> &ExpFamily {
        &self.family
    }

    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    /// Natural parameters whose mean is `mu`.
    pub fn params_from_mean(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.family.natural_from_mean(mu)
    }
}

impl ClusterFamily for ExpFamilyModel {
    type Params = Vec<f64>;

    fn n_items(&self) -> usize {
        self.items.len()
    }

    fn log_density(&self, item: usize, theta: &Vec<f64>) -> f64 {
        // support was checked at construction
        self.family
            .log_density(&self.items[item], theta)
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn fit_mle(&self, cluster: usize, members: &[usize]) -> Result<Vec<f64>> {
        let items: Vec<&[f64]> = members.iter().map(|&i| self.items[i].as_slice()).collect();
        if items.is_empty() {
            return Err(Error::EmptyCluster { cluster });
        }
        self.family.fit_mle(&items)
    }

    fn params_distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: ExpFamily = ExpFamily::SphericalGaussian { sigma2: 1.0 };

    #[test]
    fn standard_normal_at_mode() {
        let v = UNIT.log_density(&[0.0], &[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn poisson_log_density() {
        let p = ExpFamily::Poisson;
        assert!((p.log_density(&[0.0], &[0.0]).unwrap() + 1.0).abs() < 1e-15);
        let expected = 3.0 * 2f64.ln() - 2.0 - 6f64.ln();
        assert!((p.log_density(&[3.0], &[2f64.ln()]).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn poisson_out_of_support() {
        let p = ExpFamily::Poisson;
        assert!(matches!(p.log_density(&[-1.0], &[0.0]), Err(Error::OutOfSupport { .. })));
        assert!(matches!(p.log_density(&[1.5], &[0.0]), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn divergence_examples() {
        assert!((UNIT.bregman_divergence(&[1.0, 0.0], &[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let p = ExpFamily::Poisson;
        let d = p.bregman_divergence(&[2.0], &[1.0]).unwrap();
        assert!((d - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        for fam in [UNIT, ExpFamily::Poisson, ExpFamily::DiagonalGaussian { sigma2: vec![0.5, 2.0] }] {
            assert_eq!(fam.bregman_divergence(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn residual_vanishes_at_mean() {
        let p = ExpFamily::Poisson;
        let theta = [4f64.ln()];
        let x = p.mean_from_natural(&theta);
        assert!(p.decomposition_residual(&[x[0].round()], &theta).unwrap() < 1e-12);
        let theta = [0.7, -1.2];
        let x = UNIT.mean_from_natural(&theta);
        assert!(UNIT.decomposition_residual(&x, &theta).unwrap() < 1e-12);
        let lp = UNIT.log_density(&x, &theta).unwrap();
        assert!((lp - UNIT.log_bregman_base(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let theta = UNIT.fit_mle(&[&[1.0], &[3.0]]).unwrap();
        assert_eq!(UNIT.mean_from_natural(&theta), vec![2.0]);
        let p = ExpFamily::Poisson;
        let theta = p.fit_mle(&[&[0.0], &[1.0], &[2.0], &[3.0]]).unwrap();
        assert!((theta[0] - 1.5f64.ln()).abs() < 1e-15);
        assert!(matches!(
            p.fit_mle(&[&[0.0], &[0.0]]),
            Err(Error::BoundaryMle { component: 0 })
        ));
    }

    #[test]
    fn diagonal_gaussian_divergence_is_weighted() {
        let fam = ExpFamily::DiagonalGaussian { sigma2: vec![0.5, 2.0] };
        let d = fam.bregman_divergence(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((d - (1.0 / 1.0 + 4.0 / 4.0)).abs() < 1e-14);
    }
}
