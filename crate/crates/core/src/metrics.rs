//! City-block, Euclidean, weighted-Euclidean and Mahalanobis distances, and
//! the shrunk covariance model behind the last two.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// Default shrinkage intensity toward the scaled identity.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Smallest admissible shrunk per-feature variance for weighted Euclidean.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Distance used for minimum-distance classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    CityBlock,
    Euclidean,
    WeightedEuclidean,
    Mahalanobis,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::CityBlock,
        Metric::Euclidean,
        Metric::WeightedEuclidean,
        Metric::Mahalanobis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CityBlock => "cbd",
            Metric::Euclidean => "ed",
            Metric::WeightedEuclidean => "wed",
            Metric::Mahalanobis => "md",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbd" => Ok(Metric::CityBlock),
            "ed" => Ok(Metric::Euclidean),
            "wed" => Ok(Metric::WeightedEuclidean),
            "md" => Ok(Metric::Mahalanobis),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?} (expected cbd, ed, wed or md)"
            ))),
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `(1/N) Σ (xᵢ − μ)(xᵢ − μ)ᵀ` over the rows of `x`.
pub fn estimate_covariance(x: &Matrix, mu: &[f64]) -> Result<Matrix> {
    if x.rows() == 0 {
        return Err(Error::InsufficientData(0));
    }
    check_len(mu, x.row(0))?;
    let k = mu.len();
    let mut sigma = Matrix::zeros(k, k);
    let mut delta = vec![0.0; k];
    for r in 0..x.rows() {
        for ((d, v), m) in delta.iter_mut().zip(x.row(r)).zip(mu) {
            *d = v - m;
        }
        accumulate_outer(&mut sigma, &delta);
    }
    finish_covariance(&mut sigma, x.rows());
    Ok(sigma)
}

/// Adds `δ δᵀ` to the upper triangle of `sigma`.
pub(crate) fn accumulate_outer(sigma: &mut Matrix, delta: &[f64]) {
    let k = delta.len();
    for i in 0..k {
        for j in i..k {
            sigma[(i, j)] += delta[i] * delta[j];
        }
    }
}

/// Divides the accumulated upper triangle by `n` and mirrors it.
pub(crate) fn finish_covariance(sigma: &mut Matrix, n: usize) {
    let k = sigma.rows();
    for i in 0..k {
        for j in i..k {
            let v = sigma[(i, j)] / n as f64;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
}

/// Covariance `Σ`, its shrunk form `Σ_λ = (1−λ)Σ + λ(tr Σ / k) I`, and the
/// Cholesky factor of `Σ_λ`.
///
/// A zero-trace `Σ` has no scale to shrink toward; with `λ > 0` the target
/// then falls back to the identity, so `Σ_λ = λ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    sigma: Matrix,
    shrinkage: f64,
    shrunk: Matrix,
    factor: Cholesky,
}

impl CovarianceModel {
    pub fn new(sigma: Matrix, shrinkage: f64) -> Result<Self> {
        if !sigma.is_square() || sigma.rows() == 0 {
            return Err(Error::Dimension {
                expected: sigma.rows(),
                found: sigma.cols(),
            });
        }
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(Error::InvalidArgument(format!(
                "shrinkage must lie in [0, 1], got {shrinkage}"
            )));
        }
        if sigma.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "covariance has non-finite entries".into(),
            ));
        }
        if sigma.asymmetry() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "covariance is not symmetric (max asymmetry {:e})",
                sigma.asymmetry()
            )));
        }
        let k = sigma.rows();
        if let Some(i) = (0..k).find(|&i| sigma[(i, i)] < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance diagonal entry {i} is negative"
            )));
        }
        let shrunk = shrink(&sigma, shrinkage);
        let factor = Cholesky::factor(&shrunk)?;
        Ok(CovarianceModel {
            sigma,
            shrinkage,
            shrunk,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.rows()
    }

    /// Covariance before shrinkage.
    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn shrunk(&self) -> &Matrix {
        &self.shrunk
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    /// Diagonal of `Σ` shrunk entrywise with the same rule as the matrix.
    pub fn shrunk_variances(&self) -> Vec<f64> {
        shrunk_diagonal(&self.sigma, self.shrinkage)
    }
}

/// Builds a [`CovarianceModel`]; fails with [`Error::SingularCovariance`] when
/// the shrunk matrix is not positive definite.
pub fn build_cov_model(sigma: Matrix, lambda: f64) -> Result<CovarianceModel> {
    CovarianceModel::new(sigma, lambda)
}

fn shrink_target(sigma: &Matrix) -> f64 {
    let t = sigma.trace();
    if t > 0.0 {
        t / sigma.rows() as f64
    } else {
        1.0
    }
}

fn shrink(sigma: &Matrix, lambda: f64) -> Matrix {
    let k = sigma.rows();
    let target = shrink_target(sigma);
    let mut out = sigma.clone();
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] *= 1.0 - lambda;
        }
        out[(i, i)] += lambda * target;
    }
    out
}

fn shrunk_diagonal(sigma: &Matrix, lambda: f64) -> Vec<f64> {
    let target = shrink_target(sigma);
    (0..sigma.rows())
        .map(|i| (1.0 - lambda) * sigma[(i, i)] + lambda * target)
        .collect()
}

/// `√(δᵀ Σ_λ⁻¹ δ)` with `δ = x − μ`, via a triangular solve against the
/// Cholesky factor.
pub fn mahalanobis(x: &[f64], mu: &[f64], cov: &CovarianceModel) -> Result<f64> {
    check_len(x, mu)?;
    if x.len() != cov.dim() {
        return Err(Error::Dimension {
            expected: cov.dim(),
            found: x.len(),
        });
    }
    let delta: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let y = cov.factor.forward(&delta);
    Ok(y.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn euclidean(x: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(x, mu)?;
    Ok(x.iter()
        .zip(mu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

pub fn cityblock(x: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(x, mu)?;
    Ok(x.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum())
}

/// `√(Σ (xᵢ − μᵢ)² / σ̃ᵢᵢ)` where `σ̃` are already-shrunk variances.
pub fn weighted_euclidean(x: &[f64], mu: &[f64], var_diag: &[f64]) -> Result<f64> {
    check_len(x, mu)?;
    check_len(x, var_diag)?;
    if let Some(i) = var_diag
        .iter()
        .position(|&v| v.is_nan() || v < MIN_VARIANCE)
    {
        return Err(Error::DegenerateVariance(i));
    }
    Ok(x.iter()
        .zip(mu)
        .zip(var_diag)
        .map(|((a, b), v)| (a - b) * (a - b) / v)
        .sum::<f64>()
        .sqrt())
}

/// Applies the covariance shrinkage rule to a bare variance vector:
/// `(1−λ) σᵢᵢ + λ · mean(σ)`.
pub fn shrink_variances(var_diag: &[f64], lambda: f64) -> Vec<f64> {
    let mean = var_diag.iter().sum::<f64>() / var_diag.len() as f64;
    let target = if mean > 0.0 { mean } else { 1.0 };
    var_diag
        .iter()
        .map(|v| (1.0 - lambda) * v + lambda * target)
        .collect()
}

/// Evaluates `metric` between `x` and `mu`, using `cov` for the
/// covariance-weighted measures.
pub fn distance(metric: Metric, x: &[f64], mu: &[f64], cov: &CovarianceModel) -> Result<f64> {
    match metric {
        Metric::CityBlock => cityblock(x, mu),
        Metric::Euclidean => euclidean(x, mu),
        Metric::WeightedEuclidean => weighted_euclidean(x, mu, &cov.shrunk_variances()),
        Metric::Mahalanobis => mahalanobis(x, mu, cov),
    }
}
