//! PCA face space.
//!
//! The production path is the snapshot method: with `N` samples of
//! dimension `D ≫ N`, the nonzero spectrum of the `D×D` covariance equals the
//! spectrum of the `N×N` Gram matrix `(1/N) X_c X_cᵀ`, and each Gram
//! eigenvector `v` lifts to an image-space eigenvector `X_cᵀ v`. The direct
//! `D×D` decomposition is kept for small `D` as a cross-check.

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_eigen, norm, Matrix};

/// Default cumulative-variance fraction used when no component count is given.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

/// Largest feature dimension accepted by [`fit_pca_direct`].
pub const DIRECT_MAX_DIM: usize = 64;

/// Eigenvalues at or below this fraction of the mean squared sample norm are
/// treated as exact zeros (rounding residue of centering).
const RANK_TOLERANCE: f64 = 1e-24;

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retain {
    Components(usize),
    /// Smallest count whose cumulative variance reaches this fraction.
    Fraction(f64),
}

impl Default for Retain {
    fn default() -> Self {
        Retain::Fraction(DEFAULT_VARIANCE_FRACTION)
    }
}

/// Mean, orthonormal basis (one component per row) and eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    mean: Vec<f64>,
    basis: Matrix,
    eigenvalues: Vec<f64>,
}

impl Subspace {
    /// Assembles a subspace from stored parts, checking shapes only.
    pub fn from_parts(mean: Vec<f64>, basis: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.cols() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                found: basis.cols(),
            });
        }
        if basis.rows() != eigenvalues.len() || basis.rows() == 0 {
            return Err(Error::Dimension {
                expected: eigenvalues.len(),
                found: basis.rows(),
            });
        }
        Ok(Subspace {
            mean,
            basis,
            eigenvalues,
        })
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Retained components `k`.
    pub fn k(&self) -> usize {
        self.basis.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn component(&self, i: usize) -> &[f64] {
        self.basis.row(i)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `basis · (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.basis.matvec(&centered)
    }

    /// `mean + basisᵀ · coords`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.k() {
            return Err(Error::Dimension {
                expected: self.k(),
                found: coords.len(),
            });
        }
        let mut out = self.mean.clone();
        for (i, &c) in coords.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis.row(i)) {
                *o += c * b;
            }
        }
        Ok(out)
    }

    /// Largest `|⟨bᵢ, bⱼ⟩ − δᵢⱼ|` over all basis pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.k() {
            for j in i..self.k() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(self.component(i), self.component(j)) - target).abs());
            }
        }
        worst
    }
}

/// Smallest `k` whose leading eigenvalues hold at least `fraction` of the
/// total.
pub fn choose_k(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateData(
            "eigenvalue spectrum is all zero".into(),
        ));
    }
    let mut cumulative = 0.0;
    for (i, &v) in eigenvalues.iter().enumerate() {
        cumulative += v;
        if cumulative / total >= fraction {
            return Ok(i + 1);
        }
    }
    // rounding can leave the ratio a hair under 1
    Ok(eigenvalues
        .iter()
        .rposition(|&v| v > 0.0)
        .map_or(1, |i| i + 1))
}

fn column_mean(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for r in 0..c.rows() {
        for (v, m) in c.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

/// Clamps negatives, zeroes rank-deficient residue, and returns
/// `(cleaned eigenvalues, numeric rank)`.
fn clean_spectrum(values: &[f64], x: &Matrix) -> (Vec<f64>, usize) {
    let n = x.rows() as f64;
    let scale = x.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    let floor = RANK_TOLERANCE * scale;
    let cleaned: Vec<f64> = values
        .iter()
        .map(|&v| if v > floor { v } else { 0.0 })
        .collect();
    let rank = cleaned.iter().filter(|&&v| v > 0.0).count();
    (cleaned, rank)
}

fn retained(target: Retain, spectrum: &[f64], rank: usize, n: usize) -> Result<usize> {
    if rank == 0 {
        return Err(Error::DegenerateData(
            "all samples are identical (rank 0)".into(),
        ));
    }
    match target {
        Retain::Components(k) => {
            if k == 0 || k > n - 1 {
                return Err(Error::InvalidArgument(format!(
                    "component count must lie in [1, {}], got {k}",
                    n - 1
                )));
            }
            if k > rank {
                return Err(Error::DegenerateData(format!(
                    "requested {k} components but the data has rank {rank}"
                )));
            }
            Ok(k)
        }
        Retain::Fraction(f) => Ok(choose_k(spectrum, f)?.min(rank)),
    }
}

/// Flips each row so its largest-magnitude entry (earliest on ties) is
/// positive.
fn apply_sign_convention(basis: &mut Matrix) {
    for r in 0..basis.rows() {
        let row = basis.row_mut(r);
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        if row[best] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn check_samples(x: &Matrix) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::InsufficientData(x.rows()));
    }
    if x.cols() == 0 {
        return Err(Error::InvalidArgument("feature dimension is zero".into()));
    }
    Ok(())
}

/// PCA through the `N×N` Gram matrix of centered samples (one sample per
/// row of `x`).
pub fn fit_pca_snapshot(x: &Matrix, target: Retain) -> Result<Subspace> {
    check_samples(x)?;
    let n = x.rows();
    let mean = column_mean(x);
    let xc = centered(x, &mean);

    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g = dot(xc.row(i), xc.row(j)) / n as f64;
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = jacobi_eigen(&gram)?;
    let (spectrum, rank) = clean_spectrum(&eig.values, x);
    let k = retained(target, &spectrum, rank, n)?;

    let d = x.cols();
    let mut basis = Matrix::zeros(k, d);
    for c in 0..k {
        let v = eig.vectors.row(c);
        let row = basis.row_mut(c);
        for (s, &weight) in v.iter().enumerate() {
            for (b, x) in row.iter_mut().zip(xc.row(s)) {
                *b += weight * x;
            }
        }
        let len = norm(row);
        row.iter_mut().for_each(|b| *b /= len);
    }
    apply_sign_convention(&mut basis);
    Subspace::from_parts(mean, basis, spectrum[..k].to_vec())
}

/// PCA through the full `D×D` covariance; only for `D ≤ 64`.
pub fn fit_pca_direct(x: &Matrix, target: Retain) -> Result<Subspace> {
    check_samples(x)?;
    if x.cols() > DIRECT_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "direct PCA is limited to {DIRECT_MAX_DIM} features, got {}",
            x.cols()
        )));
    }
    let n = x.rows();
    let d = x.cols();
    let mean = column_mean(x);
    let xc = centered(x, &mean);
    let mut cov = Matrix::zeros(d, d);
    for s in 0..n {
        let row = xc.row(s);
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = jacobi_eigen(&cov)?;
    let (spectrum, rank) = clean_spectrum(&eig.values, x);
    let k = retained(target, &spectrum, rank, n)?;
    let mut basis = Matrix::zeros(k, d);
    for c in 0..k {
        basis.row_mut(c).copy_from_slice(eig.vectors.row(c));
    }
    apply_sign_convention(&mut basis);
    Subspace::from_parts(mean, basis, spectrum[..k].to_vec())
}

/// Largest principal angle (radians) between the spans of two bases with the
/// same number of components.
pub fn max_principal_angle(a: &Subspace, b: &Subspace) -> Result<f64> {
    if a.k() != b.k() || a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.k(),
            found: b.k(),
        });
    }
    // residuals of a's basis after projecting onto span(b)
    let k = a.k();
    let mut resid = Matrix::zeros(k, a.dim());
    for i in 0..k {
        let row = resid.row_mut(i);
        row.copy_from_slice(a.component(i));
        for j in 0..k {
            let c = dot(a.component(i), b.component(j));
            for (r, bv) in row.iter_mut().zip(b.component(j)) {
                *r -= c * bv;
            }
        }
    }
    let gram = resid.matmul(&resid.transpose())?;
    let top = jacobi_eigen(&gram)?.values[0].max(0.0);
    Ok(top.sqrt().min(1.0).asin())
}
