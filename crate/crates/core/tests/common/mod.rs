//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use gesture_core::linalg::Matrix;
use gesture_core::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, width: usize, height: usize) -> GrayImage {
    let pixels = (0..width * height).map(|_| rng.random::<f64>()).collect();
    GrayImage::new(width, height, pixels).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// `A Aᵀ + shift·I`, symmetric positive definite.
pub fn random_spd(rng: &mut impl Rng, k: usize, shift: f64) -> Matrix {
    let a = random_matrix(rng, k, k);
    let mut s = a.matmul(&a.transpose()).unwrap();
    for i in 0..k {
        s[(i, i)] += shift;
    }
    // exact symmetry
    for i in 0..k {
        for j in 0..i {
            s[(i, j)] = s[(j, i)];
        }
    }
    s
}

/// Nested-loop valid-mode correlation, written independently of the crate.
pub fn correlate_oracle(test: &GrayImage, template: &GrayImage) -> Vec<Vec<f64>> {
    let oh = test.height() - template.height() + 1;
    let ow = test.width() - template.width() + 1;
    let mut out = vec![vec![0.0; ow]; oh];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            for i in 0..template.height() {
                for j in 0..template.width() {
                    *cell += test.get(r + i, c + j) * template.get(i, j);
                }
            }
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn explicit_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs()))
            .unwrap();
        for j in 0..n {
            let (a1, a2) = (m[(col, j)], m[(pivot, j)]);
            m[(col, j)] = a2;
            m[(pivot, j)] = a1;
            let (b1, b2) = (inv[(col, j)], inv[(pivot, j)]);
            inv[(col, j)] = b2;
            inv[(pivot, j)] = b1;
        }
        let p = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                for j in 0..n {
                    m[(r, j)] -= f * m[(col, j)];
                    inv[(r, j)] -= f * inv[(col, j)];
                }
            }
        }
    }
    inv
}

/// `√(δᵀ S⁻¹ δ)` through an explicit inverse.
pub fn mahalanobis_oracle(x: &[f64], mu: &[f64], sigma: &Matrix) -> f64 {
    let inv = explicit_inverse(sigma);
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            q += d[i] * inv[(i, j)] * d[j];
        }
    }
    q.sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Pastes `patch` into a copy of `field` with its top-left corner at `(top, left)`.
pub fn embed(field: &GrayImage, patch: &GrayImage, top: usize, left: usize) -> GrayImage {
    GrayImage::from_fn(field.width(), field.height(), |r, c| {
        if r >= top && r < top + patch.height() && c >= left && c < left + patch.width() {
            patch.get(r - top, c - left)
        } else {
            field.get(r, c)
        }
    })
    .unwrap()
}
