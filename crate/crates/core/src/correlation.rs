//! Valid-mode 2D cross-correlation (direct and FFT), zero-mean normalized
//! cross-correlation and greedy peak picking on correlation surfaces.

use std::cmp::Ordering;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::GrayImage;

/// Scores for every placement of a template fully inside a test image.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    width: usize,
    height: usize,
    scores: Vec<f64>,
}

impl CorrelationMap {
    pub fn new(width: usize, height: usize, scores: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || scores.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                found: scores.len(),
            });
        }
        Ok(CorrelationMap {
            width,
            height,
            scores,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    /// Largest absolute elementwise difference; maps must share dimensions.
    pub fn max_abs_diff(&self, other: &CorrelationMap) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "map dimensions differ"
        );
        self.scores
            .iter()
            .zip(&other.scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Template placement (top-left offset) and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

fn check_sizes(test: &GrayImage, template: &GrayImage) -> Result<(usize, usize)> {
    if template.width() > test.width() || template.height() > test.height() {
        return Err(Error::TemplateTooLarge {
            template: template.dims(),
            test: test.dims(),
        });
    }
    Ok((
        test.width() - template.width() + 1,
        test.height() - template.height() + 1,
    ))
}

/// Sliding inner product: `score(r, c) = Σ test(r+i, c+j) · template(i, j)`.
pub fn cross_correlate_direct(test: &GrayImage, template: &GrayImage) -> Result<CorrelationMap> {
    let (out_w, out_h) = check_sizes(test, template)?;
    let (tw, th) = template.dims();
    let src = test.pixels();
    let tpl = template.pixels();
    let stride = test.width();
    let mut scores = vec![0.0; out_w * out_h];
    scores
        .par_chunks_mut(out_w)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..th {
                    let base = (r + i) * stride + c;
                    let trow = &tpl[i * tw..(i + 1) * tw];
                    for j in 0..tw {
                        acc += src[base + j] * trow[j];
                    }
                }
                *out = acc;
            }
        });
    CorrelationMap::new(out_w, out_h, scores)
}

/// Same contract as [`cross_correlate_direct`], computed as a convolution
/// with the spatially reversed template in the frequency domain. Both inputs
/// are zero-padded to power-of-two sizes covering the full linear
/// convolution before transforming.
pub fn cross_correlate_fft(test: &GrayImage, template: &GrayImage) -> Result<CorrelationMap> {
    let (out_w, out_h) = check_sizes(test, template)?;
    let (w, h) = test.dims();
    let (tw, th) = template.dims();
    let pw = (w + tw - 1).next_power_of_two();
    let ph = (h + th - 1).next_power_of_two();

    let mut a = vec![Complex::new(0.0, 0.0); pw * ph];
    for r in 0..h {
        for c in 0..w {
            a[r * pw + c].re = test.get(r, c);
        }
    }
    // real input: conjugation in frequency is reversal in space
    let mut b = vec![Complex::new(0.0, 0.0); pw * ph];
    for i in 0..th {
        for j in 0..tw {
            b[(th - 1 - i) * pw + (tw - 1 - j)].re = template.get(i, j);
        }
    }
    fft_2d(&mut a, pw, ph, false);
    fft_2d(&mut b, pw, ph, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    fft_2d(&mut a, pw, ph, true);

    let scale = 1.0 / (pw * ph) as f64;
    let mut scores = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        for c in 0..out_w {
            scores.push(a[(r + th - 1) * pw + (c + tw - 1)].re * scale);
        }
    }
    CorrelationMap::new(out_w, out_h, scores)
}

/// In-place 2D transform over a `width`x`height` row-major buffer (both
/// powers of two). The inverse is unscaled.
fn fft_2d(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    data.par_chunks_mut(width)
        .for_each(|row| fft_radix2(row, inverse));
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        fft_radix2(&mut column, inverse);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

/// Iterative Cooley-Tukey transform; `buf.len()` must be a power of two.
fn fft_radix2(buf: &mut [Complex<f64>], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex::from_polar(1.0, step * k as f64);
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Zero-mean normalized cross-correlation.
///
/// Each window `w` is compared with the template `t` as
/// `Σ (w − w̄)(t − t̄) / (‖w − w̄‖ ‖t − t̄‖)`. Flat windows (norm below 1e-12)
/// score 0 and every score is clamped to `[−1, 1]`.
pub fn ncc(test: &GrayImage, template: &GrayImage) -> Result<CorrelationMap> {
    let (out_w, out_h) = check_sizes(test, template)?;
    let (tw, th) = template.dims();
    let n = (tw * th) as f64;
    let t_mean = template.pixels().iter().sum::<f64>() / n;
    let centered: Vec<f64> = template.pixels().iter().map(|p| p - t_mean).collect();
    let t_norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
    if t_norm < 1e-12 {
        return Err(Error::DegenerateTemplate);
    }

    let src = test.pixels();
    let stride = test.width();
    let mut scores = vec![0.0; out_w * out_h];
    scores
        .par_chunks_mut(out_w)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let mut sum = 0.0;
                for i in 0..th {
                    let base = (r + i) * stride + c;
                    sum += src[base..base + tw].iter().sum::<f64>();
                }
                let w_mean = sum / n;
                let (mut num, mut w_sq) = (0.0, 0.0);
                for i in 0..th {
                    let base = (r + i) * stride + c;
                    let trow = &centered[i * tw..(i + 1) * tw];
                    for j in 0..tw {
                        let d = src[base + j] - w_mean;
                        num += d * trow[j];
                        w_sq += d * d;
                    }
                }
                let w_norm = w_sq.sqrt();
                *out = if w_norm < 1e-12 {
                    0.0
                } else {
                    (num / (w_norm * t_norm)).clamp(-1.0, 1.0)
                };
            }
        });
    CorrelationMap::new(out_w, out_h, scores)
}

/// Greedy non-maximum suppression.
///
/// Repeatedly takes the highest remaining score `≥ threshold` (ties to the
/// smallest `(row, col)`) and discards every cell closer than
/// `min_separation` in Chebyshev distance, so accepted peaks are pairwise at
/// least `min_separation` apart. Stops after `max_peaks`.
pub fn find_peaks(
    map: &CorrelationMap,
    threshold: f64,
    min_separation: usize,
    max_peaks: usize,
) -> Vec<Peak> {
    let mut candidates: Vec<Peak> = map
        .scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, &score)| Peak {
            row: i / map.width,
            col: i % map.width,
            score,
        })
        .collect();
    candidates.sort_by(peak_order);

    let mut peaks: Vec<Peak> = Vec::new();
    for cand in candidates {
        if peaks.len() >= max_peaks {
            break;
        }
        let clear = peaks
            .iter()
            .all(|p| p.row.abs_diff(cand.row).max(p.col.abs_diff(cand.col)) >= min_separation);
        if clear {
            peaks.push(cand);
        }
    }
    peaks
}

/// Descending score, then ascending `(row, col)`.
fn peak_order(a: &Peak, b: &Peak) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.row.cmp(&b.row))
        .then(a.col.cmp(&b.col))
}

/// Best NCC placement of `template` in `test` together with the matching
/// test-image window.
pub fn locate(test: &GrayImage, template: &GrayImage) -> Result<(Peak, GrayImage)> {
    let map = ncc(test, template)?;
    let best = find_peaks(&map, f64::NEG_INFINITY, 1, 1)
        .into_iter()
        .next()
        .expect("valid-mode maps have at least one cell");
    let window = test.crop(best.row, best.col, template.width(), template.height())?;
    Ok((best, window))
}
