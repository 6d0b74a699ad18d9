//! Grayscale images, portable graymap I/O, labeled datasets and the seeded
//! synthetic expression generator.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Label reserved for the neutral-expression class.
pub const NEUTRAL_LABEL: &str = "neutral";

/// Classes the synthetic generator can place on its 4x4 grid.
pub const SYNTH_GRID_CAPACITY: usize = 16;

const SYNTH_GRID_SIDE: usize = 4;
const SYNTH_AMPLITUDE: f64 = 0.8;

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidImage(format!(
                "pixel {i} = {} lies outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Inverse of [`flatten`].
    pub fn reshape(width: usize, height: usize, features: &[f64]) -> Result<Self> {
        Self::new(width, height, features.to_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Copies the `width`x`height` region whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, width: usize, height: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::InvalidImage(format!(
                "crop {width}x{height} at ({top},{left}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for r in top..top + height {
            let start = r * self.width + left;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        Self::new(width, height, pixels)
    }
}

/// Row-major feature vector of an image.
pub fn flatten(img: &GrayImage) -> Vec<f64> {
    img.pixels.clone()
}

/// Zero-mean, unit-variance feature vector (population variance).
pub fn normalize_zmuv(img: &GrayImage) -> Result<Vec<f64>> {
    let n = img.pixels.len() as f64;
    let mean = img.pixels.iter().sum::<f64>() / n;
    let var = img
        .pixels
        .iter()
        .map(|p| (p - mean) * (p - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Err(Error::DegenerateImage);
    }
    Ok(img.pixels.iter().map(|p| (p - mean) / std).collect())
}

/// Parses a P2 (ASCII) or P5 (binary) portable graymap.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor
        .token()
        .ok_or_else(|| Error::Format("missing magic number".into()))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::Format(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cursor.header_number("width")?;
    let height = cursor.header_number("height")?;
    let maxval = cursor.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Range(format!("maxval {maxval} outside [1, 65535]")));
    }
    let count = width * height;
    let scale = maxval as f64;

    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates maxval from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(Error::Format("missing whitespace after maxval".into())),
        }
        let body = &bytes[cursor.pos..];
        let sample_bytes = if maxval < 256 { 1 } else { 2 };
        let found = body.len() / sample_bytes;
        if found < count {
            return Err(Error::Truncated {
                expected: count,
                found,
            });
        }
        if sample_bytes == 1 {
            body[..count].iter().map(|&b| b as usize).collect()
        } else {
            body[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        let mut values = Vec::with_capacity(count);
        while values.len() < count {
            match cursor.token() {
                Some(tok) => values.push(parse_number(tok, "pixel")?),
                None => {
                    return Err(Error::Truncated {
                        expected: count,
                        found: values.len(),
                    })
                }
            }
        }
        values
    };

    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(Error::Range(format!("sample {v} exceeds maxval {maxval}")));
    }
    let pixels = raw.into_iter().map(|v| v as f64 / scale).collect();
    GrayImage::new(width, height, pixels)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::Format(format!("missing {what}")))?;
        parse_number(tok, what).map_err(|_| {
            Error::Format(format!(
                "malformed {what} {:?}",
                String::from_utf8_lossy(tok)
            ))
        })
    }
}

fn parse_number(tok: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "malformed {what} {:?}",
                String::from_utf8_lossy(tok)
            ))
        })
}

/// Encodes with maxval 255, each pixel as `round(p * 255)` (half away from zero).
pub fn write_pgm(img: &GrayImage, binary: bool) -> Vec<u8> {
    let levels = img.pixels.iter().map(|p| (p * 255.0).round() as u8);
    let mut out = format!(
        "{}\n{} {}\n255\n",
        if binary { "P5" } else { "P2" },
        img.width,
        img.height
    )
    .into_bytes();
    if binary {
        out.extend(levels);
    } else {
        let levels: Vec<u8> = levels.collect();
        for row in levels.chunks(img.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pgm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_pgm_file(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, write_pgm(img, true)).map_err(|e| Error::io(path, e))
}

/// Images grouped by expression label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    items: Vec<(String, GrayImage)>,
    labels: Vec<String>,
}

impl LabeledDataset {
    /// Validates common dimensions and derives the sorted label set.
    pub fn new(items: Vec<(String, GrayImage)>) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyDataset)?.1.dims();
        for (label, img) in &items {
            if img.dims() != first {
                return Err(Error::ImageSizeMismatch {
                    path: PathBuf::from(label),
                    expected: first,
                    found: img.dims(),
                });
            }
        }
        let mut labels: Vec<String> = items.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        Ok(LabeledDataset { items, labels })
    }

    pub fn items(&self) -> &[(String, GrayImage)] {
        &self.items
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Width and height shared by every image.
    pub fn dims(&self) -> (usize, usize) {
        self.items[0].1.dims()
    }

    pub fn count_of(&self, label: &str) -> usize {
        self.items.iter().filter(|(l, _)| l == label).count()
    }

    /// Splits each class at `per_class`: the first `per_class` images of every
    /// label go to the first dataset, the rest to the second.
    pub fn split_per_class(&self, per_class: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        let mut seen = std::collections::HashMap::new();
        let (mut head, mut tail) = (Vec::new(), Vec::new());
        for item in &self.items {
            let n = seen.entry(item.0.as_str()).or_insert(0usize);
            if *n < per_class {
                head.push(item.clone());
            } else {
                tail.push(item.clone());
            }
            *n += 1;
        }
        Ok((LabeledDataset::new(head)?, LabeledDataset::new(tail)?))
    }
}

/// Loads `<root>/<label>/<name>.pgm`. Labels and file names are visited in
/// lexicographic order; files directly under `root` are ignored.
pub fn load_dataset(root: &Path) -> Result<LabeledDataset> {
    let mut class_dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            class_dirs.push(path);
        }
    }
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut items = Vec::new();
    let mut expected: Option<(usize, usize)> = None;
    for dir in class_dirs {
        let label = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidLabel(dir.display().to_string()))?
            .to_string();
        let mut files = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "pgm") {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(Error::EmptyClass(dir));
        }
        files.sort();
        for file in files {
            let img = read_pgm_file(&file)?;
            match expected {
                None => expected = Some(img.dims()),
                Some(dims) if dims != img.dims() => {
                    return Err(Error::ImageSizeMismatch {
                        path: file,
                        expected: dims,
                        found: img.dims(),
                    })
                }
                Some(_) => {}
            }
            items.push((label.clone(), img));
        }
    }
    LabeledDataset::new(items)
}

/// Writes every item as binary PGM to `<root>/<label>/<label>_<index>.pgm`.
pub fn write_dataset(root: &Path, data: &LabeledDataset) -> Result<()> {
    let mut counters = std::collections::HashMap::new();
    for (label, img) in &data.items {
        let dir = root.join(label);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let idx = counters.entry(label.as_str()).or_insert(0usize);
        write_pgm_file(&dir.join(format!("{label}_{idx:04}.pgm")), img)?;
        *idx += 1;
    }
    Ok(())
}

/// Parameters of [`synth_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub classes: usize,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthParams {
    /// Sidecar metadata as `key<TAB>value` lines.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classes\t{}", self.classes);
        let _ = writeln!(s, "per_class\t{}", self.per_class);
        let _ = writeln!(s, "width\t{}", self.width);
        let _ = writeln!(s, "height\t{}", self.height);
        let _ = writeln!(s, "noise_sigma\t{}", self.noise_sigma);
        let _ = writeln!(s, "seed\t{}", self.seed);
        s
    }

    fn validate(&self) -> Result<()> {
        if self.classes > SYNTH_GRID_CAPACITY {
            return Err(Error::Capacity {
                classes: self.classes,
                capacity: SYNTH_GRID_CAPACITY,
            });
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.per_class < 1 {
            return Err(Error::InvalidArgument(
                "per_class must be at least 1".into(),
            ));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidArgument(format!(
                "synthetic images must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Label of synthetic class `c`; class 0 is the neutral class.
pub fn synth_label(class: usize) -> String {
    if class == 0 {
        NEUTRAL_LABEL.to_string()
    } else {
        format!("class{class:02}")
    }
}

/// Center `(row, col)` of class `c`'s bump on the 4x4 grid of cell centers.
pub fn synth_center(class: usize, width: usize, height: usize) -> (f64, f64) {
    let gr = (class / SYNTH_GRID_SIDE) as f64;
    let gc = (class % SYNTH_GRID_SIDE) as f64;
    let side = SYNTH_GRID_SIDE as f64;
    (
        (gr + 0.5) * height as f64 / side,
        (gc + 0.5) * width as f64 / side,
    )
}

/// Noise-free 2D Gaussian bump centered at `(row, col)`.
pub fn gaussian_bump(
    width: usize,
    height: usize,
    center: (f64, f64),
    std: f64,
    amplitude: f64,
) -> Result<GrayImage> {
    let denom = 2.0 * std * std;
    GrayImage::from_fn(width, height, |r, c| {
        let dr = r as f64 - center.0;
        let dc = c as f64 - center.1;
        amplitude * (-(dr * dr + dc * dc) / denom).exp()
    })
}

/// Clean prototype of synthetic class `c`.
pub fn synth_prototype(class: usize, width: usize, height: usize) -> Result<GrayImage> {
    let std = width.min(height) as f64 / 6.0;
    gaussian_bump(
        width,
        height,
        synth_center(class, width, height),
        std,
        SYNTH_AMPLITUDE,
    )
}

/// Deterministic synthetic expression corpus: per class, `per_class` copies
/// of the class prototype with i.i.d. Gaussian pixel noise, clamped to `[0, 1]`.
pub fn synth_dataset(params: &SynthParams) -> Result<LabeledDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise =
        Normal::new(0.0, params.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut items = Vec::with_capacity(params.classes * params.per_class);
    for class in 0..params.classes {
        let proto = synth_prototype(class, params.width, params.height)?;
        let label = synth_label(class);
        for _ in 0..params.per_class {
            let pixels = proto
                .pixels()
                .iter()
                .map(|&p| {
                    if params.noise_sigma == 0.0 {
                        p
                    } else {
                        (p + noise.sample(&mut rng)).clamp(0.0, 1.0)
                    }
                })
                .collect();
            items.push((
                label.clone(),
                GrayImage::new(params.width, params.height, pixels)?,
            ));
        }
    }
    LabeledDataset::new(items)
}
