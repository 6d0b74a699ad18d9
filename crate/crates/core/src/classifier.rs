//! Trained expression model: face space, per-class reference means, pooled
//! within-class covariance, minimum-distance classification and
//! neutral-referenced intensity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imgio::{normalize_zmuv, GrayImage, LabeledDataset, NEUTRAL_LABEL};
use crate::linalg::Matrix;
use crate::metrics::{
    accumulate_outer, distance, finish_covariance, mahalanobis, CovarianceModel, Metric,
    DEFAULT_SHRINKAGE,
};
use crate::subspace::{fit_pca_snapshot, Retain, Subspace};

const MAGIC: &str = "FGR1";

/// Pooled scatter whose trace is below this fraction of the retained
/// variance is rounding residue and is stored as exact zero.
const SCATTER_FLOOR: f64 = 1e-20;

/// Reference template of one expression class in face-space coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: String,
    pub mu: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub retain: Retain,
    pub lambda: f64,
    pub metric: Metric,
    pub neutral_label: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            retain: Retain::default(),
            lambda: DEFAULT_SHRINKAGE,
            metric: Metric::Mahalanobis,
            neutral_label: NEUTRAL_LABEL.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub label: String,
    pub distance: f64,
    /// Distance to every class, in label order.
    pub per_class: Vec<(String, f64)>,
}

/// Raw Mahalanobis distance from the neutral mean and its `[0, 1)` score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    pub raw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[i][j]`: true class `i` predicted as class `j`.
    pub confusion: Vec<Vec<usize>>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureModel {
    subspace: Subspace,
    classes: Vec<ClassModel>,
    pooled_cov: CovarianceModel,
    metric: Metric,
    neutral_label: String,
    image_dims: (usize, usize),
    median_raw: f64,
}

fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() || label.chars().any(char::is_whitespace) {
        return Err(Error::InvalidLabel(label.to_string()));
    }
    Ok(())
}

/// Fits the face space and class statistics.
///
/// Every image is flattened and normalized to zero mean and unit variance,
/// PCA is fitted with the snapshot method, and the projected training set
/// yields per-class means and the pooled within-class covariance
/// `(1/N) Σ_c Σ_{x∈c} (x − μ_c)(x − μ_c)ᵀ`.
pub fn train(data: &LabeledDataset, config: &TrainConfig) -> Result<GestureModel> {
    if data.labels().len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 classes, got {}",
            data.labels().len()
        )));
    }
    for label in data.labels() {
        validate_label(label)?;
    }
    if !data.labels().contains(&config.neutral_label) {
        return Err(Error::MissingNeutral(config.neutral_label.clone()));
    }

    let features = data
        .items()
        .iter()
        .map(|(_, img)| normalize_zmuv(img))
        .collect::<Result<Vec<_>>>()?;
    let subspace = fit_pca_snapshot(&Matrix::from_rows(&features)?, config.retain)?;
    let coords = features
        .iter()
        .map(|f| subspace.project(f))
        .collect::<Result<Vec<_>>>()?;
    let k = subspace.k();

    let mut classes = Vec::with_capacity(data.labels().len());
    for label in data.labels() {
        let mut mu = vec![0.0; k];
        let mut count = 0;
        for ((l, _), c) in data.items().iter().zip(&coords) {
            if l == label {
                mu.iter_mut().zip(c).for_each(|(m, v)| *m += v);
                count += 1;
            }
        }
        mu.iter_mut().for_each(|m| *m /= count as f64);
        classes.push(ClassModel {
            label: label.clone(),
            mu,
            count,
        });
    }

    let mut sigma = Matrix::zeros(k, k);
    let mut delta = vec![0.0; k];
    for ((label, _), c) in data.items().iter().zip(&coords) {
        let class = classes
            .iter()
            .find(|cm| &cm.label == label)
            .expect("every item label is in the label set");
        for ((d, v), m) in delta.iter_mut().zip(c).zip(&class.mu) {
            *d = v - m;
        }
        accumulate_outer(&mut sigma, &delta);
    }
    finish_covariance(&mut sigma, data.len());
    let retained_variance: f64 = subspace.eigenvalues().iter().sum();
    if sigma.trace() <= SCATTER_FLOOR * retained_variance {
        sigma = Matrix::zeros(k, k);
    }
    let pooled_cov = CovarianceModel::new(sigma, config.lambda)?;

    let neutral = &classes
        .iter()
        .find(|c| c.label == config.neutral_label)
        .expect("neutral label checked above")
        .mu;
    let mut raws = data
        .items()
        .iter()
        .zip(&coords)
        .filter(|((l, _), _)| l != &config.neutral_label)
        .map(|(_, c)| mahalanobis(c, neutral, &pooled_cov))
        .collect::<Result<Vec<_>>>()?;
    let median_raw = median(&mut raws);

    Ok(GestureModel {
        subspace,
        classes,
        pooled_cov,
        metric: config.metric,
        neutral_label: config.neutral_label.clone(),
        image_dims: data.dims(),
        median_raw,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

impl GestureModel {
    /// Assembles a model from its parts, checking the structural invariants.
    pub fn from_parts(
        subspace: Subspace,
        classes: Vec<ClassModel>,
        pooled_cov: CovarianceModel,
        metric: Metric,
        neutral_label: String,
        image_dims: (usize, usize),
        median_raw: f64,
    ) -> Result<Self> {
        let k = subspace.k();
        if pooled_cov.dim() != k {
            return Err(Error::Dimension {
                expected: k,
                found: pooled_cov.dim(),
            });
        }
        if image_dims.0 * image_dims.1 != subspace.dim() {
            return Err(Error::Dimension {
                expected: subspace.dim(),
                found: image_dims.0 * image_dims.1,
            });
        }
        if classes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a model needs at least 2 classes".into(),
            ));
        }
        for (i, c) in classes.iter().enumerate() {
            validate_label(&c.label)?;
            if c.mu.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    found: c.mu.len(),
                });
            }
            if c.count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "class {} has no samples",
                    c.label
                )));
            }
            if i > 0 && classes[i - 1].label >= c.label {
                return Err(Error::InvalidArgument(
                    "class labels must be distinct and sorted".into(),
                ));
            }
        }
        if !classes.iter().any(|c| c.label == neutral_label) {
            return Err(Error::MissingNeutral(neutral_label));
        }
        Ok(GestureModel {
            subspace,
            classes,
            pooled_cov,
            metric,
            neutral_label,
            image_dims,
            median_raw,
        })
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn pooled_cov(&self) -> &CovarianceModel {
        &self.pooled_cov
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Same model classifying with a different metric.
    pub fn with_metric(&self, metric: Metric) -> GestureModel {
        GestureModel {
            metric,
            ..self.clone()
        }
    }

    pub fn neutral_label(&self) -> &str {
        &self.neutral_label
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    pub fn k(&self) -> usize {
        self.subspace.k()
    }

    /// Median raw intensity over the non-neutral training images.
    pub fn median_raw(&self) -> f64 {
        self.median_raw
    }

    fn neutral(&self) -> &ClassModel {
        self.classes
            .iter()
            .find(|c| c.label == self.neutral_label)
            .expect("neutral class present by construction")
    }

    /// Face-space coordinates of an image.
    pub fn project_image(&self, img: &GrayImage) -> Result<Vec<f64>> {
        if img.dims() != self.image_dims {
            return Err(Error::Dimension {
                expected: self.image_dims.0 * self.image_dims.1,
                found: img.width() * img.height(),
            });
        }
        self.subspace.project(&normalize_zmuv(img)?)
    }

    pub fn classify(&self, img: &GrayImage) -> Result<ClassificationResult> {
        self.classify_coords(&self.project_image(img)?)
    }

    /// Minimum-distance decision on face-space coordinates; ties go to the
    /// lexicographically smallest label.
    pub fn classify_coords(&self, coords: &[f64]) -> Result<ClassificationResult> {
        let per_class = self
            .classes
            .iter()
            .map(|c| {
                Ok((
                    c.label.clone(),
                    distance(self.metric, coords, &c.mu, &self.pooled_cov)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(argmin(per_class))
    }

    pub fn intensity(&self, img: &GrayImage) -> Result<Intensity> {
        self.intensity_coords(&self.project_image(img)?)
    }

    /// Mahalanobis distance from the neutral mean (whatever the
    /// classification metric) and `raw / (raw + median_raw)`.
    pub fn intensity_coords(&self, coords: &[f64]) -> Result<Intensity> {
        let m = self.median_raw;
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::IntensityUnavailable(m));
        }
        let raw = mahalanobis(coords, &self.neutral().mu, &self.pooled_cov)?;
        Ok(Intensity {
            raw,
            score: raw / (raw + m),
        })
    }

    pub fn evaluate(&self, test: &LabeledDataset) -> Result<Evaluation> {
        let labels = self.labels();
        let index_of = |label: &str| {
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::UnknownLabel(label.to_string()))
        };
        let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
        let mut correct = 0usize;
        for (label, img) in test.items() {
            let truth = index_of(label)?;
            let predicted = index_of(&self.classify(img)?.label)?;
            confusion[truth][predicted] += 1;
            if truth == predicted {
                correct += 1;
            }
        }
        Ok(Evaluation {
            accuracy: correct as f64 / test.len() as f64,
            confusion,
            labels,
        })
    }

    /// Serializes to the line-oriented `FGR1` text format.
    pub fn to_fgr1(&self) -> String {
        let mut s = String::new();
        let (w, h) = self.image_dims;
        let k = self.k();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "dims {w} {h} {k}");
        let _ = writeln!(s, "metric {}", self.metric);
        let _ = writeln!(s, "lambda {}", real(self.pooled_cov.shrinkage()));
        let _ = writeln!(s, "neutral {}", self.neutral_label);
        let _ = writeln!(s, "median_raw {}", real(self.median_raw));
        write_reals(&mut s, "mean", self.subspace.mean());
        write_reals(&mut s, "eigenvalues", self.subspace.eigenvalues());
        for i in 0..k {
            write_reals(&mut s, "basis", self.subspace.component(i));
        }
        let _ = writeln!(s, "classes {}", self.classes.len());
        for c in &self.classes {
            write_reals(&mut s, &format!("class {} {}", c.label, c.count), &c.mu);
        }
        let _ = writeln!(s, "cov");
        let sigma = self.pooled_cov.sigma();
        for i in 0..k {
            let row: Vec<String> = sigma.row(i).iter().map(|&v| real(v)).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_fgr1(text: &str) -> Result<Self> {
        Parser::new(text).model()
    }
}

fn argmin(per_class: Vec<(String, f64)>) -> ClassificationResult {
    let mut best = 0;
    for (i, (_, d)) in per_class.iter().enumerate() {
        if *d < per_class[best].1 {
            best = i;
        }
    }
    ClassificationResult {
        label: per_class[best].0.clone(),
        distance: per_class[best].1,
        per_class,
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_reals(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for &v in values {
        s.push(' ');
        s.push_str(&real(v));
    }
    s.push('\n');
}

pub fn save_model(model: &GestureModel) -> Vec<u8> {
    model.to_fgr1().into_bytes()
}

pub fn load_model(bytes: &[u8]) -> Result<GestureModel> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| Error::parse(1, format!("not UTF-8: {e}")))?;
    GestureModel::from_fgr1(text)
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Split<'a, char>>,
    last: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let text = text.strip_suffix('\n').unwrap_or(text);
        Parser {
            lines: text.split('\n').enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.lines.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok((i + 1, line.split(' ').collect()))
            }
            None => Err(Error::parse(
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    /// Reads a line starting with `key` followed by exactly `count` fields.
    fn keyed(&mut self, key: &str, count: usize) -> Result<(usize, Vec<&'a str>)> {
        let (no, fields) = self.next_line(key)?;
        if fields[0] != key {
            return Err(Error::parse(
                no,
                format!("expected {key:?}, found {:?}", fields[0]),
            ));
        }
        if fields.len() != count + 1 {
            return Err(Error::parse(
                no,
                format!("{key}: expected {count} fields, found {}", fields.len() - 1),
            ));
        }
        Ok((no, fields[1..].to_vec()))
    }

    fn model(mut self) -> Result<GestureModel> {
        let (no, magic) = self.next_line("magic")?;
        if magic != [MAGIC] {
            return Err(Error::parse(
                no,
                format!("bad magic line, expected {MAGIC}"),
            ));
        }
        let (no, dims) = self.keyed("dims", 3)?;
        let width = parse_count(no, dims[0])?;
        let height = parse_count(no, dims[1])?;
        let k = parse_count(no, dims[2])?;
        if width == 0 || height == 0 || k == 0 {
            return Err(Error::parse(no, "dimensions and k must be positive"));
        }
        let d = width * height;

        let (no, metric) = self.keyed("metric", 1)?;
        let metric: Metric = metric[0]
            .parse()
            .map_err(|_| Error::parse(no, format!("unknown metric {:?}", metric[0])))?;
        let (no, lambda) = self.keyed("lambda", 1)?;
        let lambda = parse_real(no, lambda[0])?;
        let (_, neutral) = self.keyed("neutral", 1)?;
        let neutral = neutral[0].to_string();
        let (no, median) = self.keyed("median_raw", 1)?;
        let median_raw = parse_real(no, median[0])?;

        let (no, mean) = self.keyed("mean", d)?;
        let mean = parse_reals(no, &mean)?;
        let (no, eig) = self.keyed("eigenvalues", k)?;
        let eigenvalues = parse_reals(no, &eig)?;
        let mut basis = Vec::with_capacity(k * d);
        for _ in 0..k {
            let (no, row) = self.keyed("basis", d)?;
            basis.extend(parse_reals(no, &row)?);
        }
        let subspace = Subspace::from_parts(mean, Matrix::from_vec(k, d, basis)?, eigenvalues)?;

        let (no, count) = self.keyed("classes", 1)?;
        let class_count = parse_count(no, count[0])?;
        let mut classes = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let (no, fields) = self.keyed("class", k + 2)?;
            classes.push(ClassModel {
                label: fields[0].to_string(),
                count: parse_count(no, fields[1])?,
                mu: parse_reals(no, &fields[2..])?,
            });
        }

        self.keyed("cov", 0)?;
        let mut sigma = Vec::with_capacity(k * k);
        for _ in 0..k {
            let (no, row) = self.next_line("covariance row")?;
            if row.len() != k {
                return Err(Error::parse(
                    no,
                    format!("covariance row: expected {k} fields, found {}", row.len()),
                ));
            }
            sigma.extend(parse_reals(no, &row)?);
        }
        let cov_line = self.last;
        if let Some((i, _)) = self.lines.next() {
            return Err(Error::parse(i + 1, "trailing content after covariance"));
        }

        let pooled_cov = CovarianceModel::new(Matrix::from_vec(k, k, sigma)?, lambda)
            .map_err(|e| Error::parse(cov_line, e.to_string()))?;
        GestureModel::from_parts(
            subspace,
            classes,
            pooled_cov,
            metric,
            neutral,
            (width, height),
            median_raw,
        )
        .map_err(|e| Error::parse(cov_line, e.to_string()))
    }
}

fn parse_count(line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid integer {s:?}")))
}

fn parse_real(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number {s:?}")));
    }
    Ok(v)
}

fn parse_reals(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields.iter().map(|f| parse_real(line, f)).collect()
}

/// Nearest-training-image variant of classification: distances go to every
/// projected training image (with the model's metric and pooled covariance)
/// rather than to class means.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'m> {
    model: &'m GestureModel,
    points: Vec<(String, Vec<f64>)>,
}

impl<'m> NeighborIndex<'m> {
    pub fn new(model: &'m GestureModel, train: &LabeledDataset) -> Result<Self> {
        let labels = model.labels();
        let points = train
            .items()
            .iter()
            .map(|(label, img)| {
                if !labels.contains(label) {
                    return Err(Error::UnknownLabel(label.clone()));
                }
                Ok((label.clone(), model.project_image(img)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NeighborIndex { model, points })
    }

    pub fn classify(&self, img: &GrayImage) -> Result<ClassificationResult> {
        self.classify_coords(&self.model.project_image(img)?)
    }

    /// `per_class` holds the distance to each class's nearest training image.
    pub fn classify_coords(&self, coords: &[f64]) -> Result<ClassificationResult> {
        let mut per_class: Vec<(String, f64)> = self
            .model
            .labels()
            .into_iter()
            .map(|l| (l, f64::INFINITY))
            .collect();
        for (label, p) in &self.points {
            let d = distance(self.model.metric, coords, p, &self.model.pooled_cov)?;
            let slot = per_class
                .iter_mut()
                .find(|(l, _)| l == label)
                .expect("labels validated on construction");
            slot.1 = slot.1.min(d);
        }
        Ok(argmin(per_class))
    }
}
