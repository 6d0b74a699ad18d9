//! Synthetic benchmark comparing the four distance measures on identical
//! train/test splits.

use crate::classifier::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::imgio::{synth_dataset, SynthParams};
use crate::metrics::{Metric, DEFAULT_SHRINKAGE};
use crate::subspace::Retain;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub retain: Retain,
    pub lambda: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            classes: 5,
            train_per_class: 20,
            test_per_class: 20,
            width: 32,
            height: 32,
            sigma: 0.15,
            seeds: vec![1, 2, 3, 4, 5],
            retain: Retain::default(),
            lambda: DEFAULT_SHRINKAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Test accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// One row per metric in `Metric::ALL` order.
    pub rows: Vec<MetricSummary>,
}

impl BenchReport {
    pub fn row(&self, metric: Metric) -> &MetricSummary {
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .expect("every metric is benchmarked")
    }

    /// Whether mean Mahalanobis accuracy is at least mean Euclidean accuracy.
    pub fn ordering_holds(&self) -> bool {
        self.row(Metric::Mahalanobis).mean >= self.row(Metric::Euclidean).mean
    }

    pub fn to_tsv(&self, header: bool) -> String {
        let mut s = String::new();
        if header {
            s.push_str("metric\tmean_accuracy\tstddev\n");
        }
        for r in &self.rows {
            s.push_str(&format!("{}\t{:.6}\t{:.6}\n", r.metric, r.mean, r.stddev));
        }
        s
    }
}

/// For every seed, synthesizes `train_per_class + test_per_class` images per
/// class, splits each class in generation order, trains once, and evaluates
/// the held-out split under every metric.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one seed is required".into(),
        ));
    }
    if config.train_per_class == 0 || config.test_per_class == 0 {
        return Err(Error::InvalidArgument(
            "train and test splits need at least one image per class".into(),
        ));
    }
    let mut accuracies: Vec<Vec<f64>> = vec![Vec::new(); Metric::ALL.len()];
    for &seed in &config.seeds {
        let data = synth_dataset(&SynthParams {
            classes: config.classes,
            per_class: config.train_per_class + config.test_per_class,
            width: config.width,
            height: config.height,
            noise_sigma: config.sigma,
            seed,
        })?;
        let (train_set, test_set) = data.split_per_class(config.train_per_class)?;
        let model = train(
            &train_set,
            &TrainConfig {
                retain: config.retain,
                lambda: config.lambda,
                ..TrainConfig::default()
            },
        )?;
        for (slot, metric) in accuracies.iter_mut().zip(Metric::ALL) {
            slot.push(model.with_metric(metric).evaluate(&test_set)?.accuracy);
        }
    }
    let rows = Metric::ALL
        .into_iter()
        .zip(accuracies)
        .map(|(metric, accuracies)| {
            let (mean, stddev) = mean_and_stddev(&accuracies);
            MetricSummary {
                metric,
                accuracies,
                mean,
                stddev,
            }
        })
        .collect();
    Ok(BenchReport { rows })
}

fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
