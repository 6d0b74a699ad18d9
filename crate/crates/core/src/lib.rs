//! Facial gesture recognition pipeline.
//!
//! A feature region is located in a frame by normalized cross-correlation
//! ([`correlation`]), projected into a PCA face space ([`subspace`]), and
//! assigned to the expression class whose reference mean is nearest under
//! one of four distances ([`metrics`], [`classifier`]). Expression intensity
//! is the Mahalanobis distance from the neutral-class mean.

pub mod classifier;
pub mod cli;
pub mod correlation;
pub mod error;
pub mod imgio;
pub mod linalg;
pub mod metrics;
pub mod subspace;

pub use classifier::{
    load_model, save_model, train, ClassModel, ClassificationResult, Evaluation, GestureModel,
    Intensity, NeighborIndex, TrainConfig,
};
pub use correlation::{
    cross_correlate_direct, cross_correlate_fft, find_peaks, locate, ncc, CorrelationMap, Peak,
};
pub use error::{Error, Result};
pub use imgio::{
    flatten, load_dataset, normalize_zmuv, read_pgm, synth_dataset, write_pgm, GrayImage,
    LabeledDataset, SynthParams,
};
pub use metrics::{
    build_cov_model, cityblock, estimate_covariance, euclidean, mahalanobis, weighted_euclidean,
    CovarianceModel, Metric,
};
pub use subspace::{choose_k, fit_pca_direct, fit_pca_snapshot, Retain, Subspace};
