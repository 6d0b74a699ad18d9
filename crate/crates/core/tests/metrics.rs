mod common;

use common::{mahalanobis_oracle, random_spd, rng};
use gesture_core::linalg::Matrix;
use gesture_core::metrics::{distance, shrink_variances};
use gesture_core::{
    build_cov_model, cityblock, estimate_covariance, euclidean, mahalanobis, weighted_euclidean,
    CovarianceModel, Metric,
};
use proptest::prelude::*;
use rand::Rng;

fn vec_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, k)
}

fn spd_model(seed: u64, k: usize, lambda: f64) -> CovarianceModel {
    build_cov_model(random_spd(&mut rng(seed), k, 0.3), lambda).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(
        seed in any::<u64>(),
        (x, y, z) in (1..8usize).prop_flat_map(|k| (vec_strategy(k), vec_strategy(k), vec_strategy(k))),
        lambda in 0.0..1.0f64,
    ) {
        let cov = spd_model(seed, x.len(), lambda);
        for metric in Metric::ALL {
            let d = |a: &[f64], b: &[f64]| distance(metric, a, b, &cov).unwrap();
            prop_assert_eq!(d(&x, &x), 0.0);
            prop_assert!(d(&x, &y) >= 0.0);
            prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12 * (1.0 + d(&x, &y)));
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
        }
    }

    #[test]
    fn agrees_with_explicit_inverse(
        seed in any::<u64>(),
        (x, mu) in (1..10usize).prop_flat_map(|k| (vec_strategy(k), vec_strategy(k))),
    ) {
        let sigma = random_spd(&mut rng(seed), x.len(), 0.5);
        let want = mahalanobis_oracle(&x, &mu, &sigma);
        let got = mahalanobis(&x, &mu, &build_cov_model(sigma, 0.0).unwrap()).unwrap();
        prop_assert!((got - want).abs() <= 1e-8);
    }

    #[test]
    fn diagonal_sigma_matches_weighted_euclidean(
        var in prop::collection::vec(0.05..5.0f64, 1..10),
        seed in any::<u64>(),
        lambda in 0.0..1.0f64,
    ) {
        let k = var.len();
        let mut sigma = Matrix::zeros(k, k);
        for (i, v) in var.iter().enumerate() {
            sigma[(i, i)] = *v;
        }
        let mut r = rng(seed);
        let x: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let mu: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let cov = build_cov_model(sigma, lambda).unwrap();
        let md = mahalanobis(&x, &mu, &cov).unwrap();
        let wed = weighted_euclidean(&x, &mu, &shrink_variances(&var, lambda)).unwrap();
        prop_assert!((md - wed).abs() <= 1e-10);
        prop_assert!((distance(Metric::WeightedEuclidean, &x, &mu, &cov).unwrap() - wed).abs() <= 1e-10);
    }

    #[test]
    fn full_shrinkage_is_scaled_euclidean(
        seed in any::<u64>(),
        (x, mu) in (1..8usize).prop_flat_map(|k| (vec_strategy(k), vec_strategy(k))),
    ) {
        let k = x.len();
        let sigma = random_spd(&mut rng(seed), k, 0.3);
        let c = sigma.trace() / k as f64;
        let md = mahalanobis(&x, &mu, &build_cov_model(sigma, 1.0).unwrap()).unwrap();
        prop_assert!((md - euclidean(&x, &mu).unwrap() / c.sqrt()).abs() <= 1e-10 * (1.0 + md));
    }

    #[test]
    fn level_set_is_an_ellipsoid(seed in any::<u64>(), k in 2..6usize) {
        // x = μ + L u with |u| = 1 lies at distance exactly 1
        let cov = spd_model(seed, k, 0.0);
        let mut r = rng(seed ^ 0x5eed);
        let mu: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
        for _ in 0..100 {
            let mut u: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= n);
            let offset = cov.factor().lower().matvec(&u).unwrap();
            let x: Vec<f64> = mu.iter().zip(&offset).map(|(m, o)| m + o).collect();
            prop_assert!((mahalanobis(&x, &mu, &cov).unwrap() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn identity_reduces_to_euclidean() {
    let cov = build_cov_model(Matrix::identity(3), 0.0).unwrap();
    let (x, mu) = ([1.0, -2.0, 0.5], [0.0, 1.0, 2.5]);
    assert!((mahalanobis(&x, &mu, &cov).unwrap() - euclidean(&x, &mu).unwrap()).abs() <= 1e-12);
    assert_eq!(cityblock(&x, &mu).unwrap(), 6.0);
}

#[test]
fn covariance_estimate_matches_two_pass_loop() {
    let mut r = rng(12);
    let (n, k) = (40, 5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let mu: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|row| row[j]).sum::<f64>() / n as f64)
        .collect();
    let got = estimate_covariance(&x, &mu).unwrap();
    for a in 0..k {
        for b in 0..k {
            let want = rows
                .iter()
                .map(|row| (row[a] - mu[a]) * (row[b] - mu[b]))
                .sum::<f64>()
                / n as f64;
            assert!((got[(a, b)] - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn invalid_covariances_rejected() {
    let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
    assert!(build_cov_model(asym, 0.1).is_err());
    let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert!(build_cov_model(singular.clone(), 0.0).is_err());
    assert!(build_cov_model(singular, 0.1).is_ok());
    assert!(build_cov_model(Matrix::identity(2), 1.5).is_err());
    assert!(build_cov_model(Matrix::zeros(2, 2), 0.0).is_err());
    assert!(build_cov_model(Matrix::zeros(2, 2), 0.5).is_ok());
    let cov = build_cov_model(Matrix::identity(2), 0.0).unwrap();
    assert!(mahalanobis(&[1.0], &[0.0, 0.0], &cov).is_err());
}
