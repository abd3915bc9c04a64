//! MI estimator against closed-form values.

use fedinfo_core::mi::{estimate_mi, one_hot, MiConfig};
use fedinfo_core::nn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn column(v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(vec![v.len(), 1], v).unwrap()
}

fn gaussian_pair(rho: f64, n: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
    }
    (column(x), column(y))
}

#[test]
fn bivariate_gaussian() {
    let rho: f64 = 0.8;
    let truth = -0.5 * (1.0 - rho * rho).ln();
    let (x, y) = gaussian_pair(rho, 20_000, 1);
    let est = estimate_mi(&x, &y, &MiConfig::default())
        .unwrap()
        .value_nats;
    assert!((est - truth).abs() < 0.1, "estimate {est} vs {truth}");
}

#[test]
fn identical_uniform_k4_scalar_and_one_hot() {
    let truth = 4f64.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels: Vec<usize> = (0..4000).map(|_| rng.random_range(0..4)).collect();
    let oh = one_hot::<f64>(&labels, 4);
    let est = estimate_mi(&oh, &oh, &MiConfig::default())
        .unwrap()
        .value_nats;
    assert!(
        (est - truth).abs() < 0.05,
        "one-hot estimate {est} vs {truth}"
    );

    let v = column(labels.iter().map(|&l| l as f64).collect());
    let est = estimate_mi(&v, &v, &MiConfig::default())
        .unwrap()
        .value_nats;
    assert!(
        (est - truth).abs() < 0.05,
        "scalar estimate {est} vs {truth}"
    );
}

#[test]
fn independent_pairs_average_near_zero() {
    let mean: f64 = (0..20)
        .map(|s| {
            let (x, y) = gaussian_pair(0.0, 5000, 1000 + s);
            let cfg = MiConfig {
                hash_seed: s,
                ..MiConfig::default()
            };
            estimate_mi(&x, &y, &cfg).unwrap().value_nats
        })
        .sum::<f64>()
        / 20.0;
    assert!(mean <= 0.05, "mean {mean}");
}

#[test]
fn more_correlation_more_information() {
    let cfg = MiConfig::default();
    let values: Vec<f64> = [0.2, 0.5, 0.8, 0.95]
        .iter()
        .map(|&r| {
            let (x, y) = gaussian_pair(r, 10_000, 7);
            estimate_mi(&x, &y, &cfg).unwrap().value_nats
        })
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
}

fn paired(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0f64..5.0, n * 2),
        prop::collection::vec(-5.0f64..5.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounded_by_log_n((xs, ys) in (2usize..60).prop_flat_map(paired), seed in 0u64..1000) {
        let n = ys.len();
        let x = Tensor::new(vec![n, 2], xs).unwrap();
        let y = column(ys);
        let cfg = MiConfig { hash_seed: seed, ..MiConfig::default() };
        let est = estimate_mi(&x, &y, &cfg).unwrap();
        prop_assert!(est.value_nats >= 0.0);
        prop_assert!(est.value_nats <= (n as f64).ln() + 1e-12);
        prop_assert!(est.per_epsilon.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn row_order_does_not_matter((xs, ys) in (2usize..60).prop_flat_map(paired), rot in 0usize..60) {
        let n = ys.len();
        let k = rot % n;
        let x = Tensor::new(vec![n, 2], xs.clone()).unwrap();
        let y = column(ys.clone());
        let mut xr = xs;
        xr.rotate_left(2 * k);
        let mut yr = ys;
        yr.rotate_left(k);
        let xr = Tensor::new(vec![n, 2], xr).unwrap();
        let yr = column(yr);
        let cfg = MiConfig::default();
        prop_assert_eq!(
            estimate_mi(&x, &y, &cfg).unwrap(),
            estimate_mi(&xr, &yr, &cfg).unwrap()
        );
    }
}
