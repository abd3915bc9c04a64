//! Analytic gradients against central finite differences.

use fedinfo_core::nn::{Layer, Model, ModelSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn loss(model: &Model<f64>, x: &Tensor<f64>, y: &[usize]) -> f64 {
    model.loss_and_grad(x, y).unwrap().0
}

/// Largest per-layer relative error `|g_a - g_n| / max(|g_a|, |g_n|)` (norms
/// over each parametric layer's weights and biases).
fn max_rel_error(spec: ModelSpec, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f64>::init(spec.clone(), seed);
    // nonzero biases so every unit is exercised off its kink
    for v in model.params_mut().as_mut_slice() {
        *v += rng.random_range(-0.05..0.05);
    }
    let x: Vec<f64> = (0..batch * spec.input_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut shape = vec![batch];
    shape.extend_from_slice(spec.input_shape());
    let x = Tensor::new(shape, x).unwrap();
    let y: Vec<usize> = (0..batch)
        .map(|_| rng.random_range(0..spec.num_classes()))
        .collect();

    let (_, analytic) = model.loss_and_grad(&x, &y).unwrap();
    let mut worst = 0.0f64;
    for i in 0..spec.layers().len() {
        let Some(slot) = spec.slot(i) else { continue };
        let (mut diff, mut a_norm, mut n_norm) = (0.0, 0.0, 0.0);
        let range = slot.weights.start..slot.bias.end;
        for (p, &ga) in range.clone().zip(&analytic[range]) {
            let orig = model.params().as_slice()[p];
            model.params_mut().as_mut_slice()[p] = orig + H;
            let up = loss(&model, &x, &y);
            model.params_mut().as_mut_slice()[p] = orig - H;
            let down = loss(&model, &x, &y);
            model.params_mut().as_mut_slice()[p] = orig;
            let numeric = (up - down) / (2.0 * H);
            diff += (ga - numeric).powi(2);
            a_norm += ga.powi(2);
            n_norm += numeric.powi(2);
        }
        let denom = a_norm.sqrt().max(n_norm.sqrt()).max(1e-12);
        worst = worst.max(diff.sqrt() / denom);
    }
    worst
}

fn check(name: &str, configs: Vec<ModelSpec>) {
    assert!(configs.len() >= 3);
    for (i, spec) in configs.into_iter().enumerate() {
        let err = max_rel_error(spec, 3, 100 + i as u64);
        assert!(err < TOL, "{name} config {i}: relative error {err:e}");
    }
}

use Layer::*;

fn conv(out_channels: usize, kernel: usize, stride: usize) -> Layer {
    Conv2d {
        out_channels,
        kernel,
        stride,
    }
}

#[test]
fn dense() {
    check(
        "dense",
        vec![
            ModelSpec::new(vec![Dense { out_dim: 5 }, Dense { out_dim: 3 }], vec![4], 3).unwrap(),
            ModelSpec::new(
                vec![
                    Dense { out_dim: 7 },
                    Dense { out_dim: 6 },
                    Dense { out_dim: 2 },
                ],
                vec![9],
                2,
            )
            .unwrap(),
            ModelSpec::mlp(vec![6], &[8, 4], 5).unwrap(),
        ],
    );
}

#[test]
fn relu() {
    check(
        "relu",
        vec![
            ModelSpec::mlp(vec![3], &[6], 2).unwrap(),
            ModelSpec::mlp(vec![5], &[7, 7], 4).unwrap(),
            ModelSpec::mlp(vec![2, 3], &[5, 3], 3).unwrap(),
        ],
    );
}

#[test]
fn conv2d() {
    check(
        "conv2d",
        vec![
            ModelSpec::new(
                vec![
                    conv(2, 3, 1),
                    Flatten,
                    Dense { out_dim: 4 },
                    Dense { out_dim: 3 },
                ],
                vec![1, 5, 5],
                3,
            )
            .unwrap(),
            ModelSpec::new(
                vec![
                    conv(3, 2, 2),
                    Relu,
                    Flatten,
                    Dense { out_dim: 5 },
                    Relu,
                    Dense { out_dim: 2 },
                ],
                vec![2, 6, 6],
                2,
            )
            .unwrap(),
            ModelSpec::new(
                vec![
                    conv(2, 3, 1),
                    Relu,
                    conv(3, 2, 1),
                    Flatten,
                    Dense { out_dim: 4 },
                    Dense { out_dim: 4 },
                ],
                vec![3, 6, 5],
                4,
            )
            .unwrap(),
        ],
    );
}

#[test]
fn maxpool() {
    check(
        "maxpool",
        vec![
            ModelSpec::new(
                vec![
                    conv(2, 3, 1),
                    MaxPool { kernel: 2 },
                    Flatten,
                    Dense { out_dim: 4 },
                    Dense { out_dim: 3 },
                ],
                vec![1, 7, 7],
                3,
            )
            .unwrap(),
            ModelSpec::new(
                vec![
                    conv(3, 2, 1),
                    Relu,
                    MaxPool { kernel: 3 },
                    Flatten,
                    Dense { out_dim: 5 },
                    Relu,
                    Dense { out_dim: 2 },
                ],
                vec![2, 7, 7],
                2,
            )
            .unwrap(),
            ModelSpec::new(
                vec![
                    MaxPool { kernel: 2 },
                    Flatten,
                    Dense { out_dim: 6 },
                    Relu,
                    Dense { out_dim: 3 },
                ],
                vec![2, 4, 6],
                3,
            )
            .unwrap(),
        ],
    );
}

#[test]
fn flatten_and_lenet_shape() {
    check(
        "flatten",
        vec![
            ModelSpec::new(
                vec![Flatten, Dense { out_dim: 4 }, Dense { out_dim: 2 }],
                vec![2, 3, 2],
                2,
            )
            .unwrap(),
            ModelSpec::new(
                vec![
                    conv(1, 2, 1),
                    Flatten,
                    Dense { out_dim: 3 },
                    Dense { out_dim: 3 },
                ],
                vec![1, 4, 4],
                3,
            )
            .unwrap(),
            // LeNet topology at a reduced input size
            ModelSpec::new(
                vec![
                    conv(2, 3, 1),
                    Relu,
                    MaxPool { kernel: 2 },
                    conv(3, 2, 1),
                    Relu,
                    MaxPool { kernel: 2 },
                    Flatten,
                    Dense { out_dim: 6 },
                    Relu,
                    Dense { out_dim: 5 },
                    Relu,
                    Dense { out_dim: 3 },
                ],
                vec![2, 12, 12],
                3,
            )
            .unwrap(),
        ],
    );
}
