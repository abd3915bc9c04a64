//! SGD end to end on tiny problems, in both float widths.

use fedinfo_core::nn::{accuracy_on, Model, ModelSpec, Tensor};
use fedinfo_core::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two classes split by the sign of `x0 + x1`, with a margin.
fn separable<T: Scalar>(n: usize, seed: u64) -> (Tensor<T>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    while y.len() < n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        if (a + b).abs() < 0.2 {
            continue;
        }
        x.push(T::from_f64_lossy(a));
        x.push(T::from_f64_lossy(b));
        y.push(usize::from(a + b > 0.0));
    }
    (Tensor::new(vec![n, 2], x).unwrap(), y)
}

fn train<T: Scalar>() -> (f64, f64, f64) {
    let (x, y) = separable::<T>(128, 5);
    let mut model = Model::<T>::init(ModelSpec::mlp(vec![2], &[8], 2).unwrap(), 3);
    let first = model.loss_and_grad(&x, &y).unwrap().0.as_f64();
    let lr = T::from_f64_lossy(0.5);
    for _ in 0..200 {
        model.sgd_step(&x, &y, lr).unwrap();
    }
    let last = model.loss_and_grad(&x, &y).unwrap().0.as_f64();
    (first, last, accuracy_on(&model, &x, &y).unwrap())
}

#[test]
fn loss_falls_on_separable_data() {
    let (first, last, acc) = train::<f64>();
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn single_precision_trains_too() {
    let (first, last, acc) = train::<f32>();
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn lenet_forward_shapes() {
    let spec = ModelSpec::lenet([3, 32, 32], 10).unwrap();
    assert_eq!(spec.param_count(), 62006);
    assert_eq!(spec.representation_dim(), 84);
    let model = Model::<f32>::init(spec, 0);
    let (logits, z) = model.forward(&Tensor::zeros(vec![2, 3, 32, 32])).unwrap();
    assert_eq!(logits.shape(), &[2, 10]);
    assert_eq!(z.shape(), &[2, 84]);
}
