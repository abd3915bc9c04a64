use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvGeom};
use super::spec::{Layer, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat copy of every trainable parameter, in the canonical layout: layers in
/// ascending order, each contributing its weights (row-major) then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// FNV-1a over the raw bit patterns; equal hashes for bit-identical vectors.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.0 {
            for byte in v.as_f64().to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// A network: its spec plus current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    params: ParamVector<T>,
}

/// Per-layer activations kept for the backward pass.
struct Trace<T> {
    // acts[0] is the input, acts[i + 1] the output of layer i
    acts: Vec<Vec<T>>,
    pool_args: Vec<Vec<usize>>,
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform weights, zero biases, fully determined by `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![T::zero(); spec.param_count()];
        for i in 0..spec.layers().len() {
            if let Some(slot) = spec.slot(i) {
                let bound = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
                for v in &mut values[slot.weights.clone()] {
                    let u: f64 = rng.random();
                    *v = T::from_f64_lossy((2.0 * u - 1.0) * bound);
                }
            }
        }
        Self {
            spec,
            params: ParamVector(values),
        }
    }

    /// Imports a parameter vector; fails if its length disagrees with `spec`.
    pub fn from_params(spec: ModelSpec, params: ParamVector<T>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::ParamCount {
                expected: spec.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<T> {
        &mut self.params
    }

    pub fn export(&self) -> ParamVector<T> {
        self.params.clone()
    }

    /// Weights of layer `i` as a flat `(out, in)` (dense) or
    /// `(out, in_c, k, k)` (conv) block.
    pub fn layer_weights(&self, i: usize) -> Option<&[T]> {
        self.spec
            .slot(i)
            .map(|s| &self.params.as_slice()[s.weights.clone()])
    }

    pub fn layer_bias(&self, i: usize) -> Option<&[T]> {
        self.spec
            .slot(i)
            .map(|s| &self.params.as_slice()[s.bias.clone()])
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let shape = batch.shape();
        if shape.len() != self.spec.input_shape().len() + 1
            || &shape[1..] != self.spec.input_shape()
        {
            let mut expected = vec![shape.first().copied().unwrap_or(0)];
            expected.extend_from_slice(self.spec.input_shape());
            return Err(Error::ShapeMismatch {
                expected,
                actual: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    fn run(&self, input: &[T], n: usize) -> Result<Trace<T>> {
        let p = self.params.as_slice();
        let layers = self.spec.layers();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(layers.len() + 1);
        let mut pool_args = vec![Vec::new(); layers.len()];
        acts.push(input.to_vec());
        for (i, layer) in layers.iter().enumerate() {
            let x = &acts[i];
            let in_shape = self.spec.input_shape_of(i);
            let y = match *layer {
                Layer::Dense { .. } => {
                    let slot = self.spec.slot(i).expect("dense has params");
                    kernels::dense_forward(
                        x,
                        n,
                        slot.fan_in,
                        &p[slot.weights.clone()],
                        &p[slot.bias.clone()],
                    )
                }
                Layer::Conv2d { .. } => {
                    let slot = self.spec.slot(i).expect("conv has params");
                    kernels::conv_forward(
                        x,
                        n,
                        self.geom(i),
                        &p[slot.weights.clone()],
                        &p[slot.bias.clone()],
                    )
                }
                Layer::MaxPool { kernel } => {
                    let (y, arg) = kernels::pool_forward(
                        x,
                        n,
                        (in_shape[0], in_shape[1], in_shape[2]),
                        kernel,
                    );
                    pool_args[i] = arg;
                    y
                }
                Layer::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
                Layer::Flatten => x.clone(),
            };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "activation",
                    layer: i,
                });
            }
            acts.push(y);
        }
        Ok(Trace { acts, pool_args })
    }

    fn geom(&self, i: usize) -> ConvGeom {
        let Layer::Conv2d {
            out_channels,
            kernel,
            stride,
        } = self.spec.layers()[i]
        else {
            unreachable!("geom requested for non-conv layer {i}");
        };
        let inp = self.spec.input_shape_of(i);
        let out = self.spec.output_shape(i);
        ConvGeom {
            c: inp[0],
            h: inp[1],
            w: inp[2],
            o: out_channels,
            k: kernel,
            stride,
            oh: out[1],
            ow: out[2],
        }
    }

    /// Returns `(logits, representation)`; the representation is the
    /// post-activation output of the last hidden dense layer.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = self.check_batch(batch)?;
        let mut trace = self.run(batch.data(), n)?;
        let tap = self.spec.tap_layer();
        let logits = trace.acts.pop().expect("at least one layer");
        let rep = std::mem::take(&mut trace.acts[tap + 1]);
        Ok((
            Tensor::new(vec![n, self.spec.num_classes()], logits)?,
            Tensor::new(vec![n, self.spec.representation_dim()], rep)?,
        ))
    }

    /// Mean softmax cross-entropy (nats) and its gradient in parameter layout.
    pub fn loss_and_grad(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
        let n = self.check_batch(batch)?;
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        let k = self.spec.num_classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: k,
            });
        }

        let trace = self.run(batch.data(), n)?;
        let layers = self.spec.layers();
        let last = layers.len() - 1;
        let (loss, mut dy) = kernels::softmax_cross_entropy(&trace.acts[last + 1], labels, k);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                layer: last,
            });
        }

        let p = self.params.as_slice();
        let mut grad = vec![T::zero(); p.len()];
        for i in (0..layers.len()).rev() {
            let x = &trace.acts[i];
            let need_dx = i > 0;
            let dx = match layers[i] {
                Layer::Dense { .. } => {
                    let slot = self.spec.slot(i).expect("dense has params");
                    let (gw, gb) =
                        grad[slot.weights.start..slot.bias.end].split_at_mut(slot.weights.len());
                    kernels::dense_backward(
                        x,
                        &dy,
                        n,
                        slot.fan_in,
                        &p[slot.weights.clone()],
                        gw,
                        gb,
                        need_dx,
                    )
                }
                Layer::Conv2d { .. } => {
                    let slot = self.spec.slot(i).expect("conv has params");
                    let (gw, gb) =
                        grad[slot.weights.start..slot.bias.end].split_at_mut(slot.weights.len());
                    kernels::conv_backward(
                        x,
                        &dy,
                        n,
                        self.geom(i),
                        &p[slot.weights.clone()],
                        gw,
                        gb,
                        need_dx,
                    )
                }
                Layer::MaxPool { .. } => {
                    need_dx.then(|| kernels::pool_backward(&dy, &trace.pool_args[i], x.len()))
                }
                Layer::Relu => need_dx.then(|| {
                    dy.iter()
                        .zip(&trace.acts[i + 1])
                        .map(|(&g, &out)| if out > T::zero() { g } else { T::zero() })
                        .collect()
                }),
                Layer::Flatten => need_dx.then(|| dy.clone()),
            };
            if let Some(slot) = self.spec.slot(i) {
                if grad[slot.weights.start..slot.bias.end]
                    .iter()
                    .any(|g| !g.is_finite())
                {
                    return Err(Error::NonFinite {
                        what: "gradient",
                        layer: i,
                    });
                }
            }
            match dx {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok((loss, grad))
    }

    /// One plain SGD step on the mean batch loss; returns the pre-step loss.
    /// On error the parameters are left untouched.
    pub fn sgd_step(&mut self, batch: &Tensor<T>, labels: &[usize], lr: T) -> Result<T> {
        if !lr.is_finite() || lr < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "learning rate {lr} must be finite and >= 0"
            )));
        }
        let (loss, grad) = self.loss_and_grad(batch, labels)?;
        for (w, g) in self.params.as_mut_slice().iter_mut().zip(&grad) {
            *w -= lr * *g;
        }
        Ok(loss)
    }

    /// Value-style variant of [`Model::sgd_step`].
    pub fn stepped(&self, batch: &Tensor<T>, labels: &[usize], lr: T) -> Result<(Self, T)> {
        let mut next = self.clone();
        let loss = next.sgd_step(batch, labels, lr)?;
        Ok((next, loss))
    }

    /// Predicted class per row (argmax, ties to the lowest index).
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(batch)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `labels` matched by the model's argmax prediction.
pub fn accuracy_on<T: Scalar>(
    model: &Model<T>,
    batch: &Tensor<T>,
    labels: &[usize],
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let preds = model.predict(batch)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelSpec {
        ModelSpec::new(
            vec![
                Layer::Dense { out_dim: 4 },
                Layer::Relu,
                Layer::Dense { out_dim: 3 },
            ],
            vec![2],
            3,
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Model::<f64>::init(tiny(), 7);
        let b = Model::<f64>::init(tiny(), 7);
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), Model::<f64>::init(tiny(), 8).params());
        for i in [0, 2] {
            assert!(a.layer_bias(i).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn glorot_bound_for_dense_4_from_2() {
        // b = sqrt(6 / (2 + 4)) = 1
        let m = Model::<f64>::init(tiny(), 1);
        let w = m.layer_weights(0).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1.0));
        assert!(w.iter().any(|v| v.abs() > 0.5));
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let m = Model::<f64>::init(tiny(), 1);
        let bad = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        match m.forward(&bad) {
            Err(Error::ShapeMismatch { expected, actual }) => {
                assert_eq!(expected, vec![1, 2]);
                assert_eq!(actual, vec![1, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let spec = tiny();
        let n = spec.param_count();
        let m = Model::from_params(spec, ParamVector::new(vec![0.0f64; n])).unwrap();
        let batch = Tensor::new(vec![2, 2], vec![0.3, -1.0, 5.0, 2.0]).unwrap();
        let (logits, rep) = m.forward(&batch).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        assert_eq!(rep.shape(), &[2, 4]);
    }

    #[test]
    fn hand_computed_two_layer_mlp() {
        // W1 = [[1,2],[-1,1],[0.5,0],[0,-2]], b1 = [0, 1, -1, 0.5]
        // x = [1,1]: pre = [3, 1, -0.5, -1.5], relu = [3, 1, 0, 0]
        // W2 rows [1,0,0,0],[0,1,1,1],[1,-1,2,0], b2 = [0.5, 0, -1]
        // logits = [3.5, 1, 1]
        let params = vec![
            1.0, 2.0, -1.0, 1.0, 0.5, 0.0, 0.0, -2.0, // W1
            0.0, 1.0, -1.0, 0.5, // b1
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0, 2.0, 0.0, // W2
            0.5, 0.0, -1.0, // b2
        ];
        let m = Model::from_params(tiny(), ParamVector::new(params)).unwrap();
        let (logits, rep) = m
            .forward(&Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(rep.data(), &[3.0, 1.0, 0.0, 0.0]);
        assert_eq!(logits.data(), &[3.5, 1.0, 1.0]);
    }

    #[test]
    fn identity_hidden_layer_passes_input_through() {
        let spec = ModelSpec::new(
            vec![Layer::Dense { out_dim: 2 }, Layer::Dense { out_dim: 3 }],
            vec![2],
            3,
        )
        .unwrap();
        let mut params = vec![0.0f64; spec.param_count()];
        params[0] = 1.0;
        params[3] = 1.0;
        let m = Model::from_params(spec, ParamVector::new(params)).unwrap();
        let batch = Tensor::new(vec![2, 2], vec![0.25, -3.0, 7.0, 0.5]).unwrap();
        let (_, rep) = m.forward(&batch).unwrap();
        assert_eq!(rep.data(), batch.data());
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let spec = ModelSpec::mlp(vec![3], &[5], 10).unwrap();
        let n = spec.param_count();
        let mut m = Model::from_params(spec, ParamVector::new(vec![0.0f64; n])).unwrap();
        let batch = Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let loss = m.sgd_step(&batch, &[3, 9], 0.0).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut m = Model::<f64>::init(tiny(), 3);
        let before = m.export();
        let batch = Tensor::new(vec![2, 2], vec![0.1, 0.9, 0.4, 0.2]).unwrap();
        m.sgd_step(&batch, &[0, 2], 0.0).unwrap();
        assert_eq!(m.params(), &before);
    }

    #[test]
    fn bad_labels_and_empty_batches_rejected() {
        let mut m = Model::<f64>::init(tiny(), 3);
        let batch = Tensor::new(vec![1, 2], vec![0.1, 0.9]).unwrap();
        assert!(matches!(
            m.sgd_step(&batch, &[3], 0.1),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
        let empty = Tensor::new(vec![0, 2], vec![]).unwrap();
        assert!(matches!(m.sgd_step(&empty, &[], 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn non_finite_input_reports_layer() {
        let mut m = Model::<f64>::init(tiny(), 3);
        let batch = Tensor::new(vec![1, 2], vec![f64::INFINITY, 0.0]).unwrap();
        let before = m.export();
        assert!(matches!(
            m.sgd_step(&batch, &[0], 0.1),
            Err(Error::NonFinite { layer: 0, .. })
        ));
        assert_eq!(m.params(), &before);
    }

    #[test]
    fn export_import_round_trip() {
        let m = Model::<f64>::init(ModelSpec::lenet([3, 32, 32], 10).unwrap(), 11);
        let back = Model::from_params(m.spec().clone(), m.export()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.params().fingerprint(), m.params().fingerprint());
        assert!(Model::from_params(m.spec().clone(), ParamVector::new(vec![0.0; 5])).is_err());
    }

    #[test]
    fn accuracy_breaks_ties_to_lowest_class() {
        let spec = tiny();
        let n = spec.param_count();
        let m = Model::from_params(spec, ParamVector::new(vec![0.0f64; n])).unwrap();
        let batch = Tensor::new(vec![4, 2], vec![0.0; 8]).unwrap();
        assert_eq!(accuracy_on(&m, &batch, &[0, 0, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy_on(&m, &batch, &[0, 1, 2, 0]).unwrap(), 0.5);
        assert!(accuracy_on(&m, &Tensor::new(vec![0, 2], vec![]).unwrap(), &[]).is_err());
    }

    #[test]
    fn hand_built_logits_accuracy() {
        // logits per sample [3.5,1,1] -> 0 for x=[1,1]; x=[0,0] -> b2 + W2·relu(b1)
        // relu(b1) = [0,1,0,0.5]: logits [0.5, 1.5, -2] -> 1
        let params = vec![
            1.0, 2.0, -1.0, 1.0, 0.5, 0.0, 0.0, -2.0, 0.0, 1.0, -1.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0,
            1.0, 1.0, 1.0, 1.0, -1.0, 2.0, 0.0, 0.5, 0.0, -1.0,
        ];
        let m = Model::from_params(tiny(), ParamVector::new(params)).unwrap();
        let batch = Tensor::new(vec![4, 2], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(accuracy_on(&m, &batch, &[0, 1, 2, 2]).unwrap(), 0.5);
        assert_eq!(accuracy_on(&m, &batch, &[0, 1, 0, 1]).unwrap(), 1.0);
    }
}
