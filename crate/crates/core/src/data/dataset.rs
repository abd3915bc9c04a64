use crate::error::{Error, Result};
use crate::nn::{Model, Tensor};
use crate::scalar::Scalar;

/// Labeled samples sharing one input shape, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    name: String,
    num_classes: usize,
    sample_shape: Vec<usize>,
    features: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        sample_shape: Vec<usize>,
        features: Vec<T>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let width: usize = sample_shape.iter().product();
        if width == 0 {
            return Err(Error::InvalidArgument(format!(
                "sample shape {sample_shape:?} must be positive"
            )));
        }
        if features.len() != width * labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {} samples of width {width}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            name: name.into(),
            num_classes,
            sample_shape,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[T] {
        let w = self.sample_len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Gathers the given samples into a `(n, sample_shape...)` batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        let tensor = Tensor::new(shape, data).expect("batch length follows sample shape");
        (tensor, labels)
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

const EVAL_CHUNK: usize = 512;

/// Fraction of the selected samples the model classifies correctly.
pub fn accuracy<T: Scalar>(
    model: &Model<T>,
    dataset: &LabeledDataset<T>,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut hits = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (batch, labels) = dataset.batch(chunk);
        let preds = model.predict(&batch)?;
        hits += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(hits as f64 / indices.len() as f64)
}
