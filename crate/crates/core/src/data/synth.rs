use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

/// Parameters of the synthetic isotropic-Gaussian class dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

/// One isotropic Gaussian per class around a seed-determined mean in
/// `[0.2, 0.8]^dim`, clipped to `[0, 1]`. Samples are emitted class by class.
pub fn synth_gaussian_classes<T: Scalar>(p: SynthParams) -> Result<LabeledDataset<T>> {
    if p.num_classes == 0 || p.per_class == 0 || p.dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs positive counts (classes={}, per_class={}, dim={})",
            p.num_classes, p.per_class, p.dim
        )));
    }
    if !p.spread.is_finite() || p.spread < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "spread {} must be >= 0",
            p.spread
        )));
    }

    let means = class_means(p.num_classes, p.dim, p.seed);
    let mut rng = rng_for(p.seed, "synth-samples", 0);
    let mut features = Vec::with_capacity(p.num_classes * p.per_class * p.dim);
    let mut labels = Vec::with_capacity(p.num_classes * p.per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..p.per_class {
            for &m in mean {
                let z: f64 = rng.sample(StandardNormal);
                features.push(T::from_f64_lossy((m + p.spread * z).clamp(0.0, 1.0)));
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(
        format!("synth:{}x{}x{}", p.num_classes, p.per_class, p.dim),
        p.num_classes,
        vec![p.dim],
        features,
        labels,
    )
}

fn class_means(classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, "synth-means", 0);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while means.len() < classes {
        let m: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..0.8)).collect();
        if !means.contains(&m) {
            means.push(m);
        }
    }
    means
}
