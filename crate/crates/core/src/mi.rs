//! Hash-binned plug-in mutual information with an ensemble of bin widths.
//!
//! Each sample vector is quantized per dimension with a randomly offset grid
//! of width `epsilon`, the integer cell is hashed into `[0, max_buckets)`, and
//! the plug-in estimate is computed from the joint and marginal bucket counts.
//! The reported value is the median over the ensemble, clamped at zero; the
//! raw per-width values are kept alongside.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;
use crate::seed::rng_for;

/// How bin widths are chosen for each ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    /// Multipliers of [`base_width`], computed separately for each side of
    /// the pair.
    Relative(Vec<f64>),
    /// Fixed widths used for both sides.
    Absolute(Vec<f64>),
}

impl Resolution {
    fn factors(&self) -> &[f64] {
        match self {
            Resolution::Relative(v) | Resolution::Absolute(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiConfig {
    pub epsilons: Resolution,
    pub hash_seed: u64,
    pub max_buckets: u64,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            epsilons: Resolution::Relative(vec![0.25, 0.5, 1.0, 2.0]),
            hash_seed: 0,
            max_buckets: 1 << 20,
        }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.epsilons.factors();
        if f.is_empty() {
            return Err(Error::InvalidArgument("epsilon ensemble is empty".into()));
        }
        if let Some(e) = f.iter().find(|e| !e.is_finite() || **e <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {e} must be positive"
            )));
        }
        if self.max_buckets == 0 {
            return Err(Error::InvalidArgument(
                "max_buckets must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate<T> {
    /// Median of `per_epsilon`, clamped at 0.
    pub value_nats: T,
    pub per_epsilon: Vec<T>,
    pub n_samples: usize,
}

impl<T: Scalar> MiEstimate<T> {
    /// Max minus min over the ensemble.
    pub fn spread(&self) -> T {
        let lo = self.per_epsilon.iter().copied().fold(T::infinity(), T::min);
        let hi = self
            .per_epsilon
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        hi - lo
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell<T: Scalar>(x: T, o: T, epsilon: T) -> i64 {
    // saturates on overflow; NaN maps to 0
    ((x - o) / epsilon)
        .floor()
        .to_i64()
        .unwrap_or(if x > o { i64::MAX } else { i64::MIN })
}

/// Per-dimension grid cell `floor((v_d - o_d) / epsilon)`.
pub fn quantize<T: Scalar>(v: &[T], epsilon: T, offset: &[T]) -> Vec<i64> {
    v.iter()
        .zip(offset)
        .map(|(&x, &o)| cell(x, o, epsilon))
        .collect()
}

fn hash_cells(cells: impl Iterator<Item = i64>, hash_seed: u64, max_buckets: u64) -> u64 {
    let mut h = mix(hash_seed);
    for q in cells {
        h = mix(h ^ q as u64);
    }
    h % max_buckets
}

/// Bucket id of `v` on the grid of width `epsilon` shifted by `offset`.
pub fn hash_bucket<T: Scalar>(
    v: &[T],
    epsilon: T,
    offset: &[T],
    hash_seed: u64,
    max_buckets: u64,
) -> u64 {
    assert_eq!(
        v.len(),
        offset.len(),
        "offset dimension must match the vector"
    );
    let cells = v.iter().zip(offset).map(|(&x, &o)| cell(x, o, epsilon));
    hash_cells(cells, hash_seed, max_buckets)
}

/// Median over dimensions of the per-dimension standard deviation, ignoring
/// constant dimensions, together with the number of non-constant
/// dimensions. `None` when every dimension is constant.
pub fn median_spread<T: Scalar>(samples: &Tensor<T>) -> Option<(T, usize)> {
    let n = samples.rows();
    let d = samples.row_len();
    if n == 0 || d == 0 {
        return None;
    }
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    for row in samples.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); d];
    for row in samples.iter_rows() {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
            *v += (x - m) * (x - m);
        }
    }
    let mut sds: Vec<T> = var
        .into_iter()
        .map(|v| (v / nf).sqrt())
        .filter(|s| *s > T::zero())
        .collect();
    if sds.is_empty() {
        return None;
    }
    let active = sds.len();
    Some((median(&mut sds), active))
}

/// Reference bin width for relative resolutions: the median per-dimension
/// spread times the square root of the number of non-constant dimensions,
/// i.e. the RMS radius of an isotropic cloud with that per-axis spread.
/// Scaling with dimension keeps the number of occupied cells well below the
/// sample count for wide representations; for 1-d data it is the plain
/// standard deviation.
pub fn base_width<T: Scalar>(samples: &Tensor<T>) -> Option<T> {
    median_spread(samples).map(|(sd, active)| sd * T::from_usize_lossy(active).sqrt())
}

fn median<T: Scalar>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / T::from_f64_lossy(2.0)
    }
}

fn offsets<T: Scalar>(dim: usize, epsilon: T, hash_seed: u64, side: &str, member: usize) -> Vec<T> {
    let mut rng = rng_for(hash_seed, side, member as u64);
    (0..dim)
        .map(|_| T::from_f64_lossy(rng.random::<f64>()) * epsilon)
        .collect()
}

fn buckets<T: Scalar>(samples: &Tensor<T>, epsilon: T, offset: &[T], cfg: &MiConfig) -> Vec<u64> {
    samples
        .iter_rows()
        .map(|row| hash_bucket(row, epsilon, offset, cfg.hash_seed, cfg.max_buckets))
        .collect()
}

fn counts(ids: &[u64]) -> HashMap<u64, usize> {
    let mut map = HashMap::with_capacity(ids.len());
    for &id in ids {
        *map.entry(id).or_insert(0) += 1;
    }
    map
}

/// Plug-in MI (nats) from paired bucket assignments. Joint cells are visited
/// in sorted order so the floating-point sum is reproducible.
pub fn plugin_mi<T: Scalar>(bx: &[u64], by: &[u64]) -> T {
    let n = bx.len();
    let nx = counts(bx);
    let ny = counts(by);
    let mut joint: Vec<(u64, u64)> = bx.iter().copied().zip(by.iter().copied()).collect();
    joint.sort_unstable();
    let nf = T::from_usize_lossy(n);
    let mut total = T::zero();
    let mut i = 0;
    while i < joint.len() {
        let cell = joint[i];
        let mut j = i;
        while j < joint.len() && joint[j] == cell {
            j += 1;
        }
        let nij = T::from_usize_lossy(j - i);
        let ni = T::from_usize_lossy(nx[&cell.0]);
        let mj = T::from_usize_lossy(ny[&cell.1]);
        total += nij / nf * (nf * nij / (ni * mj)).ln();
        i = j;
    }
    total
}

/// Estimates MI between paired rows of `xs` and `ys`.
pub fn estimate_mi<T: Scalar>(
    xs: &Tensor<T>,
    ys: &Tensor<T>,
    cfg: &MiConfig,
) -> Result<MiEstimate<T>> {
    cfg.validate()?;
    let n = xs.rows();
    if n != ys.rows() {
        return Err(Error::InvalidArgument(format!(
            "sample count mismatch: {n} xs vs {} ys",
            ys.rows()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "MI estimation needs at least 2 samples, got {n}"
        )));
    }

    let (scale_x, scale_y) = match cfg.epsilons {
        // an all-constant side lands in a single bucket at any width
        Resolution::Relative(_) => (
            base_width(xs).unwrap_or_else(T::one),
            base_width(ys).unwrap_or_else(T::one),
        ),
        Resolution::Absolute(_) => (T::one(), T::one()),
    };

    let per_epsilon: Vec<T> = cfg
        .epsilons
        .factors()
        .par_iter()
        .enumerate()
        .map(|(member, &f)| {
            let f = T::from_f64_lossy(f);
            let (ex, ey) = (f * scale_x, f * scale_y);
            let ox = offsets(xs.row_len(), ex, cfg.hash_seed, "mi-offset-x", member);
            let oy = offsets(ys.row_len(), ey, cfg.hash_seed, "mi-offset-y", member);
            plugin_mi(&buckets(xs, ex, &ox, cfg), &buckets(ys, ey, &oy, cfg))
        })
        .collect();

    let mut sorted = per_epsilon.clone();
    let value = median(&mut sorted).max(T::zero());
    Ok(MiEstimate {
        value_nats: value,
        per_epsilon,
        n_samples: n,
    })
}

/// One-hot encoding of class labels as an `(n, classes)` tensor.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data).expect("one-hot shape")
}
