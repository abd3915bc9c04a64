//! Batched forward/backward kernels. All buffers are flat, batch-major and
//! row-major; every reduction runs in a fixed loop order so results are
//! bit-reproducible.

use crate::scalar::Scalar;

pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    n: usize,
    fan_in: usize,
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let out_dim = b.len();
    let mut y = Vec::with_capacity(n * out_dim);
    for row in x.chunks_exact(fan_in).take(n) {
        for (o, &bias) in b.iter().enumerate() {
            let wr = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = bias;
            for (&wi, &xi) in wr.iter().zip(row) {
                acc += wi * xi;
            }
            y.push(acc);
        }
    }
    y
}

/// Accumulates weight/bias gradients into `dw`/`db` and returns the input
/// gradient when `need_dx` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    n: usize,
    fan_in: usize,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let out_dim = db.len();
    let mut dx = need_dx.then(|| vec![T::zero(); n * fan_in]);
    for s in 0..n {
        let xr = &x[s * fan_in..(s + 1) * fan_in];
        let dyr = &dy[s * out_dim..(s + 1) * out_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            let dwr = &mut dw[o * fan_in..(o + 1) * fan_in];
            for (d, &xi) in dwr.iter_mut().zip(xr) {
                *d += g * xi;
            }
            if let Some(dx) = dx.as_mut() {
                let wr = &w[o * fan_in..(o + 1) * fan_in];
                let dxr = &mut dx[s * fan_in..(s + 1) * fan_in];
                for (d, &wi) in dxr.iter_mut().zip(wr) {
                    *d += g * wi;
                }
            }
        }
    }
    dx
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.o * self.oh * self.ow
    }
}

pub(crate) fn conv_forward<T: Scalar>(x: &[T], n: usize, g: ConvGeom, w: &[T], b: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); n * g.out_len()];
    let kk = g.k * g.k;
    for s in 0..n {
        let xs = &x[s * g.in_len()..(s + 1) * g.in_len()];
        let ys = &mut y[s * g.out_len()..(s + 1) * g.out_len()];
        for o in 0..g.o {
            for i in 0..g.oh {
                for j in 0..g.ow {
                    let mut acc = b[o];
                    for c in 0..g.c {
                        let wbase = (o * g.c + c) * kk;
                        for u in 0..g.k {
                            let xrow = (c * g.h + i * g.stride + u) * g.w + j * g.stride;
                            let wrow = wbase + u * g.k;
                            for v in 0..g.k {
                                acc += w[wrow + v] * xs[xrow + v];
                            }
                        }
                    }
                    ys[(o * g.oh + i) * g.ow + j] = acc;
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    n: usize,
    g: ConvGeom,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let kk = g.k * g.k;
    let mut dx = need_dx.then(|| vec![T::zero(); n * g.in_len()]);
    for s in 0..n {
        let xs = &x[s * g.in_len()..(s + 1) * g.in_len()];
        let dys = &dy[s * g.out_len()..(s + 1) * g.out_len()];
        for o in 0..g.o {
            for i in 0..g.oh {
                for j in 0..g.ow {
                    let gv = dys[(o * g.oh + i) * g.ow + j];
                    if gv == T::zero() {
                        continue;
                    }
                    db[o] += gv;
                    for c in 0..g.c {
                        let wbase = (o * g.c + c) * kk;
                        for u in 0..g.k {
                            let xrow = (c * g.h + i * g.stride + u) * g.w + j * g.stride;
                            let wrow = wbase + u * g.k;
                            for v in 0..g.k {
                                dw[wrow + v] += gv * xs[xrow + v];
                            }
                            if let Some(dx) = dx.as_mut() {
                                let base = s * g.in_len() + xrow;
                                for v in 0..g.k {
                                    dx[base + v] += gv * w[wrow + v];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Returns pooled values and, per output cell, the flat input index of the
/// winning element (first maximum in scan order).
pub(crate) fn pool_forward<T: Scalar>(
    x: &[T],
    n: usize,
    (c, h, w): (usize, usize, usize),
    k: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / k, w / k);
    let out_len = n * c * oh * ow;
    let mut y = Vec::with_capacity(out_len);
    let mut arg = Vec::with_capacity(out_len);
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + (i * k) * w + j * k;
                    for u in 0..k {
                        for v in 0..k {
                            let idx = base + (i * k + u) * w + j * k + v;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    y.push(x[best]);
                    arg.push(best);
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn pool_backward<T: Scalar>(dy: &[T], arg: &[usize], in_len_total: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len_total];
    for (&g, &idx) in dy.iter().zip(arg) {
        dx[idx] += g;
    }
    dx
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
pub(crate) fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
) -> (T, Vec<T>) {
    let n = labels.len();
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut grad = Vec::with_capacity(logits.len());
    let mut total = T::zero();
    for (row, &label) in logits.chunks_exact(classes).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[label];
        for (c, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            let target = if c == label { T::one() } else { T::zero() };
            grad.push((p - target) * inv_n);
        }
    }
    (total * inv_n, grad)
}
