//! Layer primitives with hand-derived backward passes: row-wise LayerNorm,
//! multi-head self-attention, and the transformer feed-forward block.
//!
//! Forward functions return caches holding exactly the intermediates their
//! backward passes need. Gradients accumulate into caller-provided buffers.

use crate::numerics::{gelu_parts, gelu_prime_from_tanh, real, Real, Tensor2D, Vector};
use ndarray::{s, Array1, Array2, ArrayView1, Axis};

/// Variance guard inside every LayerNorm.
pub(crate) const LN_EPS: f64 = 1e-5;

trait SliceOrPanic<T> {
    fn to_slice_or_panic(&self) -> &[T];
}

trait SliceMutOrPanic<T> {
    fn to_slice_mut_or_panic(&mut self) -> &mut [T];
}

impl<T> SliceOrPanic<T> for ndarray::ArrayView1<'_, T> {
    fn to_slice_or_panic(&self) -> &[T] {
        self.to_slice().expect("contiguous row")
    }
}

impl<T> SliceMutOrPanic<T> for ndarray::ArrayViewMut1<'_, T> {
    fn to_slice_mut_or_panic(&mut self) -> &mut [T] {
        self.as_slice_mut().expect("contiguous row")
    }
}

pub(crate) fn add_row_inplace<T: Real>(x: &mut Array2<T>, row: ArrayView1<T>) {
    for mut r in x.rows_mut() {
        r += &row;
    }
}

/// Column-wise sum, i.e. the gradient of a broadcast row addition.
pub(crate) fn sum_rows<T: Real>(x: &Array2<T>) -> Array1<T> {
    x.sum_axis(Axis(0))
}

/// Outer product `a bᵀ` built row-by-row over contiguous memory.
pub(crate) fn outer<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> Array2<T> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for (i, &ai) in a.iter().enumerate() {
        out.row_mut(i).scaled_add(ai, &b);
    }
    out
}

/// `v @ m` for row-major `m`: scaled-row accumulation keeps every access
/// contiguous, unlike the per-column strided dots of the generic path.
pub(crate) fn vecmat<T: Real>(v: &Vector<T>, m: &Tensor2D<T>) -> Vector<T> {
    let mut out = Vector::zeros(m.ncols());
    for (i, &vi) in v.iter().enumerate() {
        out.scaled_add(vi, &m.row(i));
    }
    out
}

/// `m @ v` as contiguous row dots.
pub(crate) fn matvec<T: Real>(m: &Tensor2D<T>, v: &Vector<T>) -> Vector<T> {
    Vector::from_iter(m.rows().into_iter().map(|r| r.dot(v)))
}

// ---------------------------------------------------------------------------
// LayerNorm (per row, affine)

pub(crate) struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

pub(crate) fn layer_norm_forward<T: Real>(
    x: &Array2<T>,
    gain: ArrayView1<T>,
    bias: ArrayView1<T>,
) -> (Array2<T>, LayerNormCache<T>) {
    let (rows, cols) = x.dim();
    let inv_d = T::one() / real::<T>(cols as f64);
    let eps = real::<T>(LN_EPS);
    let mut xhat = Array2::zeros((rows, cols));
    let mut rstd = Array1::zeros(rows);
    let mut y = Array2::zeros((rows, cols));
    let gain = gain.to_slice_or_panic();
    let bias = bias.to_slice_or_panic();
    for r in 0..rows {
        let xr = x.row(r);
        let xr = xr.to_slice_or_panic();
        let mut mean = T::zero();
        for &v in xr {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::zero();
        for &v in xr {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        let mut hr = xhat.row_mut(r);
        let hr = hr.to_slice_mut_or_panic();
        let mut yr = y.row_mut(r);
        let yr = yr.to_slice_mut_or_panic();
        for c in 0..cols {
            let h = (xr[c] - mean) * rs;
            hr[c] = h;
            yr[c] = gain[c] * h + bias[c];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

/// Returns `dx` and accumulates `dgain`/`dbias`.
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &LayerNormCache<T>,
    gain: ArrayView1<T>,
    dgain: &mut Array1<T>,
    dbias: &mut Array1<T>,
) -> Array2<T> {
    let (rows, cols) = dy.dim();
    let inv_d = T::one() / real::<T>(cols as f64);
    let mut dx = Array2::zeros((rows, cols));
    let gain = gain.to_slice_or_panic();
    let dgain = dgain.as_slice_mut().expect("contiguous");
    let dbias = dbias.as_slice_mut().expect("contiguous");
    for r in 0..rows {
        let dyr = dy.row(r);
        let dyr = dyr.to_slice_or_panic();
        let hr = cache.xhat.row(r);
        let hr = hr.to_slice_or_panic();
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for c in 0..cols {
            let d = dyr[c];
            let h = hr[c];
            dgain[c] += d * h;
            dbias[c] += d;
            let dxh = d * gain[c];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * h;
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        let mut dxr = dx.row_mut(r);
        let dxr = dxr.to_slice_mut_or_panic();
        for c in 0..cols {
            let dxh = dyr[c] * gain[c];
            dxr[c] = rs * (dxh - mean_dxhat - hr[c] * mean_dxhat_xhat);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Multi-head self-attention (no positional encodings, no masking)

pub(crate) struct AttnCache<T> {
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    /// Row-softmax attention weights, one (S x S) matrix per head.
    pub probs: Vec<Array2<T>>,
    /// Head outputs concatenated back to (S x d), before the output projection.
    pub concat: Array2<T>,
}

/// Key projection carries no bias: a shared key offset shifts every score
/// in a softmax row by the same amount, so it cannot affect the output.
pub(crate) struct AttnWeights<'a, T> {
    pub wq: &'a Tensor2D<T>,
    pub bq: ArrayView1<'a, T>,
    pub wk: &'a Tensor2D<T>,
    pub wv: &'a Tensor2D<T>,
    pub bv: ArrayView1<'a, T>,
    pub wo: &'a Tensor2D<T>,
    pub bo: ArrayView1<'a, T>,
}

pub(crate) fn attention_forward<T: Real>(
    y: &Array2<T>,
    w: &AttnWeights<T>,
    n_heads: usize,
) -> (Array2<T>, AttnCache<T>) {
    let (_, d) = y.dim();
    let dk = d / n_heads;
    let scale = T::one() / real::<T>((dk as f64).sqrt());

    let mut q = y.dot(w.wq);
    add_row_inplace(&mut q, w.bq);
    let k = y.dot(w.wk);
    let mut v = y.dot(w.wv);
    add_row_inplace(&mut v, w.bv);

    let s_len = y.nrows();
    let mut concat = Array2::zeros((s_len, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores *= scale;
        let p = softmax_rows(&scores);
        let oh = p.dot(&vh);
        concat.slice_mut(cols).assign(&oh);
        probs.push(p);
    }
    let mut out = concat.dot(w.wo);
    add_row_inplace(&mut out, w.bo);
    (out, AttnCache { q, k, v, probs, concat })
}

pub(crate) struct AttnGrads<T> {
    pub dwq: Array2<T>,
    pub dbq: Array1<T>,
    pub dwk: Array2<T>,
    pub dwv: Array2<T>,
    pub dbv: Array1<T>,
    pub dwo: Array2<T>,
    pub dbo: Array1<T>,
    /// Gradient w.r.t. the attention input.
    pub dy: Array2<T>,
}

pub(crate) fn attention_backward<T: Real>(
    d_out: &Array2<T>,
    y: &Array2<T>,
    w: &AttnWeights<T>,
    cache: &AttnCache<T>,
    n_heads: usize,
) -> AttnGrads<T> {
    let (s_len, d) = y.dim();
    let dk = d / n_heads;
    let scale = T::one() / real::<T>((dk as f64).sqrt());

    let dwo = cache.concat.t().dot(d_out);
    let dbo = sum_rows(d_out);
    let dconcat = d_out.dot(&w.wo.t());

    let mut dq = Array2::zeros((s_len, d));
    let mut dkm = Array2::zeros((s_len, d));
    let mut dv = Array2::zeros((s_len, d));
    for h in 0..n_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let p = &cache.probs[h];
        let doh = dconcat.slice(cols);
        let vh = cache.v.slice(cols);
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);

        let dvh = p.t().dot(&doh);
        let dp = doh.dot(&vh.t());
        // softmax backward per row: p * (dp - sum(dp * p))
        let mut dscores = Array2::zeros((s_len, s_len));
        for r in 0..s_len {
            let pr = p.row(r);
            let pr = pr.to_slice_or_panic();
            let dpr = dp.row(r);
            let dpr = dpr.to_slice_or_panic();
            let mut dsr = dscores.row_mut(r);
            let dsr = dsr.to_slice_mut_or_panic();
            let mut dot = T::zero();
            for c in 0..s_len {
                dot += dpr[c] * pr[c];
            }
            for c in 0..s_len {
                dsr[c] = pr[c] * (dpr[c] - dot) * scale;
            }
        }
        let dqh = dscores.dot(&kh);
        let dkh = dscores.t().dot(&qh);
        dq.slice_mut(cols).assign(&dqh);
        dkm.slice_mut(cols).assign(&dkh);
        dv.slice_mut(cols).assign(&dvh);
    }

    let dwq = y.t().dot(&dq);
    let dbq = sum_rows(&dq);
    let dwk = y.t().dot(&dkm);
    let dwv = y.t().dot(&dv);
    let dbv = sum_rows(&dv);
    let dy = dq.dot(&w.wq.t()) + dkm.dot(&w.wk.t()) + dv.dot(&w.wv.t());
    AttnGrads { dwq, dbq, dwk, dwv, dbv, dwo, dbo, dy }
}

fn softmax_rows<T: Real>(scores: &Array2<T>) -> Array2<T> {
    let (rows, cols) = scores.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        let sr = scores.row(r);
        let sr = sr.to_slice_or_panic();
        let mut or = out.row_mut(r);
        let or = or.to_slice_mut_or_panic();
        let max = sr.iter().copied().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for c in 0..cols {
            let e = (sr[c] - max).exp();
            or[c] = e;
            denom += e;
        }
        let inv = T::one() / denom;
        for v in or.iter_mut() {
            *v = *v * inv;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Two-layer MLP with GELU (prefix head and global head)

pub(crate) struct MlpCache<T> {
    pub input: Vector<T>,
    pub z1: Vector<T>,
    pub h1: Vector<T>,
    /// Inner tanh of the GELU, reused by the backward pass.
    pub t1: Vector<T>,
}

pub(crate) fn mlp_forward<T: Real>(
    input: &Vector<T>,
    w1: &Tensor2D<T>,
    b1: ArrayView1<T>,
    w2: &Tensor2D<T>,
    b2: ArrayView1<T>,
) -> (Vector<T>, MlpCache<T>) {
    let z1 = vecmat(input, w1) + &b1;
    let mut h1 = Vector::zeros(z1.len());
    let mut t1 = Vector::zeros(z1.len());
    for ((h, t), &z) in h1.iter_mut().zip(t1.iter_mut()).zip(z1.iter()) {
        let (hv, tv) = gelu_parts(z);
        *h = hv;
        *t = tv;
    }
    let out = vecmat(&h1, w2) + &b2;
    (out, MlpCache { input: input.clone(), z1, h1, t1 })
}

pub(crate) struct MlpGrads<T> {
    pub dw1: Array2<T>,
    pub db1: Array1<T>,
    pub dw2: Array2<T>,
    pub db2: Array1<T>,
}

pub(crate) fn mlp_backward<T: Real>(
    dout: &Vector<T>,
    cache: &MlpCache<T>,
    w2: &Tensor2D<T>,
) -> MlpGrads<T> {
    let dw2 = outer(cache.h1.view(), dout.view());
    let db2 = dout.clone();
    let dh1 = matvec(w2, dout);
    let mut dz1 = dh1;
    for ((d, &z), &t) in dz1.iter_mut().zip(cache.z1.iter()).zip(cache.t1.iter()) {
        *d = *d * gelu_prime_from_tanh(z, t);
    }
    let dw1 = outer(cache.input.view(), dz1.view());
    let db1 = dz1;
    MlpGrads { dw1, db1, dw2, db2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use rand::Rng;

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seeding::rng_for(seed, "layers-test", "mat");
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = rand_mat(3, 8, 1);
        let gain = Array1::ones(8);
        let bias = Array1::zeros(8);
        let (y, _) = layer_norm_forward(&x, gain.view(), bias.view());
        for r in 0..3 {
            let row = y.row(r);
            let mean: f64 = row.sum() / 8.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-4); // off by eps/(var+eps)
        }
    }

    /// Finite-difference check of one LayerNorm row against the backward pass.
    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let x = rand_mat(2, 5, 2);
        let gain = arr1(&[1.1, 0.9, 1.3, 0.7, 1.0]);
        let bias = arr1(&[0.1, -0.2, 0.0, 0.3, -0.1]);
        // Scalar objective: sum of squares of the output.
        let loss = |x: &Array2<f64>| -> f64 {
            let (y, _) = layer_norm_forward(x, gain.view(), bias.view());
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = layer_norm_forward(&x, gain.view(), bias.view());
        let dy = y.mapv(|v| 2.0 * v);
        let mut dgain = Array1::zeros(5);
        let mut dbias = Array1::zeros(5);
        let dx = layer_norm_backward(&dy, &cache, gain.view(), &mut dgain, &mut dbias);
        let h = 1e-6;
        let mut xp = x.clone();
        for r in 0..2 {
            for c in 0..5 {
                let orig = xp[[r, c]];
                xp[[r, c]] = orig + h;
                let lp = loss(&xp);
                xp[[r, c]] = orig - h;
                let lm = loss(&xp);
                xp[[r, c]] = orig;
                assert_abs_diff_eq!(dx[[r, c]], (lp - lm) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn attention_backward_matches_finite_differences() {
        let d = 8;
        let heads = 2;
        let y = rand_mat(4, d, 3);
        let wq = rand_mat(d, d, 4);
        let wk = rand_mat(d, d, 5);
        let wv = rand_mat(d, d, 6);
        let wo = rand_mat(d, d, 7);
        let bq = Array1::zeros(d);
        let bv = Array1::zeros(d);
        let bo = Array1::zeros(d);
        fn weights<'a>(
            wq: &'a Array2<f64>,
            wk: &'a Array2<f64>,
            wv: &'a Array2<f64>,
            wo: &'a Array2<f64>,
            biases: &'a [Array1<f64>; 3],
        ) -> AttnWeights<'a, f64> {
            AttnWeights {
                wq,
                bq: biases[0].view(),
                wk,
                wv,
                bv: biases[1].view(),
                wo,
                bo: biases[2].view(),
            }
        }
        let biases = [bq, bv, bo];
        let loss = |yv: &Array2<f64>, wqv: &Array2<f64>| -> f64 {
            let (out, _) = attention_forward(yv, &weights(wqv, &wk, &wv, &wo, &biases), heads);
            out.iter().map(|v| v * v).sum()
        };
        let (out, cache) = attention_forward(&y, &weights(&wq, &wk, &wv, &wo, &biases), heads);
        let dout = out.mapv(|v| 2.0 * v);
        let grads =
            attention_backward(&dout, &y, &weights(&wq, &wk, &wv, &wo, &biases), &cache, heads);

        let h = 1e-6;
        let mut yp = y.clone();
        for r in 0..4 {
            for c in 0..d {
                let orig = yp[[r, c]];
                yp[[r, c]] = orig + h;
                let lp = loss(&yp, &wq);
                yp[[r, c]] = orig - h;
                let lm = loss(&yp, &wq);
                yp[[r, c]] = orig;
                assert_abs_diff_eq!(grads.dy[[r, c]], (lp - lm) / (2.0 * h), epsilon = 1e-5);
            }
        }
        let mut wqp = wq.clone();
        for r in 0..d {
            for c in 0..d {
                let orig = wqp[[r, c]];
                wqp[[r, c]] = orig + h;
                let lp = loss(&y, &wqp);
                wqp[[r, c]] = orig - h;
                let lm = loss(&y, &wqp);
                wqp[[r, c]] = orig;
                assert_abs_diff_eq!(grads.dwq[[r, c]], (lp - lm) / (2.0 * h), epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let input = arr1(&[0.3, -0.8, 1.2]);
        let w1 = rand_mat(3, 6, 8);
        let b1 = Array1::zeros(6);
        let w2 = rand_mat(6, 4, 9);
        let b2 = Array1::zeros(4);
        let loss = |w1v: &Array2<f64>| -> f64 {
            let (out, _) = mlp_forward(&input, w1v, b1.view(), &w2, b2.view());
            out.iter().map(|v| v * v).sum()
        };
        let (out, cache) = mlp_forward(&input, &w1, b1.view(), &w2, b2.view());
        let dout = out.mapv(|v| 2.0 * v);
        let grads = mlp_backward(&dout, &cache, &w2);
        let h = 1e-6;
        let mut w1p = w1.clone();
        for r in 0..3 {
            for c in 0..6 {
                let orig = w1p[[r, c]];
                w1p[[r, c]] = orig + h;
                let lp = loss(&w1p);
                w1p[[r, c]] = orig - h;
                let lm = loss(&w1p);
                w1p[[r, c]] = orig;
                assert_abs_diff_eq!(grads.dw1[[r, c]], (lp - lm) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }
}
