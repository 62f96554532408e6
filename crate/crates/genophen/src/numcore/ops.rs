//! Layer primitives: forward kernels, their vector-Jacobian products, and
//! the public single-instance entry points.
//!
//! The raw kernels operate on flat `f64` slices with explicit extents so the
//! same code backs both the public functions and the recorded tape ops. All
//! loops run in a fixed order, so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::numcore::rng::RngStream;
use crate::numcore::tensor::Tensor;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators to expose instruction-level parallelism.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ---- convolution -----------------------------------------------------------

/// Valid 1-D convolution over a batch: `x [n,ci,l] * k [co,ci,kl] + b [co]`
/// giving `[n,co,l-kl+1]`.
pub(crate) fn conv1d_fwd(
    x: &[f64],
    n: usize,
    ci: usize,
    l: usize,
    k: &[f64],
    co: usize,
    kl: usize,
    b: &[f64],
) -> Vec<f64> {
    let lo = l - kl + 1;
    let mut out = vec![0.0; n * co * lo];
    for i in 0..n {
        for o in 0..co {
            let row = &mut out[(i * co + o) * lo..][..lo];
            row.fill(b[o]);
            for c in 0..ci {
                let xr = &x[(i * ci + c) * l..][..l];
                let kr = &k[(o * ci + c) * kl..][..kl];
                for (j, &kv) in kr.iter().enumerate() {
                    axpy(kv, &xr[j..j + lo], row);
                }
            }
        }
    }
    out
}

pub(crate) fn conv1d_bwd(
    x: &[f64],
    n: usize,
    ci: usize,
    l: usize,
    k: &[f64],
    co: usize,
    kl: usize,
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lo = l - kl + 1;
    let mut dx = vec![0.0; n * ci * l];
    let mut dk = vec![0.0; co * ci * kl];
    let mut db = vec![0.0; co];
    for i in 0..n {
        for o in 0..co {
            let dr = &dout[(i * co + o) * lo..][..lo];
            db[o] += dr.iter().sum::<f64>();
            for c in 0..ci {
                let xr = &x[(i * ci + c) * l..][..l];
                let kr = &k[(o * ci + c) * kl..][..kl];
                let dxr = &mut dx[(i * ci + c) * l..][..l];
                for j in 0..kl {
                    axpy(kr[j], dr, &mut dxr[j..j + lo]);
                    dk[(o * ci + c) * kl + j] += dot(dr, &xr[j..j + lo]);
                }
            }
        }
    }
    (dx, dk, db)
}

/// Spec shapes for a convolution call; errors on inconsistency or `kl > l`.
pub(crate) fn conv1d_check(
    xshape: &[usize],
    kshape: &[usize],
    bshape: &[usize],
) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, ci, l) = match xshape {
        [ci, l] => (1, *ci, *l),
        [n, ci, l] => (*n, *ci, *l),
        other => {
            return Err(Error::Shape(format!(
                "conv1d input must be [C,L] or [N,C,L], got {other:?}"
            )))
        }
    };
    let [co, kci, kl] = kshape else {
        return Err(Error::Shape(format!(
            "conv1d kernels must be [C_out,C_in,k], got {kshape:?}"
        )));
    };
    if *kci != ci {
        return Err(Error::Shape(format!(
            "conv1d channel mismatch: input has {ci}, kernels expect {kci}"
        )));
    }
    if *kl > l {
        return Err(Error::Shape(format!(
            "conv1d kernel length {kl} exceeds input length {l}"
        )));
    }
    if bshape != [*co] {
        return Err(Error::Shape(format!(
            "conv1d bias must be [{co}], got {bshape:?}"
        )));
    }
    Ok((n, ci, l, *co, *kl))
}

/// Valid 1-D convolution of a `[C_in, L]` input with `[C_out, C_in, k]`
/// kernels and a `[C_out]` bias, giving `[C_out, L-k+1]`.
pub fn conv1d_valid(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, ci, l, co, kl) = conv1d_check(input.shape(), kernels.shape(), bias.shape())?;
    let out = conv1d_fwd(input.data(), n, ci, l, kernels.data(), co, kl, bias.data());
    let shape = if input.shape().len() == 2 {
        vec![co, l - kl + 1]
    } else {
        vec![n, co, l - kl + 1]
    };
    Tensor::new(shape, out)
}

// ---- pooling ---------------------------------------------------------------

/// Max over the last axis of `[n, c, l]`, returning values `[n, c]` and the
/// flat argmax per `(n, c)` row. Ties take the first maximal index.
pub(crate) fn maxpool_time_fwd(x: &[f64], rows: usize, l: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![0.0; rows];
    let mut arg = vec![0usize; rows];
    for r in 0..rows {
        let xr = &x[r * l..][..l];
        let mut best = xr[0];
        let mut bi = 0;
        for (t, &v) in xr.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                bi = t;
            }
        }
        out[r] = best;
        arg[r] = bi;
    }
    (out, arg)
}

/// Max over the time axis of a `[C, L]` matrix: the per-channel maximum and
/// the first maximal index per channel.
pub fn maxpool_over_time(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [c, l] = input.shape() else {
        return Err(Error::Shape(format!(
            "maxpool_over_time expects [C,L], got {:?}",
            input.shape()
        )));
    };
    if *l == 0 {
        return Err(Error::Shape("maxpool_over_time on empty time axis".into()));
    }
    let (out, arg) = maxpool_time_fwd(input.data(), *c, *l);
    Ok((Tensor::new(vec![*c], out)?, arg))
}

// ---- softmax ---------------------------------------------------------------

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows_fwd(x: &[f64], rows: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * w];
    for r in 0..rows {
        let xr = &x[r * w..][..w];
        let or = &mut out[r * w..][..w];
        let m = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, &v) in or.iter_mut().zip(xr) {
            let e = (v - m).exp();
            *o = e;
            z += e;
        }
        for o in or.iter_mut() {
            *o /= z;
        }
    }
    out
}

pub(crate) fn softmax_rows_bwd(y: &[f64], dout: &[f64], rows: usize, w: usize) -> Vec<f64> {
    let mut dx = vec![0.0; rows * w];
    for r in 0..rows {
        let yr = &y[r * w..][..w];
        let dr = &dout[r * w..][..w];
        let s = dot(yr, dr);
        let dxr = &mut dx[r * w..][..w];
        for j in 0..w {
            dxr[j] = yr[j] * (dr[j] - s);
        }
    }
    dx
}

/// Numerically stable softmax of a vector of scores.
pub fn softmax(scores: &Tensor) -> Result<Tensor> {
    let [n] = scores.shape() else {
        return Err(Error::Shape(format!(
            "softmax expects a vector, got {:?}",
            scores.shape()
        )));
    };
    scores.check_finite("softmax input")?;
    Tensor::new(vec![*n], softmax_rows_fwd(scores.data(), 1, *n))
}

// ---- dense / relu / dropout / mse -------------------------------------------

/// Affine map over rows: `x [rows,n] @ w [m,n]^T + b -> [rows,m]`.
pub(crate) fn dense_fwd(x: &[f64], rows: usize, n: usize, w: &[f64], m: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        let xr = &x[r * n..][..n];
        let or = &mut out[r * m..][..m];
        for j in 0..m {
            let wj = &w[j * n..][..n];
            or[j] = dot(xr, wj) + b.map_or(0.0, |b| b[j]);
        }
    }
    out
}

/// VJPs of `dense_fwd`: `(dx, dw, db)`.
pub(crate) fn dense_bwd(
    x: &[f64],
    rows: usize,
    n: usize,
    w: &[f64],
    m: usize,
    dout: &[f64],
    with_bias: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; rows * n];
    let mut dw = vec![0.0; m * n];
    let mut db = vec![0.0; if with_bias { m } else { 0 }];
    for r in 0..rows {
        let xr = &x[r * n..][..n];
        let dr = &dout[r * m..][..m];
        let dxr = &mut dx[r * n..][..n];
        for j in 0..m {
            let g = dr[j];
            if g != 0.0 {
                axpy(g, &w[j * n..][..n], dxr);
                axpy(g, xr, &mut dw[j * n..][..n]);
            }
            if with_bias {
                db[j] += g;
            }
        }
    }
    (dx, dw, db)
}

/// Affine map of a vector: `w [m,n] @ x [n] + b [m]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n] = input.shape() else {
        return Err(Error::Shape(format!(
            "dense expects a vector input, got {:?}",
            input.shape()
        )));
    };
    let [m, wn] = weight.shape() else {
        return Err(Error::Shape(format!(
            "dense weight must be [m,n], got {:?}",
            weight.shape()
        )));
    };
    if wn != n || bias.shape() != [*m] {
        return Err(Error::Shape(format!(
            "dense shapes inconsistent: input [{n}], weight {:?}, bias {:?}",
            weight.shape(),
            bias.shape()
        )));
    }
    let out = dense_fwd(input.data(), 1, *n, weight.data(), *m, Some(bias.data()));
    Tensor::new(vec![*m], out)
}

/// Elementwise `max(x, 0)`.
pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Inverted dropout. In train mode kept entries are scaled by `1/(1-rate)`;
/// in inference mode this is the identity. Returns the output and the mask
/// actually applied (all ones in inference mode or at rate 0).
pub fn dropout(
    input: &Tensor,
    rate: f64,
    rng: &mut RngStream,
    train: bool,
) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} not in [0,1)")));
    }
    let mask = dropout_mask(input.len(), rate, rng, train);
    let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, mask))
}

pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut RngStream, train: bool) -> Vec<f64> {
    if !train || rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect()
}

/// Mean squared error between two equal-length vectors.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() || pred.shape().len() != 1 {
        return Err(Error::Shape(format!(
            "mse_loss expects matching vectors, got {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

// ---- matrix products --------------------------------------------------------

/// `a [m,k] @ b [k,n] -> [m,n]` on flat slices.
pub(crate) fn matmul_nn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..][..k];
        let or = &mut out[i * n..][..n];
        for (p, &av) in ar.iter().enumerate() {
            if av != 0.0 {
                axpy(av, &b[p * n..][..n], or);
            }
        }
    }
    out
}

/// `a [m,k] @ b [n,k]^T -> [m,n]` on flat slices.
pub(crate) fn matmul_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..][..k];
        let or = &mut out[i * n..][..n];
        for (j, o) in or.iter_mut().enumerate() {
            *o = dot(ar, &b[j * k..][..k]);
        }
    }
    out
}

/// `a [k,m]^T @ b [k,n] -> [m,n]` on flat slices.
pub(crate) fn matmul_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let ar = &a[p * m..][..m];
        let br = &b[p * n..][..n];
        for (i, &av) in ar.iter().enumerate() {
            if av != 0.0 {
                axpy(av, br, &mut out[i * n..][..n]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn conv1d_sliding_sum() {
        // input=[[1,2,3]], kernel=[[[1,1]]], bias=[0] -> [[3,5]]
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.0]);
        let out = conv1d_valid(&x, &k, &b).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[3.0, 5.0]);
    }

    #[test]
    fn conv1d_zero_input_gives_bias_rows() {
        let x = Tensor::zeros(&[2, 5]);
        let mut rng = RngStream::new(1, "conv/zero");
        let k = Tensor::new(vec![3, 2, 3], (0..18).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let b = Tensor::from_vec(vec![0.5, -1.0, 2.0]);
        let out = conv1d_valid(&x, &k, &b).unwrap();
        for (c, row) in out.rows().enumerate() {
            for &v in row {
                assert_eq!(v, b.data()[c]);
            }
        }
    }

    #[test]
    fn conv1d_matches_naive_oracle() {
        // Brute-force triple loop, written independently of conv1d_fwd.
        fn naive(x: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
            let (ci, l) = (x.shape()[0], x.shape()[1]);
            let (co, kl) = (k.shape()[0], k.shape()[2]);
            let lo = l - kl + 1;
            let mut out = vec![0.0; co * lo];
            for o in 0..co {
                for t in 0..lo {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for j in 0..kl {
                            acc += k.data()[(o * ci + c) * kl + j] * x.data()[c * l + t + j];
                        }
                    }
                    out[o * lo + t] = acc;
                }
            }
            out
        }
        let mut rng = RngStream::new(42, "conv/oracle");
        for case in 0..120 {
            let ci = 1 + case % 3;
            let l = 4 + case % 5;
            let co = 1 + case % 4;
            let kl = 1 + case % 3;
            let x = Tensor::new(
                vec![ci, l],
                (0..ci * l).map(|_| rng.normal(0.0, 1.0)).collect(),
            )
            .unwrap();
            let k = Tensor::new(
                vec![co, ci, kl],
                (0..co * ci * kl).map(|_| rng.normal(0.0, 1.0)).collect(),
            )
            .unwrap();
            let b = Tensor::from_vec((0..co).map(|_| rng.normal(0.0, 1.0)).collect());
            let got = conv1d_valid(&x, &k, &b).unwrap();
            let want = naive(&x, &k, &b);
            for (g, w) in got.data().iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv1d_kernel_too_long() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 3], vec![1.0; 3]).unwrap();
        let b = Tensor::from_vec(vec![0.0]);
        assert!(conv1d_valid(&x, &k, &b).is_err());
    }

    #[test]
    fn maxpool_basic_and_ties() {
        let (v, a) = maxpool_over_time(&Tensor::new(vec![1, 3], vec![1.0, 5.0, 2.0]).unwrap()).unwrap();
        assert_eq!(v.data(), &[5.0]);
        assert_eq!(a, vec![1]);

        let (v, a) = maxpool_over_time(&Tensor::new(vec![1, 2], vec![3.0, 3.0]).unwrap()).unwrap();
        assert_eq!(v.data(), &[3.0]);
        assert_eq!(a, vec![0], "ties take the first maximal index");

        let c = Tensor::new(vec![3, 4], vec![7.5; 12]).unwrap();
        let (v, _) = maxpool_over_time(&c).unwrap();
        assert_eq!(v.data(), &[7.5, 7.5, 7.5]);
    }

    #[test]
    fn softmax_basics() {
        let s = softmax(&Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let s = softmax(&Tensor::from_vec(vec![1000.0, 0.0])).unwrap();
        assert!(s.data()[0] > 1.0 - 1e-12 && s.data()[1] < 1e-12);
        assert!(s.all_finite(), "no overflow at large scores");

        assert!(softmax(&Tensor::from_vec(vec![f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = RngStream::new(9, "softmax/sum");
        for _ in 0..200 {
            let n = 1 + rng.index(12);
            let v = Tensor::from_vec((0..n).map(|_| rng.normal(0.0, 3.0)).collect());
            let s = softmax(&v).unwrap();
            let total: f64 = s.data().iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(s.data().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn softmax_shift_invariance_bitwise_on_exact_inputs() {
        // Shifts that are exact in binary floating point leave x - max(x)
        // unchanged bit for bit, hence the output too.
        let mut rng = RngStream::new(10, "softmax/shift");
        for _ in 0..100 {
            let n = 2 + rng.index(8);
            let v: Vec<f64> = (0..n).map(|_| rng.index(33) as f64 - 16.0).collect();
            for c in [1.0, -7.0, 128.0] {
                let base = softmax(&Tensor::from_vec(v.clone())).unwrap();
                let shifted =
                    softmax(&Tensor::from_vec(v.iter().map(|x| x + c).collect())).unwrap();
                assert!(super::super::tensor::bitwise_eq(&base, &shifted));
            }
        }
    }

    #[test]
    fn dense_identity() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let w = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let b = Tensor::from_vec(vec![0.0; 3]);
        let y = dense(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dense_shape_mismatch() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let w = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = Tensor::from_vec(vec![0.0; 2]);
        assert!(dense(&x, &w, &b).is_err());
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        for train in [true, false] {
            let mut rng = RngStream::new(5, "dropout");
            let (y, mask) = dropout(&x, 0.0, &mut rng, train).unwrap();
            assert_eq!(y.data(), x.data());
            assert!(mask.iter().all(|&m| m == 1.0));
        }
    }

    #[test]
    fn dropout_inference_identity_and_bad_rate() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let mut rng = RngStream::new(5, "dropout");
        let (y, _) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_scales_kept_values() {
        let x = Tensor::from_vec(vec![1.0; 10_000]);
        let mut rng = RngStream::new(5, "dropout/scale");
        let (y, _) = dropout(&x, 0.25, &mut rng, true).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count();
        for &v in y.data() {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15);
        }
        // Keep rate concentrates near 0.75.
        assert!((kept as f64 / 10_000.0 - 0.75).abs() < 0.03);
    }

    #[test]
    fn mse_basics() {
        let y = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(mse_loss(&y, &y).unwrap(), 0.0);
        let p = Tensor::from_vec(vec![2.0, 3.0, 4.0]);
        assert_eq!(mse_loss(&p, &y).unwrap(), 1.0);
    }

    #[test]
    fn matmul_agreement() {
        let mut rng = RngStream::new(3, "matmul");
        let (m, k, n) = (4, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng.normal(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.normal(0.0, 1.0)).collect();
        let nn = matmul_nn(&a, m, k, &b, n);
        // b transposed, then contracted with matmul_nt, must agree.
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let nt = matmul_nt(&a, m, k, &bt, n);
        for (x, y) in nn.iter().zip(&nt) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        // a transposed, contracted with matmul_tn, must also agree.
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let tn = matmul_tn(&at, k, m, &b, n);
        for (x, y) in nn.iter().zip(&tn) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
