//! Forward and backward kernels on plain tensors. The tape in [`crate::graph`]
//! records which kernel produced each node and calls the matching backward.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{dim_err, Result, TensorError};
use crate::tensor::{Scalar, Tensor};

/// `c = a · b + beta · c` for row-major buffers, `a` is `m×k`, `b` is `k×n`.
/// Either operand may be read transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    beta: T,
    c: &mut [T],
) {
    let a = if a_trans {
        ArrayView2::from_shape((k, m), a).expect("gemm a").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm a")
    };
    let b = if b_trans {
        ArrayView2::from_shape((n, k), b).expect("gemm b").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm b")
    };
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("gemm c");
    general_mat_mul(T::one(), &a, &b, beta, &mut c);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let [c_in, h, w] = *input else {
            return Err(dim_err!("conv2d input must be [C,H,W], got {input:?}"));
        };
        let [c_out, wc_in, kh, kw] = *weight else {
            return Err(dim_err!(
                "conv2d weight must be [C_out,C_in,kH,kW], got {weight:?}"
            ));
        };
        if wc_in != c_in {
            return Err(dim_err!(
                "conv2d weight expects {wc_in} input channels, input has {c_in}"
            ));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(dim_err!("conv2d stride must be >= 1, got {stride:?}"));
        }
        if kh > h + 2 * pad.0 || kw > w + 2 * pad.1 {
            return Err(dim_err!(
                "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad.0,
                w + 2 * pad.1
            ));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad.0 - kh) / stride.0 + 1,
            out_w: (w + 2 * pad.1 - kw) / stride.1 + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate touched by kernel offset `k` at output position `o`
    /// along one axis, or `None` when it falls in the zero padding.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = o * stride + k;
        if p < pad || p - pad >= extent {
            None
        } else {
            Some(p - pad)
        }
    }
}

/// Unfold `input` into a `[C_in·kH·kW, H'·W']` patch matrix.
pub fn im2col<T: Scalar>(input: &[T], g: &Conv2dGeometry) -> Vec<T> {
    let p = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..g.out_h {
                    let Some(ih) = Conv2dGeometry::src(oh, ki, g.stride.0, g.pad.0, g.h) else {
                        continue;
                    };
                    for ow in 0..g.out_w {
                        if let Some(iw) = Conv2dGeometry::src(ow, kj, g.stride.1, g.pad.1, g.w) {
                            dst[oh * g.out_w + ow] = plane[ih * g.w + iw];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the input.
pub fn col2im<T: Scalar>(cols: &[T], g: &Conv2dGeometry) -> Vec<T> {
    let p = g.positions();
    let mut out = vec![T::zero(); g.c_in * g.h * g.w];
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..g.out_h {
                    let Some(ih) = Conv2dGeometry::src(oh, ki, g.stride.0, g.pad.0, g.h) else {
                        continue;
                    };
                    for ow in 0..g.out_w {
                        if let Some(iw) = Conv2dGeometry::src(ow, kj, g.stride.1, g.pad.1, g.w) {
                            plane[ih * g.w + iw] += src[oh * g.out_w + ow];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Cross-correlation (no kernel flip). Returns the output and the patch
/// matrix needed by the backward pass.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<(Tensor<T>, Vec<T>, Conv2dGeometry)> {
    let g = Conv2dGeometry::new(input.shape(), weight.shape(), stride, pad)?;
    if bias.len() != g.c_out {
        return Err(dim_err!(
            "conv2d bias has {} entries, expected {}",
            bias.len(),
            g.c_out
        ));
    }
    input.ensure_finite("conv2d input")?;
    let cols = im2col(input.data(), &g);
    let p = g.positions();
    let mut out = vec![T::zero(); g.c_out * p];
    for (c, row) in out.chunks_mut(p).enumerate() {
        row.fill(bias.data()[c]);
    }
    gemm(
        g.c_out,
        g.patch_len(),
        p,
        weight.data(),
        false,
        &cols,
        false,
        T::one(),
        &mut out,
    );
    let out = Tensor::new(vec![g.c_out, g.out_h, g.out_w], out)?;
    Ok((out, cols, g))
}

pub struct Conv2dGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &[T],
    cols: &[T],
    weight: &[T],
    g: &Conv2dGeometry,
    need_input: bool,
) -> Conv2dGrads<T> {
    let p = g.positions();
    let k = g.patch_len();
    let mut dw = vec![T::zero(); g.c_out * k];
    gemm(g.c_out, p, k, grad_out, false, cols, true, T::zero(), &mut dw);
    let db = grad_out.chunks(p).map(|r| r.iter().copied().sum()).collect();
    let input = need_input.then(|| {
        let mut dcols = vec![T::zero(); k * p];
        gemm(k, g.c_out, p, weight, true, grad_out, false, T::zero(), &mut dcols);
        col2im(&dcols, g)
    });
    Conv2dGrads {
        input,
        weight: dw,
        bias: db,
    }
}

/// Max pooling over `[C,H,W]`. The second value holds, per output element, the
/// flat input index of the winning element (ties: lowest linear index).
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [c, h, w] = *input.shape() else {
        return Err(dim_err!("maxpool input must be [C,H,W], got {:?}", input.shape()));
    };
    if kernel.0 == 0 || kernel.1 == 0 || kernel.0 > h || kernel.1 > w {
        return Err(dim_err!("maxpool kernel {kernel:?} does not fit input {h}x{w}"));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(dim_err!("maxpool stride must be >= 1, got {stride:?}"));
    }
    let oh = (h - kernel.0) / stride.0 + 1;
    let ow = (w - kernel.1) / stride.1 + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + i * stride.0 * w + j * stride.1;
                for ki in 0..kernel.0 {
                    for kj in 0..kernel.1 {
                        let idx = base + (i * stride.0 + ki) * w + j * stride.1 + kj;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, arg))
}

pub fn maxpool2d_backward<T: Scalar>(grad_out: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in grad_out.iter().zip(argmax) {
        dx[i] += g;
    }
    dx
}

/// `W·x + b` for `x` of shape `[N]`, or row-wise for `x` of shape `[R,N]`.
pub fn dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [m, n] = *w.shape() else {
        return Err(dim_err!("dense weight must be [M,N], got {:?}", w.shape()));
    };
    if b.len() != m {
        return Err(dim_err!("dense bias has {} entries, expected {m}", b.len()));
    }
    let (rows, out_shape) = match *x.shape() {
        [len] if len == n => (1, vec![m]),
        [r, len] if len == n => (r, vec![r, m]),
        _ => {
            return Err(dim_err!(
                "dense input {:?} does not match weight [{m},{n}]",
                x.shape()
            ))
        }
    };
    x.ensure_finite("dense input")?;
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    gemm(rows, n, m, x.data(), false, w.data(), true, T::one(), &mut out);
    Tensor::new(out_shape, out)
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ([m, k], [k2, n]) = (a.shape(), b.shape()) else {
        return Err(dim_err!(
            "matmul needs two matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    };
    if k != k2 {
        return Err(dim_err!("matmul inner dims differ: {k} vs {k2}"));
    }
    let (m, k, n) = (*m, *k, *n);
    let mut out = vec![T::zero(); m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, T::zero(), &mut out);
    Tensor::new(vec![m, n], out)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let [r, c] = *a.shape() else {
        return Err(dim_err!("transpose needs a matrix, got {:?}", a.shape()));
    };
    let x = a.data();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(x[i * c + j]);
        }
    }
    Tensor::new(vec![c, r], out)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

fn softmax_slice<T: Scalar>(row: &[T], out: &mut Vec<T>) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let start = out.len();
    let mut total = T::zero();
    for &v in row {
        let e = (v - max).exp();
        total += e;
        out.push(e);
    }
    for v in &mut out[start..] {
        *v /= total;
    }
}

/// Softmax over the last axis (a vector, or each row of a matrix).
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let width = *logits.shape().last().expect("non-empty shape");
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(width) {
        softmax_slice(row, &mut out);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

pub(crate) const LOG_EPS: f64 = 1e-12;

/// `-weights[label] · ln(probs[label] + 1e-12)`.
pub fn weighted_cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    label: usize,
    weights: &[T],
) -> Result<T> {
    let k = probs.len();
    if label >= k {
        return Err(TensorError::Index(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    if weights.len() != k {
        return Err(dim_err!("{} class weights for {k} classes", weights.len()));
    }
    Ok(-weights[label] * (probs.data()[label] + T::lit(LOG_EPS)).ln())
}

/// Inverted-dropout mask: zero with probability `p`, otherwise `1/(1-p)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Vec<T>> {
    check_dropout_p(p)?;
    let keep = T::lit(1.0 / (1.0 - p));
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect())
}

pub(crate) fn check_dropout_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::Parameter(format!(
            "dropout probability must lie in [0,1), got {p}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Standalone dropout with a seeded mask; eval mode is the identity.
pub fn dropout<T: Scalar>(x: &Tensor<T>, p: f64, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    check_dropout_p(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = crate::rng::seeded(seed);
    let mask: Vec<T> = dropout_mask(x.len(), p, &mut rng)?;
    let data = x.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}
