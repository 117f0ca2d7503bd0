//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] borrows the model's [`ParamStore`] and records every operation
//! as a node. Nodes only reference earlier nodes, so walking the tape backwards
//! is a valid reverse topological order. [`Graph::backward`] returns a
//! [`Gradients`] table that owns its data, so the borrow on the store ends with
//! the graph and the caller can then apply the gradients.

use rand::Rng;

use crate::error::{dim_err, Result, TensorError};
use crate::ops::{self, Conv2dGeometry, Mode};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Input,
    Leaf,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<T>,
        geom: Conv2dGeometry,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    StackRows(Vec<Var>),
    Row {
        x: Var,
        index: usize,
    },
    MeanRows(Var),
    Reshape(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    GlobalAvgPool(Var),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        weight: T,
        probs: Vec<T>,
    },
    CorruptGrad {
        x: Var,
        factor: T,
    },
}

struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => &self.params.get(*id).value,
            (_, Some(t)) => t,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Input => false,
            Op::Leaf | Op::Param(_) => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant data; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, &[])
    }

    /// Data whose gradient is wanted (e.g. an input image for saliency).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let (out, cols, geom) =
            ops::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, cols, geom }, &[x, w, b]))
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let (out, argmax) = ops::maxpool2d(self.value(x), kernel, stride)?;
        Ok(self.push(out, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Dense { x, w, b }, &[x, w, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a))?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    fn zip_with(&self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err!(
                "{what}: shapes {:?} and {:?} differ",
                ta.shape(),
                tb.shape()
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = ops::relu(self.value(a));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = ops::sigmoid(self.value(a));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = ops::tanh(self.value(a));
        self.push(out, Op::Tanh(a), &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = ops::softmax(self.value(a));
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Concatenate flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(dim_err!("concat of nothing"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(data);
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    /// Contiguous sub-vector of a flattened input.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if len == 0 || start + len > src.len() {
            return Err(dim_err!(
                "slice {start}..{} out of range for length {}",
                start + len,
                src.len()
            ));
        }
        let out = Tensor::from_vec(src.data()[start..start + len].to_vec());
        Ok(self.push(out, Op::Slice { x, start }, &[x]))
    }

    /// Stack equal-length vectors as rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(dim_err!("stack_rows of nothing"));
        };
        let width = self.value(first).len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.len() != width {
                return Err(dim_err!("stack_rows: row of length {} vs {width}", t.len()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), width], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rows))
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        let [r, c] = *t.shape() else {
            return Err(dim_err!("row() needs a matrix, got {:?}", t.shape()));
        };
        if index >= r {
            return Err(TensorError::Index(format!("row {index} of {r}")));
        }
        let out = Tensor::from_vec(t.data()[index * c..(index + 1) * c].to_vec());
        Ok(self.push(out, Op::Row { x, index }, &[x]))
    }

    /// Mean over the rows of a `[R,C]` matrix, giving `[C]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let [r, c] = *t.shape() else {
            return Err(dim_err!("mean_rows needs a matrix, got {:?}", t.shape()));
        };
        let mut acc = vec![T::zero(); c];
        for row in t.data().chunks(c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = T::one() / T::lit(r as f64);
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(self.push(Tensor::from_vec(acc), Op::MeanRows(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.reshape(x, &[n])
    }

    /// Inverted dropout. Eval mode (or `p == 0`) returns `x` unchanged and
    /// draws nothing from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        ops::check_dropout_p(p)?;
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mask: Vec<T> = ops::dropout_mask(self.value(x).len(), p, rng)?;
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// `[C,H,W] -> [C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let [c, h, w] = *t.shape() else {
            return Err(dim_err!("global_avg_pool needs [C,H,W], got {:?}", t.shape()));
        };
        let inv = T::one() / T::lit((h * w) as f64);
        let out: Vec<T> = t
            .data()
            .chunks(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        debug_assert_eq!(out.len(), c);
        Ok(self.push(Tensor::from_vec(out), Op::GlobalAvgPool(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    /// Weighted cross-entropy of `softmax(logits)` against `label`, fused so
    /// the gradient reaching the logits is `weight·(probs − onehot)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize, weights: &[T]) -> Result<Var> {
        let probs = ops::softmax(self.value(logits));
        let loss = ops::weighted_cross_entropy(&probs, label, weights)?;
        if !loss.is_finite() {
            return Err(TensorError::Numeric(format!("non-finite loss {loss}")));
        }
        let op = Op::SoftmaxCrossEntropy {
            logits,
            label,
            weight: weights[label],
            probs: probs.into_data(),
        };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    /// Identity forward whose backward multiplies the gradient by `factor`.
    /// Only useful for exercising gradient checks against a broken backward.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).clone();
        self.push(out, Op::CorruptGrad { x, factor }, &[x])
    }

    /// Backpropagate from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(dim_err!(
                "backward needs a scalar root, got shape {:?}",
                root_val.shape()
            ));
        }
        root_val.ensure_finite("backward root")?;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(root_val.shape()));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else {
                continue;
            };
            self.backward_node(i, g, lower)?;
        }
        Ok(Gradients {
            grads,
            param_vars: self.param_vars.clone(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, acc: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = node.value.as_ref();
        let gd = g.data();
        match &node.op {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, cols, geom } => {
                let grads = ops::conv2d_backward(gd, cols, self.value(*w).data(), geom, self.wants(*x));
                if let Some(dx) = grads.input {
                    self.acc(acc, *x, self.value(*x).shape(), dx);
                }
                self.acc(acc, *w, self.value(*w).shape(), grads.weight);
                self.acc(acc, *b, self.value(*b).shape(), grads.bias);
            }
            Op::MaxPool { x, argmax } => {
                let dx = ops::maxpool2d_backward(gd, argmax, self.value(*x).len());
                self.acc(acc, *x, self.value(*x).shape(), dx);
            }
            Op::Dense { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (m, n) = (wt.shape()[0], wt.shape()[1]);
                let rows = xt.len() / n;
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); m * n];
                    ops::gemm(m, rows, n, gd, true, xt.data(), false, T::zero(), &mut dw);
                    self.acc(acc, *w, wt.shape(), dw);
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); m];
                    for r in gd.chunks(m) {
                        for (d, &v) in db.iter_mut().zip(r) {
                            *d += v;
                        }
                    }
                    self.acc(acc, *b, &[m], db);
                }
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); rows * n];
                    ops::gemm(rows, m, n, gd, false, wt.data(), false, T::zero(), &mut dx);
                    self.acc(acc, *x, xt.shape(), dx);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    ops::gemm(m, n, k, gd, false, tb.data(), true, T::zero(), &mut da);
                    self.acc(acc, *a, ta.shape(), da);
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    ops::gemm(k, m, n, ta.data(), true, gd, false, T::zero(), &mut db);
                    self.acc(acc, *b, tb.shape(), db);
                }
            }
            Op::Transpose(a) => {
                let dt = ops::transpose(g)?;
                self.acc(acc, *a, self.value(*a).shape(), dt.into_data());
            }
            Op::Add(a, b) => {
                self.acc(acc, *a, g.shape(), gd.to_vec());
                self.acc(acc, *b, g.shape(), gd.to_vec());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = gd.iter().zip(tb.data()).map(|(&g, &y)| g * y).collect();
                    self.acc(acc, *a, g.shape(), d);
                }
                if self.wants(*b) {
                    let d = gd.iter().zip(ta.data()).map(|(&g, &x)| g * x).collect();
                    self.acc(acc, *b, g.shape(), d);
                }
            }
            Op::Scale(a, s) => {
                let d = gd.iter().map(|&v| v * *s).collect();
                self.acc(acc, *a, g.shape(), d);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = gd
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                self.acc(acc, *a, g.shape(), d);
            }
            Op::Sigmoid(a) => {
                let y = out.expect("value").data();
                let d = gd.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect();
                self.acc(acc, *a, g.shape(), d);
            }
            Op::Tanh(a) => {
                let y = out.expect("value").data();
                let d = gd.iter().zip(y).map(|(&g, &y)| g * (T::one() - y * y)).collect();
                self.acc(acc, *a, g.shape(), d);
            }
            Op::Softmax(a) => {
                let y = out.expect("value");
                let width = *y.shape().last().expect("shape");
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(width).zip(gd.chunks(width)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(&y, &g)| y * (g - dot)));
                }
                self.acc(acc, *a, g.shape(), d);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    let n = self.value(p).len();
                    self.acc(acc, p, shape, gd[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let src = self.value(*x);
                let mut d = vec![T::zero(); src.len()];
                d[*start..*start + gd.len()].copy_from_slice(gd);
                self.acc(acc, *x, src.shape(), d);
            }
            Op::StackRows(rows) => {
                let width = g.shape()[1];
                for (&r, chunk) in rows.iter().zip(gd.chunks(width)) {
                    self.acc(acc, r, self.value(r).shape(), chunk.to_vec());
                }
            }
            Op::Row { x, index } => {
                let src = self.value(*x);
                let c = src.shape()[1];
                let mut d = vec![T::zero(); src.len()];
                d[index * c..(index + 1) * c].copy_from_slice(gd);
                self.acc(acc, *x, src.shape(), d);
            }
            Op::MeanRows(x) => {
                let src = self.value(*x);
                let r = src.shape()[0];
                let inv = T::one() / T::lit(r as f64);
                let mut d = Vec::with_capacity(src.len());
                for _ in 0..r {
                    d.extend(gd.iter().map(|&v| v * inv));
                }
                self.acc(acc, *x, src.shape(), d);
            }
            Op::Reshape(x) => {
                self.acc(acc, *x, self.value(*x).shape(), gd.to_vec());
            }
            Op::Dropout { x, mask } => {
                let d = gd.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                self.acc(acc, *x, g.shape(), d);
            }
            Op::GlobalAvgPool(x) => {
                let src = self.value(*x);
                let hw = src.shape()[1] * src.shape()[2];
                let inv = T::one() / T::lit(hw as f64);
                let mut d = Vec::with_capacity(src.len());
                for &v in gd {
                    d.extend(std::iter::repeat_n(v * inv, hw));
                }
                self.acc(acc, *x, src.shape(), d);
            }
            Op::Sum(x) => {
                let src = self.value(*x);
                self.acc(acc, *x, src.shape(), vec![gd[0]; src.len()]);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                weight,
                probs,
            } => {
                let scale = gd[0] * *weight;
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| {
                        let onehot = if k == *label { T::one() } else { T::zero() };
                        scale * (p - onehot)
                    })
                    .collect();
                self.acc(acc, *logits, self.value(*logits).shape(), d);
            }
            Op::CorruptGrad { x, factor } => {
                let d = gd.iter().map(|&v| v * *factor).collect();
                self.acc(acc, *x, g.shape(), d);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Graph<'_, T> {
    fn acc(&self, acc: &mut [Option<Tensor<T>>], v: Var, shape: &[usize], data: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        accumulate(acc, v, shape, data);
    }
}

fn accumulate<T: Scalar>(acc: &mut [Option<Tensor<T>>], v: Var, shape: &[usize], data: Vec<T>) {
    match &mut acc[v.0] {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape matches value"));
        }
    }
}

/// Gradients of one backward pass, indexed by node and by parameter.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    param_vars: Vec<Option<Var>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.param_vars
            .get(id.index())
            .copied()
            .flatten()
            .and_then(|v| self.wrt(v))
    }

    /// Add every parameter gradient into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for id in store.ids().collect::<Vec<_>>() {
            if let Some(g) = self.param(id) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_gradient_at_kink_and_sign() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.leaf(Tensor::from_vec(vec![-1.0, 3.0, 0.0]));
        let y = g.relu(x);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_vec(vec![2.0])).unwrap();
        let mut g = Graph::new(&store);
        let a = g.param(id);
        let b = g.param(id);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[4.0]);
        grads.accumulate_into(&mut store);
        assert_eq!(store.get(id).grad.data(), &[4.0]);
    }

    #[test]
    fn inputs_get_no_gradient() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.wrt(x).is_none());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_scaled_residual() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let z = g.leaf(Tensor::from_vec(vec![0.3, -0.2, 1.1]));
        let probs = ops::softmax(g.value(z));
        let l1 = g.softmax_cross_entropy(z, 2, &[1.0, 1.0, 1.0]).unwrap();
        let g1 = g.backward(l1).unwrap().wrt(z).unwrap().clone();
        let l2 = g.softmax_cross_entropy(z, 2, &[1.0, 1.0, 2.0]).unwrap();
        let g2 = g.backward(l2).unwrap().wrt(z).unwrap().clone();
        for k in 0..3 {
            let expect = probs.data()[k] - if k == 2 { 1.0 } else { 0.0 };
            assert!((g1.data()[k] - expect).abs() < 1e-12);
            assert!((g2.data()[k] - 2.0 * expect).abs() < 1e-12);
        }
        assert!((g.value(l2).data()[0] - 2.0 * g.value(l1).data()[0]).abs() < 1e-12);
    }
}
