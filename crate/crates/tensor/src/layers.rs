//! Parameterised building blocks. Each layer owns only [`ParamId`]s; values
//! live in the model's [`ParamStore`].

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weight = store.add_init(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel.0, kernel.1],
            Init::KaimingUniform { fan_in },
            rng,
        )?;
        let bias = store.add_init(format!("{name}.bias"), &[out_channels], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.conv2d(x, w, b, self.stride, self.pad)
    }

    /// Spatial output extent for an `h×w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.pad.0;
        let pw = w + 2 * self.pad.1;
        (self.kernel.0 <= ph && self.kernel.1 <= pw).then(|| {
            (
                (ph - self.kernel.0) / self.stride.0 + 1,
                (pw - self.kernel.1) / self.stride.1 + 1,
            )
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_init(
            format!("{name}.weight"),
            &[outputs, inputs],
            Init::KaimingUniform { fan_in: inputs },
            rng,
        )?;
        let bias = store.add_init(format!("{name}.bias"), &[outputs], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.dense(x, w, b)
    }
}

/// Single LSTM cell with the four gates packed as `[i, f, g, o]` rows of one
/// `[4H, D+H]` weight acting on `[x, h]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let weight = store.add_init(
            format!("{name}.weight"),
            &[4 * hidden, input_size + hidden],
            Init::Uniform { bound },
            rng,
        )?;
        let bias = store.add_init(format!("{name}.bias"), &[4 * hidden], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            input_size,
            hidden,
        })
    }

    /// One time step: returns `(h_t, c_t)`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hid = self.hidden;
        if g.value(x).len() != self.input_size || g.value(h).len() != hid || g.value(c).len() != hid {
            return Err(dim_err!(
                "lstm cell expects x[{}], h[{hid}], c[{hid}]; got {:?}, {:?}, {:?}",
                self.input_size,
                g.shape(x),
                g.shape(h),
                g.shape(c)
            ));
        }
        let xh = g.concat(&[x, h])?;
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let z = g.dense(xh, w, b)?;
        let zi = g.slice(z, 0, hid)?;
        let zf = g.slice(z, hid, hid)?;
        let zg = g.slice(z, 2 * hid, hid)?;
        let zo = g.slice(z, 3 * hid, hid)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let gg = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, gg)?;
        let c_t = g.add(keep, write)?;
        let tc = g.tanh(c_t);
        let h_t = g.mul(o, tc)?;
        Ok((h_t, c_t))
    }
}

/// Elman cell `h_t = tanh(W·[x, h] + b)`.
#[derive(Debug, Clone)]
pub struct RnnCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden: usize,
}

impl RnnCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let weight = store.add_init(
            format!("{name}.weight"),
            &[hidden, input_size + hidden],
            Init::Uniform { bound },
            rng,
        )?;
        let bias = store.add_init(format!("{name}.bias"), &[hidden], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            input_size,
            hidden,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, h: Var) -> Result<Var> {
        if g.value(x).len() != self.input_size || g.value(h).len() != self.hidden {
            return Err(dim_err!(
                "rnn cell expects x[{}], h[{}]",
                self.input_size,
                self.hidden
            ));
        }
        let xh = g.concat(&[x, h])?;
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let z = g.dense(xh, w, b)?;
        Ok(g.tanh(z))
    }
}

/// Single-head scaled dot-product self-attention with `d_k = H`.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub hidden: usize,
}

pub struct AttentionOutput {
    pub output: Var,
    pub weights: Var,
}

impl SelfAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let init = Init::Uniform {
            bound: 1.0 / (hidden as f64).sqrt(),
        };
        let mut mk = |suffix: &str| store.add_init(format!("{name}.{suffix}"), &[hidden, hidden], init, rng);
        Ok(Self {
            query: mk("w_q")?,
            key: mk("w_k")?,
            value: mk("w_v")?,
            hidden,
        })
    }

    /// `softmax_rows(Q·Kᵀ/√H)·V` for `seq` of shape `[T,H]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, seq: Var) -> Result<AttentionOutput> {
        match g.shape(seq) {
            [_, h] if *h == self.hidden => {}
            s => return Err(dim_err!("attention expects [T,{}], got {s:?}", self.hidden)),
        }
        let (wq, wk, wv) = (g.param(self.query), g.param(self.key), g.param(self.value));
        let q = g.matmul(seq, wq)?;
        let k = g.matmul(seq, wk)?;
        let v = g.matmul(seq, wv)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scaled = g.scale(scores, T::one() / T::lit(self.hidden as f64).sqrt());
        let weights = g.softmax(scaled);
        let output = g.matmul(weights, v)?;
        Ok(AttentionOutput { output, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::Tensor;

    #[test]
    fn lstm_zero_params() {
        let mut store = ParamStore::<f64>::new();
        let cell = LstmCell::new(&mut store, "lstm", 3, 2, &mut seeded(0)).unwrap();
        store.get_mut(cell.weight).value.fill(0.0);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::from_vec(vec![0.4, -1.0, 2.0]));
        let h = g.input(Tensor::zeros(&[2]));
        let c0 = g.input(Tensor::zeros(&[2]));
        let (h1, c1) = cell.forward(&mut g, x, h, c0).unwrap();
        assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c1).data().iter().all(|&v| v == 0.0));

        let c = g.input(Tensor::from_vec(vec![1.5, -0.8]));
        let (h2, c2) = cell.forward(&mut g, x, h, c).unwrap();
        for (k, &cv) in [1.5f64, -0.8].iter().enumerate() {
            assert!((g.value(c2).data()[k] - 0.5 * cv).abs() < 1e-15);
            assert!((g.value(h2).data()[k] - 0.5 * (0.5 * cv).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_with_zero_query_key_is_uniform() {
        let mut store = ParamStore::<f64>::new();
        let att = SelfAttention::new(&mut store, "att", 2, &mut seeded(1)).unwrap();
        store.get_mut(att.query).value.fill(0.0);
        store.get_mut(att.key).value.fill(0.0);
        let mut g = Graph::new(&store);
        let seq = g.input(Tensor::from_f64(&[3, 2], &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0]).unwrap());
        let out = att.forward(&mut g, seq).unwrap();
        assert!(g.value(out.weights).data().iter().all(|&a| (a - 1.0 / 3.0).abs() < 1e-15));
        let v = crate::ops::matmul(g.value(seq), &store.get(att.value).value).unwrap();
        let o = g.value(out.output);
        for col in 0..2 {
            let mean = (0..3).map(|r| v.data()[r * 2 + col]).sum::<f64>() / 3.0;
            for r in 0..3 {
                assert!((o.data()[r * 2 + col] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_two_step_hand_case() {
        // H=1, w_q=1, w_k=2, w_v=3, sequence [1, 2].
        let mut store = ParamStore::<f64>::new();
        let att = SelfAttention::new(&mut store, "att", 1, &mut seeded(1)).unwrap();
        store.get_mut(att.query).value.data_mut()[0] = 1.0;
        store.get_mut(att.key).value.data_mut()[0] = 2.0;
        store.get_mut(att.value).value.data_mut()[0] = 3.0;
        let mut g = Graph::new(&store);
        let seq = g.input(Tensor::from_f64(&[2, 1], &[1.0, 2.0]).unwrap());
        let out = att.forward(&mut g, seq).unwrap();
        // scores: q=[1,2], k=[2,4] -> [[2,4],[4,8]]
        let row = |a: f64, b: f64| {
            let (ea, eb) = (a.exp(), b.exp());
            (ea / (ea + eb), eb / (ea + eb))
        };
        let (a00, a01) = row(2.0, 4.0);
        let (a10, a11) = row(4.0, 8.0);
        let w = g.value(out.weights).data();
        assert!((w[0] - a00).abs() < 1e-14 && (w[1] - a01).abs() < 1e-14);
        assert!((w[2] - a10).abs() < 1e-14 && (w[3] - a11).abs() < 1e-14);
        let o = g.value(out.output).data();
        assert!((o[0] - (a00 * 3.0 + a01 * 6.0)).abs() < 1e-13);
        assert!((o[1] - (a10 * 3.0 + a11 * 6.0)).abs() < 1e-13);
    }

    #[test]
    fn single_step_attention_is_identity_weight() {
        let mut store = ParamStore::<f64>::new();
        let att = SelfAttention::new(&mut store, "att", 4, &mut seeded(2)).unwrap();
        let mut g = Graph::new(&store);
        let seq = g.input(Tensor::from_f64(&[1, 4], &[0.1, 0.2, -0.3, 0.4]).unwrap());
        let out = att.forward(&mut g, seq).unwrap();
        assert_eq!(g.value(out.weights).data(), &[1.0]);
    }
}
