use crate::error::{dim_err, Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub class_weights: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 40,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            class_weights: vec![1.0; 7],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TensorError::Parameter(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "betas must lie in [0,1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad(format!("class weights must be > 0, got {:?}", self.class_weights));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update on a flat buffer. `t` starts at 1.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Scalar>(
    value: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(TensorError::Parameter("adam step index starts at 1".into()));
    }
    let n = value.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(dim_err!(
            "adam buffers differ in length: value {n}, grad {}, m {}, v {}",
            grad.len(),
            m.len(),
            v.len()
        ));
    }
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = T::lit(1.0 - beta1.powi(exp));
    let bc2 = T::lit(1.0 - beta2.powi(exp));
    let (b1, b2) = (T::lit(beta1), T::lit(beta2));
    let (one, lr, eps) = (T::one(), T::lit(lr), T::lit(eps));
    for i in 0..n {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam state for every parameter of a store.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = |s: &ParamStore<T>| {
            s.iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(store),
            v: zeros(store),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update from the store's accumulated `grad` buffers.
    pub fn step(&mut self, store: &mut ParamStore<T>, cfg: &TrainConfig) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(dim_err!(
                "adam state tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            ));
        }
        self.t += 1;
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.shape() != p.value.shape() {
                return Err(dim_err!("adam state shape mismatch for {}", p.name));
            }
            adam_update(
                p.value.data_mut(),
                p.grad.data(),
                m.data_mut(),
                v.data_mut(),
                cfg.learning_rate,
                cfg.beta1,
                cfg.beta2,
                cfg.epsilon,
                self.t,
            )?;
        }
        Ok(())
    }
}
