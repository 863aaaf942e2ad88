use super::{ParameterStore, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParameterStore<T>, config: AdamConfig) -> Self {
        let zeros = |id| vec![T::ZERO; store.value(id).numel()];
        AdamState {
            config,
            step: 0,
            m: (0..store.len()).map(zeros).collect(),
            v: (0..store.len()).map(zeros).collect(),
        }
    }
}

/// One Adam update with bias correction, then clears all gradients.
pub fn adam_step<T: Scalar>(store: &mut ParameterStore<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::contract(format!(
            "optimizer state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for id in 0..store.len() {
        if store.grad(id).is_none() {
            return Err(Error::contract(format!("parameter {} has no gradient", store.name(id))));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as f64;
    let b1 = T::from_f64(c.beta1);
    let b2 = T::from_f64(c.beta2);
    let one_minus_b1 = T::from_f64(1.0 - c.beta1);
    let one_minus_b2 = T::from_f64(1.0 - c.beta2);
    let bc1 = T::from_f64(1.0 - c.beta1.powf(t));
    let bc2 = T::from_f64(1.0 - c.beta2.powf(t));
    let lr = T::from_f64(c.lr);
    let eps = T::from_f64(c.eps);

    for id in 0..store.len() {
        let grad = store.grad(id).expect("checked above").data().to_vec();
        let (m, v) = (&mut state.m[id], &mut state.v[id]);
        let value = store.value_mut(id).data_mut();
        for (((p, &g), mi), vi) in value.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_minus_b1 * g;
            *vi = b2 * *vi + one_minus_b2 * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    store.zero_grad();
    Ok(())
}
