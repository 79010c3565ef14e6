use crate::error::{Error, Result};
use crate::tensor::{ParamLeaf, Tensor};

/// Adam optimizer state: one pair of moment tensors per parameter, aligned
/// with the model's parameter order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One Adam update with bias correction. Gradients are consumed (reset to
/// zero) after the step.
pub fn adam_step(params: &mut [&mut ParamLeaf], state: &mut AdamState) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Training(format!(
            "optimizer tracks {} parameters, model has {}",
            state.m.len(),
            params.len()
        )));
    }
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient in parameter '{}'",
                p.name
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let grad = p.grad.data();
        let theta = p.value.data_mut();
        for k in 0..grad.len() {
            let g = grad[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            theta[k] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        p.zero_grad();
    }
    Ok(())
}
