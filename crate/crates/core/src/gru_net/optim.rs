use super::network::{Gradients, GruNetwork};

/// Global L2 norm of all gradient entries.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be positive");
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        grads.for_each_tensor_mut(|t| t.iter_mut().for_each(|g| *g *= k));
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of every parameter of `net`.
pub fn adam_step(net: &mut GruNetwork, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    let g = grads.to_flat();
    assert_eq!(g.len(), state.m.len(), "optimizer state does not match the network");
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..g.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    }
    let mut i = 0;
    let (m, v) = (&state.m, &state.v);
    net.for_each_tensor_mut(|t| {
        for p in t.iter_mut() {
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            i += 1;
        }
    });
}
