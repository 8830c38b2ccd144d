use ndarray::Zip;

use super::{Gradients, MlpParams};

/// Moment estimates for Adam, shaped like the parameters they update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: MlpParams,
    pub second_moment: MlpParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zero moments with β₁ = 0.9, β₂ = 0.999, ε = 10⁻⁸.
    pub fn new(params: &MlpParams) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &Gradients, lr: f64) {
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let t = state.step as i32;
    let c1 = 1.0 / (1.0 - b1.powi(t));
    let c2 = 1.0 / (1.0 - b2.powi(t));

    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
    };

    for (((p, m), v), g) in params
        .layers
        .iter_mut()
        .zip(&mut state.first_moment.layers)
        .zip(&mut state.second_moment.layers)
        .zip(&grads.layers)
    {
        Zip::from(&mut p.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut p.biases)
            .and(&mut m.biases)
            .and(&mut v.biases)
            .and(&g.biases)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
}
