use super::network::NetworkParams;
use super::NetError;

/// Adam optimizer state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: NetworkParams,
    pub second_moment: NetworkParams,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, learning_rate: f64) -> Self {
        Self::with_betas(params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &NetworkParams, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is non-finite.
pub fn adam_step(params: &mut NetworkParams, grads: &NetworkParams, state: &mut AdamState) -> Result<(), NetError> {
    let specs = params.specs();
    grads.check_matches(&specs)?;
    state.first_moment.check_matches(&specs)?;
    state.second_moment.check_matches(&specs)?;
    if let Some(layer) = grads.first_non_finite_layer() {
        return Err(NetError::NonFiniteGradient { layer });
    }

    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - state.beta1.powi(t);
    let correction2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.epsilon);

    let moments = state.first_moment.iter_values_mut().zip(state.second_moment.iter_values_mut());
    for ((p, &g), (m, v)) in params.iter_values_mut().zip(grads.iter_values()).zip(moments) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
