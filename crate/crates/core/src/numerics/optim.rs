use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// Adam moment accumulators for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &[Tensor], learning_rate: f64) -> Self {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update using each parameter's `grad` slot.
/// Parameters without a gradient are treated as having a zero gradient.
pub fn adam_step(params: &mut [Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameters, optimizer tracks {}", params.len(), state.first_moment.len()),
        ));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.numel() != m.len() || p.grad.as_ref().is_some_and(|g| g.len() != m.len()) {
            return Err(Error::shape("adam_step", format!("parameter {:?} vs slot of {}", p.shape(), m.len())));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    for ((p, m), v) in params.iter_mut().zip(&mut state.first_moment).zip(&mut state.second_moment) {
        let Some(grad) = p.grad.take() else {
            // zero gradient: moments decay, parameter still moves by momentum
            for ((w, mi), vi) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi *= b1;
                *vi *= b2;
                *w -= lr * (*mi / correction1) / ((*vi / correction2).sqrt() + eps);
            }
            continue;
        };
        for (((w, g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            *w -= lr * (*mi / correction1) / ((*vi / correction2).sqrt() + eps);
        }
        p.grad = Some(grad);
    }
    Ok(())
}
