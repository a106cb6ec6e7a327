use std::collections::BTreeMap;

use super::TrainError;
use crate::autodiff::Tensor;
use crate::model::ParameterStore;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter, created lazily at the first step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

/// Scales every gradient by `max_norm / ‖g‖` when the global L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor<f32>>, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .flat_map(|t| t.data())
        .map(|&g| f64::from(g) * f64::from(g))
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        for t in grads.values_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}

/// One bias-corrected Adam update with decoupled decay. Parameters without
/// a gradient are still decayed. Nothing changes if any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &BTreeMap<String, Tensor<f32>>,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| TrainError::Config(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(TrainError::Config(format!(
                "gradient for {name} is {:?}, parameter is {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient {
                param: name.clone(),
                step: state.step + 1,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let decay = (1.0 - lr * weight_decay) as f32;
    let (b1, b2) = (ADAM_BETA1 as f32, ADAM_BETA2 as f32);
    for (name, p) in params.iter_mut() {
        let theta = p.data_mut();
        if decay != 1.0 {
            theta.iter_mut().for_each(|x| *x *= decay);
        }
        let Some(g) = grads.get(name) else { continue };
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; theta.len()]);
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; theta.len()]);
        for (((x, &gi), mi), vi) in theta.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = f64::from(*mi) / bc1;
            let v_hat = f64::from(*vi) / bc2;
            *x -= (lr * m_hat / (v_hat.sqrt() + ADAM_EPS)) as f32;
        }
    }
    Ok(())
}
