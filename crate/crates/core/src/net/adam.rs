use crate::error::{Error, Result};
use crate::net::params::{Gradients, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// One bias-corrected Adam update with learning rate `alpha`.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {alpha}"
        )));
    }
    if !grads.matches_layout(params) {
        return Err(Error::Shape(
            "gradients do not match the parameter layout".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            step: "adam gradient",
            iteration: params.step_count() as usize,
        });
    }
    let t = params.bump_step() as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (layer, lg) in params.layers_mut().iter_mut().zip(&grads.layers) {
        for (tensor, g) in layer.tensors.iter_mut().zip(lg) {
            let moments = tensor.adam_m.iter_mut().zip(tensor.adam_v.iter_mut());
            for ((value, (m, v)), &gi) in tensor.value.iter_mut().zip(moments).zip(g) {
                *m = BETA1 * *m + (1.0 - BETA1) * gi;
                *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                *value -= alpha * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
            }
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite {
            step: "adam update",
            iteration: params.step_count() as usize,
        });
    }
    Ok(())
}
