//! The weight subproblem of the ADMM splitting:
//!
//! ```text
//! min_theta ||f - g(x)||^2 + (beta / 2) * ||v - g(x) + w / beta||^2
//! ```
//!
//! solved inexactly by a fixed number of Adam steps, warm-started from the
//! previous outer iteration (weights and moments both carry over).

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::net::adam::adam_step;
use crate::net::network::{backward, forward};
use crate::net::params::ParamStore;

/// Objective value at a given network output and its derivative with respect
/// to that output, `-2 (f - out) - beta (v - out + w / beta)`.
pub fn theta_objective(
    f: &ImageTensor,
    v: &ImageTensor,
    w: &ImageTensor,
    beta: f64,
    output: &ImageTensor,
) -> Result<(f64, ImageTensor)> {
    f.ensure_same_shape(output, "theta objective f")?;
    v.ensure_same_shape(output, "theta objective v")?;
    w.ensure_same_shape(output, "theta objective w")?;
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let mut grad = ImageTensor::zeros_like(output);
    let mut value = 0.0;
    let it = f
        .data()
        .iter()
        .zip(v.data())
        .zip(w.data())
        .zip(output.data());
    for (i, (((&fi, &vi), &wi), &oi)) in it.enumerate() {
        let r = fi - oi;
        let s = vi - oi + wi / beta;
        value += r * r + 0.5 * beta * s * s;
        grad.data_mut()[i] = -2.0 * r - beta * s;
    }
    Ok((value, grad))
}

/// Trace of one inner solve.
#[derive(Debug, Clone)]
pub struct ThetaOutcome {
    /// Objective before each of the `K` steps.
    pub objective_trace: Vec<f64>,
    /// Objective after the last step.
    pub final_objective: f64,
    /// Network output after the last step.
    pub output: ImageTensor,
}

#[allow(clippy::too_many_arguments)]
pub fn solve_theta_subproblem(
    params: &mut ParamStore,
    x: &ImageTensor,
    f: &ImageTensor,
    v: &ImageTensor,
    w: &ImageTensor,
    beta: f64,
    alpha: f64,
    steps: usize,
) -> Result<ThetaOutcome> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "inner iteration count must be at least 1".into(),
        ));
    }
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (out, tape) = forward(params, x, true)?;
        let (value, grad_out) = theta_objective(f, v, w, beta, &out)?;
        trace.push(value);
        let grads = backward(params, tape.as_ref().expect("recorded"), &grad_out)?;
        adam_step(params, &grads, alpha)?;
    }
    let (output, _) = forward(params, x, false)?;
    let (final_objective, _) = theta_objective(f, v, w, beta, &output)?;
    Ok(ThetaOutcome {
        objective_trace: trace,
        final_objective,
        output,
    })
}
