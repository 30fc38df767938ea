//! ADMM driver for the l0-regularized network fit.
//!
//! With the split `v = g(x)` and multiplier `w`, each outer iteration runs
//!
//! 1. `K` Adam steps on `||f - g(x)||^2 + (beta/2) ||v - g(x) + w/beta||^2`,
//! 2. `v <- prox(g(x) - w/beta)` for the penalty `2 lambda / beta`, by region
//!    fusion,
//! 3. `w <- w + beta (v - g(x))`,
//! 4. `u <- gamma g(x) + (1 - gamma) u`,
//!
//! starting from `u = f`, random uniform `v` and `w`, and random weights.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{prox_objective, solve_prox_with_stats, FusionConfig};
use crate::image::{
    eval_loss, l0_gradient_count, squared_distance, Crop, ImageTensor, DEFAULT_L0_EPSILON,
};
use crate::metrics::{self, Psnr};
use crate::net::{build_network, make_input, solve_theta_subproblem, NetSpec, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub weights: u64,
    pub input: u64,
    pub v0w0: u64,
}

impl Seeds {
    /// Derives all three seeds from one number.
    pub fn from_master(seed: u64) -> Self {
        Self {
            weights: seed,
            input: seed.wrapping_add(1),
            v0w0: seed.wrapping_add(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Outer iterations `T`.
    pub outer_iterations: usize,
    /// Adam steps per outer iteration `K`.
    pub inner_iterations: usize,
    pub alpha: f64,
    pub seeds: Seeds,
    pub net: NetSpec,
    /// Ramp length of the region fusion solver.
    pub ramp_steps: usize,
    /// Nonzero threshold for l0 counts.
    pub epsilon: f64,
}

impl RunConfig {
    /// Settings tuned for edge-preserving smoothing.
    pub fn smoothing(channels: usize) -> Self {
        Self {
            lambda: 0.025,
            beta: 2.25,
            gamma: 0.9,
            outer_iterations: 100,
            inner_iterations: 25,
            alpha: 1e-3,
            seeds: Seeds::from_master(0),
            net: NetSpec::desk_scale(channels),
            ramp_steps: FusionConfig::DEFAULT_RAMP_STEPS,
            epsilon: DEFAULT_L0_EPSILON,
        }
    }

    /// Settings tuned for JPEG artifact removal.
    pub fn jpeg(channels: usize) -> Self {
        Self {
            beta: 2.0,
            ..Self::smoothing(channels)
        }
    }

    /// Penalty of the proximal subproblem, `2 lambda / beta`.
    pub fn lambda_eff(&self) -> f64 {
        2.0 * self.lambda / self.beta
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            lambda_eff: self.lambda_eff(),
            ramp_steps: self.ramp_steps,
            epsilon: self.epsilon,
            max_extra_passes: FusionConfig::DEFAULT_MAX_EXTRA_PASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.inner_iterations == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be non-negative".into());
        }
        self.net.validate()?;
        self.fusion().validate()
    }
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub t: usize,
    /// Objective of the averaged output `u^t` against `f`.
    pub eq3_loss: f64,
    pub fidelity: f64,
    pub l0_count: usize,
    /// Objective of the raw network output.
    pub net_eq3_loss: f64,
    /// `||v^t - g(x)||_2`.
    pub dual_residual: f64,
    /// Proximal objective of the fusion target and of its solution.
    pub prox_target_objective: f64,
    pub prox_solution_objective: f64,
    pub regions: usize,
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
}

impl HistoryRow {
    /// Whether the fusion step failed to decrease its objective.
    pub fn prox_violation(&self) -> bool {
        self.prox_solution_objective > self.prox_target_objective
    }
}

/// Reference image for quality tracking, with the window of the (possibly
/// padded) working image it corresponds to.
#[derive(Debug, Clone)]
pub struct Reference<'a> {
    pub image: &'a ImageTensor,
    pub crop: Option<Crop>,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub t: usize,
    pub theta: ParamStore,
    pub x: ImageTensor,
    pub v: ImageTensor,
    pub w: ImageTensor,
    pub u: ImageTensor,
    /// Network output after the latest weight update.
    pub output: Option<ImageTensor>,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub theta: Duration,
    pub prox: Duration,
    pub total: Duration,
}

pub fn init_state(f: &ImageTensor, cfg: &RunConfig) -> Result<AdmmState> {
    cfg.validate()?;
    if !f.is_normalized() {
        return Err(Error::InvalidArgument(
            "input image must lie in [0, 1]".into(),
        ));
    }
    let (h, w, c) = f.shape();
    if cfg.net.output_channels != c {
        return Err(Error::Shape(format!(
            "network outputs {} channels, image has {c}",
            cfg.net.output_channels
        )));
    }
    let theta = build_network(&cfg.net, cfg.seeds.weights)?;
    let x = make_input(h, w, cfg.net.input_channels, cfg.seeds.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.v0w0);
    let v = ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen_range(0.0..=1.0));
    let wm = ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen_range(0.0..=1.0));
    Ok(AdmmState {
        t: 0,
        theta,
        x,
        v,
        w: wm,
        u: f.clone(),
        output: None,
        history: Vec::new(),
    })
}

/// `output - w / beta`, unclamped.
pub fn prox_target(output: &ImageTensor, w: &ImageTensor, beta: f64) -> Result<ImageTensor> {
    output.ensure_same_shape(w, "prox_target")?;
    check_beta(beta)?;
    let mut out = output.clone();
    out.data_mut()
        .iter_mut()
        .zip(w.data())
        .for_each(|(o, wi)| *o -= wi / beta);
    Ok(out)
}

/// `w + beta (v - output)`.
pub fn dual_update(
    w: &ImageTensor,
    v: &ImageTensor,
    output: &ImageTensor,
    beta: f64,
) -> Result<ImageTensor> {
    w.ensure_same_shape(v, "dual_update")?;
    w.ensure_same_shape(output, "dual_update")?;
    let mut out = w.clone();
    out.data_mut()
        .iter_mut()
        .zip(v.data().iter().zip(output.data()))
        .for_each(|(wi, (vi, oi))| *wi += beta * (vi - oi));
    Ok(out)
}

/// `gamma output + (1 - gamma) u_prev`.
pub fn average_output(
    u_prev: &ImageTensor,
    output: &ImageTensor,
    gamma: f64,
) -> Result<ImageTensor> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    u_prev.ensure_same_shape(output, "average_output")?;
    let mut out = output.clone();
    out.data_mut()
        .iter_mut()
        .zip(u_prev.data())
        .for_each(|(o, p)| *o = gamma * *o + (1.0 - gamma) * p);
    Ok(out)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )))
    }
}

/// Augmented Lagrangian
/// `||f - g||^2 + lambda l0(v) + <w, v - g> + (beta/2) ||v - g||^2`
/// with the l0 term counted like the fusion solver counts it.
pub fn augmented_lagrangian(
    f: &ImageTensor,
    output: &ImageTensor,
    v: &ImageTensor,
    w: &ImageTensor,
    lambda: f64,
    beta: f64,
    epsilon: f64,
) -> Result<f64> {
    let fidelity = squared_distance(f, output)?;
    let diff = crate::image::axpy_combine(1.0, v, -1.0, output)?;
    let penalty = lambda * crate::image::boundary_count(v, epsilon) as f64;
    Ok(fidelity + penalty + w.dot(&diff)? + 0.5 * beta * diff.squared_norm())
}

fn check_finite(img: &ImageTensor, step: &'static str, iteration: usize) -> Result<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, iteration })
    }
}

impl AdmmState {
    /// Runs one outer iteration.
    pub fn step(
        &mut self,
        f: &ImageTensor,
        cfg: &RunConfig,
        reference: Option<&Reference<'_>>,
        timings: &mut PhaseTimings,
    ) -> Result<&HistoryRow> {
        let iteration = self.t + 1;
        let started = Instant::now();
        let outcome = solve_theta_subproblem(
            &mut self.theta,
            &self.x,
            f,
            &self.v,
            &self.w,
            cfg.beta,
            cfg.alpha,
            cfg.inner_iterations,
        )
        .map_err(|e| match e {
            Error::NonFinite { step, .. } => Error::NonFinite { step, iteration },
            other => other,
        })?;
        let output = outcome.output;
        check_finite(&output, "network output", iteration)?;
        let theta_done = Instant::now();
        timings.theta += theta_done - started;

        let target = prox_target(&output, &self.w, cfg.beta)?;
        check_finite(&target, "prox target", iteration)?;
        let fusion = cfg.fusion();
        let (v, stats) = solve_prox_with_stats(&target, &fusion)?;
        check_finite(&v, "region fusion", iteration)?;
        let prox_done = Instant::now();
        timings.prox += prox_done - theta_done;
        let prox_target_objective =
            prox_objective(&target, &target, fusion.lambda_eff, cfg.epsilon)?;
        let prox_solution_objective = prox_objective(&v, &target, fusion.lambda_eff, cfg.epsilon)?;
        debug_assert!(
            prox_solution_objective <= prox_target_objective,
            "fusion increased its objective at iteration {iteration}"
        );

        self.w = dual_update(&self.w, &v, &output, cfg.beta)?;
        check_finite(&self.w, "dual update", iteration)?;
        self.u = average_output(&self.u, &output, cfg.gamma)?;
        check_finite(&self.u, "output averaging", iteration)?;
        let dual_residual = squared_distance(&v, &output)?.sqrt();
        self.v = v;
        self.t = iteration;

        let fidelity = squared_distance(f, &self.u)?;
        let l0_count = l0_gradient_count(&self.u, cfg.epsilon);
        let (psnr, ssim) = match reference {
            Some(r) => {
                let u = match r.crop {
                    Some(c) => self.u.crop(c)?,
                    None => self.u.clone(),
                };
                let clamped = u.clamped(0.0, 1.0);
                let ssim = metrics::ssim(&clamped, r.image).ok();
                (Some(metrics::psnr(&clamped, r.image)?), ssim)
            }
            None => (None, None),
        };
        let row = HistoryRow {
            t: iteration,
            eq3_loss: fidelity + cfg.lambda * l0_count as f64,
            fidelity,
            l0_count,
            net_eq3_loss: eval_loss(f, &output, cfg.lambda, cfg.epsilon)?,
            dual_residual,
            prox_target_objective,
            prox_solution_objective,
            regions: stats.regions,
            psnr,
            ssim,
        };
        self.output = Some(output);
        self.history.push(row);
        timings.total += Instant::now() - started;
        Ok(self.history.last().expect("just pushed"))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `u^T`, unclamped.
    pub u: ImageTensor,
    pub history: Vec<HistoryRow>,
    pub state: AdmmState,
    pub timings: PhaseTimings,
}

/// Runs all `T` outer iterations from a fresh state.
pub fn run(f: &ImageTensor, cfg: &RunConfig) -> Result<RunOutput> {
    run_with(f, cfg, None, |_| {})
}

/// [`run`] with optional quality tracking and a per-iteration callback.
pub fn run_with(
    f: &ImageTensor,
    cfg: &RunConfig,
    reference: Option<Reference<'_>>,
    mut on_iteration: impl FnMut(&HistoryRow),
) -> Result<RunOutput> {
    let mut state = init_state(f, cfg)?;
    let mut timings = PhaseTimings::default();
    for _ in 0..cfg.outer_iterations {
        let row = state.step(f, cfg, reference.as_ref(), &mut timings)?;
        on_iteration(row);
    }
    Ok(RunOutput {
        u: state.u.clone(),
        history: state.history.clone(),
        state,
        timings,
    })
}
