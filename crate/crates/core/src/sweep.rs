//! One-at-a-time parameter sweep.
//!
//! Each grid point varies a single parameter away from the base
//! configuration. Runs that differ only in `T` share their first iterations,
//! so every distinct `(lambda, beta, alpha)` combination is run once to the
//! largest `T` it needs and the shorter results are read off its history.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::admm::{run_with, Reference, RunConfig};
use crate::error::{Error, Result};
use crate::image::{Crop, ImageTensor};
use crate::metrics::Psnr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    Lambda,
    Beta,
    Iterations,
    Alpha,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Lambda => "lambda",
            Parameter::Beta => "beta",
            Parameter::Iterations => "T",
            Parameter::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub base: RunConfig,
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    pub iterations: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl SweepGrid {
    /// The standard grid around `base`.
    pub fn standard(base: RunConfig) -> Self {
        Self {
            base,
            lambdas: vec![0.025, 0.05, 0.075],
            betas: vec![1.5, 1.75, 2.0, 2.25],
            iterations: vec![100, 200, 300],
            alphas: vec![1e-3, 1e-4, 1e-5],
        }
    }

    /// Grid points in table order.
    pub fn points(&self) -> Vec<(Parameter, RunConfig)> {
        let b = &self.base;
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            out.push((
                Parameter::Lambda,
                RunConfig {
                    lambda,
                    ..b.clone()
                },
            ));
        }
        for &beta in &self.betas {
            out.push((Parameter::Beta, RunConfig { beta, ..b.clone() }));
        }
        for &outer_iterations in &self.iterations {
            out.push((
                Parameter::Iterations,
                RunConfig {
                    outer_iterations,
                    ..b.clone()
                },
            ));
        }
        for &alpha in &self.alphas {
            out.push((Parameter::Alpha, RunConfig { alpha, ..b.clone() }));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: Parameter,
    pub config: RunConfig,
    pub psnr: Psnr,
    pub ssim: Option<f64>,
}

fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    RunConfig {
        outer_iterations: 0,
        ..a.clone()
    } == RunConfig {
        outer_iterations: 0,
        ..b.clone()
    }
}

/// Runs the grid on `f` (already aligned for the network) and scores each
/// point against `reference`, which covers the `crop` window of `f`.
pub fn run_sweep(
    f: &ImageTensor,
    reference: &ImageTensor,
    crop: Option<Crop>,
    grid: &SweepGrid,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    let points = grid.points();
    let mut jobs: Vec<RunConfig> = Vec::new();
    for (_, cfg) in &points {
        match jobs.iter_mut().find(|j| same_run(j, cfg)) {
            Some(j) => j.outer_iterations = j.outer_iterations.max(cfg.outer_iterations),
            None => jobs.push(cfg.clone()),
        }
    }
    let run_one = |cfg: &RunConfig| {
        let r = Reference {
            image: reference,
            crop,
        };
        run_with(f, cfg, Some(r), |_| {}).map(|o| o.history)
    };
    let histories: Vec<_> = if parallel {
        jobs.par_iter().map(run_one).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run_one).collect::<Result<_>>()?
    };
    points
        .into_iter()
        .map(|(parameter, config)| {
            let job = jobs
                .iter()
                .position(|j| same_run(j, &config))
                .expect("every point has a job");
            let t = config.outer_iterations;
            let row = t
                .checked_sub(1)
                .and_then(|i| histories[job].get(i))
                .ok_or_else(|| Error::InvalidArgument("sweep points need T >= 1".into()))?;
            Ok(SweepRow {
                parameter,
                psnr: row.psnr.expect("reference given"),
                ssim: row.ssim,
                config,
            })
        })
        .collect()
}

/// Comma-separated table with one line per grid point.
pub fn format_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("parameter,lambda,beta,T,alpha,psnr,ssim\n");
    for r in rows {
        let c = &r.config;
        let ssim = r.ssim.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.parameter.name(),
            c.lambda,
            c.beta,
            c.outer_iterations,
            c.alpha,
            r.psnr,
            ssim
        );
    }
    s
}
