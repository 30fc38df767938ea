//! PSNR and SSIM for images normalized to `[0, 1]`.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{squared_distance, ImageTensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in decibels, with identical images reported as
/// [`Psnr::Infinite`] rather than an overflowing float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    /// Decibels, with `f64::INFINITY` for identical images.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Psnr::Finite(_))
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

/// `10 log10(1 / MSE)`, MSE averaged over all samples.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<Psnr> {
    let sse = squared_distance(a, b)?;
    if sse == 0.0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sse / a.len() as f64;
    Ok(Psnr::Finite(-10.0 * mse.log10()))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sum over every full window position ("valid" mode).
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, h, w, g);
    let mu_b = filter_valid(b, h, w, g);
    let e_aa = filter_valid(&aa, h, w, g);
    let e_bb = filter_valid(&bb, h, w, g);
    let e_ab = filter_valid(&ab, h, w, g);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    total / n as f64
}

/// Per-channel SSIM values (mean over 11x11 Gaussian windows, sigma 1.5,
/// `L = 1`).
pub fn ssim_per_channel(a: &ImageTensor, b: &ImageTensor) -> Result<Vec<f64>> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w, c) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    Ok((0..c)
        .map(|ch| ssim_plane(a.plane(ch), b.plane(ch), h, w, &g))
        .collect())
}

/// Mean of [`ssim_per_channel`].
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    let per = ssim_per_channel(a, b)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr: Psnr,
    pub ssim: f64,
    pub per_channel_ssim: Vec<f64>,
}

pub fn compare(a: &ImageTensor, b: &ImageTensor) -> Result<MetricReport> {
    let per = ssim_per_channel(a, b)?;
    Ok(MetricReport {
        psnr: psnr(a, b)?,
        ssim: per.iter().sum::<f64>() / per.len() as f64,
        per_channel_ssim: per,
    })
}
