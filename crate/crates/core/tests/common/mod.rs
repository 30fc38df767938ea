#![allow(dead_code)]

use dipl0::ImageTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    c: usize,
    lo: f64,
    hi: f64,
) -> ImageTensor {
    ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen_range(lo..hi))
}

/// Exact minimum of `sum ||v_i - y_i||^2 + lambda * #{i : v_i != v_{i+1}}`
/// over all piecewise-constant `v`, for a short multichannel signal
/// `y[i][c]`. Enumerates every set of cut positions; each segment takes its
/// mean.
pub fn brute_force_segmentation(y: &[Vec<f64>], lambda: f64) -> f64 {
    let n = y.len();
    assert!((1..=16).contains(&n));
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let mut cost = lambda * mask.count_ones() as f64;
        let mut start = 0;
        for end in 1..=n {
            let cut = end == n || mask & (1 << (end - 1)) != 0;
            if cut {
                cost += segment_error(&y[start..end]);
                start = end;
            }
        }
        best = best.min(cost);
    }
    best
}

fn segment_error(seg: &[Vec<f64>]) -> f64 {
    let c = seg[0].len();
    let len = seg.len() as f64;
    (0..c)
        .map(|ch| {
            let mean = seg.iter().map(|p| p[ch]).sum::<f64>() / len;
            seg.iter().map(|p| (p[ch] - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-5;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn dot(a: &ImageTensor, b: &ImageTensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Rebuilds an image of `like`'s shape from raw values.
pub fn reshape(like: &ImageTensor, data: &[f64]) -> ImageTensor {
    let (h, w, c) = like.shape();
    ImageTensor::new(h, w, c, data.to_vec()).unwrap()
}
