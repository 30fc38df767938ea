//! Forward and reverse kernels for the layer types used by the network.
//! Feature maps are [`ImageTensor`]s (planar, channel-major).

use crate::image::{reflect_signed, ImageTensor};

/// Variance floor of the per-channel standardization.
pub const NORM_EPS: f64 = 1e-5;

pub(crate) fn raw(h: usize, w: usize, c: usize, data: Vec<f64>) -> ImageTensor {
    debug_assert_eq!(data.len(), h * w * c);
    ImageTensor::new_unchecked(h, w, c, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        (
            (h + 2 * pad - self.kernel) / self.stride + 1,
            (w + 2 * pad - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// 1x1 stride-1 convolutions use the input itself as the patch matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }
}

/// Cached patch matrix of a convolution, `patch_len x out_pixels`.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub geometry: ConvGeometry,
    pub in_shape: (usize, usize),
    cols: Option<Vec<f64>>,
}

/// Source pixel of each kernel tap along one axis under reflection padding.
fn tap_index(out_len: usize, in_len: usize, kernel: usize, stride: usize) -> Vec<usize> {
    let pad = (kernel / 2) as isize;
    let mut map = Vec::with_capacity(kernel * out_len);
    for k in 0..kernel {
        for o in 0..out_len {
            let i = (o * stride) as isize + k as isize - pad;
            map.push(reflect_signed(i, in_len));
        }
    }
    map
}

fn im2col(input: &ImageTensor, g: &ConvGeometry, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w, _) = input.shape();
    let k = g.kernel;
    let rows = tap_index(oh, h, k, g.stride);
    let cols_map = tap_index(ow, w, k, g.stride);
    let p = oh * ow;
    let mut cols = vec![0.0; g.patch_len() * p];
    for ci in 0..g.in_channels {
        let plane = input.plane(ci);
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                let xm = &cols_map[kx * ow..(kx + 1) * ow];
                for oy in 0..oh {
                    let src = &plane[rows[ky * oh + oy] * w..][..w];
                    let d = &mut dst[oy * ow..(oy + 1) * ow];
                    for (dv, &ix) in d.iter_mut().zip(xm) {
                        *dv = src[ix];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    grad_cols: &[f64],
    g: &ConvGeometry,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let k = g.kernel;
    let rows = tap_index(oh, h, k, g.stride);
    let cols_map = tap_index(ow, w, k, g.stride);
    let p = oh * ow;
    let mut out = vec![0.0; g.in_channels * h * w];
    for ci in 0..g.in_channels {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let src = &grad_cols[r * p..(r + 1) * p];
                let xm = &cols_map[kx * ow..(kx + 1) * ow];
                for oy in 0..oh {
                    let row = &mut plane[rows[ky * oh + oy] * w..][..w];
                    for (&gv, &ix) in src[oy * ow..(oy + 1) * ow].iter().zip(xm) {
                        row[ix] += gv;
                    }
                }
            }
        }
    }
    out
}

/// `c = a * b` for row-major `a: m x k`, `b: k x n`, accumulating into `c`
/// when `accumulate` is set. The `*_t` flags read the operand transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover the m*k, k*n and m*n element ranges addressed
    // by these strides, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Reflection-padded convolution, `weight` laid out `[out, in, ky, kx]`.
pub fn conv_forward(
    input: &ImageTensor,
    g: ConvGeometry,
    weight: &[f64],
    bias: Option<&[f64]>,
    record: bool,
) -> (ImageTensor, Option<ConvCache>) {
    let (h, w, c) = input.shape();
    debug_assert_eq!(c, g.in_channels);
    let (oh, ow) = g.out_size(h, w);
    let p = oh * ow;
    let cols = if g.is_pointwise() {
        None
    } else {
        Some(im2col(input, &g, oh, ow))
    };
    let mut out = vec![0.0; g.out_channels * p];
    if let Some(b) = bias {
        for (o, &bv) in b.iter().enumerate() {
            out[o * p..(o + 1) * p].fill(bv);
        }
    }
    let patches = cols.as_deref().unwrap_or(input.data());
    gemm(
        g.out_channels,
        g.patch_len(),
        p,
        weight,
        false,
        patches,
        false,
        &mut out,
        bias.is_some(),
    );
    let cache = record.then_some(ConvCache {
        geometry: g,
        in_shape: (h, w),
        cols,
    });
    (raw(oh, ow, g.out_channels, out), cache)
}

pub struct ConvGrads {
    pub input: ImageTensor,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// `input` is only needed for pointwise convolutions, whose patch matrix is
/// the input itself.
pub fn conv_backward(
    cache: &ConvCache,
    input: Option<&ImageTensor>,
    weight: &[f64],
    has_bias: bool,
    grad_out: &ImageTensor,
) -> ConvGrads {
    let g = cache.geometry;
    let (h, w) = cache.in_shape;
    let (oh, ow, _) = grad_out.shape();
    let p = oh * ow;
    let patches = match &cache.cols {
        Some(c) => c.as_slice(),
        None => input
            .expect("pointwise conv backward needs its input")
            .data(),
    };
    let kk = g.patch_len();
    let mut grad_w = vec![0.0; g.out_channels * kk];
    gemm(
        g.out_channels,
        p,
        kk,
        grad_out.data(),
        false,
        patches,
        true,
        &mut grad_w,
        false,
    );

    let mut grad_cols = vec![0.0; kk * p];
    gemm(
        kk,
        g.out_channels,
        p,
        weight,
        true,
        grad_out.data(),
        false,
        &mut grad_cols,
        false,
    );
    let grad_in = if g.is_pointwise() {
        grad_cols
    } else {
        col2im(&grad_cols, &g, h, w, oh, ow)
    };
    let bias = has_bias.then(|| {
        (0..g.out_channels)
            .map(|o| grad_out.plane(o).iter().sum())
            .collect()
    });
    ConvGrads {
        input: raw(h, w, g.in_channels, grad_in),
        weight: grad_w,
        bias,
    }
}

#[derive(Debug, Clone)]
pub struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Per-channel spatial standardization followed by a learned affine map.
pub fn norm_forward(
    input: &ImageTensor,
    scale: &[f64],
    shift: &[f64],
    record: bool,
) -> (ImageTensor, Option<NormCache>) {
    let (h, w, c) = input.shape();
    let n = h * w;
    let mut xhat = vec![0.0; c * n];
    let mut inv_std = vec![0.0; c];
    let mut out = vec![0.0; c * n];
    for ch in 0..c {
        let x = input.plane(ch);
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[ch] = is;
        let xh = &mut xhat[ch * n..(ch + 1) * n];
        let o = &mut out[ch * n..(ch + 1) * n];
        for i in 0..n {
            xh[i] = (x[i] - mean) * is;
            o[i] = scale[ch] * xh[i] + shift[ch];
        }
    }
    let cache = record.then_some(NormCache { xhat, inv_std });
    (raw(h, w, c, out), cache)
}

pub struct NormGrads {
    pub input: ImageTensor,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

pub fn norm_backward(cache: &NormCache, scale: &[f64], grad_out: &ImageTensor) -> NormGrads {
    let (h, w, c) = grad_out.shape();
    let n = h * w;
    let nf = n as f64;
    let mut grad_in = vec![0.0; c * n];
    let mut d_scale = vec![0.0; c];
    let mut d_shift = vec![0.0; c];
    for ch in 0..c {
        let dy = grad_out.plane(ch);
        let xh = &cache.xhat[ch * n..(ch + 1) * n];
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
        d_scale[ch] = sum_dy_xh;
        d_shift[ch] = sum_dy;
        let k = scale[ch] * cache.inv_std[ch] / nf;
        let gi = &mut grad_in[ch * n..(ch + 1) * n];
        for i in 0..n {
            gi[i] = k * (nf * dy[i] - sum_dy - xh[i] * sum_dy_xh);
        }
    }
    NormGrads {
        input: raw(h, w, c, grad_in),
        scale: d_scale,
        shift: d_shift,
    }
}

pub fn leaky_relu_forward(input: &ImageTensor, slope: f64) -> ImageTensor {
    input.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Uses the activation's output; the sign is preserved for positive slopes.
pub fn leaky_relu_backward(
    output: &ImageTensor,
    slope: f64,
    grad_out: &ImageTensor,
) -> ImageTensor {
    let (h, w, c) = output.shape();
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { slope * g })
        .collect();
    raw(h, w, c, data)
}

pub fn sigmoid_forward(input: &ImageTensor) -> ImageTensor {
    input.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn sigmoid_backward(output: &ImageTensor, grad_out: &ImageTensor) -> ImageTensor {
    let (h, w, c) = output.shape();
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    raw(h, w, c, data)
}

/// Lower tap index and weight of the upper tap for 2x bilinear resampling
/// with half-pixel centres.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample2x_forward(input: &ImageTensor) -> ImageTensor {
    let (h, w, c) = input.shape();
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = input.plane(ch);
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    raw(oh, ow, c, out)
}

pub fn upsample2x_backward(grad_out: &ImageTensor) -> ImageTensor {
    let (oh, ow, c) = grad_out.shape();
    let (h, w) = (oh / 2, ow / 2);
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let g = grad_out.plane(ch);
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[oy * ow + ox];
                dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                dst[y1 * w + x0] += v * fy * (1.0 - fx);
                dst[y1 * w + x1] += v * fy * fx;
            }
        }
    }
    raw(h, w, c, out)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &ImageTensor, b: &ImageTensor) -> ImageTensor {
    debug_assert_eq!((a.height(), a.width()), (b.height(), b.width()));
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    raw(a.height(), a.width(), a.channels() + b.channels(), data)
}

/// Inverse of [`concat_channels`]: the first `first` channels, then the rest.
pub fn split_channels(t: &ImageTensor, first: usize) -> (ImageTensor, ImageTensor) {
    let (h, w, c) = t.shape();
    let cut = first * h * w;
    (
        raw(h, w, first, t.data()[..cut].to_vec()),
        raw(h, w, c - first, t.data()[cut..].to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = ImageTensor::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f64);
        let mut weight = vec![0.0; 9];
        weight[4] = 1.0;
        let g = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
        };
        let (out, _) = conv_forward(&x, g, &weight, None, false);
        assert_eq!(out, x);
    }

    #[test]
    fn box_kernel_hand_computed() {
        // Input 0..9 on a 3x3 grid; a 3x3 box sum with reflection padding.
        // Centre: 0+1+...+8 = 36.
        // Top-left (0,0): reflected neighbourhood rows [1,0,1], cols [1,0,1]
        //   = [[4,3,4],[1,0,1],[4,3,4]] -> 24.
        // Top-middle (0,1): rows [1,0,1], cols [0,1,2]
        //   = [[3,4,5],[0,1,2],[3,4,5]] -> 27.
        let x = ImageTensor::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f64);
        let g = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
        };
        let (out, _) = conv_forward(&x, g, &[1.0; 9], Some(&[0.5]), false);
        assert_eq!(out.get(1, 1, 0), 36.5);
        assert_eq!(out.get(0, 0, 0), 24.5);
        assert_eq!(out.get(0, 1, 0), 27.5);
    }

    #[test]
    fn stride_two_halves_size() {
        let g = ConvGeometry {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
        };
        assert_eq!(g.out_size(8, 6), (4, 3));
        let x = ImageTensor::filled(8, 6, 2, 1.0);
        let (out, _) = conv_forward(&x, g, &vec![0.5; 3 * 2 * 9], None, false);
        assert_eq!(out.shape(), (4, 3, 3));
        assert!(out.data().iter().all(|&v| (v - 9.0).abs() < 1e-12));
    }

    #[test]
    fn upsample_constant_and_edges() {
        let x = ImageTensor::from_fn(2, 2, 1, |y, x, _| (2 * y + x) as f64);
        let up = upsample2x_forward(&x);
        assert_eq!(up.shape(), (4, 4, 1));
        // Corners clamp to the source corners; interior taps blend 3:1.
        assert_eq!(up.get(0, 0, 0), 0.0);
        assert_eq!(up.get(3, 3, 0), 3.0);
        assert_eq!(up.get(0, 1, 0), 0.25);
        let c = upsample2x_forward(&ImageTensor::filled(3, 2, 2, 0.7));
        assert!(c.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn norm_standardizes() {
        let x = ImageTensor::from_fn(4, 4, 2, |y, x, c| (y * 4 + x) as f64 * (c + 1) as f64);
        let (out, _) = norm_forward(&x, &[1.0, 2.0], &[0.0, 0.5], false);
        for c in 0..2 {
            let p = out.plane(c);
            let mean = p.iter().sum::<f64>() / 16.0;
            assert!((mean - [0.0, 0.5][c]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_inverts_concat() {
        let a = ImageTensor::filled(2, 3, 2, 1.0);
        let b = ImageTensor::filled(2, 3, 1, 2.0);
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.channels(), 3);
        let (a2, b2) = split_channels(&cat, 2);
        assert_eq!((a2, b2), (a, b));
    }
}
