//! Dense real-valued images and the discrete gradient machinery built on them.
//!
//! Storage is planar: channel-major, then row-major within a channel, so that
//! `data[(c * height + y) * width + x]` is the sample at row `y`, column `x`
//! of channel `c`. The same layout is used by the network feature maps.

use crate::error::{Error, Result};

/// Default threshold above which a pooled difference counts as nonzero.
pub const DEFAULT_L0_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Builds a tensor from planar data. Every value must be finite.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at flat index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Skips validation; used for network feature maps on hot paths.
    pub(crate) fn new_unchecked(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty image");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.height, other.width, other.channels)
    }

    /// Builds a tensor by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(height, width, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let i = out.index(y, x, c);
                    out.data[i] = f(y, x, c);
                }
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Samples of one channel, row-major.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when every sample lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        out
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Copies out a sub-window.
    pub fn crop(&self, crop: Crop) -> Result<Self> {
        if crop.top + crop.height > self.height || crop.left + crop.width > self.width {
            return Err(Error::Shape(format!(
                "crop {crop:?} exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(
            crop.height,
            crop.width,
            self.channels,
            |y, x, c| self.get(y + crop.top, x + crop.left, c),
        ))
    }

    /// Pads bottom and right edges by reflection so both dimensions become
    /// multiples of `multiple`. Returns the padded image and the window that
    /// recovers the original.
    pub fn pad_reflect_to_multiple(&self, multiple: usize) -> (Self, Crop) {
        let multiple = multiple.max(1);
        let h = self.height.div_ceil(multiple) * multiple;
        let w = self.width.div_ceil(multiple) * multiple;
        let padded = Self::from_fn(h, w, self.channels, |y, x, c| {
            self.get(
                reflect_index(y, self.height),
                reflect_index(x, self.width),
                c,
            )
        });
        let crop = Crop {
            top: 0,
            left: 0,
            height: self.height,
            width: self.width,
        };
        (padded, crop)
    }
}

/// Window inside a larger image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Mirror an index into `0..n` without repeating the edge sample
/// (`..., 2, 1, 0, 1, 2, ...`). Works for arbitrarily distant indices.
#[inline]
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Same as [`reflect_index`] for signed offsets such as `-1`.
#[inline]
pub fn reflect_signed(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period) as usize;
    reflect_index(r, n)
}

/// Forward differences of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    /// `u[y, x+1] - u[y, x]`, zero in the last column.
    pub dx: ImageTensor,
    /// `u[y+1, x] - u[y, x]`, zero in the last row.
    pub dy: ImageTensor,
}

pub fn gradient(u: &ImageTensor) -> GradientField {
    let (h, w, ch) = u.shape();
    let dx = ImageTensor::from_fn(h, w, ch, |y, x, c| {
        if x + 1 < w {
            u.get(y, x + 1, c) - u.get(y, x, c)
        } else {
            0.0
        }
    });
    let dy = ImageTensor::from_fn(h, w, ch, |y, x, c| {
        if y + 1 < h {
            u.get(y + 1, x, c) - u.get(y, x, c)
        } else {
            0.0
        }
    });
    GradientField { dx, dy }
}

/// Number of pixels whose pooled gradient magnitude
/// `sum_c |dx| + sum_c |dy|` exceeds `epsilon`.
pub fn l0_gradient_count(u: &ImageTensor, epsilon: f64) -> usize {
    let (h, w, ch) = u.shape();
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            let mut mag = 0.0;
            for c in 0..ch {
                let here = u.get(y, x, c);
                if x + 1 < w {
                    mag += (u.get(y, x + 1, c) - here).abs();
                }
                if y + 1 < h {
                    mag += (u.get(y + 1, x, c) - here).abs();
                }
            }
            if mag > epsilon {
                count += 1;
            }
        }
    }
    count
}

/// Number of 4-adjacent pixel pairs whose channel-pooled absolute difference
/// exceeds `epsilon`. This is the penalty region fusion actually minimizes:
/// each such pair is one unit of connection weight between two regions.
pub fn boundary_count(u: &ImageTensor, epsilon: f64) -> usize {
    let (h, w, ch) = u.shape();
    let pooled = |y0: usize, x0: usize, y1: usize, x1: usize| -> f64 {
        (0..ch)
            .map(|c| (u.get(y1, x1, c) - u.get(y0, x0, c)).abs())
            .sum()
    };
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && pooled(y, x, y, x + 1) > epsilon {
                count += 1;
            }
            if y + 1 < h && pooled(y, x, y + 1, x) > epsilon {
                count += 1;
            }
        }
    }
    count
}

/// Unnormalized `||a - b||_2^2` over all samples.
pub fn squared_distance(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b, "squared_distance")?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// `||f - u||^2 + lambda * l0_gradient_count(u, epsilon)`.
pub fn eval_loss(f: &ImageTensor, u: &ImageTensor, lambda: f64, epsilon: f64) -> Result<f64> {
    let fidelity = squared_distance(f, u)?;
    Ok(fidelity + lambda * l0_gradient_count(u, epsilon) as f64)
}

/// Elementwise `a * u + b * v`, unclamped.
pub fn axpy_combine(a: f64, u: &ImageTensor, b: f64, v: &ImageTensor) -> Result<ImageTensor> {
    u.ensure_same_shape(v, "axpy_combine")?;
    let mut out = u.clone();
    out.data
        .iter_mut()
        .zip(&v.data)
        .for_each(|(o, vv)| *o = a * *o + b * vv);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(values: &[f64]) -> ImageTensor {
        ImageTensor::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        assert!(ImageTensor::new(0, 2, 1, vec![]).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient(&ImageTensor::filled(3, 4, 3, 0.7));
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
        assert!(g.dy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_step_row() {
        let g = gradient(&row(&[0.0, 0.0, 1.0, 1.0]));
        assert_eq!(g.dx.data(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.dy.data(), &[0.0; 4]);
    }

    #[test]
    fn gradient_two_by_two() {
        // [[0, 1], [0, 1]]: each row steps once along x, columns are constant.
        let u = ImageTensor::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let g = gradient(&u);
        assert_eq!(g.dx.data(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(g.dy.data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn l0_count_examples() {
        assert_eq!(
            l0_gradient_count(&ImageTensor::filled(5, 5, 1, 0.3), 1e-12),
            0
        );
        assert_eq!(l0_gradient_count(&row(&[0.0, 0.0, 1.0, 1.0]), 1e-12), 1);
        let u = ImageTensor::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(l0_gradient_count(&u, 1e-12), 2);
    }

    #[test]
    fn l0_count_pools_channels() {
        // A step present in only one of three channels still marks the pixel.
        let u = ImageTensor::from_fn(1, 3, 3, |_, x, c| if c == 2 && x == 2 { 1.0 } else { 0.0 });
        assert_eq!(l0_gradient_count(&u, 1e-12), 1);
        assert_eq!(boundary_count(&u, 1e-12), 1);
    }

    #[test]
    fn boundary_count_counts_pairs_not_pixels() {
        // Single bright pixel in a corner: one pixel has both differences
        // nonzero, but two pairs straddle the boundary.
        let mut u = ImageTensor::zeros(2, 2, 1);
        u.set(0, 0, 0, 1.0);
        assert_eq!(l0_gradient_count(&u, 1e-12), 1);
        assert_eq!(boundary_count(&u, 1e-12), 2);
    }

    #[test]
    fn eval_loss_examples() {
        let f = ImageTensor::filled(3, 3, 1, 0.4);
        assert_eq!(eval_loss(&f, &f, 5.0, 1e-12).unwrap(), 0.0);

        let f = row(&[0.0, 0.0, 1.0, 1.0]);
        let u = row(&[0.5; 4]);
        assert!((eval_loss(&f, &u, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(eval_loss(&f, &f, 2.0, 1e-12).unwrap(), 2.0);
    }

    #[test]
    fn eval_loss_shape_mismatch() {
        let a = ImageTensor::zeros(2, 2, 1);
        let b = ImageTensor::zeros(2, 2, 3);
        assert!(matches!(
            eval_loss(&a, &b, 1.0, 1e-12),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn axpy_examples() {
        let ones = ImageTensor::filled(2, 3, 1, 1.0);
        let zeros = ImageTensor::zeros(2, 3, 1);
        assert_eq!(axpy_combine(1.0, &ones, 0.0, &zeros).unwrap(), ones);
        let r = axpy_combine(0.9, &ones, 0.1, &zeros).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.9));
        let r = axpy_combine(1.0, &zeros, 2.0, &ImageTensor::filled(2, 3, 1, 0.1)).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.2));
        assert!(axpy_combine(1.0, &ones, 1.0, &ImageTensor::zeros(3, 2, 1)).is_err());
    }

    #[test]
    fn reflect_padding_and_crop() {
        let u = ImageTensor::from_fn(5, 3, 1, |y, x, _| (y * 10 + x) as f64 / 100.0);
        let (p, crop) = u.pad_reflect_to_multiple(4);
        assert_eq!(p.shape(), (8, 4, 1));
        // Column 3 mirrors column 1, row 5 mirrors row 3.
        assert_eq!(p.get(0, 3, 0), u.get(0, 1, 0));
        assert_eq!(p.get(5, 0, 0), u.get(3, 0, 0));
        assert_eq!(p.crop(crop).unwrap(), u);
    }

    #[test]
    fn reflect_index_wraps() {
        let seq: Vec<usize> = (0..9).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(seq, vec![0, 1, 2, 1, 0, 1, 2, 1, 0]);
        assert_eq!(reflect_signed(-1, 4), 1);
        assert_eq!(reflect_signed(-2, 4), 2);
        assert_eq!(reflect_signed(4, 4), 2);
        assert_eq!(reflect_index(7, 1), 0);
    }

    fn small_image() -> impl Strategy<Value = ImageTensor> {
        (
            1usize..6,
            1usize..6,
            prop_oneof![Just(1usize), Just(3usize)],
        )
            .prop_flat_map(|(h, w, c)| {
                prop::collection::vec(0.0f64..1.0, h * w * c)
                    .prop_map(move |d| ImageTensor::new(h, w, c, d).unwrap())
            })
    }

    proptest! {
        #[test]
        fn count_invariant_under_constant_shift(u in small_image(), shift in -0.5f64..0.5) {
            // Quantize so the shift is exact in binary floating point.
            let q = u.map(|v| (v * 64.0).round() / 64.0);
            let s = (shift * 64.0).round() / 64.0;
            let shifted = q.map(|v| v + s);
            prop_assert_eq!(l0_gradient_count(&q, 1e-12), l0_gradient_count(&shifted, 1e-12));
        }

        #[test]
        fn count_monotone_in_epsilon(u in small_image(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(l0_gradient_count(&u, hi) <= l0_gradient_count(&u, lo));
        }

        #[test]
        fn loss_of_identity_is_penalty_only(u in small_image(), lambda in 0.0f64..3.0) {
            let loss = eval_loss(&u, &u, lambda, 1e-12).unwrap();
            prop_assert_eq!(loss, lambda * l0_gradient_count(&u, 1e-12) as f64);
        }

        #[test]
        fn loss_nonnegative(u in small_image(), lambda in 0.0f64..3.0, seed in 0u64..1000) {
            let f = u.map(|v| ((v * 7.0 + seed as f64) * 0.37).fract());
            prop_assert!(eval_loss(&f, &u, lambda, 1e-12).unwrap() >= 0.0);
        }
    }
}
