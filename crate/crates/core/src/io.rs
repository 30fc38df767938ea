//! PNG/JPEG ingestion and PNG export.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{Crop, ImageTensor};

/// An image ready for the network: reflect-padded to the required alignment,
/// plus the window holding the original pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub padded: ImageTensor,
    pub crop: Crop,
}

impl PreparedImage {
    pub fn new(image: &ImageTensor, alignment: usize) -> Self {
        let (padded, crop) = image.pad_reflect_to_multiple(alignment);
        Self { padded, crop }
    }

    /// Cuts the original window back out of a padded-size result.
    pub fn restore(&self, result: &ImageTensor) -> Result<ImageTensor> {
        result.crop(self.crop)
    }
}

/// Decodes an 8-bit PNG or JPEG into `[0, 1]`. Gray images give one channel,
/// color images three; alpha is dropped.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    load_image_from_memory(&bytes).map_err(|e| match e {
        Error::Image { msg, .. } => Error::Image {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}

pub fn load_image_from_memory(bytes: &[u8]) -> Result<ImageTensor> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: Default::default(),
        msg: e.to_string(),
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<ImageTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => planar(h, w, 1, buf.as_raw(), 1),
        DynamicImage::ImageLumaA8(buf) => planar(h, w, 1, buf.as_raw(), 2),
        DynamicImage::ImageRgb8(buf) => planar(h, w, 3, buf.as_raw(), 3),
        DynamicImage::ImageRgba8(buf) => planar(h, w, 3, buf.as_raw(), 4),
        other => Err(Error::UnsupportedImage(format!(
            "only 8-bit gray or color images are supported, got {:?}",
            other.color()
        ))),
    }
}

/// Converts interleaved bytes with `stride` samples per pixel, keeping the
/// first `channels`.
fn planar(h: usize, w: usize, channels: usize, raw: &[u8], stride: usize) -> Result<ImageTensor> {
    if h == 0 || w == 0 {
        return Err(Error::UnsupportedImage("empty image".into()));
    }
    let mut data = vec![0.0; h * w * channels];
    for (p, px) in raw.chunks_exact(stride).enumerate() {
        for c in 0..channels {
            data[c * h * w + p] = px[c] as f64 / 255.0;
        }
    }
    ImageTensor::new(h, w, channels, data)
}

/// `v` clamped to `[0, 1]` and rounded half-up to a byte.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Interleaved 8-bit samples of `u`.
pub fn to_bytes(u: &ImageTensor) -> Vec<u8> {
    let (h, w, c) = u.shape();
    let mut out = vec![0u8; h * w * c];
    for ch in 0..c {
        for (p, &v) in u.plane(ch).iter().enumerate() {
            out[p * c + ch] = quantize(v);
        }
    }
    out
}

/// Writes `u` as an 8-bit gray (1 channel) or RGB (3 channels) PNG.
pub fn save_image(u: &ImageTensor, path: &Path) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot save non-finite image".into(),
        ));
    }
    let (h, w, c) = u.shape();
    let bytes = to_bytes(u);
    let (w32, h32) = (w as u32, h as u32);
    let img = match c {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w32, h32, bytes).expect("sized"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w32, h32, bytes).expect("sized"),
        ),
        _ => {
            return Err(Error::UnsupportedImage(format!(
                "PNG export needs 1 or 3 channels, got {c}"
            )))
        }
    };
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.0), 0);
        for b in 0..=255u8 {
            assert_eq!(quantize(b as f64 / 255.0), b);
        }
    }

    #[test]
    fn round_trip_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        let u = ImageTensor::from_fn(5, 7, 3, |y, x, c| {
            ((y * 7 + x) as f64 * 0.029 + c as f64 * 0.1) % 1.0
        });
        let path = dir.path().join("a.png");
        save_image(&u, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.shape(), u.shape());
        for (a, b) in u.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        save_image(&back, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), back);
    }

    #[test]
    fn extreme_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let u = ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let path = dir.path().join("g.png");
        save_image(&u, &path).unwrap();
        assert_eq!(load_image(&path).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn alpha_is_dropped() {
        let buf = ImageBuffer::<image::Rgba<u8>, _>::from_raw(1, 1, vec![255u8, 0, 51, 7]).unwrap();
        let mut bytes = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageRgba8(buf)
            .write_to(&mut bytes, image::ImageFormat::Png)
            .unwrap();
        let img = load_image_from_memory(bytes.get_ref()).unwrap();
        assert_eq!(img.shape(), (1, 1, 3));
        assert_eq!(img.data(), &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let buf = ImageBuffer::<Luma<u16>, _>::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        let mut bytes = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma16(buf)
            .write_to(&mut bytes, image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(
            load_image_from_memory(bytes.get_ref()),
            Err(Error::UnsupportedImage(_))
        ));
    }

    #[test]
    fn garbage_and_missing_files_fail() {
        assert!(load_image_from_memory(b"not an image").is_err());
        assert!(load_image(Path::new("/nonexistent/x.png")).is_err());
    }

    #[test]
    fn padding_for_alignment() {
        let img = ImageTensor::from_fn(100, 100, 1, |y, x, _| ((y + 2 * x) % 9) as f64 / 9.0);
        let prep = PreparedImage::new(&img, 8);
        assert_eq!(prep.padded.shape(), (104, 104, 1));
        assert_eq!(prep.restore(&prep.padded).unwrap(), img);
        let aligned = PreparedImage::new(&prep.padded, 8);
        assert_eq!(aligned.padded, prep.padded);
    }

    #[test]
    fn save_rejects_bad_channel_counts() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_image(&ImageTensor::zeros(2, 2, 2), &dir.path().join("x.png")).is_err());
    }
}
