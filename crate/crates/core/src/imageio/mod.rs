//! Image ingestion and output: 8/16-bit LDR frames (binary PPM, uncompressed
//! TIFF strips, PNG), Radiance RGBE for HDR radiance, exposure metadata, and
//! tone-mapped previews.
//!
//! All pixel buffers are interleaved RGB in row-major order (`H x W x 3`).

mod ldr;
pub mod ppm;
mod preview;
pub mod rgbe;
mod scene;
mod tiff;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use ldr::{decode_ldr, read_ldr};
pub use preview::{preview_codes, write_preview};
pub use rgbe::{read_hdr_rgbe, write_hdr_rgbe};
pub use scene::{load_dataset, load_sample, load_sample_with, read_exposures, SceneLayout};

/// Decoder-level failure, independent of where the bytes came from.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("unsupported {0}")]
    Unsupported(String),
    #[error("truncated data at byte {0}")]
    Truncated(usize),
    #[error("malformed {what} at byte {offset}")]
    Malformed { offset: usize, what: String },
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("{path}: missing required file")]
    Missing { path: PathBuf },
    #[error("{path}: {found_w}x{found_h} does not match the {expected_w}x{expected_h} reference exposure")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
}

impl ImageError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Self::Missing { path: path.to_owned() };
        }
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, source: FormatError) -> Self {
        Self::Format {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn invalid(path: &Path, detail: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.to_owned(),
            detail: detail.into(),
        }
    }
}

/// Display-referred exposure with values normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdrImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<f32>,
}

impl LdrImage {
    /// Normalizes integer codes as `v / (2^bit_depth - 1)`.
    pub fn from_codes(width: usize, height: usize, bit_depth: u8, codes: &[u16]) -> Result<Self, FormatError> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(FormatError::Unsupported(format!("bit depth {bit_depth}")));
        }
        if width == 0 || height == 0 {
            return Err(FormatError::Unsupported("empty image".into()));
        }
        if codes.len() != width * height * 3 {
            return Err(FormatError::Truncated(codes.len()));
        }
        let max = ((1u32 << bit_depth) - 1) as f64;
        if codes.iter().any(|&c| c as f64 > max) {
            return Err(FormatError::Malformed {
                offset: 0,
                what: format!("sample above {max}"),
            });
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pixels: codes.iter().map(|&c| (c as f64 / max) as f32).collect(),
        })
    }

    /// Wraps normalized values; every value must lie in `[0, 1]`.
    pub fn from_normalized(width: usize, height: usize, bit_depth: u8, pixels: Vec<f32>) -> Option<Self> {
        let ok = width > 0
            && height > 0
            && pixels.len() == width * height * 3
            && pixels.iter().all(|v| (0.0..=1.0).contains(v));
        ok.then_some(Self {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Option<Self> {
        let pixels = crop_rgb(&self.pixels, self.width, self.height, x, y, w, h)?;
        Some(Self {
            width: w,
            height: h,
            bit_depth: self.bit_depth,
            pixels,
        })
    }
}

/// Scene-referred radiance; values are finite and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct HdrImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl HdrImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Option<Self> {
        let ok = width > 0
            && height > 0
            && pixels.len() == width * height * 3
            && pixels.iter().all(|v| v.is_finite() && *v >= 0.0);
        ok.then_some(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Option<Self> {
        Self::new(width, height, vec![value; width * height * 3])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Option<Self> {
        let pixels = crop_rgb(&self.pixels, self.width, self.height, x, y, w, h)?;
        Some(Self {
            width: w,
            height: h,
            pixels,
        })
    }
}

fn crop_rgb(pixels: &[f32], width: usize, height: usize, x: usize, y: usize, w: usize, h: usize) -> Option<Vec<f32>> {
    if w == 0 || h == 0 || x + w > width || y + h > height {
        return None;
    }
    let mut out = Vec::with_capacity(w * h * 3);
    for row in y..y + h {
        let start = (row * width + x) * 3;
        out.extend_from_slice(&pixels[start..start + w * 3]);
    }
    Some(out)
}

/// Three exposures of one scene, short to long, with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureStack {
    ldr: [LdrImage; 3],
    ev: [f64; 3],
    gt: Option<HdrImage>,
    sample_id: String,
}

impl ExposureStack {
    /// Validates shared dimensions and strictly increasing exposure values.
    pub fn new(
        ldr: [LdrImage; 3],
        ev: [f64; 3],
        gt: Option<HdrImage>,
        sample_id: impl Into<String>,
    ) -> Result<Self, String> {
        let (w, h) = (ldr[0].width, ldr[0].height);
        if let Some(i) = ldr.iter().position(|l| (l.width, l.height) != (w, h)) {
            return Err(format!(
                "exposure {} is {}x{}, expected {w}x{h}",
                i + 1,
                ldr[i].width,
                ldr[i].height
            ));
        }
        if !ev.iter().all(|e| e.is_finite()) || !(ev[0] < ev[1] && ev[1] < ev[2]) {
            return Err(format!("exposure values {ev:?} must be finite and strictly increasing"));
        }
        if let Some(gt) = &gt {
            if (gt.width, gt.height) != (w, h) {
                return Err(format!("ground truth is {}x{}, expected {w}x{h}", gt.width, gt.height));
            }
        }
        Ok(Self {
            ldr,
            ev,
            gt,
            sample_id: sample_id.into(),
        })
    }

    pub fn ldr(&self) -> &[LdrImage; 3] {
        &self.ldr
    }

    pub fn ev(&self) -> [f64; 3] {
        self.ev
    }

    /// Exposure times `t_i = 2^ev_i`.
    pub fn exposure_times(&self) -> [f64; 3] {
        self.ev.map(f64::exp2)
    }

    pub fn gt(&self) -> Option<&HdrImage> {
        self.gt.as_ref()
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn width(&self) -> usize {
        self.ldr[0].width
    }

    pub fn height(&self) -> usize {
        self.ldr[0].height
    }

    pub fn without_gt(&self) -> Self {
        Self {
            gt: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_endpoints() {
        let img = LdrImage::from_codes(1, 1, 8, &[0, 255, 128]).unwrap();
        assert_eq!(img.pixels()[0], 0.0);
        assert_eq!(img.pixels()[1], 1.0);
        let img = LdrImage::from_codes(1, 1, 16, &[32768, 65535, 0]).unwrap();
        assert!((img.pixels()[0] as f64 - 0.500_008).abs() < 1e-6);
        assert!(LdrImage::from_codes(1, 1, 8, &[256, 0, 0]).is_err());
        assert!(LdrImage::from_codes(1, 1, 12, &[0, 0, 0]).is_err());
    }

    #[test]
    fn stack_validation() {
        let img = |w, h| LdrImage::from_normalized(w, h, 8, vec![0.5; w * h * 3]).unwrap();
        let ok = ExposureStack::new([img(2, 2), img(2, 2), img(2, 2)], [-2.0, 0.0, 2.0], None, "s");
        assert_eq!(ok.unwrap().exposure_times(), [0.25, 1.0, 4.0]);
        assert!(ExposureStack::new([img(2, 2), img(3, 2), img(2, 2)], [-2.0, 0.0, 2.0], None, "s").is_err());
        assert!(ExposureStack::new([img(2, 2), img(2, 2), img(2, 2)], [0.0, 0.0, 2.0], None, "s").is_err());
        let gt = HdrImage::filled(3, 3, 0.1);
        assert!(ExposureStack::new([img(2, 2), img(2, 2), img(2, 2)], [-2.0, 0.0, 2.0], gt, "s").is_err());
    }

    #[test]
    fn crop_copies_window() {
        let px: Vec<f32> = (0..4 * 3 * 3).map(|v| v as f32).collect();
        let img = HdrImage::new(4, 3, px).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(&c.pixels()[..3], &[15.0, 16.0, 17.0]);
        assert!(img.crop(3, 0, 2, 1).is_none());
        assert!(HdrImage::new(1, 1, vec![0.0, -1.0, 0.0]).is_none());
    }
}
