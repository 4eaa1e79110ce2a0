use std::path::Path;

use super::{ppm, HdrImage, ImageError};
use crate::train::mu_law;

/// 8-bit codes of the μ-law tone-mapped image, rounded half away from zero.
///
/// ```
/// use hdrfeat::imageio::{preview_codes, HdrImage};
/// let img = HdrImage::filled(1, 1, 0.5).unwrap();
/// assert_eq!(preview_codes(&img, 5000.0), vec![234, 234, 234]);
/// ```
pub fn preview_codes(img: &HdrImage, mu: f64) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|&v| (255.0 * mu_law(v as f64, mu)).round() as u8)
        .collect()
}

/// Writes a tone-mapped binary pixmap preview.
pub fn write_preview(img: &HdrImage, mu: f64, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let codes: Vec<u16> = preview_codes(img, mu).into_iter().map(u16::from).collect();
    let bytes = ppm::encode(img.width(), img.height(), 8, &codes).map_err(|e| ImageError::format(path, e))?;
    std::fs::write(path, bytes).map_err(|e| ImageError::io(path, e))
}
