//! Fidelity metrics in the linear or tone-mapped domain.

use thiserror::Error;

use super::mu_law;
use crate::imageio::HdrImage;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Linear,
    ToneMapped { mu: f64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric operands differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")]
    TooSmall(usize, usize),
}

fn to_domain(img: &HdrImage, domain: Domain) -> Vec<f64> {
    match domain {
        Domain::Linear => img.pixels().iter().map(|&v| v as f64).collect(),
        Domain::ToneMapped { mu } => img.pixels().iter().map(|&v| mu_law(v as f64, mu)).collect(),
    }
}

fn check_shapes(a: &HdrImage, b: &HdrImage) -> Result<(), MetricError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricError::ShapeMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for unit dynamic range, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &HdrImage, b: &HdrImage, domain: Domain) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let (x, y) = (to_domain(a, domain), to_domain(b, domain));
    let mse = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP_DB)
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Single-scale structural similarity averaged over valid window positions
/// and then over the three channels.
pub fn ssim(a: &HdrImage, b: &HdrImage, domain: Domain) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall(w, h));
    }
    let (x, y) = (to_domain(a, domain), to_domain(b, domain));
    let mut total = 0.0;
    for ch in 0..3 {
        let xc: Vec<f64> = x.iter().skip(ch).step_by(3).copied().collect();
        let yc: Vec<f64> = y.iter().skip(ch).step_by(3).copied().collect();
        total += ssim_plane(&xc, &yc, w, h);
    }
    Ok(total / 3.0)
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let taps = gaussian_taps();
    let [mx, my, sxx, syy, sxy] = [x, y, &xx[..], &yy[..], &xy[..]].map(|p| filter_valid(p, w, h, &taps));
    let n = mx.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (ma, mb) = (mx[i], my[i]);
        let va = sxx[i] - ma * ma;
        let vb = syy[i] - mb * mb;
        let cov = sxy[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / n as f64
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let src = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(usize) -> f32) -> HdrImage {
        HdrImage::new(w, h, (0..w * h * 3).map(f).collect()).unwrap()
    }

    #[test]
    fn psnr_closed_form() {
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        let a = image(4, 4, |_| 0.5);
        assert_eq!(psnr(&a, &a, Domain::Linear).unwrap(), PSNR_CAP_DB);
        let b = image(4, 4, |_| 0.6);
        let ab = psnr(&a, &b, Domain::Linear).unwrap();
        assert!((ab - 20.0).abs() < 1e-5, "{ab}");
        assert_eq!(ab, psnr(&b, &a, Domain::Linear).unwrap());
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
        assert!(t[5] > t[4]);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = image(16, 12, |i| ((i * 37) % 101) as f32 / 100.0);
        assert!((ssim(&a, &a, Domain::Linear).unwrap() - 1.0).abs() < 1e-12);
        let inv = image(16, 12, |i| 1.0 - a.pixels()[i]);
        assert!(ssim(&a, &inv, Domain::Linear).unwrap() < 1.0);
        let small = image(10, 12, |_| 0.1);
        assert_eq!(ssim(&small, &small, Domain::Linear), Err(MetricError::TooSmall(10, 12)));
    }
}
