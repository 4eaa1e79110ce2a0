use crate::imageio::{ExposureStack, HdrImage};
use crate::tensor::{Real, Tensor};

use super::ModelError;

/// Gamma used to linearize LDR exposures.
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Network inputs for a batch of stacks: one `N x 6 x H x W` tensor per
/// exposure, holding `I_i` in channels 0-2 and `H_i = I_i^gamma / t_i` in
/// channels 3-5.
///
/// ```
/// use hdrfeat::imageio::{ExposureStack, LdrImage};
/// use hdrfeat::model::preprocess;
/// let ldr = LdrImage::from_normalized(1, 1, 8, vec![0.5; 3]).unwrap();
/// let stack = ExposureStack::new([ldr.clone(), ldr.clone(), ldr], [-2.0, 0.0, 2.0], None, "s").unwrap();
/// let [_, _, long] = preprocess::<f64>(&[&stack], 2.2).unwrap();
/// assert!((long.data()[3] - 0.5f64.powf(2.2) / 4.0).abs() < 1e-12);
/// ```
pub fn preprocess<T: Real>(stacks: &[&ExposureStack], gamma: f64) -> Result<[Tensor<T>; 3], ModelError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ModelError::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let first = stacks
        .first()
        .ok_or_else(|| ModelError::InvalidConfig("empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    if let Some(s) = stacks.iter().find(|s| (s.width(), s.height()) != (w, h)) {
        return Err(ModelError::InputShape(vec![s.height(), s.width()]));
    }
    let plane = w * h;
    let mut out = Vec::with_capacity(3);
    for i in 0..3 {
        let mut data = vec![T::zero(); stacks.len() * 6 * plane];
        for (n, stack) in stacks.iter().enumerate() {
            let t = stack.exposure_times()[i];
            let px = stack.ldr()[i].pixels();
            let base = n * 6 * plane;
            for (p, rgb) in px.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    let v = rgb[c] as f64;
                    data[base + c * plane + p] = T::lit(v);
                    data[base + (3 + c) * plane + p] = T::lit((v.powf(gamma) / t).max(0.0));
                }
            }
        }
        out.push(Tensor::new(&[stacks.len(), 6, h, w], data)?);
    }
    Ok(out.try_into().expect("three exposures"))
}

/// Packs HDR images into an `N x 3 x H x W` tensor.
pub fn hdr_to_tensor<T: Real>(images: &[&HdrImage]) -> Result<Tensor<T>, ModelError> {
    let first = images
        .first()
        .ok_or_else(|| ModelError::InvalidConfig("empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let plane = w * h;
    let mut data = vec![T::zero(); images.len() * 3 * plane];
    for (n, img) in images.iter().enumerate() {
        if (img.width(), img.height()) != (w, h) {
            return Err(ModelError::InputShape(vec![img.height(), img.width()]));
        }
        for (p, rgb) in img.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[(n * 3 + c) * plane + p] = T::lit(rgb[c] as f64);
            }
        }
    }
    Ok(Tensor::new(&[images.len(), 3, h, w], data)?)
}

/// Unpacks sample `n` of an `N x 3 x H x W` tensor.
pub fn tensor_to_hdr<T: Real>(t: &Tensor<T>, n: usize) -> Result<HdrImage, ModelError> {
    let (batch, c, h, w) = t.dims4("tensor_to_hdr")?;
    if c != 3 || n >= batch {
        return Err(ModelError::InputShape(t.shape().to_vec()));
    }
    let plane = w * h;
    let src = &t.data()[n * 3 * plane..(n + 1) * 3 * plane];
    let mut px = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for ch in 0..3 {
            px.push(src[ch * plane + p].as_f64() as f32);
        }
    }
    HdrImage::new(w, h, px).ok_or_else(|| ModelError::NonFinite("network output".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::LdrImage;

    fn stack(v: f32, ev: [f64; 3]) -> ExposureStack {
        let ldr = LdrImage::from_normalized(2, 1, 8, vec![v; 6]).unwrap();
        ExposureStack::new([ldr.clone(), ldr.clone(), ldr], ev, None, "s").unwrap()
    }

    #[test]
    fn unit_exposure_is_identity() {
        let s = stack(1.0, [-1.0, 0.0, 1.0]);
        let [_, mid, _] = preprocess::<f64>(&[&s], DEFAULT_GAMMA).unwrap();
        assert_eq!(mid.shape(), &[1, 6, 1, 2]);
        assert!(mid.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn closed_form_and_zero() {
        let s = stack(0.5, [-2.0, 0.0, 2.0]);
        let [_, _, long] = preprocess::<f64>(&[&s], 2.2).unwrap();
        assert!((long.data()[6] - 0.054_41).abs() < 1e-5, "{}", long.data()[6]);
        let z = stack(0.0, [-2.0, 0.0, 2.0]);
        let [short, _, _] = preprocess::<f64>(&[&z], 2.2).unwrap();
        assert!(short.data().iter().all(|&v| v == 0.0));
        assert!(preprocess::<f64>(&[&s], 0.0).is_err());
    }

    #[test]
    fn hdr_round_trip() {
        let img = HdrImage::new(2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let t = hdr_to_tensor::<f32>(&[&img, &img]).unwrap();
        assert_eq!(t.data()[..4], [0.1, 0.4, 0.2, 0.5]);
        assert_eq!(tensor_to_hdr(&t, 1).unwrap(), img);
    }
}
