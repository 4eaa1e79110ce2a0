//! Aligned random crops with dihedral flips and rotations.

use rand::Rng;

use super::TrainError;
use crate::imageio::{ExposureStack, HdrImage, LdrImage};

/// The eight symmetries of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    /// Counter-clockwise quarter turn.
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Self::Identity,
        Self::Rot90,
        Self::Rot180,
        Self::Rot270,
        Self::FlipHorizontal,
        Self::FlipVertical,
        Self::Transpose,
        Self::AntiTranspose,
    ];

    fn swaps_axes(self) -> bool {
        matches!(self, Self::Rot90 | Self::Rot270 | Self::Transpose | Self::AntiTranspose)
    }

    /// Output extent for a `w x h` input.
    pub fn output_size(self, w: usize, h: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (h, w)
        } else {
            (w, h)
        }
    }

    /// Source pixel of output pixel `(x, y)` for a `w x h` input.
    pub fn source(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            Self::Identity => (x, y),
            Self::Rot90 => (w - 1 - y, x),
            Self::Rot180 => (w - 1 - x, h - 1 - y),
            Self::Rot270 => (y, h - 1 - x),
            Self::FlipHorizontal => (w - 1 - x, y),
            Self::FlipVertical => (x, h - 1 - y),
            Self::Transpose => (y, x),
            Self::AntiTranspose => (w - 1 - y, h - 1 - x),
        }
    }

    /// Applies the transform to an interleaved RGB buffer.
    pub fn apply_rgb(self, pixels: &[f32], w: usize, h: usize) -> Vec<f32> {
        let (ow, oh) = self.output_size(w, h);
        let mut out = Vec::with_capacity(pixels.len());
        for y in 0..oh {
            for x in 0..ow {
                let (sx, sy) = self.source(x, y, w, h);
                let i = (sy * w + sx) * 3;
                out.extend_from_slice(&pixels[i..i + 3]);
            }
        }
        out
    }
}

/// One augmented training example and the draws that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub stack: ExposureStack,
    /// Top-left corner `(x, y)` of the crop in the source images.
    pub offset: (usize, usize),
    pub transform: Dihedral,
}

/// Crops all four images at one random offset, then applies one uniformly
/// drawn dihedral transform to all of them.
pub fn crop_augment<R: Rng>(stack: &ExposureStack, crop: usize, rng: &mut R) -> Result<Augmented, TrainError> {
    let (offset, transform) = draw(stack, crop, rng)?;
    let stack = crop_with(stack, offset, crop, transform).expect("offset drawn in bounds");
    Ok(Augmented {
        stack,
        offset,
        transform,
    })
}

/// Draws a crop offset and then a transform for `stack`.
pub fn draw<R: Rng>(stack: &ExposureStack, crop: usize, rng: &mut R) -> Result<((usize, usize), Dihedral), TrainError> {
    let (w, h) = (stack.width(), stack.height());
    if crop == 0 || w < crop || h < crop {
        return Err(TrainError::ImageTooSmall {
            sample: stack.sample_id().to_owned(),
            width: w,
            height: h,
            crop,
        });
    }
    if stack.gt().is_none() {
        return Err(TrainError::MissingGroundTruth(vec![stack.sample_id().to_owned()]));
    }
    let x = rng.random_range(0..=w - crop);
    let y = rng.random_range(0..=h - crop);
    Ok(((x, y), Dihedral::ALL[rng.random_range(0..8)]))
}

/// Crop and transform with explicit draws.
pub fn crop_with(
    stack: &ExposureStack,
    offset: (usize, usize),
    crop: usize,
    transform: Dihedral,
) -> Option<ExposureStack> {
    let (w, h) = (stack.width(), stack.height());
    if crop == 0 || offset.0 + crop > w || offset.1 + crop > h {
        return None;
    }
    let gt = stack.gt()?;
    Some(transform_stack(stack, gt, offset, crop, transform))
}

fn transform_stack(
    stack: &ExposureStack,
    gt: &HdrImage,
    (x, y): (usize, usize),
    crop: usize,
    t: Dihedral,
) -> ExposureStack {
    let ldr = stack.ldr().clone().map(|img| {
        let c = img.crop(x, y, crop, crop).expect("bounds checked");
        let px = t.apply_rgb(c.pixels(), crop, crop);
        LdrImage::from_normalized(crop, crop, c.bit_depth(), px).expect("values stay in [0, 1]")
    });
    let g = gt.crop(x, y, crop, crop).expect("bounds checked");
    let gt = HdrImage::new(crop, crop, t.apply_rgb(g.pixels(), crop, crop)).expect("values stay valid");
    ExposureStack::new(ldr, stack.ev(), Some(gt), stack.sample_id()).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_closure() {
        // each transform is a bijection; Rot90 four times is the identity
        let (w, h) = (3, 2);
        let px: Vec<f32> = (0..w * h * 3).map(|v| v as f32).collect();
        for t in Dihedral::ALL {
            let out = t.apply_rgb(&px, w, h);
            let mut sorted = out.clone();
            sorted.sort_by(f32::total_cmp);
            assert_eq!(sorted, px, "{t:?}");
        }
        let mut cur = px.clone();
        let (mut cw, mut ch) = (w, h);
        for _ in 0..4 {
            cur = Dihedral::Rot90.apply_rgb(&cur, cw, ch);
            (cw, ch) = (ch, cw);
        }
        assert_eq!(cur, px);
        let r90 = Dihedral::Rot90.apply_rgb(&px, w, h);
        let r270 = Dihedral::Rot270.apply_rgb(&r90, h, w);
        assert_eq!(r270, px);
    }

    #[test]
    fn rot90_moves_top_right_to_top_left() {
        // 2x1 image: pixel 0 then pixel 1; counter-clockwise puts pixel 1 on top
        let px = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(Dihedral::Rot90.apply_rgb(&px, 2, 1), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
