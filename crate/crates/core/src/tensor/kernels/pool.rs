//! Pooling and resampling kernels.
//!
//! Max variants record the flat input index of the winner; ties go to the
//! lowest flat index, so the backward pass is deterministic.

use crate::tensor::Real;

/// Global pooling over H x W, producing one value per (n, c).
pub fn spatial_pool<T: Real>(input: &[T], planes: usize, plane: usize, max: bool) -> (Vec<T>, Vec<usize>) {
    let mut out = Vec::with_capacity(planes);
    let mut argmax = Vec::new();
    let scale = T::lit(1.0 / plane as f64);
    for (p, values) in input.chunks_exact(plane).enumerate() {
        if max {
            let (idx, v) = first_max(values.iter().copied());
            out.push(v);
            argmax.push(p * plane + idx);
        } else {
            out.push(values.iter().copied().sum::<T>() * scale);
        }
    }
    (out, argmax)
}

/// Pooling across channels at each pixel: N x C x H x W -> N x 1 x H x W.
pub fn channel_pool<T: Real>(input: &[T], n: usize, c: usize, plane: usize, max: bool) -> (Vec<T>, Vec<usize>) {
    let mut out = vec![T::zero(); n * plane];
    let mut argmax = if max { vec![0; n * plane] } else { Vec::new() };
    let scale = T::lit(1.0 / c as f64);
    for ni in 0..n {
        let image = &input[ni * c * plane..(ni + 1) * c * plane];
        for px in 0..plane {
            let column = (0..c).map(|ci| image[ci * plane + px]);
            if max {
                let (ci, v) = first_max(column);
                out[ni * plane + px] = v;
                argmax[ni * plane + px] = ni * c * plane + ci * plane + px;
            } else {
                out[ni * plane + px] = column.sum::<T>() * scale;
            }
        }
    }
    (out, argmax)
}

/// Windowed max pooling with implicit `-inf` padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPoolGeometry {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl MaxPoolGeometry {
    /// `None` when the configuration yields an empty output or a window
    /// that could cover only padding.
    pub fn new(planes: usize, h: usize, w: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        if kernel == 0 || stride == 0 || pad >= kernel {
            return None;
        }
        let extent = |len: usize| {
            let padded = len + 2 * pad;
            (padded >= kernel).then(|| (padded - kernel) / stride + 1)
        };
        Some(Self {
            planes,
            h,
            w,
            kernel,
            stride,
            pad,
            oh: extent(h)?,
            ow: extent(w)?,
        })
    }
}

pub fn max_pool2d<T: Real>(g: &MaxPoolGeometry, input: &[T]) -> (Vec<T>, Vec<usize>) {
    let mut out = Vec::with_capacity(g.planes * g.oh * g.ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oy in 0..g.oh {
            let y0 = (oy * g.stride) as isize - g.pad as isize;
            let ys = y0.max(0) as usize..((y0 + g.kernel as isize).min(g.h as isize)) as usize;
            for ox in 0..g.ow {
                let x0 = (ox * g.stride) as isize - g.pad as isize;
                let xs = x0.max(0) as usize..((x0 + g.kernel as isize).min(g.w as isize)) as usize;
                let mut best = (usize::MAX, T::neg_infinity());
                for y in ys.clone() {
                    for x in xs.clone() {
                        let idx = base + y * g.w + x;
                        if best.0 == usize::MAX || input[idx] > best.1 {
                            best = (idx, input[idx]);
                        }
                    }
                }
                out.push(best.1);
                argmax.push(best.0);
            }
        }
    }
    (out, argmax)
}

/// Routes each output gradient to its recorded argmax.
pub fn scatter_argmax<T: Real>(dout: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut dinput = vec![T::zero(); input_len];
    for (&g, &idx) in dout.iter().zip(argmax) {
        dinput[idx] += g;
    }
    dinput
}

/// Nearest-neighbour source index for output coordinate `o`.
#[inline]
fn nearest(o: usize, src: usize, dst: usize) -> usize {
    (o * src / dst).min(src - 1)
}

pub fn upsample_nearest<T: Real>(
    input: &[T],
    planes: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let mut out = Vec::with_capacity(planes * oh * ow);
    for plane in input.chunks_exact(h * w).take(planes) {
        for oy in 0..oh {
            let row = &plane[nearest(oy, h, oh) * w..];
            out.extend((0..ow).map(|ox| row[nearest(ox, w, ow)]));
        }
    }
    out
}

pub fn upsample_nearest_backward<T: Real>(
    dout: &[T],
    planes: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let mut dinput = vec![T::zero(); planes * h * w];
    for (p, plane) in dout.chunks_exact(oh * ow).enumerate() {
        let dst = &mut dinput[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let sy = nearest(oy, h, oh);
            for ox in 0..ow {
                dst[sy * w + nearest(ox, w, ow)] += plane[oy * ow + ox];
            }
        }
    }
    dinput
}

fn first_max<T: Real>(values: impl Iterator<Item = T>) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (i, v) in values.enumerate() {
        if i == 0 || v > best.1 {
            best = (i, v);
        }
    }
    best
}
