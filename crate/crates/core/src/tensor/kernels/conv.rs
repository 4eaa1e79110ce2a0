//! Stride-1 dilated 2-D convolution via im2col and GEMM.
//!
//! Output rows are processed in chunks so the column buffer stays small even
//! for wide bottleneck inputs. Chunk boundaries depend only on the shapes,
//! so the floating-point reduction order is fixed for a given problem.

use crate::tensor::{Real, TensorError};

/// Column-buffer budget per chunk, in elements.
const CHUNK_ELEMS: usize = 1 << 17;

/// Convolution hyper-parameters. Only stride 1 is accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl Conv2dParams {
    pub const fn new(pad: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            pad,
            dilation,
        }
    }

    /// Padding that keeps the spatial extent for an odd `kernel`.
    pub const fn same(kernel: usize, dilation: usize) -> Self {
        Self::new(dilation * (kernel - 1) / 2, dilation)
    }
}

/// `floor((extent + 2 pad - dilation (k - 1) - 1) / stride) + 1`, or `None`
/// when the result would be empty.
pub fn output_extent(extent: usize, kernel: usize, params: Conv2dParams) -> Option<usize> {
    let span = params.dilation * (kernel - 1) + 1;
    let padded = extent + 2 * params.pad;
    (padded >= span && params.stride > 0).then(|| (padded - span) / params.stride + 1)
}

/// Resolved shapes of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], params: Conv2dParams) -> Result<Self, TensorError> {
        let [n, c, h, w] = input[..] else {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: input.to_vec(),
            });
        };
        let [oc, wc, kh, kw] = weight[..] else {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: weight.to_vec(),
            });
        };
        if wc != c {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: weight.to_vec(),
            });
        }
        if params.stride != 1 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                detail: format!("stride must be 1, got {}", params.stride),
            });
        }
        if params.dilation == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                detail: "dilation must be at least 1".into(),
            });
        }
        let empty = || TensorError::EmptyOutput {
            op: "conv2d",
            input: input.to_vec(),
            kernel: weight.to_vec(),
            pad: params.pad,
            dilation: params.dilation,
        };
        let oh = output_extent(h, kh, params).ok_or_else(empty)?;
        let ow = output_extent(w, kw, params).ok_or_else(empty)?;
        Ok(Self {
            n,
            c,
            h,
            w,
            oc,
            kh,
            kw,
            oh,
            ow,
            pad: params.pad,
            dilation: params.dilation,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.oc, self.oh, self.ow]
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == 0
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let rows = (CHUNK_ELEMS / (self.patch_len() * self.ow).max(1)).clamp(1, self.oh);
        let oh = self.oh;
        (0..oh).step_by(rows).map(move |r0| (r0, (r0 + rows).min(oh)))
    }

    /// Fills `cols` (patch_len x pixels) for output rows `r0..r1` of one image.
    fn im2col<T: Real>(&self, image: &[T], r0: usize, r1: usize, cols: &mut [T]) {
        let pixels = (r1 - r0) * self.ow;
        cols.fill(T::zero());
        for ci in 0..self.c {
            let plane = &image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * pixels..(row + 1) * pixels];
                    let dy = (ki * self.dilation) as isize - self.pad as isize;
                    let dx = (kj * self.dilation) as isize - self.pad as isize;
                    let (x_lo, x_hi) = self.valid_columns(dx);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for (local, oy) in (r0..r1).enumerate() {
                        let iy = oy as isize + dy;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..];
                        let out = &mut dst[local * self.ow..];
                        out[x_lo..x_hi]
                            .copy_from_slice(&src[(x_lo as isize + dx) as usize..(x_hi as isize + dx) as usize]);
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back into the input-gradient plane of one image.
    fn col2im<T: Real>(&self, cols: &[T], r0: usize, r1: usize, image: &mut [T]) {
        let pixels = (r1 - r0) * self.ow;
        for ci in 0..self.c {
            let plane = &mut image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * pixels..(row + 1) * pixels];
                    let dy = (ki * self.dilation) as isize - self.pad as isize;
                    let dx = (kj * self.dilation) as isize - self.pad as isize;
                    let (x_lo, x_hi) = self.valid_columns(dx);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for (local, oy) in (r0..r1).enumerate() {
                        let iy = oy as isize + dy;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let base = iy as usize * self.w;
                        let grads = &src[local * self.ow + x_lo..local * self.ow + x_hi];
                        let start = (base as isize + x_lo as isize + dx) as usize;
                        for (acc, &g) in plane[start..start + grads.len()].iter_mut().zip(grads) {
                            *acc += g;
                        }
                    }
                }
            }
        }
    }

    /// Output columns `ox` whose tap `ox + dx` lands inside the input row.
    fn valid_columns(&self, dx: isize) -> (usize, usize) {
        let lo = (-dx).max(0) as usize;
        let hi = (self.w as isize - dx).clamp(0, self.ow as isize) as usize;
        (lo.min(self.ow), hi)
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeometry, input: &[T], weight: &[T], bias: Option<&[T]>) -> Vec<T> {
    let in_len = g.c * g.h * g.w;
    let out_plane = g.oh * g.ow;
    let ck = g.patch_len();
    let mut out = vec![T::zero(); g.n * g.oc * out_plane];
    let mut cols = Vec::new();
    for ni in 0..g.n {
        let image = &input[ni * in_len..(ni + 1) * in_len];
        let out_n = &mut out[ni * g.oc * out_plane..(ni + 1) * g.oc * out_plane];
        if g.is_pointwise() {
            T::gemm(
                g.oc,
                ck,
                out_plane,
                weight,
                (ck, 1),
                image,
                (out_plane, 1),
                T::zero(),
                out_n,
                (out_plane, 1),
            );
        } else {
            for (r0, r1) in g.chunks() {
                let pixels = (r1 - r0) * g.ow;
                cols.resize(ck * pixels, T::zero());
                g.im2col(image, r0, r1, &mut cols);
                T::gemm(
                    g.oc,
                    ck,
                    pixels,
                    weight,
                    (ck, 1),
                    &cols,
                    (pixels, 1),
                    T::zero(),
                    &mut out_n[r0 * g.ow..],
                    (out_plane, 1),
                );
            }
        }
        if let Some(bias) = bias {
            for (plane, &b) in out_n.chunks_exact_mut(out_plane).zip(bias) {
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
    }
    out
}

/// Gradients of one convolution. `input`/`weight` are `None` when not requested.
pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    dout: &[T],
    want_input: bool,
    want_weight: bool,
) -> ConvGrads<T> {
    let in_len = g.c * g.h * g.w;
    let out_plane = g.oh * g.ow;
    let ck = g.patch_len();
    let mut dinput = want_input.then(|| vec![T::zero(); g.n * in_len]);
    let mut dweight = want_weight.then(|| vec![T::zero(); g.oc * ck]);
    let mut dbias = vec![T::zero(); g.oc];
    let mut cols = Vec::new();
    let mut dcols = Vec::new();
    for ni in 0..g.n {
        let image = &input[ni * in_len..(ni + 1) * in_len];
        let dout_n = &dout[ni * g.oc * out_plane..(ni + 1) * g.oc * out_plane];
        for (acc, plane) in dbias.iter_mut().zip(dout_n.chunks_exact(out_plane)) {
            *acc += plane.iter().copied().sum::<T>();
        }
        if g.is_pointwise() {
            if let Some(dw) = dweight.as_deref_mut() {
                T::gemm(
                    g.oc,
                    out_plane,
                    ck,
                    dout_n,
                    (out_plane, 1),
                    image,
                    (1, out_plane),
                    T::one(),
                    dw,
                    (ck, 1),
                );
            }
            if let Some(di) = dinput.as_deref_mut() {
                let di_n = &mut di[ni * in_len..(ni + 1) * in_len];
                T::gemm(
                    ck,
                    g.oc,
                    out_plane,
                    weight,
                    (1, ck),
                    dout_n,
                    (out_plane, 1),
                    T::zero(),
                    di_n,
                    (out_plane, 1),
                );
            }
            continue;
        }
        for (r0, r1) in g.chunks() {
            let pixels = (r1 - r0) * g.ow;
            let dout_chunk = &dout_n[r0 * g.ow..];
            if let Some(dw) = dweight.as_deref_mut() {
                cols.resize(ck * pixels, T::zero());
                g.im2col(image, r0, r1, &mut cols);
                T::gemm(
                    g.oc,
                    pixels,
                    ck,
                    dout_chunk,
                    (out_plane, 1),
                    &cols,
                    (1, pixels),
                    T::one(),
                    dw,
                    (ck, 1),
                );
            }
            if let Some(di) = dinput.as_deref_mut() {
                dcols.resize(ck * pixels, T::zero());
                T::gemm(
                    ck,
                    g.oc,
                    pixels,
                    weight,
                    (1, ck),
                    dout_chunk,
                    (out_plane, 1),
                    T::zero(),
                    &mut dcols,
                    (pixels, 1),
                );
                g.col2im(&dcols, r0, r1, &mut di[ni * in_len..(ni + 1) * in_len]);
            }
        }
    }
    ConvGrads {
        input: dinput,
        weight: dweight,
        bias: dbias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(input: [usize; 4], weight: [usize; 4], pad: usize, dilation: usize) -> ConvGeometry {
        ConvGeometry::new(&input, &weight, Conv2dParams::new(pad, dilation)).unwrap()
    }

    #[test]
    fn ones_kernel_counts_valid_taps() {
        let g = geometry([1, 1, 3, 3], [1, 1, 3, 3], 1, 1);
        let out = conv2d_forward(&g, &[1.0f64; 9], &[1.0; 9], Some(&[0.0]));
        assert_eq!(out, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn dilated_same_padding_keeps_extent() {
        let g = geometry([1, 2, 16, 16], [3, 2, 3, 3], 2, 2);
        assert_eq!(g.output_shape(), [1, 3, 16, 16]);
        assert_eq!(Conv2dParams::same(3, 2), Conv2dParams::new(2, 2));
        assert_eq!(Conv2dParams::same(7, 1).pad, 3);
    }

    #[test]
    fn identity_pointwise_kernel() {
        let g = geometry([2, 1, 2, 3], [1, 1, 1, 1], 0, 1);
        let x: Vec<f32> = (0..12).map(|v| v as f32 * 0.5 - 2.0).collect();
        assert_eq!(conv2d_forward(&g, &x, &[1.0], Some(&[0.0])), x);
    }

    #[test]
    fn rejects_bad_geometry() {
        let p = Conv2dParams::new(0, 1);
        assert!(matches!(
            ConvGeometry::new(&[1, 3, 4, 4], &[2, 2, 3, 3], p),
            Err(TensorError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ConvGeometry::new(&[1, 1, 2, 2], &[1, 1, 3, 3], p),
            Err(TensorError::EmptyOutput { .. })
        ));
        let strided = Conv2dParams { stride: 2, ..p };
        assert!(ConvGeometry::new(&[1, 1, 4, 4], &[1, 1, 1, 1], strided).is_err());
        assert!(ConvGeometry::new(&[1, 1, 4, 4], &[1, 1, 1, 1], Conv2dParams::new(0, 0)).is_err());
    }

    #[test]
    fn chunking_covers_all_rows() {
        // wide patch forces one row per chunk
        let g = geometry([1, 600, 5, 40], [1, 600, 3, 3], 1, 1);
        let rows: Vec<_> = g.chunks().collect();
        assert_eq!(rows.first(), Some(&(0, 1)));
        assert_eq!(rows.last(), Some(&(4, 5)));
        assert_eq!(rows.len(), 5);
    }
}
