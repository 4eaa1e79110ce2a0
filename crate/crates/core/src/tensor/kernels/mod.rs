//! Raw forward/backward kernels on flat slices. The [`Graph`](super::Graph)
//! wraps these with shape validation and tape bookkeeping.

pub mod conv;
pub mod pool;

use super::Real;

/// `out[n][o] = sum_f x[n][f] * w[o][f] + b[o]`.
pub fn linear_forward<T: Real>(x: &[T], w: &[T], b: &[T], rows: usize, inp: usize, out: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * out);
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..out {
            let wr = &w[o * inp..(o + 1) * inp];
            y.push(xr.iter().zip(wr).map(|(&a, &b)| a * b).sum::<T>() + b[o]);
        }
    }
    y
}

/// Returns `(dx, dw, db)` for [`linear_forward`].
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    rows: usize,
    inp: usize,
    out: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); rows * inp];
    let mut dw = vec![T::zero(); out * inp];
    let mut db = vec![T::zero(); out];
    for r in 0..rows {
        for o in 0..out {
            let g = dy[r * out + o];
            db[o] += g;
            for f in 0..inp {
                dx[r * inp + f] += g * w[o * inp + f];
                dw[o * inp + f] += g * x[r * inp + f];
            }
        }
    }
    (dx, dw, db)
}
