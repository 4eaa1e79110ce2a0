//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's kernels.
#![allow(dead_code)]

use hdrfeat::imageio::{ExposureStack, HdrImage, LdrImage};
use hdrfeat::model::{AttentionMode, HdrFeatConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Six nested loops over output and kernel positions.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    [n, c, h, w]: [usize; 4],
    k: &[f64],
    [oc, ic, kh, kw]: [usize; 4],
    bias: &[f64],
    pad: usize,
    dil: usize,
) -> (Vec<f64>, [usize; 4]) {
    assert_eq!(c, ic);
    let oh = h + 2 * pad - dil * (kh - 1);
    let ow = w + 2 * pad - dil * (kw - 1);
    let mut out = vec![0.0; n * oc * oh * ow];
    for b in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..ic {
                        for u in 0..kh {
                            for v in 0..kw {
                                let iy = (y + u * dil) as isize - pad as isize;
                                let ix = (xo + v * dil) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((b * c + i) * h + iy as usize) * w + ix as usize;
                                acc += x[xi] * k[((o * ic + i) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[((b * oc + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    (out, [n, oc, oh, ow])
}

/// Structural similarity evaluated window by window with an explicitly
/// built 2-D Gaussian, averaged over valid positions and then channels.
/// Inputs are interleaved RGB.
pub fn ssim_direct(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    const K: usize = 11;
    let sigma: f64 = 1.5;
    let mut win = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (u, row) in win.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let dy = u as f64 - 5.0;
            let dx = v as f64 - 5.0;
            *cell = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *cell;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut channel_sum = 0.0;
    for ch in 0..3 {
        let at = |img: &[f64], x: usize, y: usize| img[(y * w + x) * 3 + ch];
        let mut acc = 0.0;
        let mut count = 0;
        for y0 in 0..=h - K {
            for x0 in 0..=w - K {
                let (mut ma, mut mb) = (0.0, 0.0);
                for u in 0..K {
                    for v in 0..K {
                        let g = win[u][v] / total;
                        ma += g * at(a, x0 + v, y0 + u);
                        mb += g * at(b, x0 + v, y0 + u);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for u in 0..K {
                    for v in 0..K {
                        let g = win[u][v] / total;
                        let da = at(a, x0 + v, y0 + u) - ma;
                        let db = at(b, x0 + v, y0 + u) - mb;
                        va += g * da * da;
                        vb += g * db * db;
                        cov += g * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        channel_sum += acc / count as f64;
    }
    channel_sum / 3.0
}

/// Learnable scalars per component, counted layer by layer from the
/// architecture description: `(extractor, attention, merge, rfdb, tail)`.
pub fn count_params(cfg: &HdrFeatConfig) -> [usize; 5] {
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let widths = &cfg.widths[..cfg.depth];
    let m = cfg.merged_width;
    let w1 = widths[0];

    let mut extractor = 0;
    let mut cin = 6;
    for &w in widths {
        extractor += conv(cin, w, 3);
        cin = w;
    }
    if !cfg.share_extractor_weights {
        extractor *= 3;
    }

    let attention = if cfg.attention == AttentionMode::None {
        0
    } else {
        let hidden = std::cmp::max(w1 / 16, 1);
        let block = conv(2 * w1, w1, 1) + (w1 * hidden + hidden) + (hidden * w1 + w1) + conv(2, 1, 7);
        if cfg.share_attention_weights {
            block
        } else {
            2 * block
        }
    };

    let mut merge = 0;
    for d in 1..=cfg.depth {
        let above = if d < cfg.depth { m } else { 0 };
        merge += conv(3 * widths[d - 1] + above, m, 3);
    }

    let dw = cfg.rfdb_distill_width;
    let e = std::cmp::max(m / 4, 1);
    let esa = conv(m, e, 1) + 2 * conv(e, e, 3) + conv(e, e, 1) + conv(e, m, 1);
    let block = 3 * conv(m, dw, 1) + 3 * conv(m, m, 3) + conv(m, dw, 3) + conv(4 * dw, m, 1) + esa;
    let rfdb = cfg.rfdb_count * block;

    let tail = conv(cfg.rfdb_count * m, m, 1) + conv(m, w1, 3) + conv(w1, m, 3) + conv(m, 3, 3);
    [extractor, attention, merge, rfdb, tail]
}

/// Smooth synthetic radiance with three exposures rendered through a
/// clipped gamma camera.
pub fn synthetic_scene(w: usize, h: usize, seed: u64, id: &str) -> ExposureStack {
    let mut r = rng(seed);
    let phase: Vec<f64> = uniform(&mut r, 6, 0.0, 6.0);
    let mut gt = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let s = (x as f64 * 0.21 + phase[c]).sin() * (y as f64 * 0.17 + phase[c + 3]).cos();
                let v = 0.5 + 0.45 * s;
                gt.push((v * v) as f32);
            }
        }
    }
    let ev = [-2.0, 0.0, 2.0];
    let ldr = ev.map(|e: f64| {
        let px: Vec<f32> = gt
            .iter()
            .map(|&v| {
                let code = ((v as f64 * e.exp2()).min(1.0).powf(1.0 / 2.2) * 255.0).round();
                (code / 255.0) as f32
            })
            .collect();
        LdrImage::from_normalized(w, h, 8, px).unwrap()
    });
    ExposureStack::new(ldr, ev, HdrImage::new(w, h, gt), id).unwrap()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}
