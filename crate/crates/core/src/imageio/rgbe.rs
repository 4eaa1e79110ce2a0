//! Radiance RGBE (`.hdr`): a shared 8-bit exponent with three 8-bit
//! mantissas per pixel.
//!
//! A pixel whose largest component is `v = m * 2^e` with `m` in `[0.5, 1)`
//! is stored as `(round(r * 256 / 2^e), round(g * 256 / 2^e),
//! round(b * 256 / 2^e), e + 128)` and decoded as `byte * 2^(E - 136)`.
//! Rounding bounds the error of every component by `max / 256` (relative
//! error below 0.4% on the largest component).

use std::path::Path;

use super::{FormatError, HdrImage, ImageError};

/// Encodes one pixel. Components must be finite and non-negative.
///
/// ```
/// use hdrfeat::imageio::rgbe::{decode_pixel, encode_pixel};
/// assert_eq!(encode_pixel([1.0, 1.0, 1.0]), [128, 128, 128, 129]);
/// assert_eq!(encode_pixel([0.0, 0.0, 0.0]), [0, 0, 0, 0]);
/// assert_eq!(decode_pixel([128, 64, 0, 129]), [1.0, 0.5, 0.0]);
/// ```
pub fn encode_pixel(rgb: [f32; 3]) -> [u8; 4] {
    let c = rgb.map(|v| v as f64);
    let max = c[0].max(c[1]).max(c[2]);
    if max.is_nan() || max <= 0.0 {
        return [0; 4];
    }
    let mut e = frexp_exponent(max);
    if (max / exp2i(e) * 256.0).round() >= 256.0 {
        e += 1;
    }
    if e < -127 {
        return [0; 4];
    }
    if e > 127 {
        return [255; 4];
    }
    let scale = 256.0 / exp2i(e);
    let m = c.map(|v| (v * scale).round().clamp(0.0, 255.0) as u8);
    [m[0], m[1], m[2], (e + 128) as u8]
}

pub fn decode_pixel(rgbe: [u8; 4]) -> [f32; 3] {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let f = exp2i(rgbe[3] as i32 - 136);
    [rgbe[0], rgbe[1], rgbe[2]].map(|b| (b as f64 * f) as f32)
}

/// Exponent `e` with `v / 2^e` in `[0.5, 1)`, for positive finite `v`.
fn frexp_exponent(v: f64) -> i32 {
    let mut e = v.log2().floor() as i32 + 1;
    while v / exp2i(e) >= 1.0 {
        e += 1;
    }
    while v / exp2i(e) < 0.5 {
        e -= 1;
    }
    e
}

fn exp2i(e: i32) -> f64 {
    2f64.powi(e)
}

pub fn encode(img: &HdrImage) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    out.reserve(w * h * 4);
    for px in img.pixels().chunks_exact(3) {
        out.extend(encode_pixel([px[0], px[1], px[2]]));
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<HdrImage, FormatError> {
    let mut pos = 0;
    let first = next_line(bytes, &mut pos)?;
    if !first.starts_with("#?RADIANCE") {
        return Err(FormatError::Malformed {
            offset: 0,
            what: "header (expected #?RADIANCE)".into(),
        });
    }
    loop {
        let start = pos;
        let line = next_line(bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(format) = line.strip_prefix("FORMAT=") {
            if format != "32-bit_rle_rgbe" {
                return Err(FormatError::Unsupported(format!("Radiance format {format}")));
            }
        } else if line.starts_with("-Y") || line.starts_with("+Y") {
            return Err(FormatError::Malformed {
                offset: start,
                what: "header (missing blank line before resolution)".into(),
            });
        }
    }
    let res_at = pos;
    let res = next_line(bytes, &mut pos)?;
    let (w, h) = parse_resolution(res).ok_or_else(|| FormatError::Malformed {
        offset: res_at,
        what: format!("resolution line {res:?} (only \"-Y h +X w\")"),
    })?;

    let mut pixels = Vec::with_capacity(w * h * 3);
    let mut scan = vec![[0u8; 4]; w];
    for _ in 0..h {
        read_scanline(bytes, &mut pos, &mut scan)?;
        for &p in &scan {
            pixels.extend(decode_pixel(p));
        }
    }
    HdrImage::new(w, h, pixels).ok_or(FormatError::Malformed {
        offset: res_at,
        what: "image".into(),
    })
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, FormatError> {
    let start = *pos;
    let len = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(FormatError::Truncated(bytes.len()))?;
    *pos = start + len + 1;
    std::str::from_utf8(&bytes[start..start + len])
        .map(str::trim_end)
        .map_err(|_| FormatError::Malformed {
            offset: start,
            what: "header text".into(),
        })
}

fn parse_resolution(line: &str) -> Option<(usize, usize)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts[..] {
        ["-Y", h, "+X", w] => {
            let (h, w) = (h.parse().ok()?, w.parse().ok()?);
            (h > 0 && w > 0).then_some((w, h))
        }
        _ => None,
    }
}

fn read_scanline(bytes: &[u8], pos: &mut usize, scan: &mut [[u8; 4]]) -> Result<(), FormatError> {
    let w = scan.len();
    let at = *pos;
    let head = bytes.get(at..at + 4).ok_or(FormatError::Truncated(at))?;
    let adaptive = (8..0x8000).contains(&w) && head[0] == 2 && head[1] == 2 && head[2] & 0x80 == 0;
    if !adaptive {
        let flat = bytes.get(at..at + 4 * w).ok_or(FormatError::Truncated(bytes.len()))?;
        for (px, b) in scan.iter_mut().zip(flat.chunks_exact(4)) {
            px.copy_from_slice(b);
        }
        *pos = at + 4 * w;
        return Ok(());
    }
    let declared = (head[2] as usize) << 8 | head[3] as usize;
    if declared != w {
        return Err(FormatError::Malformed {
            offset: at,
            what: format!("scanline length {declared}, expected {w}"),
        });
    }
    *pos = at + 4;
    for ch in 0..4 {
        let mut x = 0;
        while x < w {
            let at = *pos;
            let count = *bytes.get(at).ok_or(FormatError::Truncated(at))? as usize;
            let bad_length = || FormatError::Malformed {
                offset: at,
                what: "run length".into(),
            };
            if count > 128 {
                let n = count - 128;
                let v = *bytes.get(at + 1).ok_or(FormatError::Truncated(at + 1))?;
                if x + n > w {
                    return Err(bad_length());
                }
                scan[x..x + n].iter_mut().for_each(|p| p[ch] = v);
                x += n;
                *pos = at + 2;
            } else {
                if count == 0 || x + count > w {
                    return Err(bad_length());
                }
                let lit = bytes
                    .get(at + 1..at + 1 + count)
                    .ok_or(FormatError::Truncated(bytes.len()))?;
                scan[x..x + count].iter_mut().zip(lit).for_each(|(p, &v)| p[ch] = v);
                x += count;
                *pos = at + 1 + count;
            }
        }
    }
    Ok(())
}

pub fn read_hdr_rgbe(path: impl AsRef<Path>) -> Result<HdrImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ImageError::io(path, e))?;
    decode(&bytes).map_err(|e| ImageError::format(path, e))
}

pub fn write_hdr_rgbe(img: &HdrImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    std::fs::write(path, encode(img)).map_err(|e| ImageError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive run-length encoding of one scanline, as written by other tools.
    fn rle_scanline(scan: &[[u8; 4]]) -> Vec<u8> {
        let w = scan.len();
        let mut out = vec![2, 2, (w >> 8) as u8, w as u8];
        for ch in 0..4 {
            let mut x = 0;
            while x < w {
                let v = scan[x][ch];
                let run = scan[x..].iter().take(127).take_while(|p| p[ch] == v).count();
                if run >= 3 {
                    out.extend([128 + run as u8, v]);
                    x += run;
                } else {
                    let start = x;
                    while x < w && x - start < 128 {
                        let v = scan[x][ch];
                        if scan[x..].iter().take(3).filter(|p| p[ch] == v).count() == 3 {
                            break;
                        }
                        x += 1;
                    }
                    out.push((x - start) as u8);
                    out.extend(scan[start..x].iter().map(|p| p[ch]));
                }
            }
        }
        out
    }

    #[test]
    fn exponent_bump_on_rounding_overflow() {
        // 0.999 rounds its mantissa to 256, so the exponent moves up
        let [r, _, _, e] = encode_pixel([0.999, 0.0, 0.0]);
        assert_eq!((r, e), (128, 129));
    }

    #[test]
    fn tiny_values_become_black() {
        assert_eq!(encode_pixel([1e-40, 0.0, 0.0]), [0; 4]);
    }

    #[test]
    fn adaptive_rle_decodes() {
        let w = 20;
        let scan: Vec<[u8; 4]> = (0..w)
            .map(|x| [if x < 10 { 7 } else { x as u8 }, 128, 0, 130])
            .collect();
        let mut bytes = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\nEXPOSURE=1\n\n-Y 2 +X {w}\n").into_bytes();
        bytes.extend(rle_scanline(&scan));
        bytes.extend(rle_scanline(&scan));
        let img = decode(&bytes).unwrap();
        assert_eq!(img.height(), 2);
        // exponent byte 130 scales mantissas by 2^-6
        assert_eq!(img.pixels()[0], 7.0 / 64.0);
        assert_eq!(img.pixels()[1], 2.0);
        assert_eq!(img.pixels()[3 * 15], 15.0 / 64.0);
        assert_eq!(&img.pixels()[..3 * w], &img.pixels()[3 * w..]);
    }

    #[test]
    fn malformed_inputs_carry_offsets() {
        assert!(matches!(
            decode(b"#?RGBE\n\n-Y 1 +X 1\n\0\0\0\0"),
            Err(FormatError::Malformed { offset: 0, .. })
        ));
        let err = decode(b"#?RADIANCE\n\n+Y 1 +X 1\n\0\0\0\0").unwrap_err();
        assert!(matches!(err, FormatError::Malformed { offset: 12, .. }), "{err:?}");
        assert!(matches!(
            decode(b"#?RADIANCE\n\n-Y 2 +X 1\n\0\0\0\0"),
            Err(FormatError::Truncated(_))
        ));
        // declared scanline length disagrees with the header
        let mut bytes = b"#?RADIANCE\n\n-Y 1 +X 8\n".to_vec();
        bytes.extend([2, 2, 0, 9]);
        assert!(matches!(decode(&bytes), Err(FormatError::Malformed { offset: 22, .. })));
        assert!(matches!(
            decode(b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n\0\0\0\0"),
            Err(FormatError::Unsupported(_))
        ));
    }
}
