//! Binary portable pixmap (`P6`), maxval 255 or 65535.

use super::FormatError;

/// Decoded raw codes: `(width, height, bit_depth, interleaved RGB)`.
pub type RawRgb = (usize, usize, u8, Vec<u16>);

pub fn decode(bytes: &[u8]) -> Result<RawRgb, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(FormatError::Unsupported(format!(
            "pixmap magic {magic:?} (only binary P6)"
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::Truncated(pos));
    }
    pos += 1;
    let depth = match maxval {
        255 => 8,
        65535 => 16,
        other => return Err(FormatError::Unsupported(format!("pixmap maxval {other}"))),
    };
    if width == 0 || height == 0 {
        return Err(FormatError::Malformed {
            offset: 2,
            what: "zero image dimension".into(),
        });
    }
    let count = width * height * 3;
    let bytes_per = if depth == 8 { 1 } else { 2 };
    let raster = &bytes[pos..];
    if raster.len() < count * bytes_per {
        return Err(FormatError::Truncated(bytes.len()));
    }
    let codes = if depth == 8 {
        raster[..count].iter().map(|&b| b as u16).collect()
    } else {
        raster[..count * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((width, height, depth, codes))
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, FormatError> {
    loop {
        match bytes.get(*pos) {
            None => return Err(FormatError::Truncated(*pos)),
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(FormatError::Malformed {
            offset: start,
            what: "pixmap header field".into(),
        });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(FormatError::Malformed {
            offset: start,
            what: "pixmap header number".into(),
        })
}

/// Encodes codes as `P6`; 16-bit samples are written big-endian.
pub fn encode(width: usize, height: usize, bit_depth: u8, codes: &[u16]) -> Result<Vec<u8>, FormatError> {
    let maxval: u32 = match bit_depth {
        8 => 255,
        16 => 65535,
        d => return Err(FormatError::Unsupported(format!("bit depth {d}"))),
    };
    if codes.len() != width * height * 3 || codes.iter().any(|&c| c as u32 > maxval) {
        return Err(FormatError::Malformed {
            offset: 0,
            what: "pixmap raster".into(),
        });
    }
    let mut out = format!("P6\n{width} {height}\n{maxval}\n").into_bytes();
    if bit_depth == 8 {
        out.extend(codes.iter().map(|&c| c as u8));
    } else {
        out.extend(codes.iter().flat_map(|c| c.to_be_bytes()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_depths() {
        let codes: Vec<u16> = (0..12).map(|v| v * 20).collect();
        let bytes = encode(2, 2, 8, &codes).unwrap();
        assert_eq!(decode(&bytes).unwrap(), (2, 2, 8, codes));
        let codes: Vec<u16> = (0..6).map(|v| v * 13_000).collect();
        let bytes = encode(2, 1, 16, &codes).unwrap();
        assert_eq!(decode(&bytes).unwrap(), (2, 1, 16, codes));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        assert_eq!(decode(&bytes).unwrap().3, vec![1, 2, 3]);
    }

    #[test]
    fn errors() {
        assert!(matches!(decode(b"P3\n1 1\n255\n"), Err(FormatError::Unsupported(_))));
        assert!(matches!(
            decode(b"P6\n1 1\n1023\n\0\0\0\0\0\0"),
            Err(FormatError::Unsupported(_))
        ));
        assert!(matches!(
            decode(b"P6\n2 2\n255\n\0\0\0"),
            Err(FormatError::Truncated(_))
        ));
        assert!(matches!(decode(b"P6\n2"), Err(FormatError::Truncated(_))));
    }
}
