use std::io::Cursor;
use std::path::Path;

use super::ppm::RawRgb;
use super::{ppm, tiff, FormatError, ImageError, LdrImage};

/// Decodes an LDR frame, choosing the container from its magic bytes.
pub fn decode_ldr(bytes: &[u8]) -> Result<LdrImage, FormatError> {
    let (w, h, depth, codes) = if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)?
    } else if bytes.starts_with(b"II") || bytes.starts_with(b"MM") {
        tiff::decode(bytes)?
    } else if bytes.starts_with(b"P") {
        ppm::decode(bytes)?
    } else {
        return Err(FormatError::Unsupported(
            "container (expected P6 pixmap, TIFF or PNG)".into(),
        ));
    };
    LdrImage::from_codes(w, h, depth, &codes)
}

pub fn read_ldr(path: impl AsRef<Path>) -> Result<LdrImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ImageError::io(path, e))?;
    decode_ldr(&bytes).map_err(|e| ImageError::format(path, e))
}

fn decode_png(bytes: &[u8]) -> Result<RawRgb, FormatError> {
    let malformed = |e: png::DecodingError| FormatError::Malformed {
        offset: 0,
        what: format!("PNG stream ({e})"),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(malformed)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb {
        return Err(FormatError::Unsupported(format!(
            "PNG color type {:?} (only RGB)",
            info.color_type
        )));
    }
    let depth = match info.bit_depth {
        png::BitDepth::Eight => 8u8,
        png::BitDepth::Sixteen => 16,
        other => return Err(FormatError::Unsupported(format!("PNG bit depth {other:?}"))),
    };
    if info.interlaced {
        return Err(FormatError::Unsupported("interlaced PNG".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::Unsupported("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let out = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::IoError(_) => FormatError::Truncated(bytes.len()),
        other => malformed(other),
    })?;
    let (w, h) = (out.width as usize, out.height as usize);
    let mut codes = Vec::with_capacity(w * h * 3);
    for row in buf.chunks(out.line_size).take(h) {
        if depth == 8 {
            codes.extend(row[..w * 3].iter().map(|&b| b as u16));
        } else {
            codes.extend(row[..w * 6].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
        }
    }
    Ok((w, h, depth, codes))
}
