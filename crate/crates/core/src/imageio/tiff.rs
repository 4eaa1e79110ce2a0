//! Baseline TIFF reader restricted to uncompressed, chunky RGB strips at 8 or
//! 16 bits per sample.

use super::ppm::RawRgb;
use super::FormatError;

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIG: u16 = 284;
const SAMPLE_FORMAT: u16 = 339;

#[derive(Clone, Copy)]
struct Reader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn u16_at(&self, at: usize) -> Result<u16, FormatError> {
        let b = self.bytes.get(at..at + 2).ok_or(FormatError::Truncated(at))?;
        let b = [b[0], b[1]];
        Ok(if self.big_endian {
            u16::from_be_bytes(b)
        } else {
            u16::from_le_bytes(b)
        })
    }

    fn u32_at(&self, at: usize) -> Result<u32, FormatError> {
        let b = self.bytes.get(at..at + 4).ok_or(FormatError::Truncated(at))?;
        let b = [b[0], b[1], b[2], b[3]];
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }

    /// Values of a SHORT or LONG field, following the offset when the data
    /// does not fit in the entry.
    fn values(&self, entry: usize) -> Result<Vec<u32>, FormatError> {
        let kind = self.u16_at(entry + 2)?;
        let count = self.u32_at(entry + 4)? as usize;
        let size = match kind {
            3 => 2,
            4 => 4,
            other => {
                return Err(FormatError::Malformed {
                    offset: entry,
                    what: format!("field type {other}"),
                })
            }
        };
        let base = if count * size <= 4 {
            entry + 8
        } else {
            self.u32_at(entry + 8)? as usize
        };
        (0..count)
            .map(|i| {
                let at = base + i * size;
                if size == 2 {
                    self.u16_at(at).map(u32::from)
                } else {
                    self.u32_at(at)
                }
            })
            .collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<RawRgb, FormatError> {
    let big_endian = match bytes.get(..2) {
        Some(b"II") => false,
        Some(b"MM") => true,
        _ => return Err(FormatError::Unsupported("TIFF byte order mark".into())),
    };
    let r = Reader { bytes, big_endian };
    if r.u16_at(2)? != 42 {
        return Err(FormatError::Unsupported("BigTIFF or non-TIFF magic".into()));
    }
    let ifd = r.u32_at(4)? as usize;
    let entries = r.u16_at(ifd)? as usize;

    let mut width = None;
    let mut height = None;
    let mut bits = None;
    let mut samples = 1;
    let mut offsets = None;
    let mut counts = None;
    for i in 0..entries {
        let entry = ifd + 2 + 12 * i;
        let tag = r.u16_at(entry)?;
        let single = |name: &str| -> Result<u32, FormatError> {
            r.values(entry)?.first().copied().ok_or(FormatError::Malformed {
                offset: entry,
                what: format!("empty {name} field"),
            })
        };
        match tag {
            IMAGE_WIDTH => width = Some(single("width")? as usize),
            IMAGE_LENGTH => height = Some(single("length")? as usize),
            BITS_PER_SAMPLE => bits = Some(r.values(entry)?),
            COMPRESSION => {
                let c = single("compression")?;
                if c != 1 {
                    return Err(FormatError::Unsupported(format!(
                        "TIFF compression {c} (only uncompressed)"
                    )));
                }
            }
            PHOTOMETRIC => {
                let p = single("photometric")?;
                if p != 2 {
                    return Err(FormatError::Unsupported(format!("TIFF photometric {p} (only RGB)")));
                }
            }
            STRIP_OFFSETS => offsets = Some(r.values(entry)?),
            SAMPLES_PER_PIXEL => samples = single("samples")?,
            STRIP_BYTE_COUNTS => counts = Some(r.values(entry)?),
            PLANAR_CONFIG => {
                let p = single("planar")?;
                if p != 1 {
                    return Err(FormatError::Unsupported("TIFF planar configuration".into()));
                }
            }
            SAMPLE_FORMAT => {
                let f = single("sample format")?;
                if f != 1 {
                    return Err(FormatError::Unsupported(format!("TIFF sample format {f}")));
                }
            }
            0x0142..=0x0145 => {
                return Err(FormatError::Unsupported("TIFF tiles".into()));
            }
            _ => {}
        }
    }
    let missing = |what: &str| FormatError::Malformed {
        offset: ifd,
        what: format!("missing {what}"),
    };
    let width = width.ok_or_else(|| missing("width"))?;
    let height = height.ok_or_else(|| missing("length"))?;
    let offsets = offsets.ok_or_else(|| missing("strip offsets"))?;
    let counts = counts.ok_or_else(|| missing("strip byte counts"))?;
    if samples != 3 {
        return Err(FormatError::Unsupported(format!(
            "TIFF with {samples} samples per pixel (only RGB)"
        )));
    }
    let bits = bits.ok_or_else(|| missing("bits per sample"))?;
    let depth = match bits.as_slice() {
        [8, 8, 8] | [8] => 8u8,
        [16, 16, 16] | [16] => 16,
        other => return Err(FormatError::Unsupported(format!("TIFF bits per sample {other:?}"))),
    };
    if width == 0 || height == 0 || offsets.len() != counts.len() {
        return Err(missing("consistent strip layout"));
    }

    // strips are stored in order, so rows-per-strip need not be consulted
    let bytes_per = depth as usize / 8;
    let needed = width * height * 3 * bytes_per;
    let mut raster = Vec::with_capacity(needed);
    for (&off, &len) in offsets.iter().zip(&counts) {
        let (off, len) = (off as usize, len as usize);
        let strip = bytes.get(off..off + len).ok_or(FormatError::Truncated(off + len))?;
        raster.extend_from_slice(strip);
    }
    if raster.len() < needed {
        return Err(FormatError::Truncated(raster.len()));
    }
    raster.truncate(needed);
    let codes = if depth == 8 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                if big_endian {
                    u16::from_be_bytes(b)
                } else {
                    u16::from_le_bytes(b)
                }
            })
            .collect()
    };
    Ok((width, height, depth, codes))
}
