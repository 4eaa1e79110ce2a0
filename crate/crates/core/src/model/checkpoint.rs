//! Binary checkpoint files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "HDRFEAT\0"
//! version    u32
//! fingerprint  u32 length + UTF-8
//! config       u32 length + UTF-8 canonical config
//! adam step  u64
//! records    u32 count, then per record:
//!            u8 kind (0 parameter, 1 first moment, 2 second moment)
//!            u32 length + UTF-8 name
//!            u8 rank, rank x u32 extents
//!            f32 data
//! ```

use std::path::Path;

use crate::tensor::{Moments, Tensor, WeightStore};

use super::{HdrFeatConfig, ModelError};

const MAGIC: &[u8; 8] = b"HDRFEAT\0";
const VERSION: u32 = 1;

const KIND_PARAM: u8 = 0;
const KIND_FIRST: u8 = 1;
const KIND_SECOND: u8 = 2;

/// A loaded checkpoint: the architecture it was written for and its weights.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: HdrFeatConfig,
    pub weights: WeightStore<f32>,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u32).to_le_bytes());
    out.extend(b);
}

fn put_record(out: &mut Vec<u8>, kind: u8, name: &str, shape: &[usize], data: &[f32]) {
    out.push(kind);
    put_bytes(out, name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend((d as u32).to_le_bytes());
    }
    for v in data {
        out.extend(v.to_le_bytes());
    }
}

pub fn encode_checkpoint(cfg: &HdrFeatConfig, store: &WeightStore<f32>) -> Result<Vec<u8>, ModelError> {
    let fp = cfg.fingerprint();
    if store.fingerprint() != fp {
        return Err(ModelError::Fingerprint {
            expected: fp,
            found: store.fingerprint().to_owned(),
        });
    }
    let mut out = MAGIC.to_vec();
    out.extend(VERSION.to_le_bytes());
    put_bytes(&mut out, fp.as_bytes());
    put_bytes(&mut out, cfg.canonical().as_bytes());
    out.extend(store.step().to_le_bytes());
    let records: usize = store
        .iter()
        .map(|(n, _)| 1 + 2 * store.moments(n).is_some() as usize)
        .sum();
    out.extend((records as u32).to_le_bytes());
    for (name, t) in store.iter() {
        put_record(&mut out, KIND_PARAM, name, t.shape(), t.data());
        if let Some(m) = store.moments(name) {
            put_record(&mut out, KIND_FIRST, name, t.shape(), &m.first);
            put_record(&mut out, KIND_SECOND, name, t.shape(), &m.second);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, String> {
        let at = self.pos;
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| format!("invalid text at byte {at}"))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let fingerprint = c.string()?;
    let canonical = c.string()?;
    let config = HdrFeatConfig::from_canonical(&canonical).map_err(|e| e.to_string())?;
    if config.fingerprint() != fingerprint {
        return Err("stored fingerprint does not match the stored config".into());
    }
    let step = c.u64()?;
    let count = c.u32()?;
    let mut store = WeightStore::new(fingerprint);
    let mut pending: Vec<(String, u8, Vec<f32>)> = Vec::new();
    for _ in 0..count {
        let at = c.pos;
        let kind = c.u8()?;
        let name = c.string()?;
        let rank = c.u8()? as usize;
        let shape: Vec<usize> = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let numel: usize = shape.iter().product();
        let raw = c.take(numel.checked_mul(4).ok_or("record too large")?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4")))
            .collect();
        match kind {
            KIND_PARAM => {
                let t = Tensor::new(&shape, data).map_err(|e| format!("record at byte {at}: {e}"))?;
                store.insert(name, t).map_err(|e| format!("record at byte {at}: {e}"))?;
            }
            KIND_FIRST | KIND_SECOND => pending.push((name, kind, data)),
            other => return Err(format!("unknown record kind {other} at byte {at}")),
        }
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    for (name, _, data) in pending.iter().filter(|p| p.1 == KIND_FIRST) {
        let second = pending
            .iter()
            .find(|p| p.1 == KIND_SECOND && &p.0 == name)
            .ok_or_else(|| format!("first moment of {name} without second"))?;
        store
            .set_moments(
                name,
                Moments {
                    first: data.clone(),
                    second: second.2.clone(),
                },
            )
            .map_err(|e| e.to_string())?;
    }
    store.set_step(step);
    let expected = super::params::param_specs(&config);
    let names_match = expected.len() == store.len()
        && expected
            .iter()
            .all(|s| store.get(&s.name).is_some_and(|t| t.shape() == s.shape.as_slice()));
    if !names_match {
        return Err("parameter set does not match the stored config".into());
    }
    Ok(Checkpoint { config, weights: store })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    cfg: &HdrFeatConfig,
    store: &WeightStore<f32>,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(cfg, store)?;
    std::fs::write(path, bytes).map_err(|e| ModelError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|detail| ModelError::Checkpoint {
        path: path.to_owned(),
        detail,
    })
}

/// Loads a checkpoint and checks it was written for `cfg`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, cfg: &HdrFeatConfig) -> Result<WeightStore<f32>, ModelError> {
    let ck = load_checkpoint(path)?;
    if ck.weights.fingerprint() != cfg.fingerprint() {
        return Err(ModelError::Fingerprint {
            expected: cfg.fingerprint(),
            found: ck.weights.fingerprint().to_owned(),
        });
    }
    Ok(ck.weights)
}
