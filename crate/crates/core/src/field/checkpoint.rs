//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic   b"SSNFCKPT"
//! u32     format version (1)
//! u32×4   width, trunk depth, position frequencies, direction frequencies
//! u32     entry count
//! entry:  u32 name length, name (UTF-8), u32 rank, u64 × rank dims,
//!         f64 × product(dims) values
//! ```

use std::path::Path;

use super::{FieldConfig, FieldParams};
use crate::error::{Error, Result};
use crate::tensor::{NumericArray, ParameterStore};

const MAGIC: &[u8; 8] = b"SSNFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &FieldParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.store().scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let c = params.config();
    for v in [c.width, c.trunk_depth, c.pos_frequencies, c.dir_frequencies] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.store().len() as u32).to_le_bytes());
    for (name, array) in params.store().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(array.shape().len() as u32).to_le_bytes());
        for &d in array.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in array.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            malformed(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Format {
        kind: "checkpoint",
        detail: detail.into(),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<FieldParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let config = FieldConfig {
        width: r.u32()? as usize,
        trunk_depth: r.u32()? as usize,
        pos_frequencies: r.u32()? as usize,
        dir_frequencies: r.u32()? as usize,
    };
    let count = r.u32()?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| malformed("entry name is not UTF-8"))?
            .to_owned();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        if n.saturating_mul(8) > bytes.len() - r.pos {
            return Err(malformed(format!("entry `{name}` claims {n} values past the end")));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(r.f64()?);
        }
        store.insert(name, NumericArray::new(shape, values)?);
    }
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    FieldParams::from_store(config, store)
}

pub fn save_checkpoint(params: &FieldParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FieldParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FieldConfig {
        FieldConfig {
            width: 5,
            trunk_depth: 2,
            pos_frequencies: 1,
            dir_frequencies: 0,
        }
    }

    #[test]
    fn byte_exact_round_trip() {
        let p = FieldParams::init(cfg(), 4).unwrap();
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let p = FieldParams::init(cfg(), 4).unwrap();
        let bytes = encode_checkpoint(&p);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(decode_checkpoint(&version).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ckpt");
        let p = FieldParams::init(cfg(), 4).unwrap();
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }
}
