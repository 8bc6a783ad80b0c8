//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "RANCKPT1"
//! count      u32      number of entries
//! entry*     repeated `count` times:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   ndims    u32      1 or 2
//!   dims     ndims x u64
//!   data     prod(dims) x f64 (IEEE-754 binary64, little-endian)
//! ```
//!
//! Values are stored bit-for-bit, so a write/read round trip is exact.

use std::io::{Read, Write};
use std::path::Path;

use super::param::{ParamSet, ParamShape, Parameter};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RANCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + params.num_scalars() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        let dims = p.shape.dims();
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &p.value {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = cur.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let ndims = cur.u32()? as usize;
        let dims = (0..ndims)
            .map(|_| cur.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let shape = ParamShape::from_dims(&dims)
            .ok_or_else(|| Error::Checkpoint(format!("`{name}` has {ndims} dims")))?;
        let data = (0..shape.len())
            .map(|_| cur.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        params.push(Parameter::new(name, shape, data)?)?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

impl From<&Parameter> for CheckpointEntry {
    fn from(p: &Parameter) -> Self {
        CheckpointEntry {
            name: p.name.clone(),
            dims: p.shape.dims(),
            data: p.value.clone(),
        }
    }
}
