//! The SKWT weight container.
//!
//! ```text
//! "SKWT" | u32 version | u32 count | count × entry
//! entry: u16 name_len | name (UTF-8) | u8 dtype | u8 ndim | ndim × u32 dim | raw data
//! ```
//! All integers little-endian. Entries are written sorted by name.

use crate::tensor::{DType, TensorError, TensorValue};

pub const MAGIC: &[u8; 4] = b"SKWT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SidecarError {
    #[error("missing SKWT magic")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("duplicate entry `{0}`")]
    DuplicateEntry(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Serializes `entries` sorted by name. Later duplicates of a name are dropped.
pub fn encode(entries: &[(String, TensorValue)]) -> Vec<u8> {
    let mut sorted: Vec<&(String, TensorValue)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    sorted.dedup_by(|b, a| a.0 == b.0);

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sorted.len() as u32).to_le_bytes());
    for (name, t) in sorted {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.dtype().code());
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(t.data());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SidecarError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(SidecarError::Truncated(self.bytes.len()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, SidecarError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SidecarError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, SidecarError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a weight file. Each tensor's role is set to its entry name.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, TensorValue)>, SidecarError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| SidecarError::BadMagic)? != MAGIC {
        return Err(SidecarError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SidecarError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut out: Vec<(String, TensorValue)> = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| SidecarError::BadName)?
            .to_string();
        let code = r.u8()?;
        let dtype = DType::from_code(code).ok_or(SidecarError::UnknownDType(code))?;
        let ndim = r.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let size = dims
            .iter()
            .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or(SidecarError::Truncated(bytes.len()))?;
        let data = r.take(size)?.to_vec();
        if out.iter().any(|(n, _)| *n == name) {
            return Err(SidecarError::DuplicateEntry(name));
        }
        let tensor = TensorValue::new(name.clone(), dtype, dims, data)?;
        out.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(SidecarError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(out)
}
