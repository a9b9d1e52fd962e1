use std::fmt;

use sha2::{Digest, Sha256};

/// Element type of a stored tensor. Only single-precision floats in v1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    Float32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Float32 => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::Float32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("tensor `{role}` has {actual} data bytes, expected {expected} for dims {dims:?}")]
    LengthMismatch {
        role: String,
        dims: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor `{0}` has a zero dimension")]
    ZeroDim(String),
}

/// A named weight tensor: raw little-endian, row-major element bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TensorValue {
    role: String,
    dtype: DType,
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl TensorValue {
    pub fn new(
        role: impl Into<String>,
        dtype: DType,
        dims: Vec<usize>,
        data: Vec<u8>,
    ) -> Result<Self, TensorError> {
        let role = role.into();
        if dims.contains(&0) {
            return Err(TensorError::ZeroDim(role));
        }
        let expected = dtype.size() * dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                role,
                dims,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            role,
            dtype,
            dims,
            data,
        })
    }

    pub fn from_f32(role: impl Into<String>, dims: Vec<usize>, values: &[f32]) -> Result<Self, TensorError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(role, DType::Float32, dims, data)
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = role.into();
        self
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    /// Hex SHA-256 over dtype, dims and data. The role is not part of the
    /// content, so identical tensors under different roles share one entry.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.dtype.code(), self.dims.len() as u8]);
        for d in &self.dims {
            h.update((*d as u32).to_le_bytes());
        }
        h.update(&self.data);
        hex::encode(h.finalize())
    }
}

impl fmt::Debug for TensorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorValue")
            .field("role", &self.role)
            .field("dtype", &self.dtype)
            .field("dims", &self.dims)
            .field("bytes", &self.data.len())
            .finish()
    }
}
