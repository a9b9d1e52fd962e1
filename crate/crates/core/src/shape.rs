use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One tensor dimension: either the symbolic batch marker or a concrete size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    Batch,
    Fixed(usize),
}

impl Dim {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Dim::Fixed(n) => Some(n),
            Dim::Batch => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Batch => f.write_str("B"),
            Dim::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Dim {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Dim::Batch => serializer.serialize_str("B"),
            Dim::Fixed(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Dim {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(0) => Err(serde::de::Error::custom("dimensions must be >= 1")),
            Raw::Num(n) => Ok(Dim::Fixed(n as usize)),
            Raw::Text(s) if s == "B" => Ok(Dim::Batch),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "unknown symbolic dimension `{s}`"
            ))),
        }
    }
}

/// A tensor shape. Only the leading dimension may be the batch marker `B`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dim>", into = "Vec<Dim>")]
pub struct Shape {
    dims: Vec<Dim>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("dimension {0} is zero")]
    ZeroDim(usize),
    #[error("batch marker B may only appear as the first dimension")]
    MisplacedBatch,
}

impl Shape {
    pub fn new(dims: Vec<Dim>) -> Result<Self, ShapeError> {
        for (i, d) in dims.iter().enumerate() {
            match d {
                Dim::Fixed(0) => return Err(ShapeError::ZeroDim(i)),
                Dim::Batch if i > 0 => return Err(ShapeError::MisplacedBatch),
                _ => {}
            }
        }
        Ok(Self { dims })
    }

    /// `(B, d0, d1, ...)`
    pub fn batched(dims: &[usize]) -> Result<Self, ShapeError> {
        let mut all = Vec::with_capacity(dims.len() + 1);
        all.push(Dim::Batch);
        all.extend(dims.iter().map(|&d| Dim::Fixed(d)));
        Self::new(all)
    }

    pub fn fixed(dims: &[usize]) -> Result<Self, ShapeError> {
        Self::new(dims.iter().map(|&d| Dim::Fixed(d)).collect())
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn has_batch(&self) -> bool {
        matches!(self.dims.first(), Some(Dim::Batch))
    }

    /// Concrete sizes, or `None` when the batch marker is present.
    pub fn concrete(&self) -> Option<Vec<usize>> {
        self.dims.iter().map(|d| d.fixed()).collect()
    }

    /// Binds the batch marker to `batch`.
    pub fn bind_batch(&self, batch: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|d| match d {
                Dim::Batch => batch,
                Dim::Fixed(n) => *n,
            })
            .collect()
    }
}

impl TryFrom<Vec<Dim>> for Shape {
    type Error = ShapeError;

    fn try_from(dims: Vec<Dim>) -> Result<Self, Self::Error> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<Dim> {
    fn from(shape: Shape) -> Self {
        shape.dims
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        if self.dims.len() == 1 {
            f.write_str(",")?;
        }
        f.write_str(")")
    }
}
