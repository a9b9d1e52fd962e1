use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// A single layer parameter value as stored on a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    IntList(Vec<i64>),
    Text(String),
}

/// Parameters keyed by name, kept in catalog schema order.
pub type ParamMap = IndexMap<String, ParamValue>;

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_int_list(&self) -> Option<&[i64]> {
        match self {
            ParamValue::IntList(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::IntList(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            ParamValue::Text(v) => write!(f, "{v:?}"),
        }
    }
}

/// Rounds a float parameter to the nearest single-precision value and returns
/// the shortest decimal that reproduces it.
///
/// Float attributes travel through ONNX as 32-bit values; storing them in this
/// canonical form keeps export/import round trips exact.
pub fn canonical_f32(value: f64) -> f64 {
    let single = value as f32;
    if !single.is_finite() {
        return single as f64;
    }
    single.to_string().parse().unwrap_or(single as f64)
}
