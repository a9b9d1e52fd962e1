//! Test support for Sketch: an external ONNX oracle, a brute-force reference
//! evaluator and random graph generators.

pub mod gen;
pub mod oracle;
pub mod reference;

pub use oracle::{Oracle, OracleError, OracleJob, OracleResult};
pub use reference::{forward, Array};
