//! Wrapper around `oracle/oracle.py` (onnx checker, strict shape inference,
//! onnxruntime). Many models go through one interpreter start.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::reference::Array;

pub const PYTHON_ENV: &str = "SKETCH_PYTHON";
const SCRIPT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/oracle/oracle.py");

#[derive(Debug)]
pub enum OracleError {
    /// Python or its onnx/onnxruntime packages are missing.
    Unavailable(String),
    Protocol(String),
}

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleError::Unavailable(m) => write!(
                f,
                "ONNX oracle unavailable ({m}); install it with `pip install onnx onnxruntime numpy`"
            ),
            OracleError::Protocol(m) => write!(f, "ONNX oracle protocol error: {m}"),
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(Clone, Debug, Default)]
pub struct OracleJob {
    pub model: Vec<u8>,
    /// Inputs to evaluate with onnxruntime; `None` only checks and infers.
    pub run: Option<BTreeMap<String, Array>>,
}

/// Inferred dimension: a concrete size or a symbolic name.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum OracleDim {
    Value(usize),
    Param(String),
    Unknown(Option<()>),
}

#[derive(Clone, Debug, Deserialize)]
pub struct OracleResult {
    pub ok: bool,
    #[serde(default)]
    pub stage: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub shapes: BTreeMap<String, Option<Vec<OracleDim>>>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub op_types: Vec<String>,
    #[serde(default)]
    pub values: BTreeMap<String, Array>,
}

impl OracleResult {
    /// Inferred shape of `name` rendered like core `Shape` display, e.g. `(B,16,14,14)`.
    pub fn shape_string(&self, name: &str) -> Option<String> {
        let dims = self.shapes.get(name)?.as_ref()?;
        let parts: Vec<String> = dims
            .iter()
            .map(|d| match d {
                OracleDim::Value(n) => n.to_string(),
                OracleDim::Param(p) if p == "batch" => "B".to_string(),
                OracleDim::Param(p) => p.clone(),
                OracleDim::Unknown(_) => "?".to_string(),
            })
            .collect();
        Some(if parts.len() == 1 {
            format!("({},)", parts[0])
        } else {
            format!("({})", parts.join(","))
        })
    }
}

#[derive(Serialize)]
struct WireJob<'a> {
    model: String,
    run: Option<&'a BTreeMap<String, Array>>,
}

#[derive(Deserialize)]
struct WireResponse {
    results: Vec<OracleResult>,
}

#[derive(Clone, Debug)]
pub struct Oracle {
    python: String,
}

impl Oracle {
    /// Locates a Python with `onnx` and `onnxruntime` importable.
    pub fn new() -> Result<Self, OracleError> {
        let python = std::env::var(PYTHON_ENV).unwrap_or_else(|_| "python3".to_string());
        let probe = Command::new(&python)
            .args(["-c", "import onnx, onnxruntime, numpy"])
            .output()
            .map_err(|e| OracleError::Unavailable(format!("cannot run `{python}`: {e}")))?;
        if !probe.status.success() {
            return Err(OracleError::Unavailable(
                String::from_utf8_lossy(&probe.stderr).trim().to_string(),
            ));
        }
        Ok(Self { python })
    }

    pub fn evaluate(&self, jobs: &[OracleJob]) -> Result<Vec<OracleResult>, OracleError> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let wire: Vec<WireJob<'_>> = jobs
            .iter()
            .map(|j| WireJob {
                model: b64.encode(&j.model),
                run: j.run.as_ref(),
            })
            .collect();
        let request = serde_json::to_vec(&serde_json::json!({ "jobs": wire }))
            .map_err(|e| OracleError::Protocol(e.to_string()))?;

        let mut child = Command::new(&self.python)
            .arg(SCRIPT)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&request));
        let output = child
            .wait_with_output()
            .map_err(|e| OracleError::Protocol(e.to_string()))?;
        writer
            .join()
            .expect("writer thread")
            .map_err(|e| OracleError::Protocol(format!("writing request: {e}")))?;
        if !output.status.success() {
            return Err(OracleError::Protocol(
                String::from_utf8_lossy(&output.stderr).into_owned(),
            ));
        }
        let response: WireResponse = serde_json::from_slice(&output.stdout)
            .map_err(|e| OracleError::Protocol(e.to_string()))?;
        if response.results.len() != jobs.len() {
            return Err(OracleError::Protocol(format!(
                "{} results for {} jobs",
                response.results.len(),
                jobs.len()
            )));
        }
        Ok(response.results)
    }

    pub fn check(&self, model: &[u8]) -> Result<OracleResult, OracleError> {
        let job = OracleJob {
            model: model.to_vec(),
            run: None,
        };
        Ok(self.evaluate(&[job])?.remove(0))
    }
}
