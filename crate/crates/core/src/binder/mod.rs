//! The compiler stage: a registry of kernels that turn a [`Graph`] into a
//! framework artifact (and, where supported, back again).

mod lower;
pub mod onnx;
pub mod pytorch;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::Serialize;

use crate::catalog::LayerKind;
use crate::graph::{Diagnostic, Graph};
use crate::ids::NodeId;
use crate::shape::Shape;
use crate::telemetry::{LogEvent, Telemetry};

pub use onnx::OnnxKernel;
pub use pytorch::PytorchSourceKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub export: bool,
    pub import: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct KernelDescriptor {
    pub kernel_id: String,
    pub capabilities: Capabilities,
    pub artifact_extension: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExportOptions {
    pub opset: Option<i64>,
    /// Overrides the Input node's declared shape.
    pub input_shape: Option<Shape>,
}

/// Extra file written next to the main artifact, named `<artifact><suffix>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sidecar {
    pub suffix: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub bytes: Vec<u8>,
    pub sidecars: Vec<Sidecar>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompileResult {
    pub artifact_bytes: Vec<u8>,
    pub sidecars: Vec<Sidecar>,
    pub text_repr: String,
    pub diagnostics: Vec<Diagnostic>,
    pub input_shape: Shape,
}

/// Everything a kernel needs to emit an artifact for a validated graph.
pub struct ExportJob<'a> {
    /// The graph with every weight materialized.
    pub graph: &'a Graph,
    pub order: Vec<NodeId>,
    pub shapes: BTreeMap<NodeId, Shape>,
    pub input_shape: Shape,
    pub opset: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinderError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{0}` is already registered")]
    DuplicateKernel(String),
    #[error("kernel `{0}` cannot export")]
    ExportNotSupported(String),
    #[error("kernel `{0}` cannot import")]
    ImportNotSupported(String),
    #[error("graph failed validation: {}", summarize(.0))]
    ValidationFailed(Vec<Diagnostic>),
    #[error("kernel `{kernel}` does not support layer type {type_name}")]
    UnsupportedLayer { kernel: String, type_name: String },
    #[error("kernel `{kernel}` does not support opset {opset}")]
    UnsupportedOpset { kernel: String, opset: i64 },
    #[error("malformed artifact: {0}")]
    MalformedArtifact(String),
    #[error("unsupported operator {0}")]
    UnsupportedOperator(String),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

impl BinderError {
    pub fn code(&self) -> &'static str {
        match self {
            BinderError::UnknownKernel(_) => "unknown_kernel",
            BinderError::DuplicateKernel(_) => "duplicate_kernel",
            BinderError::ExportNotSupported(_) => "export_not_supported",
            BinderError::ImportNotSupported(_) => "import_not_supported",
            BinderError::ValidationFailed(_) => "validation_failed",
            BinderError::UnsupportedLayer { .. } => "unsupported_layer",
            BinderError::UnsupportedOpset { .. } => "unsupported_opset",
            BinderError::MalformedArtifact(_) => "malformed_artifact",
            BinderError::UnsupportedOperator(_) => "unsupported_operator",
        }
    }
}

/// A compile target. Kernels are stateless once registered.
pub trait Kernel: Send + Sync {
    fn supports(&self, _kind: LayerKind) -> bool {
        true
    }

    fn export(&self, job: &ExportJob<'_>) -> Result<Artifact, BinderError>;

    fn import(&self, _bytes: &[u8]) -> Result<Graph, BinderError>;

    /// Deterministic text rendering for the editor's text pane.
    fn to_text(&self, graph: &Graph) -> String;
}

struct Entry {
    descriptor: KernelDescriptor,
    kernel: Box<dyn Kernel>,
}

/// Kernel registry and dispatch.
pub struct Registry {
    kernels: IndexMap<String, Entry>,
    telemetry: Telemetry,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("kernels", &self.kernels.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub fn new(telemetry: Telemetry) -> Self {
        Self {
            kernels: IndexMap::new(),
            telemetry,
        }
    }

    /// Registry with the `onnx` and `pytorch-src` kernels.
    pub fn with_builtin_kernels(telemetry: Telemetry) -> Self {
        let mut registry = Self::new(telemetry);
        registry
            .register_kernel(OnnxKernel::descriptor(), Box::new(OnnxKernel))
            .expect("fresh registry");
        registry
            .register_kernel(PytorchSourceKernel::descriptor(), Box::new(PytorchSourceKernel))
            .expect("fresh registry");
        registry
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn register_kernel(
        &mut self,
        descriptor: KernelDescriptor,
        kernel: Box<dyn Kernel>,
    ) -> Result<(), BinderError> {
        let id = descriptor.kernel_id.clone();
        if self.kernels.contains_key(&id) {
            let err = BinderError::DuplicateKernel(id.clone());
            self.telemetry
                .log(LogEvent::error("kernel.register", &err).with("kernel", &id));
            return Err(err);
        }
        self.telemetry.log(
            LogEvent::info("kernel.register")
                .with("kernel", &id)
                .with("export", descriptor.capabilities.export)
                .with("import", descriptor.capabilities.import),
        );
        self.kernels.insert(id, Entry { descriptor, kernel });
        Ok(())
    }

    pub fn list(&self) -> Vec<KernelDescriptor> {
        self.kernels.values().map(|e| e.descriptor.clone()).collect()
    }

    pub fn descriptor(&self, kernel_id: &str) -> Option<&KernelDescriptor> {
        self.kernels.get(kernel_id).map(|e| &e.descriptor)
    }

    fn entry(&self, kernel_id: &str) -> Result<&Entry, BinderError> {
        self.kernels
            .get(kernel_id)
            .ok_or_else(|| BinderError::UnknownKernel(kernel_id.to_string()))
    }

    pub fn export_model(
        &self,
        graph: &Graph,
        kernel_id: &str,
        options: &ExportOptions,
    ) -> Result<CompileResult, BinderError> {
        let result = self.export_inner(graph, kernel_id, options);
        match &result {
            Ok(r) => self.telemetry.log(
                LogEvent::info("binder.export")
                    .with("kernel", kernel_id)
                    .with("nodes", graph.len())
                    .with("bytes", r.artifact_bytes.len()),
            ),
            Err(e) => self.telemetry.log(
                LogEvent::error("binder.export", e)
                    .with("kernel", kernel_id)
                    .with("code", e.code()),
            ),
        }
        result
    }

    fn export_inner(
        &self,
        graph: &Graph,
        kernel_id: &str,
        options: &ExportOptions,
    ) -> Result<CompileResult, BinderError> {
        let entry = self.entry(kernel_id)?;
        if !entry.descriptor.capabilities.export {
            return Err(BinderError::ExportNotSupported(kernel_id.to_string()));
        }
        if let Some(node) = graph.nodes().find(|n| !entry.kernel.supports(n.layer_type())) {
            return Err(BinderError::UnsupportedLayer {
                kernel: kernel_id.to_string(),
                type_name: node.layer_type().to_string(),
            });
        }
        let diagnostics = graph.validate(options.input_shape.as_ref());
        if diagnostics.iter().any(Diagnostic::is_error) {
            return Err(BinderError::ValidationFailed(diagnostics));
        }
        let input_shape = options
            .input_shape
            .clone()
            .or_else(|| graph.default_input_shape())
            .ok_or_else(|| BinderError::ValidationFailed(diagnostics.clone()))?;
        let materialized = graph.with_materialized_weights();
        let shapes = materialized
            .infer_shapes(&input_shape)
            .map_err(|e| BinderError::ValidationFailed(vec![shape_diag(e)]))?;
        let order = materialized
            .topo_sort()
            .map_err(|_| BinderError::ValidationFailed(vec![]))?;
        let job = ExportJob {
            graph: &materialized,
            order,
            shapes,
            input_shape: input_shape.clone(),
            opset: options.opset,
        };
        let artifact = entry.kernel.export(&job)?;
        debug_assert!(!artifact.bytes.is_empty());
        Ok(CompileResult {
            artifact_bytes: artifact.bytes,
            sidecars: artifact.sidecars,
            text_repr: entry.kernel.to_text(graph),
            diagnostics,
            input_shape,
        })
    }

    /// Converts an artifact back into a graph. Aborts without a partial graph
    /// on the first unsupported construct.
    pub fn import_model(&self, kernel_id: &str, bytes: &[u8]) -> Result<Graph, BinderError> {
        let result = self.entry(kernel_id).and_then(|entry| {
            if !entry.descriptor.capabilities.import {
                return Err(BinderError::ImportNotSupported(kernel_id.to_string()));
            }
            entry.kernel.import(bytes)
        });
        match &result {
            Ok(g) => self.telemetry.log(
                LogEvent::info("binder.import")
                    .with("kernel", kernel_id)
                    .with("nodes", g.len())
                    .with("bytes", bytes.len()),
            ),
            Err(e) => self.telemetry.log(
                LogEvent::error("import.fail", e)
                    .with("kernel", kernel_id)
                    .with("code", e.code()),
            ),
        }
        result
    }

    pub fn to_text(&self, graph: &Graph, kernel_id: &str) -> Result<String, BinderError> {
        Ok(self.entry(kernel_id)?.kernel.to_text(graph))
    }
}

fn shape_diag(e: crate::graph::InferError) -> Diagnostic {
    use crate::graph::{DiagnosticKind, InferError, Severity};
    let node = match &e {
        InferError::ShapeMismatch { node, .. } => Some(*node),
        _ => None,
    };
    Diagnostic {
        severity: Severity::Error,
        kind: DiagnosticKind::ShapeMismatch,
        node,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_listing() {
        let mut r = Registry::new(Telemetry::disabled());
        assert!(r.list().is_empty());
        r.register_kernel(OnnxKernel::descriptor(), Box::new(OnnxKernel)).unwrap();
        let ids: Vec<_> = r.list().into_iter().map(|d| d.kernel_id).collect();
        assert_eq!(ids, ["onnx"]);
        assert_eq!(
            r.register_kernel(OnnxKernel::descriptor(), Box::new(OnnxKernel)),
            Err(BinderError::DuplicateKernel("onnx".into()))
        );
    }

    #[test]
    fn unknown_kernel() {
        let r = Registry::with_builtin_kernels(Telemetry::disabled());
        let g = Graph::new(0);
        assert_eq!(
            r.export_model(&g, "tflite", &ExportOptions::default()),
            Err(BinderError::UnknownKernel("tflite".into()))
        );
        assert_eq!(
            r.to_text(&g, "tflite"),
            Err(BinderError::UnknownKernel("tflite".into()))
        );
        assert_eq!(
            r.import_model("tflite", &[]),
            Err(BinderError::UnknownKernel("tflite".into()))
        );
    }

    #[test]
    fn pytorch_source_cannot_import() {
        let r = Registry::with_builtin_kernels(Telemetry::disabled());
        assert_eq!(
            r.import_model("pytorch-src", b"anything"),
            Err(BinderError::ImportNotSupported("pytorch-src".into()))
        );
    }

    #[test]
    fn empty_graph_fails_validation() {
        let r = Registry::with_builtin_kernels(Telemetry::disabled());
        assert!(matches!(
            r.export_model(&Graph::new(0), "onnx", &ExportOptions::default()),
            Err(BinderError::ValidationFailed(_))
        ));
    }
}
