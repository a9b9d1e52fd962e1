//! Core engine of the Sketch network editor.
//!
//! A canvas is a [`Graph`]: an adjacency-list DAG of catalog layers. Graphs are
//! compiled by kernels registered with the [`binder`], persisted and
//! checkpointed by [`session`], and every notable event is written to the
//! [`telemetry`] log.

pub mod binder;
pub mod catalog;
pub mod graph;
pub mod ids;
pub mod params;
pub mod session;
pub mod shape;
pub mod telemetry;
pub mod tensor;
pub mod weights;

pub use catalog::{LayerKind, LayerSpec};
pub use graph::{Diagnostic, DiagnosticKind, Graph, GraphError, Group, Node, Position};
pub use ids::{GroupId, NodeId};
pub use params::{ParamMap, ParamValue};
pub use shape::{Dim, Shape};
pub use tensor::{DType, TensorValue};
