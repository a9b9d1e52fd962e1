use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};
use crate::catalog::{infer_output_shape, LayerKind};
use crate::ids::NodeId;
use crate::shape::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    ArityMismatch,
    NoSource,
    MultipleSources,
    MultipleSinks,
    MissingInputShape,
    ShapeMismatch,
}

/// A pre-compile finding. An empty diagnostic list means the graph compiles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub message: String,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, node: Option<NodeId>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            kind,
            node,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error("graph has no source node")]
    NoSource,
    #[error("graph has several source nodes: {}", join_ids(.0))]
    MultipleSources(Vec<NodeId>),
    #[error("shape mismatch at {node}: {reason}")]
    ShapeMismatch { node: NodeId, reason: String },
    #[error("graph contains a cycle")]
    CycleDetected,
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl Graph {
    /// Kahn's algorithm; ready nodes leave in allocation order.
    pub fn topo_sort(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indegree: BTreeMap<NodeId, usize> =
            self.nodes.values().map(|n| (n.id, n.prior.len())).collect();
        let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| Reverse(*id))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for next in &self.nodes[&id].next {
                let d = indegree.get_mut(next).ok_or(GraphError::UnknownNode(*next))?;
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(*next));
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(GraphError::CycleDetected);
        }
        Ok(order)
    }

    pub fn sources(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.prior.is_empty())
            .map(|n| n.id)
            .collect()
    }

    pub fn sinks(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.next.is_empty())
            .map(|n| n.id)
            .collect()
    }

    /// Shape fed into the single source: the explicit one if given, else the
    /// batched `shape` parameter of an Input source.
    pub fn default_input_shape(&self) -> Option<Shape> {
        let sources = self.sources();
        let [source] = sources.as_slice() else {
            return None;
        };
        let node = &self.nodes[source];
        if node.layer_type != LayerKind::Input {
            return None;
        }
        infer_output_shape(LayerKind::Input, &node.params, &[]).ok()
    }

    /// Propagates `input_shape` from the single source through every node.
    pub fn infer_shapes(&self, input_shape: &Shape) -> Result<BTreeMap<NodeId, Shape>, InferError> {
        let sources = self.sources();
        match sources.len() {
            0 => return Err(InferError::NoSource),
            1 => {}
            _ => return Err(InferError::MultipleSources(sources)),
        }
        let order = self.topo_sort().map_err(|_| InferError::CycleDetected)?;
        let mut shapes: BTreeMap<NodeId, Shape> = BTreeMap::new();
        for id in order {
            let node = &self.nodes[&id];
            let inputs: Vec<Shape> = if node.prior.is_empty() {
                vec![input_shape.clone()]
            } else {
                node.prior.iter().map(|p| shapes[p].clone()).collect()
            };
            let out = infer_output_shape(node.layer_type, &node.params, &inputs).map_err(|e| {
                InferError::ShapeMismatch {
                    node: id,
                    reason: e.0,
                }
            })?;
            shapes.insert(id, out);
        }
        Ok(shapes)
    }

    /// Pre-compile checks. `input_shape` overrides the Input node's declared shape.
    pub fn validate(&self, input_shape: Option<&Shape>) -> Vec<Diagnostic> {
        use DiagnosticKind::*;
        let mut diags = Vec::new();
        if self.nodes.is_empty() {
            diags.push(Diagnostic::error(NoSource, None, "graph has no Input source"));
            return diags;
        }
        for node in self.nodes.values() {
            let spec = node.layer_type.spec();
            let count = node.prior.len();
            let ok = if count == 0 {
                // Sources are fed by the graph input.
                spec.min_inputs() <= 1
            } else {
                count >= spec.min_inputs() && count <= spec.arity_in
            };
            if !ok {
                diags.push(Diagnostic::error(
                    ArityMismatch,
                    Some(node.id),
                    format!(
                        "{} {} takes {} input(s) but has {count} incoming edge(s)",
                        node.layer_type, node.id, spec.arity_in
                    ),
                ));
            }
        }
        let sources = self.sources();
        if sources.len() > 1 {
            diags.push(Diagnostic::error(
                MultipleSources,
                None,
                format!("graph has {} sources ({}); exactly one is required", sources.len(), join_ids(&sources)),
            ));
        }
        let sinks = self.sinks();
        if sinks.len() > 1 {
            diags.push(Diagnostic::error(
                MultipleSinks,
                None,
                format!("graph has {} sinks ({}); exactly one output is required", sinks.len(), join_ids(&sinks)),
            ));
        }
        if !diags.is_empty() {
            return diags;
        }
        let shape = match input_shape.cloned().or_else(|| self.default_input_shape()) {
            Some(s) => s,
            None => {
                diags.push(Diagnostic::error(
                    MissingInputShape,
                    Some(sources[0]),
                    format!("source {} is not an Input node and no input shape was given", sources[0]),
                ));
                return diags;
            }
        };
        if let Err(e) = self.infer_shapes(&shape) {
            let node = match &e {
                InferError::ShapeMismatch { node, .. } => Some(*node),
                _ => None,
            };
            diags.push(Diagnostic::error(ShapeMismatch, node, e.to_string()));
        }
        diags
    }
}
