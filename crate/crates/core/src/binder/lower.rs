//! Lowers a graph to a flat ONNX-style node list. Shared by artifact
//! emission and the text rendering, so both describe the same program.

use std::collections::BTreeMap;

use crate::catalog::{
    self, expected_weights, float_param, int_list, int_param, text_param, LayerKind,
};
use crate::graph::{Graph, Node};
use crate::ids::NodeId;
use crate::shape::{Dim, Shape};

/// Symbolic name bound to the batch dimension in artifacts.
pub const BATCH_PARAM: &str = "batch";
/// Graph input name when the source is a compute layer rather than an Input node.
pub const DEFAULT_INPUT: &str = "input";

#[derive(Clone, Debug, PartialEq)]
pub enum Attr {
    Int(i64),
    Ints(Vec<i64>),
    Float(f32),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitData {
    /// Little-endian f32 bytes.
    F32(Vec<u8>),
    I64(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Initializer {
    pub name: String,
    pub dims: Vec<i64>,
    /// Absent when rendering a graph whose weights are not materialized.
    pub data: Option<InitData>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Value {
    pub name: String,
    pub shape: Option<Shape>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoweredNode {
    pub name: String,
    pub op_type: &'static str,
    pub inputs: Vec<String>,
    pub output: String,
    pub attrs: Vec<(&'static str, Attr)>,
    pub shape: Option<Shape>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lowered {
    pub inputs: Vec<Value>,
    pub outputs: Vec<Value>,
    pub nodes: Vec<LoweredNode>,
    pub initializers: Vec<Initializer>,
}

impl Lowered {
    /// Intermediate values with known shapes, excluding graph outputs.
    pub fn value_info(&self) -> Vec<Value> {
        self.nodes
            .iter()
            .filter(|n| !self.outputs.iter().any(|o| o.name == n.output))
            .filter_map(|n| {
                n.shape.clone().map(|s| Value {
                    name: n.output.clone(),
                    shape: Some(s),
                })
            })
            .collect()
    }
}

pub fn node_name(node: &Node) -> String {
    format!("{}_{}", node.layer_type(), node.id())
}

/// Lowers `graph` in topological order. `shapes` holds per-node output shapes
/// when known; `input_shape` is the shape of the primary graph input.
pub fn lower(
    graph: &Graph,
    order: &[NodeId],
    shapes: Option<&BTreeMap<NodeId, Shape>>,
    input_shape: Option<&Shape>,
) -> Lowered {
    let mut out = Lowered::default();
    let shape_of = |id: NodeId| shapes.and_then(|s| s.get(&id).cloned());
    let mut value_of: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut targets = Vec::new();
    let mut primary_input = None;

    for &id in order {
        let Some(node) = graph.node(id) else { continue };
        let name = node_name(node);
        let kind = node.layer_type();

        if kind == LayerKind::Input {
            if primary_input.is_none() {
                primary_input = Some(Value {
                    name: name.clone(),
                    shape: input_shape.cloned().or_else(|| shape_of(id)),
                });
            }
            value_of.insert(id, name);
            continue;
        }

        let mut inputs: Vec<String> = node
            .prior()
            .iter()
            .filter_map(|p| value_of.get(p).cloned())
            .collect();
        if node.prior().is_empty() {
            if primary_input.is_none() {
                primary_input = Some(Value {
                    name: DEFAULT_INPUT.to_string(),
                    shape: input_shape.cloned(),
                });
            }
            inputs.push(DEFAULT_INPUT.to_string());
        }

        let x = inputs.first().cloned().unwrap_or_default();
        let shape = shape_of(id);
        let params = node.params();
        let weight = |role: &str| format!("{name}.{role}");
        let weight_inputs = || -> Vec<String> {
            expected_weights(kind, params)
                .into_iter()
                .map(|(role, _)| weight(role))
                .collect()
        };
        for (role, dims) in expected_weights(kind, params) {
            out.initializers.push(Initializer {
                name: weight(role),
                dims: dims.iter().map(|&d| d as i64).collect(),
                data: node
                    .weight(role)
                    .map(|t| InitData::F32(t.data().to_vec())),
            });
        }

        let mut simple = |op_type: &'static str, extra: Vec<String>, attrs: Vec<(&'static str, Attr)>| {
            let mut all = vec![x.clone()];
            all.extend(extra);
            out.nodes.push(LoweredNode {
                name: name.clone(),
                op_type,
                inputs: all,
                output: name.clone(),
                attrs,
                shape: shape.clone(),
            });
        };

        match kind {
            LayerKind::Input => unreachable!("handled above"),
            LayerKind::Conv2d => simple("Conv", weight_inputs(), window_attrs(params, false)),
            LayerKind::Linear => simple(
                "Gemm",
                weight_inputs(),
                vec![
                    ("alpha", Attr::Float(1.0)),
                    ("beta", Attr::Float(1.0)),
                    ("transB", Attr::Int(1)),
                ],
            ),
            LayerKind::MaxPool2d => simple("MaxPool", vec![], window_attrs(params, false)),
            LayerKind::AvgPool2d => simple("AveragePool", vec![], window_attrs(params, true)),
            LayerKind::ReLU => simple("Relu", vec![], vec![]),
            LayerKind::Sigmoid => simple("Sigmoid", vec![], vec![]),
            LayerKind::Tanh => simple("Tanh", vec![], vec![]),
            LayerKind::Identity => simple("Identity", vec![], vec![]),
            LayerKind::BatchNorm2d => simple(
                "BatchNormalization",
                weight_inputs(),
                vec![
                    ("epsilon", Attr::Float(float_param(params, "eps") as f32)),
                    ("momentum", Attr::Float(float_param(params, "momentum") as f32)),
                ],
            ),
            LayerKind::Dropout => {
                let ratio = weight("ratio");
                let p = float_param(params, "p") as f32;
                out.initializers.push(Initializer {
                    name: ratio.clone(),
                    dims: vec![],
                    data: Some(InitData::F32(p.to_le_bytes().to_vec())),
                });
                simple("Dropout", vec![ratio], vec![]);
            }
            LayerKind::Flatten => {
                let start = int_param(params, "start_dim");
                if start == 1 {
                    simple("Flatten", vec![], vec![("axis", Attr::Int(1))]);
                } else {
                    let target = weight("shape");
                    let mut spec = vec![0i64; start as usize];
                    spec.push(-1);
                    out.initializers.push(Initializer {
                        name: target.clone(),
                        dims: vec![spec.len() as i64],
                        data: Some(InitData::I64(spec)),
                    });
                    simple("Reshape", vec![target], vec![]);
                }
            }
            LayerKind::MSELoss | LayerKind::L1Loss => {
                let pred_shape = match node.prior().first() {
                    Some(p) => shape_of(*p),
                    None => input_shape.cloned(),
                };
                let target = match inputs.get(1) {
                    Some(t) => t.clone(),
                    None => {
                        let t = weight("target");
                        targets.push(Value {
                            name: t.clone(),
                            shape: pred_shape.clone(),
                        });
                        t
                    }
                };
                let target_shape = node
                    .prior()
                    .get(1)
                    .and_then(|p| shape_of(*p))
                    .or_else(|| pred_shape.clone());
                let diff_shape = match (&pred_shape, &target_shape) {
                    (Some(a), Some(b)) => catalog::broadcast(a, b).ok(),
                    _ => None,
                };
                let scalar = pred_shape.as_ref().map(|_| Shape::new(vec![]).expect("rank 0"));
                let diff = format!("{name}.diff");
                let err = format!("{name}.err");
                let reduced = format!("{name}.reduced");
                let shape_init = weight("shape");
                let mut push = |suffix: &str, op_type, inputs, output: &str, attrs, shape| {
                    out.nodes.push(LoweredNode {
                        name: format!("{name}/{suffix}"),
                        op_type,
                        inputs,
                        output: output.to_string(),
                        attrs,
                        shape,
                    })
                };
                push("Sub", "Sub", vec![x.clone(), target], &diff, vec![], diff_shape.clone());
                if kind == LayerKind::MSELoss {
                    push("Mul", "Mul", vec![diff.clone(), diff.clone()], &err, vec![], diff_shape);
                } else {
                    push("Abs", "Abs", vec![diff.clone()], &err, vec![], diff_shape);
                }
                let reduce = if text_param(params, "reduction") == "sum" {
                    "ReduceSum"
                } else {
                    "ReduceMean"
                };
                push(
                    reduce,
                    reduce,
                    vec![err],
                    &reduced,
                    vec![("keepdims", Attr::Int(0))],
                    scalar,
                );
                push(
                    "Reshape",
                    "Reshape",
                    vec![reduced, shape_init.clone()],
                    &name,
                    vec![],
                    shape.clone(),
                );
                out.initializers.push(Initializer {
                    name: shape_init,
                    dims: vec![1],
                    data: Some(InitData::I64(vec![1])),
                });
            }
        }
        value_of.insert(id, name);
    }

    out.inputs.extend(primary_input);
    out.inputs.extend(targets);
    for sink in graph.sinks() {
        if let Some(name) = value_of.get(&sink) {
            out.outputs.push(Value {
                name: name.clone(),
                shape: shape_of(sink),
            });
        }
    }
    out
}

fn window_attrs(params: &crate::params::ParamMap, avg: bool) -> Vec<(&'static str, Attr)> {
    let k = int_list(params, "kernel_size");
    let s = int_list(params, "stride");
    let p = int_list(params, "padding");
    let mut attrs = Vec::new();
    if avg {
        attrs.push(("count_include_pad", Attr::Int(0)));
    }
    attrs.push(("kernel_shape", Attr::Ints(k)));
    attrs.push(("pads", Attr::Ints(vec![p[0], p[1], p[0], p[1]])));
    attrs.push(("strides", Attr::Ints(s)));
    attrs
}

/// `[B,8,28,28]` style rendering; `?` when unknown.
pub fn render_shape(shape: Option<&Shape>) -> String {
    match shape {
        None => "[?]".to_string(),
        Some(s) => {
            let dims: Vec<String> = s
                .dims()
                .iter()
                .map(|d| match d {
                    Dim::Batch => "B".to_string(),
                    Dim::Fixed(n) => n.to_string(),
                })
                .collect();
            format!("[{}]", dims.join(","))
        }
    }
}

pub fn render_attr(attr: &Attr) -> String {
    match attr {
        Attr::Int(v) => v.to_string(),
        Attr::Float(v) => v.to_string(),
        Attr::Ints(vs) => format!(
            "[{}]",
            vs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        ),
    }
}

/// Shapes for text rendering: known only when the graph validates.
pub fn shapes_if_valid(graph: &Graph) -> (Option<Shape>, Option<BTreeMap<NodeId, Shape>>) {
    if graph.validate(None).iter().any(|d| d.is_error()) {
        return (None, None);
    }
    let Some(input) = graph.default_input_shape() else {
        return (None, None);
    };
    let shapes = graph.infer_shapes(&input).ok();
    (Some(input), shapes)
}
