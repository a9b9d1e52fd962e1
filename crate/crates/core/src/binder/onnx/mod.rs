//! The `onnx` kernel: opset-13 / IR-7 protobuf export and import.

mod import;
pub mod proto;

use std::collections::BTreeMap;

use prost::Message;

use super::lower::{self, Attr, InitData, Lowered, Value, BATCH_PARAM};
use super::{Artifact, BinderError, Capabilities, ExportJob, Kernel, KernelDescriptor};
use crate::graph::Graph;
use crate::shape::{Dim, Shape};
use proto::tensor_shape_proto::{dimension, Dimension};
use proto::{
    data_type, type_proto, AttributeProto, AttributeType, GraphProto, ModelProto, NodeProto,
    OperatorSetIdProto, StringStringEntryProto, TensorProto, TensorShapeProto, TypeProto,
    ValueInfoProto,
};

pub const KERNEL_ID: &str = "onnx";
pub const OPSET: i64 = 13;
pub const IR_VERSION: i64 = 7;

pub const META_POSITIONS: &str = "sketch.positions";
pub const META_GROUPS: &str = "sketch.groups";
pub const META_SEED: &str = "sketch.seed";

#[derive(Clone, Copy, Debug, Default)]
pub struct OnnxKernel;

impl OnnxKernel {
    pub fn descriptor() -> KernelDescriptor {
        KernelDescriptor {
            kernel_id: KERNEL_ID.to_string(),
            capabilities: Capabilities {
                export: true,
                import: true,
            },
            artifact_extension: "onnx".to_string(),
        }
    }
}

impl Kernel for OnnxKernel {
    fn export(&self, job: &ExportJob<'_>) -> Result<Artifact, BinderError> {
        if let Some(opset) = job.opset.filter(|&o| o != OPSET) {
            return Err(BinderError::UnsupportedOpset {
                kernel: KERNEL_ID.to_string(),
                opset,
            });
        }
        let lowered = lower::lower(job.graph, &job.order, Some(&job.shapes), Some(&job.input_shape));
        let model = build_model(job.graph, &lowered)?;
        Ok(Artifact {
            bytes: model.encode_to_vec(),
            sidecars: vec![],
        })
    }

    fn import(&self, bytes: &[u8]) -> Result<Graph, BinderError> {
        import::import(bytes)
    }

    fn to_text(&self, graph: &Graph) -> String {
        let order = graph.topo_sort().unwrap_or_default();
        let (input, shapes) = lower::shapes_if_valid(graph);
        let lowered = lower::lower(graph, &order, shapes.as_ref(), input.as_ref());
        render_text(&lowered)
    }
}

fn build_model(graph: &Graph, lowered: &Lowered) -> Result<ModelProto, BinderError> {
    let initializer = lowered
        .initializers
        .iter()
        .map(|init| {
            let mut t = TensorProto {
                name: Some(init.name.clone()),
                dims: init.dims.clone(),
                ..Default::default()
            };
            match &init.data {
                Some(InitData::F32(bytes)) => {
                    t.data_type = Some(data_type::FLOAT);
                    t.raw_data = Some(bytes.clone());
                }
                Some(InitData::I64(values)) => {
                    t.data_type = Some(data_type::INT64);
                    t.raw_data = Some(values.iter().flat_map(|v| v.to_le_bytes()).collect());
                }
                None => {
                    return Err(BinderError::MalformedArtifact(format!(
                        "initializer {} has no data",
                        init.name
                    )))
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let node = lowered
        .nodes
        .iter()
        .map(|n| NodeProto {
            input: n.inputs.clone(),
            output: vec![n.output.clone()],
            name: Some(n.name.clone()),
            op_type: Some(n.op_type.to_string()),
            attribute: n.attrs.iter().map(|(k, v)| attribute(k, v)).collect(),
            ..Default::default()
        })
        .collect();

    let graph_proto = GraphProto {
        node,
        name: Some("sketch".to_string()),
        initializer,
        input: lowered.inputs.iter().map(value_info).collect(),
        output: lowered.outputs.iter().map(value_info).collect(),
        value_info: lowered.value_info().iter().map(value_info).collect(),
        ..Default::default()
    };

    Ok(ModelProto {
        ir_version: Some(IR_VERSION),
        producer_name: Some("sketch".to_string()),
        producer_version: Some(env!("CARGO_PKG_VERSION").to_string()),
        graph: Some(graph_proto),
        opset_import: vec![OperatorSetIdProto {
            domain: Some(String::new()),
            version: Some(OPSET),
        }],
        metadata_props: metadata(graph),
        ..Default::default()
    })
}

fn metadata(graph: &Graph) -> Vec<StringStringEntryProto> {
    let positions: BTreeMap<String, [f64; 2]> = graph
        .nodes()
        .map(|n| (n.id().to_string(), n.position().into()))
        .collect();
    let groups: Vec<_> = graph.groups().collect();
    let entry = |k: &str, v: String| StringStringEntryProto {
        key: Some(k.to_string()),
        value: Some(v),
    };
    vec![
        entry(
            META_POSITIONS,
            serde_json::to_string(&positions).expect("positions serialize"),
        ),
        entry(
            META_GROUPS,
            serde_json::to_string(&groups).expect("groups serialize"),
        ),
        entry(META_SEED, graph.seed().to_string()),
    ]
}

fn attribute(name: &str, value: &Attr) -> AttributeProto {
    let mut a = AttributeProto {
        name: Some(name.to_string()),
        ..Default::default()
    };
    match value {
        Attr::Int(v) => {
            a.i = Some(*v);
            a.r#type = Some(AttributeType::Int as i32);
        }
        Attr::Ints(vs) => {
            a.ints = vs.clone();
            a.r#type = Some(AttributeType::Ints as i32);
        }
        Attr::Float(v) => {
            a.f = Some(*v);
            a.r#type = Some(AttributeType::Float as i32);
        }
    }
    a
}

fn value_info(v: &Value) -> ValueInfoProto {
    let shape = v.shape.as_ref().map(|s| TensorShapeProto {
        dim: s.dims().iter().map(dimension).collect(),
    });
    ValueInfoProto {
        name: Some(v.name.clone()),
        r#type: Some(TypeProto {
            denotation: None,
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: Some(data_type::FLOAT),
                shape,
            })),
        }),
        doc_string: None,
    }
}

fn dimension(d: &Dim) -> Dimension {
    Dimension {
        denotation: None,
        value: Some(match d {
            Dim::Batch => dimension::Value::DimParam(BATCH_PARAM.to_string()),
            Dim::Fixed(n) => dimension::Value::DimValue(*n as i64),
        }),
    }
}

/// Reads a value's shape back; `None` when absent or not expressible.
pub(crate) fn shape_of(v: &ValueInfoProto) -> Option<Shape> {
    let Some(type_proto::Value::TensorType(t)) = v.r#type.as_ref()?.value.as_ref() else {
        return None;
    };
    let dims = t
        .shape
        .as_ref()?
        .dim
        .iter()
        .map(|d| match d.value.as_ref()? {
            dimension::Value::DimParam(_) => Some(Dim::Batch),
            dimension::Value::DimValue(n) if *n > 0 => Some(Dim::Fixed(*n as usize)),
            dimension::Value::DimValue(_) => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Shape::new(dims).ok()
}

/// Human-readable listing: one line per operator in execution order.
pub fn render_text(lowered: &Lowered) -> String {
    let mut out = format!("# onnx opset {OPSET}, ir {IR_VERSION}\n");
    for v in &lowered.inputs {
        out.push_str(&format!(
            "# input  {} {}\n",
            v.name,
            lower::render_shape(v.shape.as_ref())
        ));
    }
    for v in &lowered.outputs {
        out.push_str(&format!(
            "# output {} {}\n",
            v.name,
            lower::render_shape(v.shape.as_ref())
        ));
    }
    for n in &lowered.nodes {
        let attrs: Vec<String> = n
            .attrs
            .iter()
            .map(|(k, v)| format!("{k}={}", lower::render_attr(v)))
            .collect();
        let attrs = if attrs.is_empty() {
            String::new()
        } else {
            format!(" {}", attrs.join(" "))
        };
        out.push_str(&format!(
            "{}: {}({}){} -> {} {}\n",
            n.name,
            n.op_type,
            n.inputs.join(", "),
            attrs,
            n.output,
            lower::render_shape(n.shape.as_ref())
        ));
    }
    out
}
