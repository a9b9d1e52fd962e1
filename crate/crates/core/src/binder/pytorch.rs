//! The `pytorch-src` kernel: emits a self-contained `nn.Module` definition.
//! Weights travel in a `.weights` sidecar keyed by state-dict name.

use std::fmt::Write as _;

use super::{Artifact, BinderError, Capabilities, ExportJob, Kernel, KernelDescriptor, Sidecar};
use crate::catalog::{bool_param, float_param, int_list, int_param, text_param, LayerKind};
use crate::graph::{Graph, Node};
use crate::ids::NodeId;
use crate::session::sidecar;
use crate::tensor::TensorValue;

pub const KERNEL_ID: &str = "pytorch-src";
pub const SIDECAR_SUFFIX: &str = ".weights";

#[derive(Clone, Copy, Debug, Default)]
pub struct PytorchSourceKernel;

impl PytorchSourceKernel {
    pub fn descriptor() -> KernelDescriptor {
        KernelDescriptor {
            kernel_id: KERNEL_ID.to_string(),
            capabilities: Capabilities {
                export: true,
                import: false,
            },
            artifact_extension: "py".to_string(),
        }
    }
}

impl Kernel for PytorchSourceKernel {
    fn export(&self, job: &ExportJob<'_>) -> Result<Artifact, BinderError> {
        let source = render(job.graph, &job.order);
        let mut entries: Vec<(String, TensorValue)> = Vec::new();
        for &id in &job.order {
            let node = job.graph.node(id).expect("order lists graph nodes");
            for (role, t) in node.weights() {
                entries.push((state_key(node, role), t.as_ref().clone()));
            }
        }
        Ok(Artifact {
            bytes: source.into_bytes(),
            sidecars: vec![Sidecar {
                suffix: SIDECAR_SUFFIX.to_string(),
                bytes: sidecar::encode(&entries),
            }],
        })
    }

    fn import(&self, _bytes: &[u8]) -> Result<Graph, BinderError> {
        Err(BinderError::ImportNotSupported(KERNEL_ID.to_string()))
    }

    fn to_text(&self, graph: &Graph) -> String {
        render(graph, &graph.topo_sort().unwrap_or_default())
    }
}

fn attr_name(node: &Node) -> String {
    format!("{}_{}", node.layer_type().name().to_lowercase(), node.id())
}

fn state_key(node: &Node, role: &str) -> String {
    let field = match (node.layer_type(), role) {
        (LayerKind::BatchNorm2d, "scale") => "weight",
        _ => role,
    };
    format!("{}.{field}", attr_name(node))
}

fn pair(v: &[i64]) -> String {
    format!("({}, {})", v[0], v[1])
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn module_ctor(node: &Node) -> Option<String> {
    let p = node.params();
    Some(match node.layer_type() {
        LayerKind::Input => return None,
        LayerKind::Conv2d => format!(
            "nn.Conv2d({}, {}, kernel_size={}, stride={}, padding={}, bias={})",
            int_param(p, "in_channels"),
            int_param(p, "out_channels"),
            pair(&int_list(p, "kernel_size")),
            pair(&int_list(p, "stride")),
            pair(&int_list(p, "padding")),
            py_bool(bool_param(p, "bias"))
        ),
        LayerKind::Linear => format!(
            "nn.Linear({}, {}, bias={})",
            int_param(p, "in_features"),
            int_param(p, "out_features"),
            py_bool(bool_param(p, "bias"))
        ),
        LayerKind::MaxPool2d => format!(
            "nn.MaxPool2d(kernel_size={}, stride={}, padding={})",
            pair(&int_list(p, "kernel_size")),
            pair(&int_list(p, "stride")),
            pair(&int_list(p, "padding"))
        ),
        LayerKind::AvgPool2d => format!(
            "nn.AvgPool2d(kernel_size={}, stride={}, padding={}, count_include_pad=False)",
            pair(&int_list(p, "kernel_size")),
            pair(&int_list(p, "stride")),
            pair(&int_list(p, "padding"))
        ),
        LayerKind::ReLU => "nn.ReLU()".to_string(),
        LayerKind::Sigmoid => "nn.Sigmoid()".to_string(),
        LayerKind::Tanh => "nn.Tanh()".to_string(),
        LayerKind::Identity => "nn.Identity()".to_string(),
        LayerKind::BatchNorm2d => format!(
            "nn.BatchNorm2d({}, eps={:?}, momentum={:?})",
            int_param(p, "num_features"),
            float_param(p, "eps"),
            float_param(p, "momentum")
        ),
        LayerKind::Dropout => format!("nn.Dropout(p={:?})", float_param(p, "p")),
        LayerKind::Flatten => format!("nn.Flatten(start_dim={})", int_param(p, "start_dim")),
        LayerKind::MSELoss => format!("nn.MSELoss(reduction={:?})", text_param(p, "reduction")),
        LayerKind::L1Loss => format!("nn.L1Loss(reduction={:?})", text_param(p, "reduction")),
    })
}

const LOADER: &str = r#"

def load_sketch_weights(model, path):
    """Loads a SKWT weight file written next to this module."""
    import struct

    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != b"SKWT":
        raise ValueError("not a SKWT weight file")
    _version, count = struct.unpack_from("<II", data, 4)
    offset = 12
    state = {}
    for _ in range(count):
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset:offset + length].decode("utf-8")
        offset += length
        _dtype, ndim = data[offset], data[offset + 1]
        offset += 2
        dims = struct.unpack_from("<%dI" % ndim, data, offset)
        offset += 4 * ndim
        numel = 1
        for d in dims:
            numel *= d
        values = struct.unpack_from("<%df" % numel, data, offset)
        offset += 4 * numel
        state[name] = torch.tensor(values, dtype=torch.float32).reshape(dims)
    model.load_state_dict(state, strict=False)
    return model
"#;

/// Python source for `graph`; `order` is a topological order of its nodes.
pub fn render(graph: &Graph, order: &[NodeId]) -> String {
    let nodes: Vec<&Node> = order.iter().filter_map(|&id| graph.node(id)).collect();
    let var = |id: NodeId| -> String {
        let n = graph.node(id).expect("edge endpoints exist");
        if n.layer_type() == LayerKind::Input {
            "x".to_string()
        } else {
            attr_name(n)
        }
    };

    let mut params = vec!["x".to_string()];
    let mut body = String::new();
    for node in &nodes {
        let kind = node.layer_type();
        if kind == LayerKind::Input {
            continue;
        }
        let mut args: Vec<String> = node.prior().iter().map(|&p| var(p)).collect();
        if args.is_empty() {
            args.push("x".to_string());
        }
        if kind.is_loss() && args.len() == 1 {
            let target = format!("target_{}", node.id());
            params.push(target.clone());
            args.push(target);
        }
        let call = format!("self.{}({})", attr_name(node), args.join(", "));
        let call = if kind.is_loss() {
            format!("{call}.reshape(1)")
        } else {
            call
        };
        let _ = writeln!(body, "        {} = {call}", attr_name(node));
    }
    let sinks: Vec<String> = graph.sinks().into_iter().map(var).collect();
    let _ = writeln!(
        body,
        "        return {}",
        if sinks.is_empty() {
            "x".to_string()
        } else {
            sinks.join(", ")
        }
    );

    let mut out = String::new();
    out.push_str("import torch\nimport torch.nn as nn\n\n\n");
    out.push_str("class SketchModel(nn.Module):\n");
    out.push_str("    def __init__(self):\n        super().__init__()\n");
    for node in &nodes {
        if let Some(ctor) = module_ctor(node) {
            let _ = writeln!(out, "        self.{} = {ctor}", attr_name(node));
        }
    }
    let _ = writeln!(out, "\n    def forward(self, {}):", params.join(", "));
    out.push_str(&body);
    out.push_str(LOADER);
    out
}
