//! ONNX → graph. Only operator forms the exporter emits are accepted; anything
//! else aborts the whole import.

use std::collections::{BTreeMap, HashMap};

use prost::Message;

use super::proto::{data_type, AttributeProto, ModelProto, NodeProto, TensorProto};
use super::{shape_of, META_GROUPS, META_POSITIONS, META_SEED};
use crate::binder::lower::DEFAULT_INPUT;
use crate::binder::BinderError;
use crate::catalog::LayerKind;
use crate::graph::{Graph, Position};
use crate::ids::NodeId;
use crate::params::{ParamMap, ParamValue};
use crate::shape::Dim;
use crate::tensor::TensorValue;

/// Kernel, stride and symmetric padding of a 2-D window.
type Window = (Vec<i64>, Vec<i64>, Vec<i64>);

const MIN_OPSET: i64 = 7;
const LAYOUT_X0: f64 = 80.0;
const LAYOUT_DX: f64 = 220.0;
const LAYOUT_Y0: f64 = 80.0;
const LAYOUT_DY: f64 = 120.0;

fn malformed(msg: impl Into<String>) -> BinderError {
    BinderError::MalformedArtifact(msg.into())
}

fn unsupported(msg: impl Into<String>) -> BinderError {
    BinderError::UnsupportedOperator(msg.into())
}

/// A layer recovered from the artifact, before ids are assigned.
struct Pending {
    kind: LayerKind,
    params: ParamMap,
    weights: Vec<TensorValue>,
    /// Indices into the pending list.
    prior: Vec<usize>,
    /// Id parsed from the exported name, used to look up metadata.
    original: Option<String>,
}

enum Init {
    F32(Vec<usize>, Vec<u8>),
    I64(Vec<usize>, Vec<i64>),
}

pub fn import(bytes: &[u8]) -> Result<Graph, BinderError> {
    let model = ModelProto::decode(bytes).map_err(|e| malformed(format!("not an ONNX model: {e}")))?;
    check_opsets(&model)?;
    let graph = model.graph.as_ref().ok_or_else(|| malformed("model has no graph"))?;
    let meta: HashMap<&str, &str> = model
        .metadata_props
        .iter()
        .filter_map(|p| Some((p.key.as_deref()?, p.value.as_deref()?)))
        .collect();

    let mut inits = HashMap::new();
    for t in &graph.initializer {
        let name = t.name.clone().ok_or_else(|| malformed("initializer without a name"))?;
        inits.insert(name, decode_tensor(t)?);
    }

    let data_inputs: Vec<_> = graph
        .input
        .iter()
        .filter(|v| !v.name.as_deref().is_some_and(|n| inits.contains_key(n)))
        .collect();
    let [input] = data_inputs.as_slice() else {
        return Err(unsupported(format!(
            "models with {} data inputs",
            data_inputs.len()
        )));
    };
    let input_name = input.name.clone().unwrap_or_default();

    let mut pending: Vec<Pending> = Vec::new();
    // Value name -> producing pending index; `None` for a bare graph input.
    let mut producers: HashMap<String, Option<usize>> = HashMap::new();
    let bare_input = input_name == DEFAULT_INPUT && meta.contains_key(META_POSITIONS);
    if bare_input {
        producers.insert(input_name.clone(), None);
    } else {
        let shape = shape_of(input).ok_or_else(|| malformed("graph input has no usable shape"))?;
        let dims: Vec<i64> = match shape.dims() {
            [Dim::Batch, rest @ ..] if !rest.is_empty() => rest
                .iter()
                .map(|d| d.fixed().map(|n| n as i64))
                .collect::<Option<_>>()
                .ok_or_else(|| malformed("batch marker outside the leading dimension"))?,
            _ => return Err(unsupported("graph input without a symbolic leading batch dimension")),
        };
        pending.push(Pending {
            kind: LayerKind::Input,
            params: [("shape".to_string(), ParamValue::IntList(dims))].into_iter().collect(),
            weights: vec![],
            prior: vec![],
            original: original_id(&input_name, LayerKind::Input),
        });
        producers.insert(input_name.clone(), Some(0));
    }

    for node in &graph.node {
        let op = node.op_type.as_deref().unwrap_or("");
        if node.domain.as_deref().is_some_and(|d| !d.is_empty() && d != "ai.onnx") {
            return Err(unsupported(format!("{op} in domain {}", node.domain.as_deref().unwrap_or(""))));
        }
        let [output] = node.output.as_slice() else {
            return Err(unsupported(format!("{op} with {} outputs", node.output.len())));
        };
        let data = node
            .input
            .first()
            .ok_or_else(|| malformed(format!("{op} node has no inputs")))?;
        let source = *producers
            .get(data)
            .ok_or_else(|| malformed(format!("value `{data}` used before it is produced")))?;
        let (kind, params, weights) = map_node(node, op, &inits)?;
        let name = node.name.clone().unwrap_or_default();
        pending.push(Pending {
            kind,
            params,
            weights,
            prior: source.into_iter().collect(),
            original: original_id(&name, kind),
        });
        if producers.insert(output.clone(), Some(pending.len() - 1)).is_some() {
            return Err(malformed(format!("value `{output}` produced twice")));
        }
    }

    if graph.output.len() != 1 {
        return Err(unsupported(format!("models with {} outputs", graph.output.len())));
    }
    let out_name = graph.output[0].name.clone().unwrap_or_default();
    if !matches!(producers.get(&out_name), Some(Some(_))) {
        return Err(malformed(format!("graph output `{out_name}` is not produced by any node")));
    }

    build(pending, &meta)
}

fn check_opsets(model: &ModelProto) -> Result<(), BinderError> {
    let mut default = None;
    for o in &model.opset_import {
        match o.domain.as_deref().unwrap_or("") {
            "" | "ai.onnx" => default = o.version,
            other => return Err(unsupported(format!("operator set domain `{other}`"))),
        }
    }
    match default {
        Some(v) if v >= MIN_OPSET => Ok(()),
        Some(v) => Err(BinderError::UnsupportedOpset {
            kernel: super::KERNEL_ID.to_string(),
            opset: v,
        }),
        None => Err(malformed("model declares no default-domain opset")),
    }
}

fn decode_tensor(t: &TensorProto) -> Result<Init, BinderError> {
    let name = t.name.as_deref().unwrap_or("");
    if t.data_location.unwrap_or(0) != 0 || !t.external_data.is_empty() {
        return Err(unsupported(format!("external tensor data in `{name}`")));
    }
    let dims = t
        .dims
        .iter()
        .map(|&d| usize::try_from(d).map_err(|_| malformed(format!("negative dim in `{name}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let count: usize = dims.iter().product();
    match t.data_type {
        Some(data_type::FLOAT) => {
            let bytes = match &t.raw_data {
                Some(raw) => raw.clone(),
                None => t.float_data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            };
            if bytes.len() != count * 4 {
                return Err(malformed(format!("tensor `{name}` has the wrong amount of data")));
            }
            Ok(Init::F32(dims, bytes))
        }
        Some(data_type::INT64) => {
            let values: Vec<i64> = match &t.raw_data {
                Some(raw) if raw.len() % 8 == 0 => raw
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                Some(_) => return Err(malformed(format!("tensor `{name}` has a ragged int64 payload"))),
                None => t.int64_data.clone(),
            };
            if values.len() != count {
                return Err(malformed(format!("tensor `{name}` has the wrong amount of data")));
            }
            Ok(Init::I64(dims, values))
        }
        other => Err(unsupported(format!(
            "tensor `{name}` of element type {}",
            other.unwrap_or(0)
        ))),
    }
}

/// Parses the node id out of `<Type>_<id>` names written by the exporter.
fn original_id(name: &str, kind: LayerKind) -> Option<String> {
    let id = name.strip_prefix(kind.name())?.strip_prefix('_')?;
    id.parse::<NodeId>().ok().map(|n| n.to_string())
}

struct Attrs<'a> {
    op: &'a str,
    attrs: &'a [AttributeProto],
}

impl<'a> Attrs<'a> {
    fn get(&self, name: &str) -> Option<&'a AttributeProto> {
        self.attrs.iter().find(|a| a.name.as_deref() == Some(name))
    }

    fn int(&self, name: &str, default: i64) -> i64 {
        self.get(name).and_then(|a| a.i).unwrap_or(default)
    }

    fn float(&self, name: &str) -> Option<f32> {
        self.get(name).and_then(|a| a.f)
    }

    fn ints(&self, name: &str) -> Option<&'a [i64]> {
        self.get(name).map(|a| a.ints.as_slice())
    }

    fn only(&self, allowed: &[&str]) -> Result<(), BinderError> {
        for a in self.attrs {
            let name = a.name.as_deref().unwrap_or("");
            if !allowed.contains(&name) {
                return Err(unsupported(format!("{} with attribute `{name}`", self.op)));
            }
        }
        Ok(())
    }

    fn require(&self, name: &str, expected: i64) -> Result<(), BinderError> {
        let v = self.int(name, expected);
        if v != expected {
            return Err(unsupported(format!("{} with {name}={v}", self.op)));
        }
        Ok(())
    }

    fn require_float(&self, name: &str, expected: f32) -> Result<(), BinderError> {
        match self.float(name) {
            Some(v) if v != expected => Err(unsupported(format!("{} with {name}={v}", self.op))),
            _ => Ok(()),
        }
    }

    fn auto_pad(&self) -> Result<(), BinderError> {
        match self.get("auto_pad").and_then(|a| a.s.as_deref()) {
            None | Some(b"NOTSET") => Ok(()),
            Some(other) => Err(unsupported(format!(
                "{} with auto_pad={}",
                self.op,
                String::from_utf8_lossy(other)
            ))),
        }
    }

    fn all_ones(&self, name: &str) -> Result<(), BinderError> {
        match self.ints(name) {
            Some(v) if v.iter().any(|&x| x != 1) => {
                Err(unsupported(format!("{} with {name}={v:?}", self.op)))
            }
            _ => Ok(()),
        }
    }

    /// kernel/stride/padding triple for a 2-D window.
    fn window(&self, kernel: Option<[i64; 2]>) -> Result<Window, BinderError> {
        self.auto_pad()?;
        self.all_ones("dilations")?;
        let k = match (self.ints("kernel_shape"), kernel) {
            (Some(k), Some(w)) if k != w => {
                return Err(malformed(format!("{} kernel_shape disagrees with its weight", self.op)))
            }
            (Some(k), _) => k.to_vec(),
            (None, Some(w)) => w.to_vec(),
            (None, None) => return Err(malformed(format!("{} without kernel_shape", self.op))),
        };
        if k.len() != 2 {
            return Err(unsupported(format!("{} over {} spatial dims", self.op, k.len())));
        }
        let s = self.ints("strides").map(<[i64]>::to_vec).unwrap_or(vec![1, 1]);
        let p = self.ints("pads").map(<[i64]>::to_vec).unwrap_or(vec![0; 4]);
        if s.len() != 2 || p.len() != 4 {
            return Err(malformed(format!("{} with malformed strides or pads", self.op)));
        }
        if p[0] != p[2] || p[1] != p[3] {
            return Err(unsupported(format!("{} with asymmetric pads {p:?}", self.op)));
        }
        Ok((k, s, vec![p[0], p[1]]))
    }
}

fn weight(
    inits: &HashMap<String, Init>,
    node: &NodeProto,
    index: usize,
    role: &str,
) -> Result<Option<TensorValue>, BinderError> {
    let Some(name) = node.input.get(index).filter(|n| !n.is_empty()) else {
        return Ok(None);
    };
    match inits.get(name) {
        Some(Init::F32(dims, bytes)) => TensorValue::new(role, crate::DType::Float32, dims.clone(), bytes.clone())
            .map(Some)
            .map_err(|e| malformed(e.to_string())),
        Some(Init::I64(..)) => Err(malformed(format!("`{name}` must be float32"))),
        None => Err(unsupported(format!(
            "{} whose {role} is computed rather than stored",
            node.op_type.as_deref().unwrap_or("")
        ))),
    }
}

fn required(t: Option<TensorValue>, op: &str, role: &str) -> Result<TensorValue, BinderError> {
    t.ok_or_else(|| malformed(format!("{op} without {role}")))
}

fn params(pairs: Vec<(&str, ParamValue)>) -> ParamMap {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn max_inputs(node: &NodeProto, op: &str, n: usize) -> Result<(), BinderError> {
    let used = node.input.iter().rposition(|i| !i.is_empty()).map_or(0, |p| p + 1);
    if used > n {
        return Err(unsupported(format!("{op} with {used} inputs")));
    }
    Ok(())
}

fn map_node(
    node: &NodeProto,
    op: &str,
    inits: &HashMap<String, Init>,
) -> Result<(LayerKind, ParamMap, Vec<TensorValue>), BinderError> {
    use ParamValue::{Bool, Float, Int, IntList};
    let a = Attrs {
        op,
        attrs: &node.attribute,
    };
    let simple = |kind| -> Result<_, BinderError> {
        a.only(&[])?;
        max_inputs(node, op, 1)?;
        Ok((kind, ParamMap::new(), vec![]))
    };
    match op {
        "Relu" => simple(LayerKind::ReLU),
        "Sigmoid" => simple(LayerKind::Sigmoid),
        "Tanh" => simple(LayerKind::Tanh),
        "Identity" => simple(LayerKind::Identity),
        "Conv" => {
            a.only(&["auto_pad", "dilations", "group", "kernel_shape", "pads", "strides"])?;
            a.require("group", 1)?;
            max_inputs(node, op, 3)?;
            let w = required(weight(inits, node, 1, "weight")?, op, "weight")?;
            let &[out, inp, kh, kw] = w.dims() else {
                return Err(unsupported(format!("Conv with a rank-{} weight", w.dims().len())));
            };
            let (k, s, p) = a.window(Some([kh as i64, kw as i64]))?;
            let b = weight(inits, node, 2, "bias")?;
            let params = params(vec![
                ("in_channels", Int(inp as i64)),
                ("out_channels", Int(out as i64)),
                ("kernel_size", IntList(k)),
                ("stride", IntList(s)),
                ("padding", IntList(p)),
                ("bias", Bool(b.is_some())),
            ]);
            Ok((LayerKind::Conv2d, params, [Some(w), b].into_iter().flatten().collect()))
        }
        "Gemm" => {
            a.only(&["alpha", "beta", "transA", "transB"])?;
            a.require("transA", 0)?;
            if a.int("transB", 0) != 1 {
                return Err(unsupported("Gemm without transB=1"));
            }
            a.require_float("alpha", 1.0)?;
            a.require_float("beta", 1.0)?;
            max_inputs(node, op, 3)?;
            let w = required(weight(inits, node, 1, "weight")?, op, "weight")?;
            let &[out, inp] = w.dims() else {
                return Err(unsupported(format!("Gemm with a rank-{} weight", w.dims().len())));
            };
            let b = weight(inits, node, 2, "bias")?;
            let params = params(vec![
                ("in_features", Int(inp as i64)),
                ("out_features", Int(out as i64)),
                ("bias", Bool(b.is_some())),
            ]);
            Ok((LayerKind::Linear, params, [Some(w), b].into_iter().flatten().collect()))
        }
        "MaxPool" | "AveragePool" => {
            let kind = if op == "MaxPool" {
                a.only(&["auto_pad", "ceil_mode", "dilations", "kernel_shape", "pads", "storage_order", "strides"])?;
                a.require("storage_order", 0)?;
                LayerKind::MaxPool2d
            } else {
                a.only(&["auto_pad", "ceil_mode", "count_include_pad", "kernel_shape", "pads", "strides"])?;
                a.require("count_include_pad", 0)?;
                LayerKind::AvgPool2d
            };
            a.require("ceil_mode", 0)?;
            max_inputs(node, op, 1)?;
            let (k, s, p) = a.window(None)?;
            let params = params(vec![
                ("kernel_size", IntList(k)),
                ("stride", IntList(s)),
                ("padding", IntList(p)),
            ]);
            Ok((kind, params, vec![]))
        }
        "BatchNormalization" => {
            a.only(&["epsilon", "momentum", "training_mode", "spatial"])?;
            a.require("training_mode", 0)?;
            a.require("spatial", 1)?;
            max_inputs(node, op, 5)?;
            let roles = ["scale", "bias", "running_mean", "running_var"];
            let mut weights = Vec::new();
            for (i, role) in roles.iter().enumerate() {
                weights.push(required(weight(inits, node, i + 1, role)?, op, role)?);
            }
            let &[c] = weights[0].dims() else {
                return Err(malformed("BatchNormalization scale must be 1-D"));
            };
            let params = params(vec![
                ("num_features", Int(c as i64)),
                ("eps", Float(a.float("epsilon").unwrap_or(1e-5) as f64)),
                ("momentum", Float(a.float("momentum").unwrap_or(0.1) as f64)),
            ]);
            Ok((LayerKind::BatchNorm2d, params, weights))
        }
        "Dropout" => {
            a.only(&["ratio", "seed"])?;
            max_inputs(node, op, 2)?;
            let ratio = match node.input.get(1).filter(|n| !n.is_empty()) {
                Some(name) => match inits.get(name) {
                    Some(Init::F32(dims, bytes)) if dims.is_empty() && bytes.len() == 4 => {
                        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
                    }
                    _ => return Err(unsupported("Dropout with a non-constant ratio")),
                },
                None => a.float("ratio").unwrap_or(0.5),
            };
            Ok((LayerKind::Dropout, params(vec![("p", Float(ratio as f64))]), vec![]))
        }
        "Flatten" => {
            a.only(&["axis"])?;
            a.require("axis", 1)?;
            max_inputs(node, op, 1)?;
            Ok((LayerKind::Flatten, params(vec![("start_dim", Int(1))]), vec![]))
        }
        "Reshape" => {
            a.only(&[])?;
            max_inputs(node, op, 2)?;
            let spec = match node.input.get(1).and_then(|n| inits.get(n)) {
                Some(Init::I64(dims, values)) if dims.len() == 1 => values,
                _ => return Err(unsupported("Reshape with a computed target shape")),
            };
            match spec.split_last() {
                Some((-1, zeros)) if zeros.len() >= 2 && zeros.iter().all(|&z| z == 0) => Ok((
                    LayerKind::Flatten,
                    params(vec![("start_dim", Int(zeros.len() as i64))]),
                    vec![],
                )),
                _ => Err(unsupported(format!("Reshape to {spec:?}"))),
            }
        }
        other => Err(unsupported(other.to_string())),
    }
}

#[derive(serde::Deserialize)]
struct GroupMeta {
    name: String,
    members: Vec<String>,
}

fn build(pending: Vec<Pending>, meta: &HashMap<&str, &str>) -> Result<Graph, BinderError> {
    let seed = meta.get(META_SEED).and_then(|s| s.parse().ok()).unwrap_or(0);
    let positions: BTreeMap<String, [f64; 2]> = meta
        .get(META_POSITIONS)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default();
    let layout = auto_layout(&pending);

    let mut graph = Graph::new(seed);
    let mut ids = Vec::with_capacity(pending.len());
    let mut by_original = HashMap::new();
    for (i, p) in pending.iter().enumerate() {
        let pos = p
            .original
            .as_ref()
            .and_then(|o| positions.get(o))
            .map(|&xy| Position::from(xy))
            .unwrap_or(layout[i]);
        let id = graph
            .add_node(p.kind.name(), Some(&p.params), pos)
            .map_err(|e| malformed(format!("{} parameters out of range: {e}", p.kind)))?;
        for &src in &p.prior {
            graph.connect(ids[src], id).map_err(|e| malformed(e.to_string()))?;
        }
        for w in &p.weights {
            graph.set_weight(id, w.clone()).map_err(|e| malformed(e.to_string()))?;
        }
        if let Some(o) = &p.original {
            by_original.insert(o.clone(), id);
        }
        ids.push(id);
    }

    let groups: Vec<GroupMeta> = meta
        .get(META_GROUPS)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default();
    for g in groups {
        let members: Option<Vec<NodeId>> = g.members.iter().map(|m| by_original.get(m).copied()).collect();
        if let Some(members) = members {
            // Layout metadata is advisory; a group that no longer forms a chain is dropped.
            let _ = graph.group_nodes(&members, &g.name);
        }
    }
    Ok(graph)
}

/// Layered layout: column by longest-path depth, row by order within the column.
fn auto_layout(pending: &[Pending]) -> Vec<Position> {
    let mut depth = vec![0usize; pending.len()];
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(pending.len());
    for (i, p) in pending.iter().enumerate() {
        depth[i] = p.prior.iter().map(|&s| depth[s] + 1).max().unwrap_or(0);
        let row = rows.entry(depth[i]).or_insert(0);
        out.push(Position::new(
            LAYOUT_X0 + LAYOUT_DX * depth[i] as f64,
            LAYOUT_Y0 + LAYOUT_DY * *row as f64,
        ));
        *row += 1;
    }
    out
}
