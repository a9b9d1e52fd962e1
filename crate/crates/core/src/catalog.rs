//! The compiled-in layer catalog: parameter schemas, port arity, weight roles
//! and shape rules for every layer type the editor ships.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;

use crate::params::{canonical_f32, ParamMap, ParamValue};
use crate::shape::{Dim, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Input,
    Conv2d,
    Linear,
    MaxPool2d,
    AvgPool2d,
    ReLU,
    Sigmoid,
    Tanh,
    BatchNorm2d,
    Dropout,
    Identity,
    Flatten,
    MSELoss,
    L1Loss,
}

impl LayerKind {
    pub const ALL: [LayerKind; 14] = [
        LayerKind::Input,
        LayerKind::Conv2d,
        LayerKind::Linear,
        LayerKind::MaxPool2d,
        LayerKind::AvgPool2d,
        LayerKind::ReLU,
        LayerKind::Sigmoid,
        LayerKind::Tanh,
        LayerKind::BatchNorm2d,
        LayerKind::Dropout,
        LayerKind::Identity,
        LayerKind::Flatten,
        LayerKind::MSELoss,
        LayerKind::L1Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::Conv2d => "Conv2d",
            LayerKind::Linear => "Linear",
            LayerKind::MaxPool2d => "MaxPool2d",
            LayerKind::AvgPool2d => "AvgPool2d",
            LayerKind::ReLU => "ReLU",
            LayerKind::Sigmoid => "Sigmoid",
            LayerKind::Tanh => "Tanh",
            LayerKind::BatchNorm2d => "BatchNorm2d",
            LayerKind::Dropout => "Dropout",
            LayerKind::Identity => "Identity",
            LayerKind::Flatten => "Flatten",
            LayerKind::MSELoss => "MSELoss",
            LayerKind::L1Loss => "L1Loss",
        }
    }

    pub fn is_loss(self) -> bool {
        matches!(self, LayerKind::MSELoss | LayerKind::L1Loss)
    }

    pub fn spec(self) -> &'static LayerSpec {
        catalog()
            .iter()
            .find(|s| s.kind == self)
            .expect("every layer kind has a catalog entry")
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CatalogError::UnknownLayerType(s.to_string()))
    }
}

impl Serialize for LayerKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for LayerKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown layer type `{0}`")]
    UnknownLayerType(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamKind {
    Int,
    /// Fixed-length list when `Some(n)`, otherwise any non-empty length.
    IntList(Option<usize>),
    Float,
    Bool,
    Choice(&'static [&'static str]),
}

impl ParamKind {
    fn describe(&self) -> String {
        match self {
            ParamKind::Int => "int".into(),
            ParamKind::IntList(Some(n)) => format!("int-list[{n}]"),
            ParamKind::IntList(None) => "int-list".into(),
            ParamKind::Float => "float".into(),
            ParamKind::Bool => "bool".into(),
            ParamKind::Choice(_) => "choice".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    None,
    /// Integer (or every list element) must be at least this value.
    AtLeast(i64),
    /// Float must lie in the range; `max_open` makes the upper bound exclusive.
    Range { min: f64, max: f64, max_open: bool },
    /// Float must be strictly positive.
    Positive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: ParamValue,
    pub constraint: Constraint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightRole {
    pub name: &'static str,
    /// Human-readable shape formula, e.g. `(out,in,kh,kw)`.
    pub formula: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub type_name: &'static str,
    pub arity_in: usize,
    pub arity_out: usize,
    pub param_schema: Vec<ParamSpec>,
    pub weight_roles: Vec<WeightRole>,
}

impl LayerSpec {
    /// Fewest incoming edges accepted. Losses take the target from a
    /// dedicated graph input when only the prediction is wired.
    pub fn min_inputs(&self) -> usize {
        if self.kind.is_loss() {
            1
        } else {
            self.arity_in
        }
    }

    pub fn defaults(&self) -> ParamMap {
        self.param_schema
            .iter()
            .map(|p| (p.name.to_string(), p.default.clone()))
            .collect()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.param_schema.iter().find(|p| p.name == name)
    }
}

/// One schema violation, keyed by parameter name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub param: String,
    pub message: String,
}

impl Violation {
    fn new(param: &str, message: impl Into<String>) -> Self {
        Self {
            param: param.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn int(name: &'static str, default: i64, min: i64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Int,
        default: ParamValue::Int(default),
        constraint: Constraint::AtLeast(min),
    }
}

fn pair(name: &'static str, default: [i64; 2], min: i64) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::IntList(Some(2)),
        default: ParamValue::IntList(default.to_vec()),
        constraint: Constraint::AtLeast(min),
    }
}

fn flag(name: &'static str, default: bool) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Bool,
        default: ParamValue::Bool(default),
        constraint: Constraint::None,
    }
}

fn float(name: &'static str, default: f64, constraint: Constraint) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Float,
        default: ParamValue::Float(default),
        constraint,
    }
}

fn role(name: &'static str, formula: &'static str) -> WeightRole {
    WeightRole { name, formula }
}

fn build_catalog() -> Vec<LayerSpec> {
    let spec = |kind: LayerKind, arity_in, params, weights| LayerSpec {
        kind,
        type_name: kind.name(),
        arity_in,
        arity_out: 1,
        param_schema: params,
        weight_roles: weights,
    };
    let pool = |kind| {
        spec(
            kind,
            1,
            vec![
                pair("kernel_size", [2, 2], 1),
                pair("stride", [2, 2], 1),
                pair("padding", [0, 0], 0),
            ],
            vec![],
        )
    };
    let loss = |kind| {
        spec(
            kind,
            2,
            vec![ParamSpec {
                name: "reduction",
                kind: ParamKind::Choice(&["mean", "sum"]),
                default: ParamValue::Text("mean".into()),
                constraint: Constraint::None,
            }],
            vec![],
        )
    };

    vec![
        spec(
            LayerKind::Input,
            0,
            vec![ParamSpec {
                name: "shape",
                kind: ParamKind::IntList(None),
                default: ParamValue::IntList(vec![1, 28, 28]),
                constraint: Constraint::AtLeast(1),
            }],
            vec![],
        ),
        spec(
            LayerKind::Conv2d,
            1,
            vec![
                int("in_channels", 1, 1),
                int("out_channels", 1, 1),
                pair("kernel_size", [3, 3], 1),
                pair("stride", [1, 1], 1),
                pair("padding", [0, 0], 0),
                flag("bias", true),
            ],
            vec![role("weight", "(out,in,kh,kw)"), role("bias", "(out)")],
        ),
        spec(
            LayerKind::Linear,
            1,
            vec![
                int("in_features", 1, 1),
                int("out_features", 1, 1),
                flag("bias", true),
            ],
            vec![role("weight", "(out,in)"), role("bias", "(out)")],
        ),
        pool(LayerKind::MaxPool2d),
        pool(LayerKind::AvgPool2d),
        spec(LayerKind::ReLU, 1, vec![], vec![]),
        spec(LayerKind::Sigmoid, 1, vec![], vec![]),
        spec(LayerKind::Tanh, 1, vec![], vec![]),
        spec(
            LayerKind::BatchNorm2d,
            1,
            vec![
                int("num_features", 1, 1),
                float("eps", 1e-5, Constraint::Positive),
                float(
                    "momentum",
                    0.1,
                    Constraint::Range {
                        min: 0.0,
                        max: 1.0,
                        max_open: false,
                    },
                ),
            ],
            vec![
                role("scale", "(C)"),
                role("bias", "(C)"),
                role("running_mean", "(C)"),
                role("running_var", "(C)"),
            ],
        ),
        spec(
            LayerKind::Dropout,
            1,
            vec![float(
                "p",
                0.5,
                Constraint::Range {
                    min: 0.0,
                    max: 1.0,
                    max_open: true,
                },
            )],
            vec![],
        ),
        spec(LayerKind::Identity, 1, vec![], vec![]),
        spec(LayerKind::Flatten, 1, vec![int("start_dim", 1, 1)], vec![]),
        loss(LayerKind::MSELoss),
        loss(LayerKind::L1Loss),
    ]
}

pub fn catalog() -> &'static [LayerSpec] {
    static CATALOG: OnceLock<Vec<LayerSpec>> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn get_spec(type_name: &str) -> Result<&'static LayerSpec, CatalogError> {
    Ok(type_name.parse::<LayerKind>()?.spec())
}

/// Checks a (possibly partial) parameter map against the schema of `type_name`.
/// Absent parameters are not violations.
pub fn validate_params(type_name: &str, params: &ParamMap) -> Result<Vec<Violation>, CatalogError> {
    let spec = get_spec(type_name)?;
    Ok(check_params(spec, params))
}

fn check_params(spec: &LayerSpec, params: &ParamMap) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (name, value) in params {
        match spec.param(name) {
            None => violations.push(Violation::new(
                name,
                format!("unknown parameter `{name}` for {}", spec.type_name),
            )),
            Some(p) => {
                if let Err(v) = check_value(p, value) {
                    violations.push(v);
                }
            }
        }
    }
    violations
}

fn check_value(p: &ParamSpec, value: &ParamValue) -> Result<(), Violation> {
    let type_err = || {
        Violation::new(
            p.name,
            format!("{} must be of kind {}", p.name, p.kind.describe()),
        )
    };
    match (p.kind, value) {
        (ParamKind::Int, ParamValue::Int(v)) => check_int(p, *v),
        (ParamKind::IntList(len), ParamValue::IntList(vs)) => {
            if let Some(n) = len {
                if vs.len() != n {
                    return Err(Violation::new(
                        p.name,
                        format!("{} must have exactly {n} entries", p.name),
                    ));
                }
            } else if vs.is_empty() {
                return Err(Violation::new(p.name, format!("{} must not be empty", p.name)));
            }
            vs.iter().try_for_each(|v| check_int(p, *v))
        }
        (ParamKind::Float, ParamValue::Float(_) | ParamValue::Int(_)) => {
            let v = canonical_f32(value.as_float().unwrap_or(f64::NAN));
            check_float(p, v)
        }
        (ParamKind::Bool, ParamValue::Bool(_)) => Ok(()),
        (ParamKind::Choice(options), ParamValue::Text(s)) => {
            if options.contains(&s.as_str()) {
                Ok(())
            } else {
                Err(Violation::new(
                    p.name,
                    format!("{} must be one of {}", p.name, options.join(", ")),
                ))
            }
        }
        _ => Err(type_err()),
    }
}

fn check_int(p: &ParamSpec, v: i64) -> Result<(), Violation> {
    match p.constraint {
        Constraint::AtLeast(min) if v < min => {
            let subject = match p.kind {
                ParamKind::IntList(_) => format!("{} dims", p.name),
                _ => p.name.to_string(),
            };
            Err(Violation::new(p.name, format!("{subject} must be >= {min}")))
        }
        _ => Ok(()),
    }
}

fn check_float(p: &ParamSpec, v: f64) -> Result<(), Violation> {
    if !v.is_finite() {
        return Err(Violation::new(p.name, format!("{} must be finite", p.name)));
    }
    match p.constraint {
        Constraint::Positive if v <= 0.0 => {
            Err(Violation::new(p.name, format!("{} must be > 0", p.name)))
        }
        Constraint::Range { min, .. } if v < min => {
            Err(Violation::new(p.name, format!("{} must be >= {min}", p.name)))
        }
        Constraint::Range {
            max,
            max_open: true,
            ..
        } if v >= max => Err(Violation::new(p.name, format!("{} must be < {max}", p.name))),
        Constraint::Range {
            max,
            max_open: false,
            ..
        } if v > max => Err(Violation::new(p.name, format!("{} must be <= {max}", p.name))),
        _ => Ok(()),
    }
}

/// Constraints spanning several parameters; checked on the merged map only.
fn check_cross(kind: LayerKind, params: &ParamMap) -> Vec<Violation> {
    match kind {
        LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
            let k = int_list(params, "kernel_size");
            let p = int_list(params, "padding");
            if k.iter().zip(&p).any(|(k, p)| 2 * p > *k) {
                vec![Violation::new(
                    "padding",
                    "padding must be at most half of kernel_size",
                )]
            } else {
                vec![]
            }
        }
        _ => vec![],
    }
}

/// Merges `overrides` onto `base` (both validated against the schema) and
/// returns the complete, canonicalized parameter map in schema order.
pub fn merge_params(
    spec: &LayerSpec,
    base: &ParamMap,
    overrides: Option<&ParamMap>,
) -> Result<ParamMap, Vec<Violation>> {
    let empty = ParamMap::new();
    let overrides = overrides.unwrap_or(&empty);
    let mut violations = check_params(spec, overrides);
    if !violations.is_empty() {
        return Err(violations);
    }
    let mut merged = ParamMap::with_capacity(spec.param_schema.len());
    for p in &spec.param_schema {
        let raw = overrides
            .get(p.name)
            .or_else(|| base.get(p.name))
            .cloned()
            .unwrap_or_else(|| p.default.clone());
        let value = match (p.kind, raw.as_float()) {
            (ParamKind::Float, Some(v)) => ParamValue::Float(canonical_f32(v)),
            _ => raw,
        };
        merged.insert(p.name.to_string(), value);
    }
    violations.extend(check_cross(spec.kind, &merged));
    if violations.is_empty() {
        Ok(merged)
    } else {
        Err(violations)
    }
}

/// Complete parameter map from defaults plus optional overrides.
pub fn resolve_params(spec: &LayerSpec, params: Option<&ParamMap>) -> Result<ParamMap, Vec<Violation>> {
    merge_params(spec, &ParamMap::new(), params)
}

/// Accepts only maps that are already complete and canonical, as stored on nodes.
pub fn check_complete(spec: &LayerSpec, params: &ParamMap) -> Result<(), Vec<Violation>> {
    let merged = merge_params(spec, &ParamMap::new(), Some(params))?;
    if &merged != params || params.keys().ne(merged.keys()) {
        let missing: Vec<_> = spec
            .param_schema
            .iter()
            .filter(|p| !params.contains_key(p.name))
            .map(|p| Violation::new(p.name, format!("missing parameter `{}`", p.name)))
            .collect();
        if missing.is_empty() {
            return Err(vec![Violation::new(
                "",
                "parameters are not in canonical schema form",
            )]);
        }
        return Err(missing);
    }
    Ok(())
}

pub(crate) fn int_param(params: &ParamMap, name: &str) -> i64 {
    params.get(name).and_then(ParamValue::as_int).unwrap_or(0)
}

pub(crate) fn int_list(params: &ParamMap, name: &str) -> Vec<i64> {
    params
        .get(name)
        .and_then(ParamValue::as_int_list)
        .map(<[i64]>::to_vec)
        .unwrap_or_default()
}

pub(crate) fn float_param(params: &ParamMap, name: &str) -> f64 {
    params.get(name).and_then(ParamValue::as_float).unwrap_or(0.0)
}

pub(crate) fn bool_param(params: &ParamMap, name: &str) -> bool {
    params.get(name).and_then(ParamValue::as_bool).unwrap_or(false)
}

pub(crate) fn text_param<'a>(params: &'a ParamMap, name: &str) -> &'a str {
    params.get(name).and_then(ParamValue::as_text).unwrap_or("")
}

/// Weight tensors a node of this kind and parameterization carries, with dims.
pub fn expected_weights(kind: LayerKind, params: &ParamMap) -> Vec<(&'static str, Vec<usize>)> {
    let u = |v: i64| v.max(0) as usize;
    match kind {
        LayerKind::Conv2d => {
            let out = u(int_param(params, "out_channels"));
            let inp = u(int_param(params, "in_channels"));
            let k = int_list(params, "kernel_size");
            let mut roles = vec![("weight", vec![out, inp, u(k[0]), u(k[1])])];
            if bool_param(params, "bias") {
                roles.push(("bias", vec![out]));
            }
            roles
        }
        LayerKind::Linear => {
            let out = u(int_param(params, "out_features"));
            let inp = u(int_param(params, "in_features"));
            let mut roles = vec![("weight", vec![out, inp])];
            if bool_param(params, "bias") {
                roles.push(("bias", vec![out]));
            }
            roles
        }
        LayerKind::BatchNorm2d => {
            let c = u(int_param(params, "num_features"));
            ["scale", "bias", "running_mean", "running_var"]
                .into_iter()
                .map(|r| (r, vec![c]))
                .collect()
        }
        _ => vec![],
    }
}

/// Fan-in used to scale freshly generated weights.
pub fn fan_in(kind: LayerKind, params: &ParamMap) -> usize {
    match kind {
        LayerKind::Conv2d => {
            let k = int_list(params, "kernel_size");
            (int_param(params, "in_channels") * k[0] * k[1]).max(1) as usize
        }
        LayerKind::Linear => int_param(params, "in_features").max(1) as usize,
        _ => 1,
    }
}

/// Output spatial extent of a convolution or pooling window, if positive.
pub fn window_output(input: usize, kernel: i64, stride: i64, pad: i64) -> Option<usize> {
    let span = input as i64 + 2 * pad - kernel;
    if span < 0 || stride < 1 {
        return None;
    }
    Some((span / stride + 1) as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ShapeMismatch(pub String);

fn mismatch<T>(msg: impl Into<String>) -> Result<T, ShapeMismatch> {
    Err(ShapeMismatch(msg.into()))
}

/// Applies the shape rule of `kind`. `params` must be a complete, valid map.
pub fn infer_output_shape(
    kind: LayerKind,
    params: &ParamMap,
    inputs: &[Shape],
) -> Result<Shape, ShapeMismatch> {
    let spec = kind.spec();
    if inputs.len() < spec.min_inputs() || inputs.len() > spec.arity_in.max(1) {
        return mismatch(format!(
            "{kind} expects {} input(s), got {}",
            spec.arity_in,
            inputs.len()
        ));
    }
    let build = |dims: Vec<Dim>| Shape::new(dims).map_err(|e| ShapeMismatch(e.to_string()));
    match kind {
        LayerKind::Input => {
            if let Some(given) = inputs.first() {
                return Ok(given.clone());
            }
            let dims: Vec<usize> = int_list(params, "shape").iter().map(|&d| d as usize).collect();
            Shape::batched(&dims).map_err(|e| ShapeMismatch(e.to_string()))
        }
        LayerKind::Conv2d | LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
            let x = &inputs[0];
            if x.rank() != 4 {
                return mismatch(format!("{kind} expects a 4-D (N,C,H,W) input, got {x}"));
            }
            let mut dims = x.dims().to_vec();
            if kind == LayerKind::Conv2d {
                let expected = int_param(params, "in_channels") as usize;
                if dims[1] != Dim::Fixed(expected) {
                    return mismatch(format!(
                        "{kind} expects {expected} input channels, got {} in {x}",
                        dims[1]
                    ));
                }
                dims[1] = Dim::Fixed(int_param(params, "out_channels") as usize);
            }
            let k = int_list(params, "kernel_size");
            let s = int_list(params, "stride");
            let p = int_list(params, "padding");
            for axis in 0..2 {
                let Dim::Fixed(extent) = dims[2 + axis] else {
                    return mismatch(format!("{kind} needs a concrete spatial size in {x}"));
                };
                match window_output(extent, k[axis], s[axis], p[axis]) {
                    Some(out) if out >= 1 => dims[2 + axis] = Dim::Fixed(out),
                    _ => {
                        return mismatch(format!(
                            "{kind} window {} with padding {} does not fit spatial size {extent}",
                            k[axis], p[axis]
                        ))
                    }
                }
            }
            build(dims)
        }
        LayerKind::Linear => {
            let x = &inputs[0];
            if x.rank() != 2 {
                return mismatch(format!(
                    "Linear expects a 2-D (N,features) input, got {x}; insert a Flatten"
                ));
            }
            let expected = int_param(params, "in_features") as usize;
            if x.dims()[1] != Dim::Fixed(expected) {
                return mismatch(format!(
                    "Linear expects {expected} input features, got {} in {x}",
                    x.dims()[1]
                ));
            }
            build(vec![x.dims()[0], Dim::Fixed(int_param(params, "out_features") as usize)])
        }
        LayerKind::BatchNorm2d => {
            let x = &inputs[0];
            if x.rank() != 4 {
                return mismatch(format!("BatchNorm2d expects a 4-D (N,C,H,W) input, got {x}"));
            }
            let expected = int_param(params, "num_features") as usize;
            if x.dims()[1] != Dim::Fixed(expected) {
                return mismatch(format!(
                    "BatchNorm2d expects {expected} channels, got {} in {x}",
                    x.dims()[1]
                ));
            }
            Ok(x.clone())
        }
        LayerKind::Flatten => {
            let x = &inputs[0];
            let start = int_param(params, "start_dim") as usize;
            if start >= x.rank() {
                return mismatch(format!(
                    "Flatten start_dim {start} is out of range for {x}"
                ));
            }
            let mut dims = x.dims()[..start].to_vec();
            let mut collapsed = 1usize;
            for d in &x.dims()[start..] {
                match d {
                    Dim::Fixed(n) => collapsed *= n,
                    Dim::Batch => return mismatch("Flatten cannot collapse the batch dimension"),
                }
            }
            dims.push(Dim::Fixed(collapsed));
            build(dims)
        }
        LayerKind::MSELoss | LayerKind::L1Loss => {
            let pred = &inputs[0];
            if let Some(target) = inputs.get(1) {
                broadcast(pred, target).map_err(|_| {
                    ShapeMismatch(format!(
                        "{kind} prediction {pred} and target {target} do not broadcast"
                    ))
                })?;
            }
            Ok(Shape::fixed(&[1]).expect("non-zero"))
        }
        LayerKind::ReLU
        | LayerKind::Sigmoid
        | LayerKind::Tanh
        | LayerKind::Dropout
        | LayerKind::Identity => Ok(inputs[0].clone()),
    }
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast(a: &Shape, b: &Shape) -> Result<Shape, ShapeMismatch> {
    let rank = a.rank().max(b.rank());
    let pad = |s: &Shape| {
        let mut dims = vec![Dim::Fixed(1); rank - s.rank()];
        dims.extend_from_slice(s.dims());
        dims
    };
    let (da, db) = (pad(a), pad(b));
    let dims = da
        .iter()
        .zip(&db)
        .map(|(x, y)| match (x, y) {
            (x, y) if x == y => Ok(*x),
            (Dim::Fixed(1), y) => Ok(*y),
            (x, Dim::Fixed(1)) => Ok(*x),
            _ => mismatch(format!("{a} and {b} do not broadcast")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Shape::new(dims).map_err(|e| ShapeMismatch(e.to_string()))
}

/// Machine-readable catalog document served to the editor toolbox.
pub fn catalog_json() -> serde_json::Value {
    let layers: Vec<_> = catalog()
        .iter()
        .map(|spec| {
            let params: Vec<_> = spec
                .param_schema
                .iter()
                .map(|p| {
                    let mut entry = json!({
                        "name": p.name,
                        "kind": p.kind.describe(),
                        "default": p.default,
                    });
                    if let ParamKind::Choice(options) = p.kind {
                        entry["options"] = json!(options);
                    }
                    match p.constraint {
                        Constraint::AtLeast(min) => entry["min"] = json!(min),
                        Constraint::Range { min, max, max_open } => {
                            entry["min"] = json!(min);
                            entry["max"] = json!(max);
                            entry["maxExclusive"] = json!(max_open);
                        }
                        Constraint::Positive => entry["exclusiveMin"] = json!(0.0),
                        Constraint::None => {}
                    }
                    entry
                })
                .collect();
            let weights: Vec<_> = spec
                .weight_roles
                .iter()
                .map(|w| json!({ "role": w.name, "shape": w.formula }))
                .collect();
            json!({
                "type": spec.type_name,
                "arityIn": spec.arity_in,
                "arityOut": spec.arity_out,
                "params": params,
                "weights": weights,
            })
        })
        .collect();
    json!({ "layers": layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(pairs: &[(&str, ParamValue)]) -> ParamMap {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn conv_weight_roles() {
        let spec = get_spec("Conv2d").unwrap();
        let roles: Vec<_> = spec.weight_roles.iter().map(|r| (r.name, r.formula)).collect();
        assert_eq!(roles, vec![("weight", "(out,in,kh,kw)"), ("bias", "(out)")]);
    }

    #[test]
    fn relu_has_no_params() {
        assert!(get_spec("ReLU").unwrap().param_schema.is_empty());
    }

    #[test]
    fn unknown_type() {
        assert_eq!(
            get_spec("Conv3d").unwrap_err(),
            CatalogError::UnknownLayerType("Conv3d".into())
        );
        assert!(validate_params("Conv3d", &ParamMap::new()).is_err());
    }

    #[test]
    fn dropout_probability_bounds() {
        assert!(validate_params("Dropout", &pm(&[("p", ParamValue::Float(0.5))]))
            .unwrap()
            .is_empty());
        let v = validate_params("Dropout", &pm(&[("p", ParamValue::Float(1.0))])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "p must be < 1");
    }

    #[test]
    fn kernel_dims_positive() {
        let v = validate_params(
            "Conv2d",
            &pm(&[("kernel_size", ParamValue::IntList(vec![0, 3]))]),
        )
        .unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].param, "kernel_size");
        assert!(v[0].message.contains(">= 1"), "{}", v[0].message);
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let v = validate_params(
            "Linear",
            &pm(&[
                ("units", ParamValue::Int(3)),
                ("bias", ParamValue::Int(1)),
            ]),
        )
        .unwrap();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn defaults_validate() {
        for spec in catalog() {
            assert!(check_params(spec, &spec.defaults()).is_empty(), "{}", spec.type_name);
            assert!(resolve_params(spec, None).is_ok(), "{}", spec.type_name);
            let resolved = resolve_params(spec, None).unwrap();
            assert!(check_complete(spec, &resolved).is_ok(), "{}", spec.type_name);
        }
    }

    #[test]
    fn conv_defaults() {
        let p = resolve_params(get_spec("Conv2d").unwrap(), None).unwrap();
        let keys: Vec<_> = p.keys().cloned().collect();
        assert_eq!(
            keys,
            ["in_channels", "out_channels", "kernel_size", "stride", "padding", "bias"]
        );
        assert_eq!(p["kernel_size"], ParamValue::IntList(vec![3, 3]));
        assert_eq!(p["padding"], ParamValue::IntList(vec![0, 0]));
        assert_eq!(p["bias"], ParamValue::Bool(true));
    }

    #[test]
    fn float_params_accept_ints_and_canonicalize() {
        let spec = get_spec("BatchNorm2d").unwrap();
        let p = resolve_params(spec, Some(&pm(&[("momentum", ParamValue::Int(1))]))).unwrap();
        assert_eq!(p["momentum"], ParamValue::Float(1.0));
        let p = resolve_params(spec, Some(&pm(&[("eps", ParamValue::Float(0.123456789))]))).unwrap();
        assert_eq!(p["eps"], ParamValue::Float(0.12345679));
    }

    #[test]
    fn pool_padding_bound() {
        let spec = get_spec("MaxPool2d").unwrap();
        let bad = pm(&[
            ("kernel_size", ParamValue::IntList(vec![2, 2])),
            ("padding", ParamValue::IntList(vec![2, 0])),
        ]);
        assert!(resolve_params(spec, Some(&bad)).is_err());
    }

    #[test]
    fn conv_shape_rule() {
        let spec = get_spec("Conv2d").unwrap();
        let p = resolve_params(
            spec,
            Some(&pm(&[
                ("out_channels", ParamValue::Int(8)),
                ("kernel_size", ParamValue::IntList(vec![5, 5])),
                ("padding", ParamValue::IntList(vec![2, 2])),
            ])),
        )
        .unwrap();
        let out = infer_output_shape(LayerKind::Conv2d, &p, &[Shape::batched(&[1, 28, 28]).unwrap()]);
        assert_eq!(out.unwrap(), Shape::batched(&[8, 28, 28]).unwrap());
    }

    #[test]
    fn conv_channel_mismatch() {
        let p = resolve_params(get_spec("Conv2d").unwrap(), None).unwrap();
        let err = infer_output_shape(LayerKind::Conv2d, &p, &[Shape::batched(&[3, 8, 8]).unwrap()]);
        assert!(err.is_err());
    }

    #[test]
    fn window_never_zero() {
        let p = resolve_params(
            get_spec("Conv2d").unwrap(),
            Some(&pm(&[("kernel_size", ParamValue::IntList(vec![5, 5]))])),
        )
        .unwrap();
        let err = infer_output_shape(LayerKind::Conv2d, &p, &[Shape::batched(&[1, 4, 4]).unwrap()]);
        assert!(err.is_err());
    }

    #[test]
    fn flatten_collapses_tail() {
        let p = resolve_params(get_spec("Flatten").unwrap(), None).unwrap();
        let out = infer_output_shape(LayerKind::Flatten, &p, &[Shape::batched(&[8, 14, 14]).unwrap()]);
        assert_eq!(out.unwrap(), Shape::batched(&[8 * 14 * 14]).unwrap());
    }

    #[test]
    fn linear_feature_mismatch() {
        let p = resolve_params(
            get_spec("Linear").unwrap(),
            Some(&pm(&[("in_features", ParamValue::Int(10))])),
        )
        .unwrap();
        assert!(infer_output_shape(LayerKind::Linear, &p, &[Shape::batched(&[20]).unwrap()]).is_err());
        assert!(infer_output_shape(LayerKind::Linear, &p, &[Shape::batched(&[10]).unwrap()]).is_ok());
    }

    #[test]
    fn loss_reduces_to_scalar() {
        let p = resolve_params(get_spec("MSELoss").unwrap(), None).unwrap();
        let x = Shape::batched(&[10]).unwrap();
        let out = infer_output_shape(LayerKind::MSELoss, &p, &[x.clone(), x]).unwrap();
        assert_eq!(out, Shape::fixed(&[1]).unwrap());
    }

    #[test]
    fn elementwise_preserves_shape() {
        let x = Shape::batched(&[7, 5]).unwrap();
        for kind in [LayerKind::ReLU, LayerKind::Sigmoid, LayerKind::Tanh, LayerKind::Identity] {
            let out = infer_output_shape(kind, &ParamMap::new(), std::slice::from_ref(&x)).unwrap();
            assert_eq!(out, x);
        }
    }

    #[test]
    fn catalog_document_lists_conv_params() {
        let doc = catalog_json();
        let conv = doc["layers"]
            .as_array()
            .unwrap()
            .iter()
            .find(|l| l["type"] == "Conv2d")
            .unwrap();
        let names: Vec<_> = conv["params"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["name"].as_str().unwrap())
            .collect();
        assert_eq!(
            names,
            ["in_channels", "out_channels", "kernel_size", "stride", "padding", "bias"]
        );
    }
}
