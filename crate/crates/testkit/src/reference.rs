//! Brute-force inference-mode forward pass over a core [`Graph`].
//!
//! Written for clarity: every output element is computed by its defining sum
//! in f64 and rounded to f32 once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sketch_core::{Graph, LayerKind, Node, NodeId, ParamMap};

/// Dense row-major f32 tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "dims {dims:?}");
        Self { dims, data }
    }

    /// Deterministic pseudo-random values in [-1, 1).
    pub fn seeded(dims: Vec<usize>, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Self { dims, data }
    }

    pub fn max_abs_diff(&self, other: &Array) -> f32 {
        assert_eq!(self.dims, other.dims, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

fn ints(p: &ParamMap, name: &str) -> Vec<usize> {
    p[name]
        .as_int_list()
        .expect("int list param")
        .iter()
        .map(|&v| v as usize)
        .collect()
}

fn int(p: &ParamMap, name: &str) -> usize {
    p[name].as_int().expect("int param") as usize
}

fn float(p: &ParamMap, name: &str) -> f64 {
    p[name].as_float().expect("float param")
}

fn weight(node: &Node, role: &str) -> Option<Vec<f32>> {
    node.weight(role).map(|t| t.to_f32())
}

/// Evaluates every node. `input` feeds the single source; `targets` feeds
/// single-input losses, keyed by node id. Returns the output of each node.
pub fn forward_all(
    graph: &Graph,
    input: &Array,
    targets: &BTreeMap<NodeId, Array>,
) -> Result<BTreeMap<NodeId, Array>, String> {
    let graph = graph.with_materialized_weights();
    let order = graph.topo_sort().map_err(|e| e.to_string())?;
    let mut values: BTreeMap<NodeId, Array> = BTreeMap::new();
    for id in order {
        let node = graph.node(id).expect("ordered node");
        let mut inputs: Vec<&Array> = node.prior().iter().map(|p| &values[p]).collect();
        if inputs.is_empty() {
            inputs.push(input);
        }
        let out = eval(node, &inputs, targets.get(&id))?;
        values.insert(id, out);
    }
    Ok(values)
}

/// Output of the single sink.
pub fn forward(graph: &Graph, input: &Array, targets: &BTreeMap<NodeId, Array>) -> Result<Array, String> {
    let sinks = graph.sinks();
    let [sink] = sinks.as_slice() else {
        return Err(format!("expected one sink, found {}", sinks.len()));
    };
    let mut all = forward_all(graph, input, targets)?;
    Ok(all.remove(sink).expect("sink evaluated"))
}

fn eval(node: &Node, inputs: &[&Array], target: Option<&Array>) -> Result<Array, String> {
    let x = inputs[0];
    let p = node.params();
    let map = |f: &dyn Fn(f64) -> f64| Array {
        dims: x.dims.clone(),
        data: x.data.iter().map(|&v| f(v as f64) as f32).collect(),
    };
    Ok(match node.layer_type() {
        LayerKind::Input | LayerKind::Identity | LayerKind::Dropout => x.clone(),
        LayerKind::ReLU => map(&|v| v.max(0.0)),
        LayerKind::Sigmoid => map(&|v| 1.0 / (1.0 + (-v).exp())),
        LayerKind::Tanh => map(&f64::tanh),
        LayerKind::Conv2d => conv2d(node, x)?,
        LayerKind::Linear => linear(node, x)?,
        LayerKind::MaxPool2d | LayerKind::AvgPool2d => pool(node.layer_type(), p, x)?,
        LayerKind::BatchNorm2d => batch_norm(node, x)?,
        LayerKind::Flatten => {
            let start = int(p, "start_dim");
            let mut dims = x.dims[..start].to_vec();
            dims.push(x.dims[start..].iter().product());
            Array::new(dims, x.data.clone())
        }
        LayerKind::MSELoss | LayerKind::L1Loss => {
            let t = inputs.get(1).copied().or(target).ok_or("loss without a target")?;
            if t.dims != x.dims {
                return Err(format!("target dims {:?} differ from prediction {:?}", t.dims, x.dims));
            }
            let square = node.layer_type() == LayerKind::MSELoss;
            let total: f64 = x
                .data
                .iter()
                .zip(&t.data)
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    if square {
                        d * d
                    } else {
                        d.abs()
                    }
                })
                .sum();
            let value = if p["reduction"].as_text() == Some("sum") {
                total
            } else {
                total / x.data.len() as f64
            };
            Array::new(vec![1], vec![value as f32])
        }
    })
}

fn nchw(x: &Array) -> Result<[usize; 4], String> {
    match x.dims.as_slice() {
        &[n, c, h, w] => Ok([n, c, h, w]),
        d => Err(format!("expected NCHW, got {d:?}")),
    }
}

fn conv2d(node: &Node, x: &Array) -> Result<Array, String> {
    let p = node.params();
    let [n, c, h, w] = nchw(x)?;
    let (k, s, pad) = (ints(p, "kernel_size"), ints(p, "stride"), ints(p, "padding"));
    let oc = int(p, "out_channels");
    let wt = weight(node, "weight").ok_or("conv weight missing")?;
    let bias = weight(node, "bias");
    let oh = (h + 2 * pad[0] - k[0]) / s[0] + 1;
    let ow = (w + 2 * pad[1] - k[1]) / s[1] + 1;
    let mut out = vec![0f32; n * oc * oh * ow];
    for b in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.as_ref().map_or(0.0, |bv| bv[o] as f64);
                    for ci in 0..c {
                        for ky in 0..k[0] {
                            for kx in 0..k[1] {
                                let iy = (y * s[0] + ky) as isize - pad[0] as isize;
                                let ix = (xo * s[1] + kx) as isize - pad[1] as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data[((b * c + ci) * h + iy as usize) * w + ix as usize];
                                let wv = wt[((o * c + ci) * k[0] + ky) * k[1] + kx];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[((b * oc + o) * oh + y) * ow + xo] = acc as f32;
                }
            }
        }
    }
    Ok(Array::new(vec![n, oc, oh, ow], out))
}

fn linear(node: &Node, x: &Array) -> Result<Array, String> {
    let p = node.params();
    let &[n, inf] = x.dims.as_slice() else {
        return Err(format!("Linear expects 2-D input, got {:?}", x.dims));
    };
    let outf = int(p, "out_features");
    let wt = weight(node, "weight").ok_or("linear weight missing")?;
    let bias = weight(node, "bias");
    let mut out = vec![0f32; n * outf];
    for b in 0..n {
        for o in 0..outf {
            let mut acc = bias.as_ref().map_or(0.0, |bv| bv[o] as f64);
            for i in 0..inf {
                acc += x.data[b * inf + i] as f64 * wt[o * inf + i] as f64;
            }
            out[b * outf + o] = acc as f32;
        }
    }
    Ok(Array::new(vec![n, outf], out))
}

fn pool(kind: LayerKind, p: &ParamMap, x: &Array) -> Result<Array, String> {
    let [n, c, h, w] = nchw(x)?;
    let (k, s, pad) = (ints(p, "kernel_size"), ints(p, "stride"), ints(p, "padding"));
    let oh = (h + 2 * pad[0] - k[0]) / s[0] + 1;
    let ow = (w + 2 * pad[1] - k[1]) / s[1] + 1;
    let mut out = vec![0f32; n * c * oh * ow];
    for plane in 0..n * c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut max = f64::NEG_INFINITY;
                let mut sum = 0.0;
                let mut count = 0usize;
                for ky in 0..k[0] {
                    for kx in 0..k[1] {
                        let iy = (y * s[0] + ky) as isize - pad[0] as isize;
                        let ix = (xo * s[1] + kx) as isize - pad[1] as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        let v = x.data[(plane * h + iy as usize) * w + ix as usize] as f64;
                        max = max.max(v);
                        sum += v;
                        count += 1;
                    }
                }
                out[(plane * oh + y) * ow + xo] = if kind == LayerKind::MaxPool2d {
                    max as f32
                } else {
                    (sum / count.max(1) as f64) as f32
                };
            }
        }
    }
    Ok(Array::new(vec![n, c, oh, ow], out))
}

fn batch_norm(node: &Node, x: &Array) -> Result<Array, String> {
    let [n, c, h, w] = nchw(x)?;
    let eps = float(node.params(), "eps");
    let get = |r| weight(node, r).ok_or(format!("batch norm {r} missing"));
    let (scale, bias, mean, var) = (get("scale")?, get("bias")?, get("running_mean")?, get("running_var")?);
    let mut out = x.data.clone();
    for b in 0..n {
        for ch in 0..c {
            let denom = (var[ch] as f64 + eps as f32 as f64).sqrt();
            for i in 0..h * w {
                let idx = (b * c + ch) * h * w + i;
                let v = (x.data[idx] as f64 - mean[ch] as f64) / denom;
                out[idx] = (v * scale[ch] as f64 + bias[ch] as f64) as f32;
            }
        }
    }
    Ok(Array::new(vec![n, c, h, w], out))
}
