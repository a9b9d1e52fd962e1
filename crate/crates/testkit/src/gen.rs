//! Seeded random graphs and parameterizations.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sketch_core::catalog::infer_output_shape;
use sketch_core::{Dim, Graph, LayerKind, NodeId, ParamMap, ParamValue, Position, Shape};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Layer kinds with a shape rule worth testing against an external oracle.
pub const SHAPED: [LayerKind; 11] = [
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
];

fn pm(pairs: Vec<(&str, ParamValue)>) -> ParamMap {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn fixed(shape: &Shape, i: usize) -> usize {
    shape.dims().get(i).and_then(|d| d.fixed()).unwrap_or(1)
}

fn pair(r: &mut StdRng, lo: i64, hi: i64) -> ParamValue {
    ParamValue::IntList(vec![r.random_range(lo..=hi), r.random_range(lo..=hi)])
}

/// Random parameters for `kind`, biased toward fitting `input`. The result
/// may still be invalid for `input`; callers filter with shape inference.
pub fn random_params(r: &mut StdRng, kind: LayerKind, input: &Shape) -> ParamMap {
    use ParamValue::{Bool, Float, Int, IntList};
    match kind {
        LayerKind::Conv2d => {
            let k = [r.random_range(1..=5), r.random_range(1..=5)];
            pm(vec![
                ("in_channels", Int(fixed(input, 1) as i64)),
                ("out_channels", Int(r.random_range(1..=6))),
                ("kernel_size", IntList(k.to_vec())),
                ("stride", pair(r, 1, 3)),
                ("padding", IntList(vec![r.random_range(0..=k[0] / 2 + 1), r.random_range(0..=k[1] / 2 + 1)])),
                ("bias", Bool(r.random_bool(0.7))),
            ])
        }
        LayerKind::Linear => pm(vec![
            ("in_features", Int(fixed(input, 1) as i64)),
            ("out_features", Int(r.random_range(1..=16))),
            ("bias", Bool(r.random_bool(0.7))),
        ]),
        LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
            let k = [r.random_range(1..=4), r.random_range(1..=4)];
            pm(vec![
                ("kernel_size", IntList(k.to_vec())),
                ("stride", pair(r, 1, 3)),
                ("padding", IntList(vec![r.random_range(0..=k[0] / 2), r.random_range(0..=k[1] / 2)])),
            ])
        }
        LayerKind::BatchNorm2d => pm(vec![
            ("num_features", Int(fixed(input, 1) as i64)),
            ("eps", Float(*[1e-5, 1e-3, 0.01].get(r.random_range(0..3)).expect("in range"))),
            ("momentum", Float(*[0.1, 0.01, 0.5].get(r.random_range(0..3)).expect("in range"))),
        ]),
        LayerKind::Dropout => pm(vec![("p", Float(*[0.0, 0.25, 0.5, 0.9].get(r.random_range(0..4)).expect("in range")))]),
        LayerKind::Flatten => pm(vec![("start_dim", Int(r.random_range(1..input.rank().max(2) as i64)))]),
        LayerKind::Input => pm(vec![(
            "shape",
            IntList(vec![r.random_range(1..=4), r.random_range(4..=12), r.random_range(4..=12)]),
        )]),
        LayerKind::MSELoss | LayerKind::L1Loss => pm(vec![(
            "reduction",
            ParamValue::Text(if r.random_bool(0.5) { "mean" } else { "sum" }.into()),
        )]),
        LayerKind::ReLU | LayerKind::Sigmoid | LayerKind::Tanh | LayerKind::Identity => ParamMap::new(),
    }
}

/// A parameterization of `kind` valid for `input`, with its output shape.
pub fn valid_params(r: &mut StdRng, kind: LayerKind, input: &Shape) -> Option<(ParamMap, Shape)> {
    for _ in 0..64 {
        let params = random_params(r, kind, input);
        let Ok(full) = sketch_core::catalog::resolve_params(kind.spec(), Some(&params)) else {
            continue;
        };
        if let Ok(out) = infer_output_shape(kind, &full, std::slice::from_ref(input)) {
            return Some((full, out));
        }
    }
    None
}

/// Random `(B,C,H,W)` input shape.
pub fn random_image_shape(r: &mut StdRng) -> Shape {
    Shape::batched(&[r.random_range(1..=4), r.random_range(3..=12), r.random_range(3..=12)]).expect("non-zero")
}

fn position(r: &mut StdRng) -> Position {
    Position::new(r.random_range(-500.0..1500.0), r.random_range(-500.0..1500.0))
}

/// Loss-free chain `Input -> ... ` with `len` nodes in total (at least 2).
/// Every node's shape rule holds, so the chain compiles.
pub fn random_chain(r: &mut StdRng, len: usize) -> Graph {
    let mut g = Graph::new(r.random());
    let input_params = random_params(r, LayerKind::Input, &Shape::fixed(&[1]).expect("non-zero"));
    let mut prev = g
        .add_node("Input", Some(&input_params), position(r))
        .expect("valid input");
    let dims: Vec<usize> = input_params["shape"]
        .as_int_list()
        .expect("shape")
        .iter()
        .map(|&d| d as usize)
        .collect();
    let mut shape = Shape::batched(&dims).expect("non-zero");
    let mut ids = vec![prev];
    while ids.len() < len.max(2) {
        let kind = SHAPED[r.random_range(0..SHAPED.len())];
        let Some((params, out)) = valid_params(r, kind, &shape) else {
            continue;
        };
        // Keep tensors small so the reference evaluator stays fast.
        if out.dims().iter().filter_map(|d| d.fixed()).product::<usize>() > 4096 {
            continue;
        }
        let id = g.add_node(kind.name(), Some(&params), position(r)).expect("valid params");
        g.connect(prev, id).expect("fresh edge");
        prev = id;
        shape = out;
        ids.push(id);
    }
    if ids.len() >= 4 && r.random_bool(0.5) {
        let start = r.random_range(1..ids.len() - 2);
        let end = r.random_range(start + 2..=ids.len().min(start + 4));
        g.group_nodes(&ids[start..end], "block").expect("chain segment");
    }
    g
}

/// `Input -> A -> {B, C} -> D` where D is a single-input layer, so D has two
/// incoming edges. Structurally valid but not compilable with a loss-free catalog.
pub fn random_diamond(r: &mut StdRng) -> Graph {
    let mut g = Graph::new(r.random());
    let input = g.add_node("Input", None, position(r)).expect("valid");
    let a = g.add_node("ReLU", None, position(r)).expect("valid");
    let kinds = [LayerKind::Sigmoid, LayerKind::Tanh, LayerKind::Identity, LayerKind::Dropout];
    let b = g.add_node(kinds[r.random_range(0..4)].name(), None, position(r)).expect("valid");
    let c = g.add_node(kinds[r.random_range(0..4)].name(), None, position(r)).expect("valid");
    let d = g.add_node("Identity", None, position(r)).expect("valid");
    for (s, t) in [(input, a), (a, b), (a, c), (b, d), (c, d)] {
        g.connect(s, t).expect("acyclic");
    }
    g
}

/// Checks that `b` equals `a` up to node renaming: same layer types, params,
/// weight bytes and edges under the topological-order correspondence.
pub fn isomorphic(a: &Graph, b: &Graph) -> Result<(), String> {
    let oa = a.topo_sort().map_err(|e| e.to_string())?;
    let ob = b.topo_sort().map_err(|e| e.to_string())?;
    if oa.len() != ob.len() {
        return Err(format!("{} nodes vs {}", oa.len(), ob.len()));
    }
    let map: std::collections::BTreeMap<NodeId, NodeId> = oa.iter().copied().zip(ob.iter().copied()).collect();
    for (&x, &y) in &map {
        let (nx, ny) = (a.node(x).expect("node"), b.node(y).expect("node"));
        if nx.layer_type() != ny.layer_type() {
            return Err(format!("{x} is {} but {y} is {}", nx.layer_type(), ny.layer_type()));
        }
        if nx.params() != ny.params() {
            return Err(format!("{x} params {:?} vs {y} params {:?}", nx.params(), ny.params()));
        }
        let wx: Vec<_> = nx.weights().iter().map(|(r, t)| (r.clone(), t.dims().to_vec(), t.data().to_vec())).collect();
        let wy: Vec<_> = ny.weights().iter().map(|(r, t)| (r.clone(), t.dims().to_vec(), t.data().to_vec())).collect();
        if wx != wy {
            return Err(format!("weights of {x} and {y} differ"));
        }
        let prior: Vec<NodeId> = nx.prior().iter().map(|p| map[p]).collect();
        if prior != ny.prior() {
            return Err(format!("inputs of {x} and {y} differ"));
        }
    }
    Ok(())
}

/// Replaces the batch marker with `batch`.
pub fn concrete(shape: &Shape, batch: usize) -> Vec<usize> {
    shape
        .dims()
        .iter()
        .map(|d| match d {
            Dim::Batch => batch,
            Dim::Fixed(n) => *n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chains_validate() {
        let mut r = rng(1);
        for len in 2..20 {
            let g = random_chain(&mut r, len);
            assert_eq!(g.len(), len);
            assert!(g.validate(None).is_empty(), "{:?}", g.validate(None));
            isomorphic(&g, &g).unwrap();
        }
    }

    #[test]
    fn diamonds_do_not_validate() {
        let g = random_diamond(&mut rng(2));
        assert!(!g.validate(None).is_empty());
    }
}
