//! Random mutation sequences shared by the property tests.

#![allow(dead_code)]

use proptest::prelude::*;
use sketch_core::{Graph, GraphError, NodeId, Position};

#[derive(Clone, Debug)]
pub enum Op {
    Add(usize, f64, f64),
    Remove(usize),
    Connect(usize, usize),
    Disconnect(usize, usize),
    Move(usize, f64, f64),
    Group(usize, usize),
    Ungroup(usize),
}

const KINDS: [&str; 8] = ["Input", "ReLU", "Conv2d", "Linear", "Flatten", "Identity", "MSELoss", "BatchNorm2d"];

pub fn op() -> impl Strategy<Value = Op> {
    let coord = -1000.0..1000.0f64;
    prop_oneof![
        3 => (0..KINDS.len(), coord.clone(), coord.clone()).prop_map(|(k, x, y)| Op::Add(k, x, y)),
        1 => any::<usize>().prop_map(Op::Remove),
        4 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Connect(a, b)),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Disconnect(a, b)),
        2 => (any::<usize>(), coord.clone(), coord).prop_map(|(a, x, y)| Op::Move(a, x, y)),
        1 => (any::<usize>(), 2..5usize).prop_map(|(a, n)| Op::Group(a, n)),
        1 => any::<usize>().prop_map(Op::Ungroup),
    ]
}

fn pick(g: &Graph, i: usize) -> Option<NodeId> {
    let ids: Vec<_> = g.node_ids().collect();
    (!ids.is_empty()).then(|| ids[i % ids.len()])
}

/// Applies `op`; `Ok(None)` when it had no target to act on.
pub fn apply(g: &mut Graph, op: &Op) -> Result<Option<String>, GraphError> {
    let label = match *op {
        Op::Add(k, x, y) => {
            let id = g.add_node(KINDS[k], None, Position::new(x, y))?;
            format!("node.add {id}")
        }
        Op::Remove(i) => {
            let Some(id) = pick(g, i) else { return Ok(None) };
            g.remove_node(id)?;
            format!("node.remove {id}")
        }
        Op::Connect(a, b) => {
            let (Some(s), Some(t)) = (pick(g, a), pick(g, b)) else { return Ok(None) };
            g.connect(s, t)?;
            format!("edge.connect {s} {t}")
        }
        Op::Disconnect(a, b) => {
            let Some(s) = pick(g, a) else { return Ok(None) };
            let next = g.node(s).unwrap().next().to_vec();
            let t = if next.is_empty() { pick(g, b).unwrap() } else { next[b % next.len()] };
            g.disconnect(s, t)?;
            format!("edge.disconnect {s} {t}")
        }
        Op::Move(i, x, y) => {
            let Some(id) = pick(g, i) else { return Ok(None) };
            g.update_node(id, None, Some(Position::new(x, y)))?;
            format!("node.move {id}")
        }
        Op::Group(i, n) => {
            // Walk forward along first successors to propose a chain.
            let Some(mut id) = pick(g, i) else { return Ok(None) };
            let mut members = vec![id];
            while members.len() < n {
                match g.node(id).unwrap().next().first() {
                    Some(&nx) => {
                        members.push(nx);
                        id = nx;
                    }
                    None => break,
                }
            }
            let gid = g.group_nodes(&members, "block")?;
            format!("group.create {gid}")
        }
        Op::Ungroup(i) => {
            let groups: Vec<_> = g.groups().map(|gr| gr.id).collect();
            if groups.is_empty() {
                return Ok(None);
            }
            let gid = groups[i % groups.len()];
            g.ungroup(gid)?;
            format!("group.dissolve {gid}")
        }
    };
    Ok(Some(label))
}
