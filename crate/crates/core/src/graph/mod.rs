//! The abstract graph of a network: an adjacency-list DAG of layer nodes with
//! ordered `prior`/`next` lists, optional sequential groups and attached weights.

mod analysis;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, expected_weights, CatalogError, LayerKind, Violation};
use crate::ids::{GroupId, NodeId};
use crate::params::ParamMap;
use crate::tensor::TensorValue;
use crate::weights;

pub use analysis::{Diagnostic, DiagnosticKind, InferError, Severity};

/// Canvas coordinates in abstract pixels. Never affects compilation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Position {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    id: NodeId,
    layer_type: LayerKind,
    params: ParamMap,
    prior: Vec<NodeId>,
    next: Vec<NodeId>,
    position: Position,
    group: Option<GroupId>,
    weights: BTreeMap<String, Arc<TensorValue>>,
}

impl Node {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn layer_type(&self) -> LayerKind {
        self.layer_type
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    pub fn prior(&self) -> &[NodeId] {
        &self.prior
    }

    pub fn next(&self) -> &[NodeId] {
        &self.next
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn group(&self) -> Option<GroupId> {
        self.group
    }

    pub fn weights(&self) -> &BTreeMap<String, Arc<TensorValue>> {
        &self.weights
    }

    pub fn weight(&self, role: &str) -> Option<&TensorValue> {
        self.weights.get(role).map(Arc::as_ref)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub name: String,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown layer type `{0}`")]
    UnknownLayerType(String),
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("no edge {src} -> {dst}")]
    UnknownEdge { src: NodeId, dst: NodeId },
    #[error("cannot connect {0} to itself")]
    SelfLoop(NodeId),
    #[error("edge {src} -> {dst} already exists")]
    DuplicateEdge { src: NodeId, dst: NodeId },
    #[error("edge {src} -> {dst} would create a cycle")]
    WouldCreateCycle { src: NodeId, dst: NodeId },
    #[error("nodes do not form a simple chain: {0}")]
    NotAChain(String),
    #[error("node {0} already belongs to a group")]
    AlreadyGrouped(NodeId),
    #[error("graph contains a cycle")]
    CycleDetected,
    #[error("invalid weight `{role}` on {node}: {reason}")]
    InvalidWeight {
        node: NodeId,
        role: String,
        reason: String,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ")
}

impl GraphError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::UnknownLayerType(_) => "unknown_layer_type",
            GraphError::InvalidParams(_) => "invalid_params",
            GraphError::UnknownNode(_) => "unknown_node",
            GraphError::UnknownGroup(_) => "unknown_group",
            GraphError::UnknownEdge { .. } => "unknown_edge",
            GraphError::SelfLoop(_) => "self_loop",
            GraphError::DuplicateEdge { .. } => "duplicate_edge",
            GraphError::WouldCreateCycle { .. } => "would_create_cycle",
            GraphError::NotAChain(_) => "not_a_chain",
            GraphError::AlreadyGrouped(_) => "already_grouped",
            GraphError::CycleDetected => "cycle_detected",
            GraphError::InvalidWeight { .. } => "invalid_weight",
        }
    }
}

impl From<CatalogError> for GraphError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::UnknownLayerType(t) => GraphError::UnknownLayerType(t),
        }
    }
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Groups dissolved as a side effect of a mutation.
pub type Dissolved = Vec<GroupId>;

/// Adjacency-list network graph; the single source of truth for one canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    groups: BTreeMap<GroupId, Group>,
    seed: u64,
    /// Last counter value handed out; shared by node and group ids.
    id_counter: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Graph {
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: BTreeMap::new(),
            groups: BTreeMap::new(),
            seed,
            id_counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id_counter(&self) -> u64 {
        self.id_counter
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    /// Nodes in allocation order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn group(&self, id: GroupId) -> Option<&Group> {
        self.groups.get(&id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes
            .values()
            .flat_map(|n| n.next.iter().map(move |&d| (n.id, d)))
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.nodes.get(&src).is_some_and(|n| n.next.contains(&dst))
    }

    fn get(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    fn get_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))
    }

    fn allocate(&mut self) -> u64 {
        self.id_counter += 1;
        self.id_counter
    }

    pub fn add_node(
        &mut self,
        layer_type: &str,
        params: Option<&ParamMap>,
        position: Position,
    ) -> Result<NodeId> {
        let kind: LayerKind = layer_type.parse()?;
        let params =
            catalog::resolve_params(kind.spec(), params).map_err(GraphError::InvalidParams)?;
        let id = NodeId::from_counter(self.allocate());
        self.nodes.insert(
            id,
            Node {
                id,
                layer_type: kind,
                params,
                prior: Vec::new(),
                next: Vec::new(),
                position,
                group: None,
                weights: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    pub fn remove_node(&mut self, id: NodeId) -> Result<Dissolved> {
        let node = self.nodes.remove(&id).ok_or(GraphError::UnknownNode(id))?;
        for p in &node.prior {
            if let Some(n) = self.nodes.get_mut(p) {
                n.next.retain(|x| *x != id);
            }
        }
        for s in &node.next {
            if let Some(n) = self.nodes.get_mut(s) {
                n.prior.retain(|x| *x != id);
            }
        }
        let mut dissolved = Vec::new();
        if let Some(gid) = node.group {
            if let Some(group) = self.groups.get_mut(&gid) {
                group.members.retain(|m| *m != id);
            }
            if !self.group_is_chain(gid) {
                self.dissolve(gid);
                dissolved.push(gid);
            }
        }
        Ok(dissolved)
    }

    pub fn connect(&mut self, src: NodeId, dst: NodeId) -> Result<Dissolved> {
        self.get(src)?;
        self.get(dst)?;
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        if self.has_edge(src, dst) {
            return Err(GraphError::DuplicateEdge { src, dst });
        }
        if self.reaches(dst, src) {
            return Err(GraphError::WouldCreateCycle { src, dst });
        }
        self.get_mut(src)?.next.push(dst);
        self.get_mut(dst)?.prior.push(src);
        Ok(self.dissolve_broken_between(src, dst))
    }

    pub fn disconnect(&mut self, src: NodeId, dst: NodeId) -> Result<Dissolved> {
        if !self.has_edge(src, dst) || !self.nodes.contains_key(&dst) {
            return Err(GraphError::UnknownEdge { src, dst });
        }
        self.get_mut(src)?.next.retain(|x| *x != dst);
        self.get_mut(dst)?.prior.retain(|x| *x != src);
        Ok(self.dissolve_broken_between(src, dst))
    }

    /// Dissolves the shared group of `a` and `b` if an edge change broke its chain.
    fn dissolve_broken_between(&mut self, a: NodeId, b: NodeId) -> Dissolved {
        let ga = self.nodes.get(&a).and_then(|n| n.group);
        let gb = self.nodes.get(&b).and_then(|n| n.group);
        match (ga, gb) {
            (Some(g), Some(h)) if g == h && !self.group_is_chain(g) => {
                self.dissolve(g);
                vec![g]
            }
            _ => vec![],
        }
    }

    /// True if `to` is reachable from `from` along `next` edges.
    fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                if let Some(node) = self.nodes.get(&n) {
                    stack.extend(node.next.iter().copied());
                }
            }
        }
        false
    }

    pub fn update_node(
        &mut self,
        id: NodeId,
        new_params: Option<&ParamMap>,
        new_position: Option<Position>,
    ) -> Result<()> {
        let node = self.get(id)?;
        let kind = node.layer_type;
        let merged = catalog::merge_params(kind.spec(), &node.params, new_params)
            .map_err(GraphError::InvalidParams)?;
        let node = self.get_mut(id)?;
        if merged != node.params {
            let expected: BTreeMap<&str, Vec<usize>> =
                expected_weights(kind, &merged).into_iter().collect();
            node.weights
                .retain(|role, t| expected.get(role.as_str()).is_some_and(|d| d == t.dims()));
            node.params = merged;
        }
        if let Some(p) = new_position {
            node.position = p;
        }
        Ok(())
    }

    pub fn group_nodes(&mut self, ids: &[NodeId], name: &str) -> Result<GroupId> {
        for id in ids {
            let node = self.get(*id)?;
            if node.group.is_some() {
                return Err(GraphError::AlreadyGrouped(*id));
            }
        }
        self.check_chain(ids).map_err(GraphError::NotAChain)?;
        let gid = GroupId::from_counter(self.allocate());
        for id in ids {
            self.get_mut(*id)?.group = Some(gid);
        }
        self.groups.insert(
            gid,
            Group {
                id: gid,
                name: name.to_string(),
                members: ids.to_vec(),
            },
        );
        Ok(gid)
    }

    pub fn ungroup(&mut self, gid: GroupId) -> Result<()> {
        if !self.groups.contains_key(&gid) {
            return Err(GraphError::UnknownGroup(gid));
        }
        self.dissolve(gid);
        Ok(())
    }

    fn dissolve(&mut self, gid: GroupId) {
        if let Some(group) = self.groups.remove(&gid) {
            for m in group.members {
                if let Some(n) = self.nodes.get_mut(&m) {
                    n.group = None;
                }
            }
        }
    }

    fn group_is_chain(&self, gid: GroupId) -> bool {
        self.groups
            .get(&gid)
            .is_some_and(|g| self.check_chain(&g.members).is_ok())
    }

    /// Members in order must be linked `k -> k+1` with no other edges among them.
    fn check_chain(&self, ids: &[NodeId]) -> std::result::Result<(), String> {
        if ids.len() < 2 {
            return Err("a group needs at least two nodes".into());
        }
        let members: BTreeSet<NodeId> = ids.iter().copied().collect();
        if members.len() != ids.len() {
            return Err("duplicate node in group".into());
        }
        for pair in ids.windows(2) {
            if !self.has_edge(pair[0], pair[1]) {
                return Err(format!("no edge {} -> {}", pair[0], pair[1]));
            }
        }
        let internal = ids
            .iter()
            .filter_map(|id| self.nodes.get(id))
            .map(|n| n.next.iter().filter(|d| members.contains(d)).count())
            .sum::<usize>();
        if internal != ids.len() - 1 {
            return Err("extra edges between group members".into());
        }
        Ok(())
    }

    /// Attaches a weight tensor; its role and dims must match the node's parameters.
    pub fn set_weight(&mut self, id: NodeId, tensor: TensorValue) -> Result<()> {
        let node = self.get(id)?;
        let expected = expected_weights(node.layer_type, &node.params);
        let role = tensor.role().to_string();
        match expected.iter().find(|(r, _)| *r == role) {
            None => Err(GraphError::InvalidWeight {
                node: id,
                role,
                reason: format!("{} has no such weight role", node.layer_type),
            }),
            Some((_, dims)) if dims.as_slice() != tensor.dims() => Err(GraphError::InvalidWeight {
                node: id,
                role,
                reason: format!("expected dims {dims:?}, got {:?}", tensor.dims()),
            }),
            Some(_) => {
                self.get_mut(id)?.weights.insert(role, Arc::new(tensor));
                Ok(())
            }
        }
    }

    /// Generates every missing weight tensor deterministically from the seed.
    pub fn materialize_weights(&mut self) {
        let seed = self.seed;
        for node in self.nodes.values_mut() {
            let missing = weights::missing_for(seed, node.id, node.layer_type, &node.params, |r, d| {
                node.weights.get(r).is_some_and(|t| t.dims() == d)
            });
            for t in missing {
                node.weights.insert(t.role().to_string(), Arc::new(t));
            }
        }
    }

    pub fn with_materialized_weights(&self) -> Graph {
        let mut g = self.clone();
        g.materialize_weights();
        g
    }

    /// Rebuilds a graph from stored parts, checking every structural invariant.
    pub fn from_parts(
        seed: u64,
        id_counter: u64,
        nodes: Vec<NodePart>,
        groups: Vec<Group>,
    ) -> std::result::Result<Graph, String> {
        let mut graph = Graph {
            nodes: BTreeMap::new(),
            groups: BTreeMap::new(),
            seed,
            id_counter,
        };
        for part in nodes {
            let id = part.id;
            if id.counter() == 0 || id.counter() > id_counter {
                return Err(format!("node id {id} outside allocated range"));
            }
            let spec = part.layer_type.spec();
            catalog::check_complete(spec, &part.params)
                .map_err(|v| format!("node {id}: {}", join_violations(&v)))?;
            let node = Node {
                id,
                layer_type: part.layer_type,
                params: part.params,
                prior: part.prior,
                next: part.next,
                position: part.position,
                group: part.group,
                weights: BTreeMap::new(),
            };
            if graph.nodes.insert(id, node).is_some() {
                return Err(format!("duplicate node id {id}"));
            }
            for t in part.weights {
                graph.set_weight(id, t).map_err(|e| e.to_string())?;
            }
        }
        for group in groups {
            if group.id.counter() == 0 || group.id.counter() > id_counter {
                return Err(format!("group id {} outside allocated range", group.id));
            }
            if graph.groups.insert(group.id, group.clone()).is_some() {
                return Err(format!("duplicate group id {}", group.id));
            }
        }
        graph.check_invariants()?;
        Ok(graph)
    }

    /// Verifies edge symmetry, referential integrity, acyclicity and group chains.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for node in self.nodes.values() {
            for (list, name) in [(&node.prior, "prior"), (&node.next, "next")] {
                let unique: BTreeSet<_> = list.iter().collect();
                if unique.len() != list.len() {
                    return Err(format!("{} has duplicate {name} entries", node.id));
                }
                if list.contains(&node.id) {
                    return Err(format!("{} lists itself in {name}", node.id));
                }
            }
            for d in &node.next {
                let other = self
                    .nodes
                    .get(d)
                    .ok_or_else(|| format!("{} -> unknown node {d}", node.id))?;
                if !other.prior.contains(&node.id) {
                    return Err(format!("edge {} -> {d} missing from {d}.prior", node.id));
                }
            }
            for p in &node.prior {
                let other = self
                    .nodes
                    .get(p)
                    .ok_or_else(|| format!("{} <- unknown node {p}", node.id))?;
                if !other.next.contains(&node.id) {
                    return Err(format!("edge {p} -> {} missing from {p}.next", node.id));
                }
            }
            if let Some(g) = node.group {
                let group = self
                    .groups
                    .get(&g)
                    .ok_or_else(|| format!("{} references unknown group {g}", node.id))?;
                if !group.members.contains(&node.id) {
                    return Err(format!("{} claims group {g} but is not a member", node.id));
                }
            }
        }
        for group in self.groups.values() {
            for m in &group.members {
                let node = self
                    .nodes
                    .get(m)
                    .ok_or_else(|| format!("group {} lists unknown node {m}", group.id))?;
                if node.group != Some(group.id) {
                    return Err(format!("member {m} does not point back to group {}", group.id));
                }
            }
            self.check_chain(&group.members)
                .map_err(|e| format!("group {}: {e}", group.id))?;
        }
        self.topo_sort().map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// Owned node contents used when rebuilding a graph from storage.
#[derive(Clone, Debug)]
pub struct NodePart {
    pub id: NodeId,
    pub layer_type: LayerKind,
    pub params: ParamMap,
    pub prior: Vec<NodeId>,
    pub next: Vec<NodeId>,
    pub position: Position,
    pub group: Option<GroupId>,
    pub weights: Vec<TensorValue>,
}
