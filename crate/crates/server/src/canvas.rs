//! Open canvases: one graph history per tab, each behind its own lock.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use sketch_core::session::CanvasHistory;
use sketch_core::{Graph, GraphError, GroupId, NodeId, ParamMap, Position};
use tokio::sync::watch;

/// One edit request, tagged by `op`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all_fields = "camelCase")]
pub enum Mutation {
    #[serde(rename = "node.add")]
    NodeAdd {
        #[serde(rename = "type")]
        layer_type: String,
        #[serde(default)]
        params: Option<ParamMap>,
        #[serde(default)]
        position: Option<Position>,
    },
    #[serde(rename = "node.remove")]
    NodeRemove { node_id: NodeId },
    #[serde(rename = "node.update")]
    NodeUpdate {
        node_id: NodeId,
        #[serde(default)]
        params: Option<ParamMap>,
        #[serde(default)]
        position: Option<Position>,
    },
    #[serde(rename = "edge.connect")]
    EdgeConnect { src: NodeId, dst: NodeId },
    #[serde(rename = "edge.disconnect")]
    EdgeDisconnect { src: NodeId, dst: NodeId },
    #[serde(rename = "group.create")]
    GroupCreate {
        node_ids: Vec<NodeId>,
        #[serde(default)]
        name: Option<String>,
    },
    #[serde(rename = "group.dissolve")]
    GroupDissolve { group_id: GroupId },
}

/// What a successful mutation produced besides the new graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Applied {
    pub node_id: Option<NodeId>,
    pub group_id: Option<GroupId>,
    pub dissolved: Vec<GroupId>,
}

impl Mutation {
    pub fn op(&self) -> &'static str {
        match self {
            Mutation::NodeAdd { .. } => "node.add",
            Mutation::NodeRemove { .. } => "node.remove",
            Mutation::NodeUpdate { .. } => "node.update",
            Mutation::EdgeConnect { .. } => "edge.connect",
            Mutation::EdgeDisconnect { .. } => "edge.disconnect",
            Mutation::GroupCreate { .. } => "group.create",
            Mutation::GroupDissolve { .. } => "group.dissolve",
        }
    }

    /// Drags of a single node collapse into one undo step.
    pub fn coalesce_key(&self) -> Option<String> {
        match self {
            Mutation::NodeUpdate {
                node_id,
                params: None,
                position: Some(_),
            } => Some(format!("move {node_id}")),
            _ => None,
        }
    }

    /// Applies the mutation to `graph`. On error `graph` is unchanged.
    pub fn apply(&self, graph: &mut Graph) -> Result<Applied, GraphError> {
        let mut out = Applied::default();
        match self {
            Mutation::NodeAdd {
                layer_type,
                params,
                position,
            } => {
                let id = graph.add_node(layer_type, params.as_ref(), position.unwrap_or_default())?;
                out.node_id = Some(id);
            }
            Mutation::NodeRemove { node_id } => out.dissolved = graph.remove_node(*node_id)?,
            Mutation::NodeUpdate {
                node_id,
                params,
                position,
            } => graph.update_node(*node_id, params.as_ref(), *position)?,
            Mutation::EdgeConnect { src, dst } => out.dissolved = graph.connect(*src, *dst)?,
            Mutation::EdgeDisconnect { src, dst } => out.dissolved = graph.disconnect(*src, *dst)?,
            Mutation::GroupCreate { node_ids, name } => {
                let name = name.as_deref().unwrap_or("Sequential");
                out.group_id = Some(graph.group_nodes(node_ids, name)?);
            }
            Mutation::GroupDissolve { group_id } => graph.ungroup(*group_id)?,
        }
        Ok(out)
    }

    pub fn label(&self, applied: &Applied) -> String {
        let target = match self {
            Mutation::NodeAdd { .. } => applied.node_id.map(|n| n.to_string()).unwrap_or_default(),
            Mutation::NodeRemove { node_id } | Mutation::NodeUpdate { node_id, .. } => node_id.to_string(),
            Mutation::EdgeConnect { src, dst } | Mutation::EdgeDisconnect { src, dst } => {
                format!("{src}->{dst}")
            }
            Mutation::GroupCreate { .. } => applied.group_id.map(|g| g.to_string()).unwrap_or_default(),
            Mutation::GroupDissolve { group_id } => group_id.to_string(),
        };
        format!("{} {target}", self.op())
    }
}

pub struct CanvasState {
    pub history: CanvasHistory,
    /// Project file backing this tab, once it has one.
    pub path: Option<PathBuf>,
    pub last_kernel: Option<String>,
}

impl CanvasState {
    pub fn graph(&self) -> &Graph {
        self.history.current()
    }
}

pub struct Canvas {
    pub id: String,
    state: Mutex<CanvasState>,
    version: watch::Sender<u64>,
}

impl Canvas {
    pub fn new(id: String, graph: Graph, path: Option<PathBuf>) -> Self {
        Self {
            id,
            state: Mutex::new(CanvasState {
                history: CanvasHistory::new(graph),
                path,
                last_kernel: None,
            }),
            version: watch::channel(0).0,
        }
    }

    /// The single writer lock. Never held across an await point.
    pub fn lock(&self) -> MutexGuard<'_, CanvasState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Publishes the current history version to long-poll waiters.
    pub fn notify(&self, state: &CanvasState) {
        self.version.send_replace(state.history.version());
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.version.subscribe()
    }
}

/// Id-ordered registry of open canvases.
#[derive(Default)]
pub struct Canvases {
    inner: RwLock<Inner>,
}

#[derive(Default)]
struct Inner {
    next: u64,
    open: BTreeMap<u64, Arc<Canvas>>,
}

fn parse_id(id: &str) -> Option<u64> {
    id.strip_prefix('c')?.parse().ok()
}

impl Canvases {
    pub fn get(&self, id: &str) -> Option<Arc<Canvas>> {
        let key = parse_id(id)?;
        self.inner.read().unwrap_or_else(|p| p.into_inner()).open.get(&key).cloned()
    }

    pub fn open(&self, graph: Graph, path: Option<PathBuf>) -> Arc<Canvas> {
        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        inner.next += 1;
        let key = inner.next;
        let canvas = Arc::new(Canvas::new(format!("c{key}"), graph, path));
        inner.open.insert(key, canvas.clone());
        canvas
    }

    /// Reopens a canvas under a previously issued id; `None` if the id is
    /// malformed or taken.
    pub fn reopen(&self, id: &str, graph: Graph, path: PathBuf) -> Option<Arc<Canvas>> {
        let key = parse_id(id)?;
        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        if inner.open.contains_key(&key) {
            return None;
        }
        inner.next = inner.next.max(key);
        let canvas = Arc::new(Canvas::new(id.to_string(), graph, Some(path)));
        inner.open.insert(key, canvas.clone());
        Some(canvas)
    }

    pub fn close(&self, id: &str) -> Option<Arc<Canvas>> {
        let key = parse_id(id)?;
        self.inner.write().unwrap_or_else(|p| p.into_inner()).open.remove(&key)
    }

    pub fn all(&self) -> Vec<Arc<Canvas>> {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).open.values().cloned().collect()
    }
}
