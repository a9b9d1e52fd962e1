//! The `.sketch` project document and its weight sidecar.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sidecar::{self, SidecarError};
use crate::catalog::LayerKind;
use crate::graph::{Graph, Group, NodePart, Position};
use crate::ids::{GroupId, NodeId};
use crate::params::ParamMap;
use crate::tensor::TensorValue;

pub const FORMAT: &str = "sketch-project";
pub const VERSION: &str = "1.0";
pub const PROJECT_EXTENSION: &str = "sketch";
pub const WEIGHTS_EXTENSION: &str = "weights";

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed project (version {version}): {reason}")]
    MalformedProject { version: String, reason: String },
    #[error("unsupported project version {0}")]
    UnsupportedProjectVersion(String),
    #[error("weight file: {0}")]
    Sidecar(#[from] SidecarError),
}

impl ProjectError {
    pub fn code(&self) -> &'static str {
        match self {
            ProjectError::Io { .. } => "io_error",
            ProjectError::MalformedProject { .. } => "malformed_project",
            ProjectError::UnsupportedProjectVersion(_) => "unsupported_project_version",
            ProjectError::Sidecar(_) => "malformed_weights",
        }
    }

    fn malformed(version: &str, reason: impl Into<String>) -> Self {
        ProjectError::MalformedProject {
            version: version.to_string(),
            reason: reason.into(),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub layer_type: LayerKind,
    pub params: ParamMap,
    pub position: Position,
    pub prior: Vec<NodeId>,
    pub next: Vec<NodeId>,
    pub group: Option<GroupId>,
    /// Weight role to content hash.
    pub weight_refs: BTreeMap<String, String>,
}

/// Serialized graph. Also the wire shape of `GET /api/canvas/{id}/graph`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectDoc {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub id_counter: u64,
    pub nodes: Vec<NodeDoc>,
    pub groups: Vec<Group>,
    pub weight_file: Option<String>,
}

/// Splits a graph into its document and the content-addressed tensors it references.
pub fn to_document(graph: &Graph, weight_file: Option<String>) -> (ProjectDoc, BTreeMap<String, TensorValue>) {
    let mut pool = BTreeMap::new();
    let nodes = graph
        .nodes()
        .map(|n| {
            let weight_refs = n
                .weights()
                .iter()
                .map(|(role, t)| {
                    let hash = t.content_hash();
                    pool.entry(hash.clone())
                        .or_insert_with(|| t.as_ref().clone().with_role(hash.clone()));
                    (role.clone(), hash)
                })
                .collect();
            NodeDoc {
                id: n.id(),
                layer_type: n.layer_type(),
                params: n.params().clone(),
                position: n.position(),
                prior: n.prior().to_vec(),
                next: n.next().to_vec(),
                group: n.group(),
                weight_refs,
            }
        })
        .collect();
    let doc = ProjectDoc {
        format: FORMAT.to_string(),
        version: VERSION.to_string(),
        seed: graph.seed(),
        id_counter: graph.id_counter(),
        nodes,
        groups: graph.groups().cloned().collect(),
        weight_file,
    };
    (doc, pool)
}

/// Rebuilds a graph, resolving weight references against `pool`.
pub fn from_document(doc: ProjectDoc, pool: &BTreeMap<String, TensorValue>) -> Result<Graph, ProjectError> {
    check_version(&doc.format, &doc.version)?;
    let version = doc.version.clone();
    let mut parts = Vec::with_capacity(doc.nodes.len());
    for n in doc.nodes {
        let mut weights = Vec::new();
        for (role, hash) in &n.weight_refs {
            let t = pool.get(hash).ok_or_else(|| {
                ProjectError::malformed(&version, format!("{} references missing weight {hash}", n.id))
            })?;
            weights.push(t.clone().with_role(role.clone()));
        }
        parts.push(NodePart {
            id: n.id,
            layer_type: n.layer_type,
            params: n.params,
            prior: n.prior,
            next: n.next,
            position: n.position,
            group: n.group,
            weights,
        });
    }
    Graph::from_parts(doc.seed, doc.id_counter, parts, doc.groups)
        .map_err(|reason| ProjectError::malformed(&version, reason))
}

fn check_version(format: &str, version: &str) -> Result<(), ProjectError> {
    if format != FORMAT {
        return Err(ProjectError::malformed(version, format!("format is `{format}`, not `{FORMAT}`")));
    }
    let major = version.split('.').next().unwrap_or("");
    match major.parse::<u32>() {
        Ok(1) => Ok(()),
        Ok(_) => Err(ProjectError::UnsupportedProjectVersion(version.to_string())),
        Err(_) => Err(ProjectError::malformed(version, "version is not MAJOR.MINOR")),
    }
}

/// Canonical document bytes: pretty JSON with a trailing newline.
pub fn document_bytes(doc: &ProjectDoc) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("project documents serialize");
    bytes.push(b'\n');
    bytes
}

/// Serialized form of a graph as it would be saved to `path`.
pub fn serialize(graph: &Graph, path: &Path) -> (Vec<u8>, Vec<u8>) {
    let (doc, pool) = to_document(graph, Some(weights_file_name(path)));
    let entries: Vec<(String, TensorValue)> = pool.into_iter().collect();
    (document_bytes(&doc), sidecar::encode(&entries))
}

pub fn weights_path(project: &Path) -> PathBuf {
    project.with_extension(WEIGHTS_EXTENSION)
}

fn weights_file_name(project: &Path) -> String {
    weights_path(project)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Writes `bytes` to `path` via a temp file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(path))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| ProjectError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Writes `<name>.sketch` and its `<name>.weights` sidecar. The sidecar goes
/// first so a project file never points at a missing weight file.
pub fn save_project(graph: &Graph, path: &Path) -> Result<(), ProjectError> {
    let (doc, weights) = serialize(graph, path);
    write_atomic(&weights_path(path), &weights)?;
    write_atomic(path, &doc)
}

pub fn open_project(path: &Path) -> Result<Graph, ProjectError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    let doc: ProjectDoc = parse_document(&bytes)?;
    let mut pool = BTreeMap::new();
    if let Some(name) = doc.weight_file.as_deref().filter(|n| !n.is_empty()) {
        if Path::new(name).components().count() != 1 {
            return Err(ProjectError::malformed(&doc.version, format!("weight file `{name}` is not a sibling path")));
        }
        let wpath = path.with_file_name(name);
        let needed = doc.nodes.iter().any(|n| !n.weight_refs.is_empty());
        match std::fs::read(&wpath) {
            Ok(wbytes) => {
                for (hash, t) in sidecar::decode(&wbytes)? {
                    if t.content_hash() != hash {
                        return Err(ProjectError::malformed(
                            &doc.version,
                            format!("weight entry {hash} does not match its content"),
                        ));
                    }
                    pool.insert(hash, t);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && !needed => {}
            Err(e) => return Err(io(&wpath)(e)),
        }
    }
    from_document(doc, &pool)
}

/// Parses document bytes, reporting the version when the rest is malformed.
pub fn parse_document(bytes: &[u8]) -> Result<ProjectDoc, ProjectError> {
    #[derive(Deserialize)]
    struct Header {
        format: Option<String>,
        version: Option<String>,
    }
    let header: Header = serde_json::from_slice(bytes)
        .map_err(|e| ProjectError::malformed("unknown", format!("not a JSON object: {e}")))?;
    let version = header.version.unwrap_or_else(|| "unknown".into());
    check_version(header.format.as_deref().unwrap_or(""), &version)?;
    serde_json::from_slice(bytes).map_err(|e| ProjectError::malformed(&version, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Graph {
        let mut g = Graph::new(99);
        let a = g.add_node("Input", None, Position::new(1.5, 2.25)).unwrap();
        let b = g.add_node("Linear", None, Position::new(0.1, 0.2)).unwrap();
        let c = g.add_node("ReLU", None, Position::default()).unwrap();
        g.connect(a, b).unwrap();
        g.connect(b, c).unwrap();
        g.group_nodes(&[b, c], "head").unwrap();
        g.materialize_weights();
        g
    }

    #[test]
    fn save_open_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sketch");
        let g = sample();
        save_project(&g, &path).unwrap();
        assert!(dir.path().join("model.weights").exists());
        let back = open_project(&path).unwrap();
        assert_eq!(back, g);
        assert_eq!(serialize(&back, &path), serialize(&g, &path));
    }

    #[test]
    fn empty_graph_writes_empty_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.sketch");
        save_project(&Graph::new(0), &path).unwrap();
        let bytes = std::fs::read(dir.path().join("empty.weights")).unwrap();
        assert_eq!(&bytes[8..12], &0u32.to_le_bytes());
    }

    #[test]
    fn version_checks() {
        let (mut doc, _) = to_document(&Graph::new(0), None);
        doc.version = "99.0".into();
        assert!(matches!(
            parse_document(&document_bytes(&doc)),
            Err(ProjectError::UnsupportedProjectVersion(v)) if v == "99.0"
        ));
        doc.version = "1.3".into();
        assert!(parse_document(&document_bytes(&doc)).is_ok());
        assert!(matches!(
            parse_document(b"[1,2]"),
            Err(ProjectError::MalformedProject { .. })
        ));
    }

    #[test]
    fn broken_edges_are_malformed() {
        let (mut doc, pool) = to_document(&sample(), None);
        doc.nodes[0].next.clear();
        assert!(matches!(
            from_document(doc, &pool),
            Err(ProjectError::MalformedProject { .. })
        ));
    }

    #[test]
    fn tampered_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sketch");
        save_project(&sample(), &path).unwrap();
        let wpath = dir.path().join("m.weights");
        let mut bytes = std::fs::read(&wpath).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        std::fs::write(&wpath, bytes).unwrap();
        assert!(matches!(open_project(&path), Err(ProjectError::MalformedProject { .. })));
    }
}
