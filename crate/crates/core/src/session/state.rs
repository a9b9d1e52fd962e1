//! Editor session persistence and logged project I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::project::{self, write_atomic, ProjectError};
use crate::graph::Graph;
use crate::telemetry::{LogEvent, Telemetry};

pub const SESSION_FILE: &str = "session.json";
pub const STATE_DIR_ENV: &str = "SKETCH_STATE_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub pan: [f64; 2],
    pub zoom: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tab {
    pub canvas_id: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub version: String,
    pub cwd: PathBuf,
    pub open_tabs: Vec<Tab>,
    pub active_tab: Option<usize>,
    /// Keyed by canvas id.
    #[serde(default)]
    pub viewports: BTreeMap<String, Viewport>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            cwd: std::env::current_dir().unwrap_or_default(),
            open_tabs: vec![],
            active_tab: None,
            viewports: BTreeMap::new(),
        }
    }
}

/// `SKETCH_STATE_DIR`, else `$XDG_STATE_HOME/sketch`, else `~/.local/state/sketch`.
pub fn default_state_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(STATE_DIR_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_STATE_HOME").filter(|d| !d.is_empty()) {
        return PathBuf::from(dir).join("sketch");
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".local").join("state").join("sketch")
}

#[derive(Clone, Debug)]
pub struct StateManager {
    state_dir: PathBuf,
    telemetry: Telemetry,
}

impl StateManager {
    pub fn new(state_dir: impl Into<PathBuf>, telemetry: Telemetry) -> Self {
        Self {
            state_dir: state_dir.into(),
            telemetry,
        }
    }

    pub fn state_dir(&self) -> &Path {
        &self.state_dir
    }

    pub fn session_path(&self) -> PathBuf {
        self.state_dir.join(SESSION_FILE)
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn save_project(&self, graph: &Graph, path: &Path) -> Result<(), ProjectError> {
        let result = project::save_project(graph, path);
        self.report("project.save", path, &result, graph.len());
        result
    }

    pub fn open_project(&self, path: &Path) -> Result<Graph, ProjectError> {
        let result = project::open_project(path);
        let nodes = result.as_ref().map_or(0, Graph::len);
        self.report("project.open", path, &result, nodes);
        result
    }

    fn report<T>(&self, kind: &str, path: &Path, result: &Result<T, ProjectError>, nodes: usize) {
        let path = path.display();
        self.telemetry.log(match result {
            Ok(_) => LogEvent::info(kind).with("path", &path).with("nodes", nodes),
            Err(e) => LogEvent::error(kind, e).with("path", &path).with("code", e.code()),
        });
    }

    pub fn save_session(&self, state: &SessionState) -> Result<(), ProjectError> {
        let path = self.session_path();
        let result = std::fs::create_dir_all(&self.state_dir)
            .map_err(|source| ProjectError::Io {
                path: self.state_dir.clone(),
                source,
            })
            .and_then(|()| {
                let mut bytes = serde_json::to_vec_pretty(state).expect("session serializes");
                bytes.push(b'\n');
                write_atomic(&path, &bytes)
            });
        self.telemetry.log(match &result {
            Ok(()) => LogEvent::info("session.save").with("tabs", state.open_tabs.len()),
            Err(e) => LogEvent::error("session.save", e),
        });
        result
    }

    /// Last saved session. Never fails: a missing or corrupt file yields the
    /// default session, and tabs whose files vanished are dropped.
    pub fn restore_session(&self) -> SessionState {
        let path = self.session_path();
        let mut state = match std::fs::read(&path) {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return SessionState::default(),
            Err(e) => {
                self.telemetry.log(LogEvent::error("session.corrupt", &e).with("path", path.display()));
                return SessionState::default();
            }
            Ok(bytes) => match serde_json::from_slice::<SessionState>(&bytes) {
                Ok(s) => s,
                Err(e) => {
                    self.telemetry.log(LogEvent::error("session.corrupt", &e).with("path", path.display()));
                    return SessionState::default();
                }
            },
        };

        let active = state.active_tab.and_then(|i| state.open_tabs.get(i)).cloned();
        let mut kept = Vec::with_capacity(state.open_tabs.len());
        for tab in std::mem::take(&mut state.open_tabs) {
            if tab.path.is_file() {
                kept.push(tab);
            } else {
                self.telemetry.log(
                    LogEvent::warn("session.tab_missing")
                        .with("canvas", &tab.canvas_id)
                        .with("path", tab.path.display()),
                );
                state.viewports.remove(&tab.canvas_id);
            }
        }
        state.active_tab = match active.and_then(|a| kept.iter().position(|t| *t == a)) {
            Some(i) => Some(i),
            None if kept.is_empty() => None,
            None => Some(0),
        };
        state.open_tabs = kept;
        self.telemetry.log(LogEvent::info("session.restore").with("tabs", state.open_tabs.len()));
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{read_log, Level};

    fn tab(dir: &Path, name: &str) -> Tab {
        let path = dir.join(format!("{name}.sketch"));
        project::save_project(&Graph::new(0), &path).unwrap();
        Tab {
            canvas_id: name.to_string(),
            path,
        }
    }

    #[test]
    fn restore_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mgr = StateManager::new(dir.path().join("state"), Telemetry::disabled());
        let state = SessionState {
            open_tabs: vec![tab(dir.path(), "a"), tab(dir.path(), "b")],
            active_tab: Some(1),
            ..SessionState::default()
        };
        mgr.save_session(&state).unwrap();
        assert_eq!(mgr.restore_session(), state);
    }

    #[test]
    fn missing_session_is_default() {
        let dir = tempfile::tempdir().unwrap();
        let mgr = StateManager::new(dir.path(), Telemetry::disabled());
        let s = mgr.restore_session();
        assert!(s.open_tabs.is_empty());
        assert_eq!(s.cwd, std::env::current_dir().unwrap());
    }

    #[test]
    fn vanished_tab_is_dropped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let log_dir = dir.path().join("logs");
        let telemetry = Telemetry::open(&log_dir, Level::Info);
        let mgr = StateManager::new(dir.path().join("state"), telemetry.clone());
        let a = tab(dir.path(), "a");
        let b = tab(dir.path(), "b");
        mgr.save_session(&SessionState {
            open_tabs: vec![a.clone(), b.clone()],
            active_tab: Some(1),
            ..SessionState::default()
        })
        .unwrap();
        std::fs::remove_file(&b.path).unwrap();
        let s = mgr.restore_session();
        assert_eq!(s.open_tabs, vec![a]);
        assert_eq!(s.active_tab, Some(0));
        telemetry.flush();
        let events = read_log(telemetry.path().unwrap()).unwrap();
        assert!(events
            .iter()
            .any(|e| e.kind == "session.tab_missing" && e.level == Level::Warn));
    }

    #[test]
    fn corrupt_session_is_default() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SESSION_FILE), b"{not json").unwrap();
        let mgr = StateManager::new(dir.path(), Telemetry::disabled());
        assert!(mgr.restore_session().open_tabs.is_empty());
    }
}
