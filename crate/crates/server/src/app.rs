//! Shared server state and the HTTP routes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sketch_core::binder::{ExportOptions, Registry};
use sketch_core::catalog::catalog_json;
use sketch_core::session::project::{to_document, PROJECT_EXTENSION};
use sketch_core::session::{SessionState, StateManager, Tab, Viewport};
use sketch_core::telemetry::{LogEvent, Telemetry};
use sketch_core::Graph;

use crate::artifacts::{artifact_base, fresh_project_path, write_compiled};
use crate::canvas::{Canvas, CanvasState, Canvases, Mutation};
use crate::error::{ApiError, ApiResult};
use crate::paths::Root;

const MAX_BODY: usize = 256 << 20;
const DEFAULT_POLL_MS: u64 = 25_000;
const MAX_POLL_MS: u64 = 60_000;

/// Session bits that are not derivable from the open canvases.
#[derive(Default)]
struct SessionMeta {
    active: Option<String>,
    viewports: BTreeMap<String, Viewport>,
}

pub struct Shared {
    pub canvases: Canvases,
    pub registry: Registry,
    pub state: StateManager,
    pub root: Root,
    pub telemetry: Telemetry,
    pub ui_dir: Option<Root>,
    meta: Mutex<SessionMeta>,
}

/// Cheap handle passed to every request handler.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl std::ops::Deref for AppState {
    type Target = Shared;

    fn deref(&self) -> &Shared {
        &self.0
    }
}

impl AppState {
    pub fn new(registry: Registry, state: StateManager, root: Root, ui_dir: Option<Root>) -> Self {
        let telemetry = state.telemetry().clone();
        Self(Arc::new(Shared {
            canvases: Canvases::default(),
            registry,
            state,
            root,
            telemetry,
            ui_dir,
            meta: Mutex::new(SessionMeta::default()),
        }))
    }

    fn canvas(&self, id: &str) -> ApiResult<Arc<Canvas>> {
        self.canvases.get(id).ok_or_else(|| ApiError::unknown_canvas(id))
    }

    fn meta(&self) -> std::sync::MutexGuard<'_, SessionMeta> {
        self.meta.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn set_active(&self, id: &str) {
        self.meta().active = Some(id.to_string());
    }

    /// Reopens the tabs of the last session under their old canvas ids.
    pub fn restore(&self) {
        let saved = self.state.restore_session();
        for tab in &saved.open_tabs {
            match self.state.open_project(&tab.path) {
                Ok(graph) => {
                    if self.canvases.reopen(&tab.canvas_id, graph, tab.path.clone()).is_none() {
                        self.telemetry.log(
                            LogEvent::warn("session.tab_skipped")
                                .with("canvas", &tab.canvas_id)
                                .with("reason", "duplicate or malformed canvas id"),
                        );
                    }
                }
                Err(e) => self.telemetry.log(
                    LogEvent::warn("session.tab_unreadable")
                        .with("canvas", &tab.canvas_id)
                        .with("path", tab.path.display())
                        .with("code", e.code()),
                ),
            }
        }
        {
            let mut meta = self.meta();
            meta.active = saved
                .active_tab
                .and_then(|i| saved.open_tabs.get(i))
                .map(|t| t.canvas_id.clone())
                .filter(|id| self.canvases.get(id).is_some());
            meta.viewports = saved.viewports;
        }
        self.persist_session();
    }

    /// Writes the session file from the canvases that have a project path.
    /// Failures are logged by the state manager and otherwise ignored.
    pub fn persist_session(&self) {
        // The meta lock also serializes concurrent session writes.
        let meta = self.meta();
        let mut open_tabs = Vec::new();
        for canvas in self.canvases.all() {
            if let Some(path) = canvas.lock().path.clone() {
                open_tabs.push(Tab {
                    canvas_id: canvas.id.clone(),
                    path,
                });
            }
        }
        let active_tab = meta
            .active
            .as_ref()
            .and_then(|a| open_tabs.iter().position(|t| &t.canvas_id == a));
        let viewports = meta
            .viewports
            .iter()
            .filter(|(id, _)| open_tabs.iter().any(|t| &t.canvas_id == *id))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let session = SessionState {
            cwd: self.root.dir().to_path_buf(),
            open_tabs,
            active_tab,
            viewports,
            ..SessionState::default()
        };
        let _ = self.state.save_session(&session);
    }

    fn display_path(&self, path: &Path) -> String {
        if path.starts_with(self.root.dir()) {
            self.root.relative(path)
        } else {
            path.display().to_string()
        }
    }

    fn graph_view(&self, canvas: &Canvas, st: &CanvasState) -> Value {
        let g = st.graph();
        let (doc, _) = to_document(g, None);
        let shapes: BTreeMap<String, String> = g
            .default_input_shape()
            .and_then(|s| g.infer_shapes(&s).ok())
            .map(|m| m.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
            .unwrap_or_default();
        json!({
            "canvasId": canvas.id,
            "revision": st.history.checkpoint_id(),
            "version": st.history.version(),
            "canUndo": st.history.can_undo(),
            "canRedo": st.history.can_redo(),
            "path": st.path.as_deref().map(|p| self.display_path(p)),
            "graph": doc,
            "diagnostics": g.validate(None),
            "shapes": shapes,
        })
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/canvas", post(create_canvas))
        .route("/api/canvas/{id}", delete(close_canvas))
        .route("/api/canvas/{id}/graph", get(get_graph))
        .route("/api/canvas/{id}/mutate", post(mutate))
        .route("/api/canvas/{id}/compile", post(compile))
        .route("/api/canvas/{id}/undo", post(undo))
        .route("/api/canvas/{id}/redo", post(redo))
        .route("/api/canvas/{id}/save", post(save))
        .route("/api/canvas/{id}/revision", get(wait_revision))
        .route("/api/import", post(import))
        .route("/api/session", get(get_session).post(update_session))
        .route("/api/catalog", get(catalog))
        .route("/api/kernels", get(kernels))
        .route("/api/fs", get(fs_list))
        .route("/api/artifacts/{*name}", get(artifact))
        .fallback(static_ui)
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(app)
}

/// JSON body parsing with our own 400 shape. An empty body reads as `{}`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    path: Option<String>,
}

async fn create_canvas(State(app): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: CreateRequest = parse(&body)?;
    let path = req.path.as_deref().map(|p| app.root.resolve(p)).transpose()?;
    let graph = match &path {
        Some(p) if p.exists() => {
            let (state, p) = (app.state.clone(), p.clone());
            blocking(move || state.open_project(&p)).await??
        }
        _ => Graph::new(req.seed.unwrap_or(0)),
    };
    let canvas = app.canvases.open(graph, path.clone());
    app.set_active(&canvas.id);
    if path.is_some() {
        app.persist_session();
    }
    app.telemetry.log(LogEvent::info("canvas.open").with("canvas", &canvas.id));
    let st = canvas.lock();
    Ok(Json(app.graph_view(&canvas, &st)))
}

async fn close_canvas(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    app.canvases.close(&id).ok_or_else(|| ApiError::unknown_canvas(&id))?;
    {
        let mut meta = app.meta();
        meta.viewports.remove(&id);
        if meta.active.as_deref() == Some(id.as_str()) {
            meta.active = None;
        }
    }
    app.persist_session();
    app.telemetry.log(LogEvent::info("canvas.close").with("canvas", &id));
    Ok(Json(json!({ "canvasId": id, "closed": true })))
}

async fn get_graph(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(&id)?;
    let st = canvas.lock();
    Ok(Json(app.graph_view(&canvas, &st)))
}

async fn mutate(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(&id)?;
    let mutation: Mutation = parse(&body)?;
    let mut st = canvas.lock();
    let mut graph = st.graph().clone();
    let applied = match mutation.apply(&mut graph) {
        Ok(a) => a,
        Err(e) => {
            app.telemetry.log(
                LogEvent::warn("canvas.reject")
                    .with("canvas", &id)
                    .with("op", mutation.op())
                    .with("code", e.code()),
            );
            return Err(e.into());
        }
    };
    let label = mutation.label(&applied);
    let diagnostics = graph.validate(None);
    let checkpoint = match mutation.coalesce_key() {
        Some(key) => st.history.record_coalescing(&label, graph, &key),
        None => st.history.record(&label, graph),
    };
    let revision = checkpoint.checkpoint_id;
    canvas.notify(&st);
    let version = st.history.version();
    drop(st);
    app.telemetry.log(
        LogEvent::info("canvas.mutate")
            .with("canvas", &id)
            .with("op", mutation.op())
            .with("revision", revision),
    );
    if !applied.dissolved.is_empty() {
        let ids: Vec<String> = applied.dissolved.iter().map(ToString::to_string).collect();
        app.telemetry
            .log(LogEvent::info("group.dissolve").with("canvas", &id).with("groups", ids.join(",")));
    }
    let mut out = json!({
        "revision": revision,
        "version": version,
        "diagnostics": diagnostics,
        "dissolvedGroups": applied.dissolved,
    });
    if let Some(n) = applied.node_id {
        out["nodeId"] = json!(n);
    }
    if let Some(g) = applied.group_id {
        out["groupId"] = json!(g);
    }
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompileRequest {
    kernel: String,
    #[serde(default)]
    opset: Option<i64>,
}

async fn compile(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(&id)?;
    let req: CompileRequest = parse(&body)?;
    let (graph, path, previous, revision) = {
        let st = canvas.lock();
        (st.graph().clone(), st.path.clone(), st.last_kernel.clone(), st.history.checkpoint_id())
    };
    if let Some(prev) = previous.filter(|p| *p != req.kernel) {
        app.telemetry.log(
            LogEvent::info("kernel.switch")
                .with("canvas", &id)
                .with("from", prev)
                .with("to", &req.kernel),
        );
    }
    let descriptor = app
        .registry
        .descriptor(&req.kernel)
        .cloned()
        .ok_or_else(|| ApiError::from(sketch_core::binder::BinderError::UnknownKernel(req.kernel.clone())))?;
    let project = path.unwrap_or_else(|| app.root.dir().join(format!("untitled-{id}.{PROJECT_EXTENSION}")));
    let base = artifact_base(&project);
    let worker = app.clone();
    let kernel = req.kernel.clone();
    let outcome = blocking(move || {
        let options = ExportOptions {
            opset: req.opset,
            input_shape: None,
        };
        let result = worker.registry.export_model(&graph, &kernel, &options)?;
        let written = write_compiled(&base, &descriptor.artifact_extension, &result).map_err(ApiError::from)?;
        Ok::<_, ApiError>((result, written, graph.len()))
    })
    .await?;
    let (result, written, nodes) = match outcome {
        Ok(o) => o,
        Err(e) => {
            app.telemetry.log(
                LogEvent::error("canvas.compile", &e)
                    .with("canvas", &id)
                    .with("kernel", &req.kernel)
                    .with("code", e.code),
            );
            return Err(e);
        }
    };
    canvas.lock().last_kernel = Some(req.kernel.clone());
    let artifact_path = app.display_path(&written[0]);
    app.telemetry.log(
        LogEvent::info("canvas.compile")
            .with("kernel", &req.kernel)
            .with("nodes", nodes)
            .with("canvas", &id)
            .with("path", &artifact_path),
    );
    let artifact_url = written[0]
        .starts_with(app.root.dir())
        .then(|| format!("/api/artifacts/{artifact_path}"));
    Ok(Json(json!({
        "artifactPath": artifact_path,
        "artifactUrl": artifact_url,
        "sidecars": written[1..].iter().map(|p| app.display_path(p)).collect::<Vec<_>>(),
        "kernel": req.kernel,
        "bytes": result.artifact_bytes.len(),
        "text": result.text_repr,
        "diagnostics": result.diagnostics,
        "inputShape": result.input_shape.to_string(),
        "revision": revision,
    })))
}

async fn undo(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    step(&app, &id, true)
}

async fn redo(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    step(&app, &id, false)
}

fn step(app: &AppState, id: &str, back: bool) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(id)?;
    let mut st = canvas.lock();
    let moved = if back { st.history.undo() } else { st.history.redo() }.is_some();
    if moved {
        canvas.notify(&st);
    }
    let out = json!({
        "revision": st.history.checkpoint_id(),
        "version": st.history.version(),
        "noop": !moved,
        "canUndo": st.history.can_undo(),
        "canRedo": st.history.can_redo(),
    });
    drop(st);
    let kind = if back { "canvas.undo" } else { "canvas.redo" };
    app.telemetry
        .log(LogEvent::info(kind).with("canvas", id).with("revision", &out["revision"]).with("noop", !moved));
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaveRequest {
    #[serde(default)]
    path: Option<String>,
}

fn with_project_extension(mut path: PathBuf) -> PathBuf {
    if path.extension().is_none() {
        path.set_extension(PROJECT_EXTENSION);
    }
    path
}

async fn save(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(&id)?;
    let req: SaveRequest = parse(&body)?;
    let requested = req
        .path
        .as_deref()
        .map(|p| app.root.resolve(p).map(with_project_extension))
        .transpose()?;
    let (graph, path, revision) = {
        let st = canvas.lock();
        let path = requested
            .or_else(|| st.path.clone())
            .ok_or_else(|| ApiError::bad_request("canvas has no project file yet; pass `path`"))?;
        (st.graph().clone(), path, st.history.checkpoint_id())
    };
    let (state, target) = (app.state.clone(), path.clone());
    blocking(move || {
        if let Some(dir) = target.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ApiError::io(&e, "cannot create directory"))?;
        }
        state.save_project(&graph, &target).map_err(ApiError::from)
    })
    .await??;
    canvas.lock().path = Some(path.clone());
    app.persist_session();
    Ok(Json(json!({ "path": app.display_path(&path), "revision": revision })))
}

async fn wait_revision(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let canvas = app.canvas(&id)?;
    let number = |key: &str| -> ApiResult<Option<u64>> {
        q.get(key)
            .map(|v| v.parse::<u64>().map_err(|_| ApiError::bad_request(format!("`{key}` must be an integer"))))
            .transpose()
    };
    let after = number("after")?;
    let wait = Duration::from_millis(number("timeoutMs")?.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    if let Some(after) = after {
        let mut rx = canvas.subscribe();
        let deadline = tokio::time::Instant::now() + wait;
        while *rx.borrow_and_update() == after {
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => {}
                _ => break,
            }
        }
    }
    let st = canvas.lock();
    let version = st.history.version();
    Ok(Json(json!({
        "revision": st.history.checkpoint_id(),
        "version": version,
        "changed": after.is_none_or(|a| a != version),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct ImportRequest {
    #[serde(default = "default_kernel")]
    kernel: String,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    bytes_b64: Option<String>,
    /// Project name for uploads.
    #[serde(default)]
    name: Option<String>,
}

fn default_kernel() -> String {
    "onnx".to_string()
}

async fn import(State(app): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ImportRequest = parse(&body)?;
    let (bytes, dir, stem) = match (&req.path, &req.bytes_b64) {
        (Some(p), None) => {
            let path = app.root.resolve(p)?;
            let bytes = tokio::fs::read(&path).await.map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => ApiError::not_found(format!("no such file `{p}`")),
                _ => ApiError::io(&e, "cannot read model"),
            })?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            (bytes, path.parent().map(Path::to_path_buf), stem)
        }
        (None, Some(b64)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("bytesB64 is not base64: {e}")))?;
            (bytes, None, req.name.clone())
        }
        _ => return Err(ApiError::bad_request("pass exactly one of `path` and `bytesB64`")),
    };
    let stem = stem
        .filter(|s| !s.is_empty() && !s.contains(['/', '\\']) && s != "..")
        .unwrap_or_else(|| "imported".to_string());
    let dir = dir.unwrap_or_else(|| app.root.dir().to_path_buf());
    let worker = app.clone();
    let kernel = req.kernel.clone();
    let (graph, project) = blocking(move || {
        let graph = worker.registry.import_model(&kernel, &bytes)?;
        let project = fresh_project_path(&dir, &stem);
        worker.state.save_project(&graph, &project)?;
        Ok::<_, ApiError>((graph, project))
    })
    .await??;
    let canvas = app.canvases.open(graph, Some(project));
    app.set_active(&canvas.id);
    app.persist_session();
    let st = canvas.lock();
    Ok(Json(app.graph_view(&canvas, &st)))
}

async fn get_session(State(app): State<AppState>) -> Json<Value> {
    let meta = app.meta();
    let canvases: Vec<Value> = app
        .canvases
        .all()
        .iter()
        .map(|c| {
            let st = c.lock();
            json!({
                "canvasId": c.id,
                "path": st.path.as_deref().map(|p| app.display_path(p)),
                "revision": st.history.checkpoint_id(),
            })
        })
        .collect();
    Json(json!({
        "root": app.root.dir(),
        "canvases": canvases,
        "activeCanvas": meta.active,
        "viewports": meta.viewports,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct SessionUpdate {
    #[serde(default)]
    active_canvas: Option<String>,
    #[serde(default)]
    viewports: BTreeMap<String, Viewport>,
}

async fn update_session(State(app): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SessionUpdate = parse(&body)?;
    for id in req.active_canvas.iter().chain(req.viewports.keys()) {
        app.canvas(id)?;
    }
    {
        let mut meta = app.meta();
        if req.active_canvas.is_some() {
            meta.active = req.active_canvas;
        }
        meta.viewports.extend(req.viewports);
    }
    app.persist_session();
    Ok(get_session(State(app)).await)
}

async fn catalog() -> Json<Value> {
    Json(catalog_json())
}

async fn kernels(State(app): State<AppState>) -> Json<Value> {
    Json(json!(app.registry.list()))
}

async fn fs_list(
    State(app): State<AppState>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let requested = q.get("path").map(String::as_str).unwrap_or("");
    let dir = app.root.resolve(requested)?;
    let mut read = tokio::fs::read_dir(&dir).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ApiError::not_found(format!("no such directory `{requested}`")),
        _ if dir.is_file() => ApiError::bad_request(format!("`{requested}` is not a directory")),
        _ => ApiError::io(&e, "cannot list directory"),
    })?;
    let mut entries = Vec::new();
    while let Some(entry) = read.next_entry().await.map_err(|e| ApiError::io(&e, "cannot list directory"))? {
        let meta = match tokio::fs::metadata(entry.path()).await {
            Ok(m) => m,
            // Dangling symlinks and races with deletion are skipped.
            Err(_) => continue,
        };
        entries.push((
            !meta.is_dir(),
            entry.file_name().to_string_lossy().into_owned(),
            (!meta.is_dir()).then_some(meta.len()),
            entry.path(),
        ));
    }
    entries.sort();
    let entries: Vec<Value> = entries
        .into_iter()
        .map(|(is_file, name, size, path): (bool, String, Option<u64>, PathBuf)| {
            let mut e = json!({
                "name": name,
                "path": app.root.relative(&path),
                "kind": if is_file { "file" } else { "dir" },
            });
            if let Some(size) = size {
                e["size"] = json!(size);
            }
            e
        })
        .collect();
    Ok(Json(json!({ "path": app.root.relative(&dir), "entries": entries })))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "sketch" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "py" | "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

async fn serve_file(path: &Path, attachment: bool) -> ApiResult<Response> {
    let bytes: Vec<u8> = match tokio::fs::read(path).await {
        Ok(b) => b,
        Err(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::IsADirectory) => {
            return Err(ApiError::not_found(format!("no such file `{}`", path.display())))
        }
        Err(e) => return Err(ApiError::io(&e, "cannot read file")),
    };
    if path.is_dir() {
        return Err(ApiError::not_found("not a file"));
    }
    let mut response = ([(header::CONTENT_TYPE, content_type(path))], bytes).into_response();
    if attachment {
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            let value = format!("attachment; filename=\"{}\"", name.replace('"', ""));
            if let Ok(v) = value.parse() {
                response.headers_mut().insert(header::CONTENT_DISPOSITION, v);
            }
        }
    }
    Ok(response)
}

async fn artifact(State(app): State<AppState>, UrlPath(name): UrlPath<String>) -> ApiResult<Response> {
    let path = app.root.resolve(&name)?;
    serve_file(&path, true).await
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>Sketch</title></head>
<body>
<h1>Sketch server</h1>
<p>No UI bundle is configured. Start the server with <code>--ui-dir</code> to host one,
or drive the JSON API directly: <a href=\"/api/catalog\">/api/catalog</a>,
<a href=\"/api/kernels\">/api/kernels</a>, <a href=\"/api/session\">/api/session</a>.</p>
</body></html>
";

async fn static_ui(State(app): State<AppState>, uri: Uri) -> ApiResult<Response> {
    let rel = uri.path().trim_start_matches('/');
    if rel.starts_with("api/") {
        return Err(ApiError::not_found(format!("no endpoint {}", uri.path())));
    }
    let Some(ui) = &app.ui_dir else {
        return if rel.is_empty() {
            Ok(Html(PLACEHOLDER).into_response())
        } else {
            Err(ApiError::not_found(format!("no such page /{rel}")))
        };
    };
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let path = ui.resolve(rel)?;
    serve_file(&path, false).await
}
