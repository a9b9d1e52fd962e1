//! In-process server plus a small JSON client for the HTTP tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sketch_core::telemetry::Level;
use sketch_server::{start, RunningServer, ServerConfig};
use tempfile::TempDir;

pub struct Harness {
    pub server: Option<RunningServer>,
    pub root: TempDir,
    pub state: TempDir,
    pub client: reqwest::Client,
    pub base: String,
}

impl Harness {
    pub async fn new() -> Self {
        Self::with_dirs(tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()).await
    }

    pub async fn with_dirs(root: TempDir, state: TempDir) -> Self {
        let server = boot(root.path(), state.path()).await;
        let base = format!("http://{}", server.addr);
        Self {
            server: Some(server),
            root,
            state,
            client: reqwest::Client::new(),
            base,
        }
    }

    /// Stops the server and starts a fresh one over the same directories.
    pub async fn restart(&mut self) {
        self.server.take().unwrap().shutdown().await.unwrap();
        let server = boot(self.root.path(), self.state.path()).await;
        self.base = format!("http://{}", server.addr);
        self.server = Some(server);
    }

    pub async fn stop(mut self) -> (TempDir, TempDir) {
        self.server.take().unwrap().shutdown().await.unwrap();
        (self.root, self.state)
    }

    pub fn root_path(&self) -> PathBuf {
        self.root.path().canonicalize().unwrap()
    }

    pub fn log_path(&self) -> PathBuf {
        self.state.path().join("sketch.log")
    }

    pub fn flush_log(&self) {
        self.server.as_ref().unwrap().app.telemetry.flush();
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        decode(r).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        decode(r).await
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        decode(r).await
    }

    pub async fn new_canvas(&self) -> String {
        let (s, v) = self.post("/api/canvas", json!({})).await;
        assert_eq!(s, 200, "{v}");
        v["canvasId"].as_str().unwrap().to_string()
    }

    pub async fn mutate(&self, canvas: &str, body: Value) -> (u16, Value) {
        self.post(&format!("/api/canvas/{canvas}/mutate"), body).await
    }

    pub async fn add(&self, canvas: &str, ty: &str, params: Value) -> String {
        let (s, v) = self
            .mutate(canvas, json!({ "op": "node.add", "type": ty, "params": params, "position": [0, 0] }))
            .await;
        assert_eq!(s, 200, "{v}");
        v["nodeId"].as_str().unwrap().to_string()
    }

    pub async fn connect(&self, canvas: &str, src: &str, dst: &str) {
        let (s, v) = self.mutate(canvas, json!({ "op": "edge.connect", "src": src, "dst": dst })).await;
        assert_eq!(s, 200, "{v}");
    }

    pub async fn graph(&self, canvas: &str) -> Value {
        let (s, v) = self.get(&format!("/api/canvas/{canvas}/graph")).await;
        assert_eq!(s, 200, "{v}");
        v
    }

    /// The example network: Input(1,28,28), Conv 1->8 k5 p2, BN(8), ReLU,
    /// MaxPool 2x2, Conv 8->16 k3 p1. Returns the node ids in order.
    pub async fn build_example(&self, canvas: &str) -> Vec<String> {
        let specs = [
            ("Input", json!({ "shape": [1, 28, 28] })),
            (
                "Conv2d",
                json!({ "in_channels": 1, "out_channels": 8, "kernel_size": [5, 5], "stride": [1, 1], "padding": [2, 2] }),
            ),
            ("BatchNorm2d", json!({ "num_features": 8 })),
            ("ReLU", json!({})),
            ("MaxPool2d", json!({ "kernel_size": [2, 2], "stride": [2, 2] })),
            (
                "Conv2d",
                json!({ "in_channels": 8, "out_channels": 16, "kernel_size": [3, 3], "stride": [1, 1], "padding": [1, 1] }),
            ),
        ];
        let mut ids = Vec::new();
        for (ty, params) in specs {
            ids.push(self.add(canvas, ty, params).await);
        }
        for w in ids.windows(2) {
            self.connect(canvas, &w[0], &w[1]).await;
        }
        ids
    }
}

async fn boot(root: &Path, state: &Path) -> RunningServer {
    let mut config = ServerConfig::new(root, state);
    config.port = 0;
    config.log_level = Some(Level::Info);
    start(config).await.unwrap()
}

async fn decode(r: reqwest::Response) -> (u16, Value) {
    let status = r.status().as_u16();
    let bytes = r.bytes().await.unwrap();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, value)
}
