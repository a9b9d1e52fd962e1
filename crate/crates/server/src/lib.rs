//! HTTP facade and command-line front end over `sketch-core`.
//!
//! Every canvas is a graph history behind its own mutex, so edits to one
//! canvas are linearized while distinct canvases proceed in parallel.

pub mod app;
pub mod artifacts;
pub mod canvas;
pub mod cli;
pub mod error;
pub mod paths;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use sketch_core::binder::Registry;
use sketch_core::session::StateManager;
use sketch_core::telemetry::{Level, LogEvent, Telemetry};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use app::{router, AppState};
pub use error::ApiError;

pub const DEFAULT_PORT: u16 = 8470;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub host: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub root: PathBuf,
    pub state_dir: PathBuf,
    /// Overrides `SKETCH_LOG_LEVEL`.
    pub log_level: Option<Level>,
    pub ui_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>, state_dir: impl Into<PathBuf>) -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            root: root.into(),
            state_dir: state_dir.into(),
            log_level: None,
            ui_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("cannot use {what} {path}: {source}")]
    Dir {
        what: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

pub fn open_telemetry(state_dir: &std::path::Path, level: Option<Level>) -> Telemetry {
    if let Err(e) = std::fs::create_dir_all(state_dir) {
        eprintln!("sketch: cannot create state directory {}: {e}", state_dir.display());
    }
    match level {
        Some(level) => Telemetry::open(state_dir, level),
        None => Telemetry::from_env(state_dir),
    }
}

/// A server accepting connections on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub app: AppState,
    stop: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    /// Stops accepting, drains in-flight requests and flushes the log.
    pub async fn shutdown(self) -> std::io::Result<()> {
        let RunningServer { app, stop, task, .. } = self;
        let _ = stop.send(());
        let result = match task.await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        };
        app.telemetry.log(LogEvent::info("server.stop"));
        app.telemetry.flush();
        result
    }

    /// Runs until the process receives Ctrl-C.
    pub async fn run_until_interrupted(self) -> std::io::Result<()> {
        let _ = tokio::signal::ctrl_c().await;
        self.shutdown().await
    }
}

/// Opens the log, restores the previous session and starts listening.
pub async fn start(config: ServerConfig) -> Result<RunningServer, StartError> {
    let dir_err = |what, path: &PathBuf| {
        let path = path.clone();
        move |source| StartError::Dir { what, path, source }
    };
    std::fs::create_dir_all(&config.state_dir).map_err(dir_err("state directory", &config.state_dir))?;
    let telemetry = open_telemetry(&config.state_dir, config.log_level);
    let root = paths::Root::new(&config.root).map_err(dir_err("root", &config.root))?;
    let ui_dir = config
        .ui_dir
        .as_ref()
        .map(|d| paths::Root::new(d).map_err(dir_err("UI directory", d)))
        .transpose()?;
    let registry = Registry::with_builtin_kernels(telemetry.clone());
    let state = StateManager::new(config.state_dir.clone(), telemetry.clone());
    let app = AppState::new(registry, state, root, ui_dir);
    app.restore();

    let addr = SocketAddr::new(config.host, config.port);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| StartError::Bind { addr, source })?;
    telemetry.log(
        LogEvent::info("server.start")
            .with("addr", addr)
            .with("root", app.root.dir().display()),
    );
    let (stop, stopped) = oneshot::channel::<()>();
    let service = router(app.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, service)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(RunningServer {
        addr,
        app,
        stop,
        task,
    })
}
