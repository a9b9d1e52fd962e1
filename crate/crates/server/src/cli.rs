//! `sketch serve | compile | import`.

use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sketch_core::binder::{BinderError, ExportOptions, Registry};
use sketch_core::session::{default_state_dir, ProjectError, StateManager};
use sketch_core::telemetry::{Level, Telemetry};

use crate::artifacts::{artifact_base, write_compiled};
use crate::{open_telemetry, start, ServerConfig, StartError, DEFAULT_PORT};

#[derive(Debug, Parser)]
#[command(name = "sketch", version, about = "Visual neural-network editor: server and headless tools")]
pub struct Cli {
    /// Directory for the event log and session file
    /// [default: $SKETCH_STATE_DIR, $XDG_STATE_HOME/sketch or ~/.local/state/sketch].
    #[arg(long, global = true)]
    pub state_dir: Option<PathBuf>,
    /// Minimum level written to the event log (info, warn, error).
    #[arg(long, global = true)]
    pub log_level: Option<Level>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API (and the UI bundle, if given).
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory the editor may browse and write into.
        #[arg(long, default_value = ".")]
        root: PathBuf,
        /// Static files served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Compile a project file; the artifact is written next to it.
    Compile {
        project: PathBuf,
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        opset: Option<i64>,
        /// Also print the text rendering to stdout.
        #[arg(long)]
        text: bool,
    },
    /// Convert a model artifact into a project file.
    Import {
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "onnx")]
        kernel: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Start(#[from] StartError),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("{0}")]
    Binder(#[from] BinderError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("server stopped with an error: {0}")]
    Serve(std::io::Error),
    #[error("cannot start the async runtime: {0}")]
    Runtime(std::io::Error),
}

fn tools(state_dir: &Path, level: Option<Level>) -> (Telemetry, Registry, StateManager) {
    let telemetry = open_telemetry(state_dir, level);
    let registry = Registry::with_builtin_kernels(telemetry.clone());
    let state = StateManager::new(state_dir, telemetry.clone());
    (telemetry, registry, state)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let state_dir = cli.state_dir.unwrap_or_else(default_state_dir);
    match cli.command {
        Command::Serve {
            port,
            host,
            root,
            ui_dir,
        } => {
            let config = ServerConfig {
                host,
                port,
                root,
                state_dir,
                log_level: cli.log_level,
                ui_dir,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::Runtime)?;
            runtime.block_on(async {
                let server = start(config).await?;
                eprintln!("sketch: listening on http://{}", server.addr);
                server.run_until_interrupted().await.map_err(CliError::Serve)
            })
        }
        Command::Compile {
            project,
            kernel,
            opset,
            text,
        } => {
            let (telemetry, registry, state) = tools(&state_dir, cli.log_level);
            let result = compile(&registry, &state, &project, &kernel, opset, text);
            telemetry.flush();
            result
        }
        Command::Import { model, output, kernel } => {
            let (telemetry, registry, state) = tools(&state_dir, cli.log_level);
            let result = import(&registry, &state, &model, &output, &kernel);
            telemetry.flush();
            result
        }
    }
}

fn compile(
    registry: &Registry,
    state: &StateManager,
    project: &Path,
    kernel: &str,
    opset: Option<i64>,
    text: bool,
) -> Result<(), CliError> {
    let graph = state.open_project(project)?;
    let ext = registry
        .descriptor(kernel)
        .map(|d| d.artifact_extension.clone())
        .ok_or_else(|| BinderError::UnknownKernel(kernel.to_string()))?;
    let options = ExportOptions {
        opset,
        input_shape: None,
    };
    let result = match registry.export_model(&graph, kernel, &options) {
        Ok(r) => r,
        Err(BinderError::ValidationFailed(diags)) => {
            for d in &diags {
                let at = d.node.map(|n| format!(" at {n}")).unwrap_or_default();
                eprintln!("{:?}{at}: {}", d.kind, d.message);
            }
            return Err(BinderError::ValidationFailed(diags).into());
        }
        Err(e) => return Err(e.into()),
    };
    for d in &result.diagnostics {
        eprintln!("warning: {}", d.message);
    }
    for path in write_compiled(&artifact_base(project), &ext, &result)? {
        println!("{}", path.display());
    }
    if text {
        print!("{}", result.text_repr);
    }
    Ok(())
}

fn import(registry: &Registry, state: &StateManager, model: &Path, output: &Path, kernel: &str) -> Result<(), CliError> {
    let bytes = std::fs::read(model).map_err(|source| CliError::Read {
        path: model.to_path_buf(),
        source,
    })?;
    let graph = registry.import_model(kernel, &bytes)?;
    state.save_project(&graph, output)?;
    println!("{}", output.display());
    Ok(())
}
