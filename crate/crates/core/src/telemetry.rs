//! Structured JSON-lines event log.
//!
//! Events are queued to a single writer thread that appends one line per
//! event to `sketch.log`, syncing after each line and rotating at 10 MiB
//! (three files kept). Logging never fails into the caller; I/O problems are
//! reported on standard error.

use std::backtrace::Backtrace;
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const LOG_FILE: &str = "sketch.log";
pub const ROTATE_BYTES: u64 = 10 * 1024 * 1024;
pub const KEEP_FILES: usize = 3;
pub const MAX_VALUE_BYTES: usize = 4096;
pub const LEVEL_ENV: &str = "SKETCH_LOG_LEVEL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warn,
    Error,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "info" => Ok(Level::Info),
            "warn" | "warning" => Ok(Level::Warn),
            "error" => Ok(Level::Error),
            other => Err(format!("unknown log level `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub timestamp: u64,
    pub level: Level,
    pub kind: String,
    pub payload: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<String>,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl LogEvent {
    pub fn new(level: Level, kind: &str) -> Self {
        Self {
            timestamp: now_millis(),
            level,
            kind: normalize_kind(kind),
            payload: BTreeMap::new(),
            stack: None,
        }
    }

    pub fn info(kind: &str) -> Self {
        Self::new(Level::Info, kind)
    }

    pub fn warn(kind: &str) -> Self {
        Self::new(Level::Warn, kind)
    }

    /// Error event carrying the error chain and a captured backtrace.
    pub fn error(kind: &str, err: &dyn std::error::Error) -> Self {
        let mut trace = String::new();
        let mut cause: Option<&dyn std::error::Error> = Some(err);
        let mut depth = 0;
        while let Some(e) = cause {
            if depth > 0 {
                trace.push_str("caused by: ");
            }
            trace.push_str(&e.to_string());
            trace.push('\n');
            cause = e.source();
            depth += 1;
        }
        trace.push_str(&Backtrace::force_capture().to_string());
        let mut event = Self::new(Level::Error, kind).with("error", err.to_string());
        event.stack = Some(trace);
        event
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.payload.insert(key.to_string(), truncate(value.to_string()));
        self
    }
}

/// Kinds are dot-separated lowercase words; anything else is coerced.
fn normalize_kind(kind: &str) -> String {
    let cleaned: String = kind
        .chars()
        .map(|c| match c {
            'a'..='z' | '0'..='9' | '.' | '_' => c,
            'A'..='Z' => c.to_ascii_lowercase(),
            _ => '_',
        })
        .collect();
    let parts: Vec<&str> = cleaned.split('.').filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        "event".to_string()
    } else {
        parts.join(".")
    }
}

fn truncate(mut value: String) -> String {
    if value.len() > MAX_VALUE_BYTES {
        let mut cut = MAX_VALUE_BYTES;
        while !value.is_char_boundary(cut) {
            cut -= 1;
        }
        value.truncate(cut);
    }
    value
}

enum Message {
    Event(LogEvent),
    Flush(Sender<()>),
}

struct Inner {
    tx: Sender<Message>,
    threshold: Level,
    path: PathBuf,
}

/// Cheap-to-clone handle to the event log. A disabled handle drops everything.
#[derive(Clone, Default)]
pub struct Telemetry {
    inner: Option<Arc<Inner>>,
}

impl std::fmt::Debug for Telemetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.inner {
            Some(inner) => write!(f, "Telemetry({})", inner.path.display()),
            None => f.write_str("Telemetry(disabled)"),
        }
    }
}

impl Telemetry {
    pub fn disabled() -> Self {
        Self { inner: None }
    }

    /// Opens (or creates) `dir/sketch.log` with the given threshold.
    pub fn open(dir: &Path, threshold: Level) -> Self {
        Self::open_with_limit(dir, threshold, ROTATE_BYTES)
    }

    /// Threshold from `SKETCH_LOG_LEVEL`, defaulting to info.
    pub fn from_env(dir: &Path) -> Self {
        let threshold = std::env::var(LEVEL_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(Level::Info);
        Self::open(dir, threshold)
    }

    pub fn open_with_limit(dir: &Path, threshold: Level, rotate_bytes: u64) -> Self {
        let path = dir.join(LOG_FILE);
        let (tx, rx) = mpsc::channel::<Message>();
        let writer_path = path.clone();
        let spawned = thread::Builder::new()
            .name("sketch-telemetry".into())
            .spawn(move || {
                let mut writer = LogWriter::new(writer_path, rotate_bytes);
                for msg in rx {
                    match msg {
                        Message::Event(e) => writer.write(&e),
                        Message::Flush(done) => {
                            let _ = done.send(());
                        }
                    }
                }
            });
        if let Err(e) = spawned {
            eprintln!("sketch: telemetry disabled, cannot start writer: {e}");
            return Self::disabled();
        }
        Self {
            inner: Some(Arc::new(Inner {
                tx,
                threshold,
                path,
            })),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.inner.as_ref().map(|i| i.path.as_path())
    }

    pub fn log(&self, event: LogEvent) {
        let Some(inner) = &self.inner else { return };
        if event.level < inner.threshold {
            return;
        }
        if inner.tx.send(Message::Event(event)).is_err() {
            eprintln!("sketch: telemetry writer has stopped");
        }
    }

    /// Blocks until every event logged so far has been written.
    pub fn flush(&self) {
        let Some(inner) = &self.inner else { return };
        let (tx, rx) = mpsc::channel();
        if inner.tx.send(Message::Flush(tx)).is_ok() {
            let _ = rx.recv();
        }
    }
}

struct LogWriter {
    path: PathBuf,
    rotate_bytes: u64,
    file: Option<File>,
    size: u64,
}

impl LogWriter {
    fn new(path: PathBuf, rotate_bytes: u64) -> Self {
        Self {
            path,
            rotate_bytes,
            file: None,
            size: 0,
        }
    }

    fn open(&mut self) -> std::io::Result<&mut File> {
        if self.file.is_none() {
            if let Some(dir) = self.path.parent() {
                fs::create_dir_all(dir)?;
            }
            let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
            self.size = file.metadata()?.len();
            self.file = Some(file);
        }
        Ok(self.file.as_mut().expect("opened above"))
    }

    fn rotate(&mut self) -> std::io::Result<()> {
        self.file = None;
        let rotated = |i: usize| PathBuf::from(format!("{}.{i}", self.path.display()));
        let _ = fs::remove_file(rotated(KEEP_FILES - 1));
        for i in (1..KEEP_FILES - 1).rev() {
            if rotated(i).exists() {
                fs::rename(rotated(i), rotated(i + 1))?;
            }
        }
        fs::rename(&self.path, rotated(1))?;
        self.size = 0;
        Ok(())
    }

    fn write(&mut self, event: &LogEvent) {
        let mut line = match serde_json::to_string(event) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("sketch: cannot encode log event: {e}");
                return;
            }
        };
        line.push('\n');
        let result = (|| -> std::io::Result<()> {
            self.open()?;
            if self.size > 0 && self.size + line.len() as u64 > self.rotate_bytes {
                self.rotate()?;
            }
            let file = self.open()?;
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
            self.size += line.len() as u64;
            Ok(())
        })();
        if let Err(e) = result {
            self.file = None;
            eprint!("sketch: log write failed ({e}): {line}");
        }
    }
}

/// Parses a JSON-lines log file.
pub fn read_log(path: &Path) -> std::io::Result<Vec<LogEvent>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
        .collect()
}
