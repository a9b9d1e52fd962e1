//! Confinement of client-supplied paths to the project root.

use std::path::{Component, Path, PathBuf};

use crate::error::{ApiError, ApiResult};

#[derive(Clone, Debug)]
pub struct Root {
    dir: PathBuf,
}

impl Root {
    /// `dir` must exist; it is canonicalized so symlinked roots compare correctly.
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        Ok(Self {
            dir: dir.canonicalize()?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Resolves `requested` (relative to the root, or absolute) to a path
    /// inside the root. The target need not exist, but no existing prefix of
    /// it may be a symlink leading outside.
    pub fn resolve(&self, requested: &str) -> ApiResult<PathBuf> {
        if requested.contains('\0') {
            return Err(ApiError::bad_request("path contains a NUL byte"));
        }
        let joined = self.dir.join(requested);
        let mut out = PathBuf::new();
        for c in joined.components() {
            match c {
                Component::ParentDir => {
                    if !out.pop() {
                        return Err(ApiError::path_escape(requested));
                    }
                }
                Component::CurDir => {}
                other => out.push(other),
            }
        }
        if !out.starts_with(&self.dir) {
            return Err(ApiError::path_escape(requested));
        }
        let mut probe = out.as_path();
        while !probe.exists() {
            match probe.parent() {
                Some(p) => probe = p,
                None => break,
            }
        }
        let real = probe
            .canonicalize()
            .map_err(|e| ApiError::io(&e, "cannot resolve path"))?;
        if !real.starts_with(&self.dir) {
            return Err(ApiError::path_escape(requested));
        }
        Ok(out)
    }

    /// Root-relative form with forward slashes, as sent to clients.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }
}
