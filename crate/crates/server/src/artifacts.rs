//! Placement of compiled artifacts next to their project file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use sketch_core::binder::CompileResult;
use sketch_core::session::project::{write_atomic, PROJECT_EXTENSION};
use sketch_core::session::ProjectError;

/// `dir/<stem>` for a project file, without extension.
pub fn artifact_base(project: &Path) -> PathBuf {
    let stem = project
        .file_stem()
        .map(OsString::from)
        .unwrap_or_else(|| OsString::from("untitled"));
    project.with_file_name(stem)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<base>.<ext>` and every sidecar; returns the paths written,
/// artifact first.
pub fn write_compiled(base: &Path, ext: &str, result: &CompileResult) -> Result<Vec<PathBuf>, ProjectError> {
    let artifact = with_suffix(base, &format!(".{ext}"));
    write_atomic(&artifact, &result.artifact_bytes)?;
    let mut written = vec![artifact.clone()];
    for sidecar in &result.sidecars {
        let path = with_suffix(&artifact, &sidecar.suffix);
        write_atomic(&path, &sidecar.bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// First of `<stem>.sketch`, `<stem>-1.sketch`, ... in `dir` that does not exist.
pub fn fresh_project_path(dir: &Path, stem: &str) -> PathBuf {
    let candidate = |i: usize| match i {
        0 => dir.join(format!("{stem}.{PROJECT_EXTENSION}")),
        i => dir.join(format!("{stem}-{i}.{PROJECT_EXTENSION}")),
    };
    (0..).map(candidate).find(|p| !p.exists()).expect("unbounded search")
}
