//! Shared directory traversal for the scanners: collect regular files
//! under a root in deterministic order, recording per-entry failures
//! instead of aborting the walk.

use std::path::{Path, PathBuf};

use walkdir::WalkDir;

/// Result of walking a scan root: the regular files to examine plus
/// any entries that could not be visited.
pub(crate) struct WalkOutcome {
    pub files: Vec<PathBuf>,
    /// (path, reason) pairs; the path is the best available for the
    /// failed entry.
    pub errors: Vec<(PathBuf, String)>,
}

/// Walks `root` recursively. Files come back sorted by path so scan
/// reports are stable across runs. Symlinks are not followed and are
/// recorded as skipped entries rather than scanned, so a hostile scan
/// root cannot route the scanner outside itself.
pub(crate) fn collect_files(root: &Path) -> WalkOutcome {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    for entry in WalkDir::new(root).follow_links(false).sort_by_file_name() {
        match entry {
            Ok(entry) => {
                let ty = entry.file_type();
                if ty.is_symlink() {
                    errors.push((entry.into_path(), "symlink-skipped".to_string()));
                } else if ty.is_file() {
                    files.push(entry.into_path());
                }
            }
            Err(err) => {
                let path = err
                    .path()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| root.to_path_buf());
                let reason = err
                    .io_error()
                    .map(|io| io.to_string())
                    .unwrap_or_else(|| err.to_string());
                errors.push((path, reason));
            }
        }
    }
    files.sort();
    WalkOutcome { files, errors }
}
