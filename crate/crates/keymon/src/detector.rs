//! Signature-based anti-keylogger scanner: load a database of known
//! file digests, walk a directory tree hashing every regular file, and
//! report the files whose digest is in the database.
//!
//! Digests are SHA-1, either of the whole file or of a fixed-length
//! header prefix. The scanner never aborts on a bad file — per-file
//! failures become error entries — and it never acts on a match: it
//! writes reports and leaves the decision to the user.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use sha1::{Digest, Sha1};
use thiserror::Error;

/// Digest length, in hex characters, of the supported algorithm.
pub const SHA1_HEX_LEN: usize = 40;
/// Default header-prefix length in bytes.
pub const DEFAULT_HEADER_LEN: u64 = 1024;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("scan root {0} does not exist")]
    RootMissing(PathBuf),
    #[error("signature file line {line}: {msg}")]
    Signature { line: usize, msg: String },
    #[error("header length must be positive")]
    BadHeaderLen,
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The digest algorithm a database's entries were computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestAlgo {
    Sha1,
}

impl DigestAlgo {
    pub fn as_str(self) -> &'static str {
        match self {
            DigestAlgo::Sha1 => "sha1",
        }
    }
}

/// What part of each file is hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashMode {
    /// Hash every byte of the file.
    FullFile,
    /// Hash only the first `header_len` bytes (fewer for short files).
    HeaderPrefix,
}

/// A set of known-bad digests with optional labels, plus the hashing
/// parameters a scan should use against it.
#[derive(Debug, Clone)]
pub struct SignatureDb {
    entries: BTreeMap<String, Option<String>>,
    pub digest_algo: DigestAlgo,
    pub mode: HashMode,
    pub header_len: u64,
    /// Lines whose digest repeated an earlier entry (first label wins).
    pub duplicate_count: usize,
}

impl SignatureDb {
    /// Parses the signature file format: one `<hex-digest>[ws <label>]`
    /// entry per line; `#` comment lines and blank lines are skipped;
    /// digests are lowercased. Hashing parameters start at their
    /// defaults (full-file SHA-1).
    pub fn parse(text: &str) -> Result<SignatureDb, DetectError> {
        let mut entries = BTreeMap::new();
        let mut duplicate_count = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (digest_tok, label) = match line.split_once(char::is_whitespace) {
                Some((digest, rest)) => (digest, {
                    let rest = rest.trim();
                    (!rest.is_empty()).then(|| rest.to_string())
                }),
                None => (line, None),
            };
            let digest = digest_tok.to_ascii_lowercase();
            if digest.len() != SHA1_HEX_LEN {
                return Err(DetectError::Signature {
                    line: idx + 1,
                    msg: format!(
                        "digest `{digest_tok}` is {} chars, expected {SHA1_HEX_LEN}",
                        digest_tok.len()
                    ),
                });
            }
            if let Some(bad) = digest.chars().find(|c| !c.is_ascii_hexdigit()) {
                return Err(DetectError::Signature {
                    line: idx + 1,
                    msg: format!("digest contains non-hex character `{bad}`"),
                });
            }
            if entries.contains_key(&digest) {
                duplicate_count += 1;
            } else {
                entries.insert(digest, label);
            }
        }
        Ok(SignatureDb {
            entries,
            digest_algo: DigestAlgo::Sha1,
            mode: HashMode::FullFile,
            header_len: DEFAULT_HEADER_LEN,
            duplicate_count,
        })
    }

    pub fn load(path: &Path) -> Result<SignatureDb, DetectError> {
        let text = fs::read_to_string(path)?;
        SignatureDb::parse(&text)
    }

    /// Switches the hashing parameters a scan will use.
    pub fn configure(&mut self, mode: HashMode, header_len: u64) -> Result<(), DetectError> {
        if header_len == 0 {
            return Err(DetectError::BadHeaderLen);
        }
        self.mode = mode;
        self.header_len = header_len;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The label stored for a digest, if the digest is known at all.
    pub fn lookup(&self, digest: &str) -> Option<&Option<String>> {
        self.entries.get(digest)
    }
}

/// Hashes one file per the database parameters, returning the
/// lowercase hex digest.
pub fn file_digest(
    path: &Path,
    algo: DigestAlgo,
    mode: HashMode,
    header_len: u64,
) -> io::Result<String> {
    let DigestAlgo::Sha1 = algo;
    let mut file = File::open(path)?;
    let mut hasher = Sha1::new();
    match mode {
        HashMode::FullFile => {
            io::copy(&mut file, &mut hasher)?;
        }
        HashMode::HeaderPrefix => {
            io::copy(&mut file.take(header_len), &mut hasher)?;
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// One matched file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffectedEntry {
    pub path: PathBuf,
    pub digest: String,
    pub label: Option<String>,
}

/// Everything one scan produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanReport {
    pub root: PathBuf,
    pub affected: Vec<AffectedEntry>,
    /// Files successfully hashed.
    pub scanned_count: usize,
    pub error_entries: Vec<(PathBuf, String)>,
    pub signature_count: usize,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
}

/// Walks `root` (a directory tree or a single file), hashes every
/// regular file, and collects the ones whose digest the database
/// knows. Per-file failures are recorded, never fatal; symlinks are
/// recorded as skipped. Output lists come back sorted by path.
pub fn scan(root: &Path, db: &SignatureDb) -> Result<ScanReport, DetectError> {
    if fs::symlink_metadata(root).is_err() {
        return Err(DetectError::RootMissing(root.to_path_buf()));
    }
    let started = Utc::now();
    let outcome = crate::walk::collect_files(root);
    let mut affected = Vec::new();
    let mut error_entries = outcome.errors;
    let mut scanned_count = 0;
    for path in outcome.files {
        match file_digest(&path, db.digest_algo, db.mode, db.header_len) {
            Ok(digest) => {
                scanned_count += 1;
                if let Some(label) = db.lookup(&digest) {
                    affected.push(AffectedEntry {
                        path,
                        digest,
                        label: label.clone(),
                    });
                }
            }
            Err(err) => error_entries.push((path, err.to_string())),
        }
    }
    affected.sort_by(|a, b| a.path.cmp(&b.path));
    error_entries.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ScanReport {
        root: root.to_path_buf(),
        affected,
        scanned_count,
        error_entries,
        signature_count: db.len(),
        started,
        finished: Utc::now(),
    })
}

fn write_file(path: PathBuf, content: &str) -> Result<PathBuf, DetectError> {
    fs::write(&path, content).map_err(|source| DetectError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the three report files into `out_dir`: affected.txt (one
/// `path<TAB>digest[<TAB>label]` per line), errors.txt (one
/// `path<TAB>reason` per line), result.txt (the summary). All three
/// are written even when empty. Returns the paths in writing order.
pub fn write_reports(report: &ScanReport, out_dir: &Path) -> Result<Vec<PathBuf>, DetectError> {
    let mut affected = String::new();
    for entry in &report.affected {
        affected.push_str(&entry.path.display().to_string());
        affected.push('\t');
        affected.push_str(&entry.digest);
        if let Some(label) = &entry.label {
            affected.push('\t');
            affected.push_str(label);
        }
        affected.push('\n');
    }
    let mut errors = String::new();
    for (path, reason) in &report.error_entries {
        errors.push_str(&format!("{}\t{reason}\n", path.display()));
    }
    let result = format!(
        "root: {}\nscanned: {}\naffected: {}\nerrors: {}\nsignatures: {}\nstarted: {}\nfinished: {}\n",
        report.root.display(),
        report.scanned_count,
        report.affected.len(),
        report.error_entries.len(),
        report.signature_count,
        report.started.to_rfc3339_opts(SecondsFormat::Millis, true),
        report.finished.to_rfc3339_opts(SecondsFormat::Millis, true),
    );
    Ok(vec![
        write_file(out_dir.join("affected.txt"), &affected)?,
        write_file(out_dir.join("errors.txt"), &errors)?,
        write_file(out_dir.join("result.txt"), &result)?,
    ])
}
