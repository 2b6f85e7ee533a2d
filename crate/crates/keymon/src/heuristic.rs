//! Heuristic anti-keylogger scanner: flag files that contain
//! keylogger-characteristic tokens.
//!
//! Each rule pairs a byte token with a weight; a file's score is the
//! sum of weights of the rules whose token occurs anywhere in the
//! file, each rule counted at most once. Files scoring at or above the
//! rule set's threshold are findings — unless the user has allowlisted
//! the exact path. False positives are inherent to this technique (a
//! benign document that merely mentions a hooking API will be
//! flagged); the allowlist is the remedy, not smarter matching.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

/// Read granularity for streaming token search.
const CHUNK_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("scan root {0} does not exist")]
    RootMissing(PathBuf),
    #[error("rule file line {line}: {msg}")]
    Rules { line: usize, msg: String },
    #[error("rule file has no `threshold <N>` line")]
    MissingThreshold,
    #[error("threshold {threshold} exceeds the total rule weight {total}; nothing could ever be flagged")]
    ThresholdUnreachable { threshold: u64, total: u64 },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One scoring rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub token: String,
    pub weight: u64,
    pub description: String,
}

/// The parsed rule file: scoring rules plus the flagging threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub threshold: u64,
}

impl RuleSet {
    /// Parses the rule file format: one `<weight><TAB><token><TAB>
    /// <description>` rule per line plus exactly one `threshold <N>`
    /// line, in any order. `#` comments and blank lines are skipped.
    /// A threshold no rule combination can reach is rejected outright.
    pub fn parse(text: &str) -> Result<RuleSet, HeuristicError> {
        let mut rules: Vec<Rule> = Vec::new();
        let mut threshold: Option<u64> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if trimmed == "threshold"
                || trimmed.starts_with("threshold ")
                || trimmed.starts_with("threshold\t")
            {
                let value = trimmed["threshold".len()..].trim();
                let parsed: u64 = value.parse().map_err(|_| HeuristicError::Rules {
                    line,
                    msg: format!("bad threshold value `{value}`"),
                })?;
                if parsed == 0 {
                    return Err(HeuristicError::Rules {
                        line,
                        msg: "threshold must be positive".to_string(),
                    });
                }
                if threshold.is_some() {
                    return Err(HeuristicError::Rules {
                        line,
                        msg: "duplicate threshold line".to_string(),
                    });
                }
                threshold = Some(parsed);
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(HeuristicError::Rules {
                    line,
                    msg: format!(
                        "expected `weight<TAB>token<TAB>description`, found {} field(s)",
                        fields.len()
                    ),
                });
            }
            let weight: i64 = fields[0].trim().parse().map_err(|_| HeuristicError::Rules {
                line,
                msg: format!("bad weight `{}`", fields[0]),
            })?;
            if weight <= 0 {
                return Err(HeuristicError::Rules {
                    line,
                    msg: format!("weight must be positive, got {weight}"),
                });
            }
            let token = fields[1];
            if token.is_empty() {
                return Err(HeuristicError::Rules {
                    line,
                    msg: "token must be non-empty".to_string(),
                });
            }
            if rules.iter().any(|r| r.token == token) {
                return Err(HeuristicError::Rules {
                    line,
                    msg: format!("duplicate token `{token}`"),
                });
            }
            rules.push(Rule {
                token: token.to_string(),
                weight: weight as u64,
                description: fields[2].trim().to_string(),
            });
        }
        let threshold = threshold.ok_or(HeuristicError::MissingThreshold)?;
        let total: u64 = rules.iter().map(|r| r.weight).sum();
        if threshold > total {
            return Err(HeuristicError::ThresholdUnreachable { threshold, total });
        }
        Ok(RuleSet { rules, threshold })
    }

    pub fn load(path: &Path) -> Result<RuleSet, HeuristicError> {
        let text = fs::read_to_string(path)?;
        RuleSet::parse(&text)
    }
}

/// Makes a path absolute (against the current directory) and removes
/// `.` and `..` segments lexically, so equal files named different
/// ways compare equal.
fn normalize(path: &Path) -> PathBuf {
    let absolute = if path.is_absolute() {
        path.to_path_buf()
    } else {
        match std::env::current_dir() {
            Ok(cwd) => cwd.join(path),
            Err(_) => path.to_path_buf(),
        }
    };
    let mut out = PathBuf::new();
    for component in absolute.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Exact file paths exempt from flagging.
#[derive(Debug, Clone, Default)]
pub struct Allowlist {
    paths: BTreeSet<PathBuf>,
}

impl Allowlist {
    pub fn empty() -> Allowlist {
        Allowlist::default()
    }

    /// One path per line; `#` comments and blank lines are skipped.
    /// Entries are normalized, so `/a/./b` and `/a/b` are the same
    /// exemption.
    pub fn parse(text: &str) -> Allowlist {
        let paths = text
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'))
            .map(|line| normalize(Path::new(line)))
            .collect();
        Allowlist { paths }
    }

    pub fn load(path: &Path) -> Result<Allowlist, HeuristicError> {
        Ok(Allowlist::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, path: &Path) -> bool {
        self.paths.contains(&normalize(path))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

fn contains_token(haystack: &[u8], token: &[u8]) -> bool {
    haystack.windows(token.len()).any(|window| window == token)
}

/// Scores one byte stream against the rules: the sum of weights of
/// rules whose token occurs, each counted at most once, plus the
/// matched tokens in rule order. Streams in chunks, carrying the last
/// `max_token_len - 1` bytes across chunk boundaries so straddling
/// occurrences are found.
pub fn score_reader<R: Read>(mut reader: R, rules: &RuleSet) -> io::Result<(u64, Vec<String>)> {
    let max_len = rules.rules.iter().map(|r| r.token.len()).max().unwrap_or(0);
    let mut matched = vec![false; rules.rules.len()];
    let mut carry: Vec<u8> = Vec::new();
    let mut buf = vec![0u8; CHUNK_BYTES];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        let mut window = Vec::with_capacity(carry.len() + n);
        window.extend_from_slice(&carry);
        window.extend_from_slice(&buf[..n]);
        for (slot, rule) in matched.iter_mut().zip(&rules.rules) {
            if !*slot && contains_token(&window, rule.token.as_bytes()) {
                *slot = true;
            }
        }
        if matched.iter().all(|&m| m) {
            break;
        }
        let keep = max_len.saturating_sub(1).min(window.len());
        carry = window[window.len() - keep..].to_vec();
    }
    let mut score = 0;
    let mut tokens = Vec::new();
    for (hit, rule) in matched.iter().zip(&rules.rules) {
        if *hit {
            score += rule.weight;
            tokens.push(rule.token.clone());
        }
    }
    Ok((score, tokens))
}

/// One flagged file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub path: PathBuf,
    pub score: u64,
    /// Matched tokens in rule-file order.
    pub tokens: Vec<String>,
}

/// Everything one heuristic scan produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicReport {
    pub root: PathBuf,
    /// Sorted by descending score, then path.
    pub findings: Vec<Finding>,
    pub scanned_count: usize,
    pub error_entries: Vec<(PathBuf, String)>,
}

/// Walks `root`, scores every regular file, and reports the files at
/// or above the threshold that are not allowlisted. Per-file errors
/// are recorded, never fatal; symlinks are recorded as skipped.
pub fn heuristic_scan(
    root: &Path,
    rules: &RuleSet,
    allowlist: &Allowlist,
) -> Result<HeuristicReport, HeuristicError> {
    if fs::symlink_metadata(root).is_err() {
        return Err(HeuristicError::RootMissing(root.to_path_buf()));
    }
    let outcome = crate::walk::collect_files(root);
    let mut findings = Vec::new();
    let mut error_entries = outcome.errors;
    let mut scanned_count = 0;
    for path in outcome.files {
        let scored = File::open(&path).and_then(|file| score_reader(file, rules));
        match scored {
            Ok((score, tokens)) => {
                scanned_count += 1;
                if score >= rules.threshold && !allowlist.contains(&path) {
                    findings.push(Finding {
                        path,
                        score,
                        tokens,
                    });
                }
            }
            Err(err) => error_entries.push((path, err.to_string())),
        }
    }
    findings.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.path.cmp(&b.path)));
    error_entries.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(HeuristicReport {
        root: root.to_path_buf(),
        findings,
        scanned_count,
        error_entries,
    })
}

/// Writes the findings to `heuristic.txt` in `out_dir`, one
/// `path<TAB>score<TAB>token,token,...` line per finding. The file is
/// created even when there are no findings.
pub fn write_findings(report: &HeuristicReport, out_dir: &Path) -> Result<PathBuf, HeuristicError> {
    let mut content = String::new();
    for finding in &report.findings {
        content.push_str(&format!(
            "{}\t{}\t{}\n",
            finding.path.display(),
            finding.score,
            finding.tokens.join(",")
        ));
    }
    let path = out_dir.join("heuristic.txt");
    fs::write(&path, content).map_err(|source| HeuristicError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
