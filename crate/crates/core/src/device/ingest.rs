//! Parsers for recorded `ps -Z` and `ls -RlZ` output.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::snapshot::{ancestors, FileEntry, FileMode, ProcessEntry};
use crate::model::SecurityContext;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct IngestError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError {
        line,
        message: message.into(),
    }
}

/// Splits off `n` whitespace-separated fields and returns them with the
/// trimmed remainder of the line.
fn fields(line: &str, n: usize) -> Option<(Vec<&str>, &str)> {
    let mut out = Vec::with_capacity(n);
    let mut rest = line.trim_start();
    for _ in 0..n {
        let end = rest.find(char::is_whitespace)?;
        out.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    let rest = rest.trim_end();
    (!rest.is_empty()).then_some((out, rest))
}

fn context(line: usize, s: &str) -> Result<SecurityContext, IngestError> {
    s.parse()
        .map_err(|e| err(line, format!("bad security context `{s}`: {e}")))
}

/// One process per line: `LABEL USER PID PPID NAME`. NAME runs to the end
/// of the line and may contain spaces. A header line and blank lines are
/// skipped.
pub fn ingest_ps(text: &str) -> Result<Vec<ProcessEntry>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() || words == ["LABEL", "USER", "PID", "PPID", "NAME"] {
            continue;
        }
        let (f, name) = fields(line, 4).ok_or_else(|| {
            err(
                n,
                format!("expected LABEL USER PID PPID NAME, got {} fields", words.len()),
            )
        })?;
        let pid: u32 = f[2]
            .parse()
            .map_err(|_| err(n, format!("pid `{}` is not an integer", f[2])))?;
        let ppid: u32 = f[3]
            .parse()
            .map_err(|_| err(n, format!("ppid `{}` is not an integer", f[3])))?;
        if pid == 0 {
            return Err(err(n, "pid must be positive"));
        }
        out.push(ProcessEntry {
            context: context(n, f[0])?,
            user: f[1].to_owned(),
            pid,
            ppid,
            name: name.to_owned(),
        });
    }
    Ok(out)
}

/// Metadata given to ancestor directories that the listing never describes.
pub const PLACEHOLDER_DIR_MODE: &str = "drwxr-xr-x";
pub const PLACEHOLDER_DIR_CONTEXT: &str = "u:object_r:unlabeled:s0";

fn join(dir: &str, name: &str) -> String {
    if dir == "/" {
        format!("/{name}")
    } else {
        format!("{dir}/{name}")
    }
}

/// Recursive listing in blocks: a `PATH:` header followed by
/// `MODE OWNER GROUP LABEL NAME` lines. `total` lines and `..` entries are
/// ignored; a `.` entry describes the block directory itself. Symlink
/// entries lose their ` -> target` suffix. Ancestors never described get
/// placeholder metadata so the result is closed under ancestry.
pub fn ingest_ls(text: &str) -> Result<BTreeMap<String, FileEntry>, IngestError> {
    let mut files: BTreeMap<String, FileEntry> = BTreeMap::new();
    let mut dir: Option<String> = None;
    let mut headers = BTreeSet::new();

    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("total ") {
            continue;
        }
        if trimmed.starts_with('/') && trimmed.ends_with(':') && !trimmed.contains(char::is_whitespace) {
            let mut path = trimmed.trim_end_matches(':').to_owned();
            while path.len() > 1 && path.ends_with('/') {
                path.pop();
            }
            if path != "/" && path.split('/').skip(1).any(|c| c.is_empty() || c == "." || c == "..") {
                return Err(err(n, format!("bad directory header `{trimmed}`")));
            }
            headers.insert(path.clone());
            dir = Some(path);
            continue;
        }
        let Some(current) = &dir else {
            return Err(err(n, "entry before any `PATH:` header"));
        };
        let (f, name) = fields(line, 4).ok_or_else(|| err(n, "expected MODE OWNER GROUP LABEL NAME"))?;
        let mode: FileMode = f[0].parse().map_err(|e: String| err(n, e))?;
        let ctx = context(n, f[3])?;
        let name = match (mode.kind(), name.split_once(" -> ")) {
            ('l', Some((link, _))) => link,
            _ => name,
        };
        if name == ".." {
            continue;
        }
        if name.contains('/') {
            return Err(err(n, format!("entry name `{name}` contains '/'")));
        }
        let path = if name == "." {
            current.clone()
        } else {
            join(current, name)
        };
        let entry = FileEntry {
            path: path.clone(),
            context: ctx,
            mode,
            owner: f[1].to_owned(),
            group: f[2].to_owned(),
        };
        match files.get(&path) {
            Some(existing) if *existing != entry => {
                return Err(err(n, format!("conflicting entries for `{path}`")));
            }
            _ => {
                files.insert(path, entry);
            }
        }
    }

    // Block headers name directories even when their block is empty.
    let mut missing: BTreeSet<String> = headers.into_iter().filter(|h| !files.contains_key(h)).collect();
    for path in files.keys().chain(missing.clone().iter()) {
        for a in ancestors(path) {
            if !files.contains_key(a) {
                missing.insert(a.to_owned());
            }
        }
    }
    for path in missing {
        files.insert(
            path.clone(),
            FileEntry {
                path,
                context: PLACEHOLDER_DIR_CONTEXT.parse().expect("placeholder context"),
                mode: PLACEHOLDER_DIR_MODE.parse().expect("placeholder mode"),
                owner: "root".into(),
                group: "root".into(),
            },
        );
    }
    Ok(files)
}

/// `USER GROUP...` per line; `#` comments and blank lines are ignored.
pub fn ingest_groups(text: &str) -> Result<BTreeMap<String, BTreeSet<String>>, IngestError> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut words = line.split_whitespace();
        let Some(user) = words.next() else { continue };
        let groups: BTreeSet<String> = words.map(str::to_owned).collect();
        if groups.is_empty() {
            return Err(err(i + 1, format!("user `{user}` lists no groups")));
        }
        out.entry(user.to_owned()).or_default().extend(groups);
    }
    Ok(out)
}
