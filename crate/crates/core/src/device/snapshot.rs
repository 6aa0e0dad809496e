use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::SecurityContext;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("invalid snapshot JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("{0}")]
    Invalid(String),
}

/// Ten-character `ls -l` mode string, e.g. `-rw-r--r--` or `drwxr-x--x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FileMode(String);

impl FileMode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// File type character (`-`, `d`, `l`, `c`, `b`, `s`, `p`).
    pub fn kind(&self) -> char {
        self.0.as_bytes()[0] as char
    }

    pub fn is_dir(&self) -> bool {
        self.kind() == 'd'
    }

    /// Object class a file of this type belongs to.
    pub fn class(&self) -> &'static str {
        match self.kind() {
            'd' => "dir",
            'c' => "chr_file",
            'b' => "blk_file",
            's' => "sock_file",
            'p' => "fifo_file",
            'l' => "lnk_file",
            _ => "file",
        }
    }

    /// `(r, w, x)` for triad 0 (owner), 1 (group) or 2 (other). Setuid,
    /// setgid and sticky letters count as execute when lower case.
    pub fn triad(&self, which: usize) -> (bool, bool, bool) {
        let b = &self.0.as_bytes()[1 + 3 * which..4 + 3 * which];
        (b[0] == b'r', b[1] == b'w', matches!(b[2], b'x' | b's' | b't'))
    }
}

impl FromStr for FileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const ALLOWED: [&str; 10] = ["-dlcbsp", "r-", "w-", "xsS-", "r-", "w-", "xsS-", "r-", "w-", "xtT-"];
        let ok = s.len() == 10 && s.chars().zip(ALLOWED).all(|(c, allowed)| allowed.contains(c));
        if ok {
            Ok(FileMode(s.to_owned()))
        } else {
            Err(format!("invalid mode string `{s}`"))
        }
    }
}

impl fmt::Display for FileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for FileMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for FileMode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessEntry {
    pub context: SecurityContext,
    pub user: String,
    pub pid: u32,
    pub ppid: u32,
    pub name: String,
}

impl ProcessEntry {
    pub fn domain(&self) -> &str {
        &self.context.type_name
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub context: SecurityContext,
    pub mode: FileMode,
    pub owner: String,
    pub group: String,
}

impl FileEntry {
    pub fn label(&self) -> &str {
        &self.context.type_name
    }
}

/// Proper ancestors of an absolute path, outermost first: `/a/b/c` gives
/// `/`, `/a`, `/a/b`.
pub fn ancestors(path: &str) -> Vec<&str> {
    if path == "/" {
        return Vec::new();
    }
    let mut out = vec!["/"];
    for (i, _) in path.match_indices('/').skip(1) {
        out.push(&path[..i]);
    }
    out
}

/// Recorded device state: running processes and labeled filesystem objects.
/// Every file's ancestor directories are present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    processes: Vec<ProcessEntry>,
    files: BTreeMap<String, FileEntry>,
    user_groups: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    version: u32,
    processes: Vec<ProcessEntry>,
    files: Vec<FileEntry>,
    #[serde(rename = "userGroups")]
    user_groups: BTreeMap<String, BTreeSet<String>>,
}

impl Snapshot {
    pub fn new(
        mut processes: Vec<ProcessEntry>,
        files: BTreeMap<String, FileEntry>,
        user_groups: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self, SnapshotError> {
        for p in &processes {
            if p.pid == 0 {
                return Err(SnapshotError::Invalid(format!("process `{}` has pid 0", p.name)));
            }
        }
        for (path, f) in &files {
            if !path.starts_with('/') || *path != f.path {
                return Err(SnapshotError::Invalid(format!("bad file path `{path}`")));
            }
            if let Some(missing) = ancestors(path).into_iter().find(|a| !files.contains_key(*a)) {
                return Err(SnapshotError::Invalid(format!(
                    "`{path}` has no entry for ancestor directory `{missing}`"
                )));
            }
        }
        processes.sort_by(|a, b| (a.pid, a.ppid, &a.name).cmp(&(b.pid, b.ppid, &b.name)));
        Ok(Self {
            processes,
            files,
            user_groups,
        })
    }

    /// Processes ordered by pid.
    pub fn processes(&self) -> &[ProcessEntry] {
        &self.processes
    }

    pub fn files(&self) -> &BTreeMap<String, FileEntry> {
        &self.files
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files.get(path)
    }

    pub fn user_groups(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.user_groups
    }

    /// Groups of `user`; a user with no recorded membership is in its own
    /// group only.
    pub fn in_group(&self, user: &str, group: &str) -> bool {
        match self.user_groups.get(user) {
            Some(groups) => groups.contains(group),
            None => user == group,
        }
    }

    pub fn process_by_pid(&self, pid: u32) -> Option<&ProcessEntry> {
        self.processes.iter().find(|p| p.pid == pid)
    }

    /// Canonical JSON: files by path, processes by pid, trailing newline.
    pub fn to_json(&self) -> String {
        let doc = SnapshotDoc {
            version: 1,
            processes: self.processes.clone(),
            files: self.files.values().cloned().collect(),
            user_groups: self.user_groups.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        let doc: SnapshotDoc = serde_json::from_str(text)?;
        if doc.version != 1 {
            return Err(SnapshotError::UnsupportedVersion(doc.version));
        }
        let mut files = BTreeMap::new();
        for f in doc.files {
            if files.insert(f.path.clone(), f).is_some() {
                return Err(SnapshotError::Invalid("duplicate file path".into()));
            }
        }
        Snapshot::new(doc.processes, files, doc.user_groups)
    }
}
