//! Combined MAC + DAC access decisions over a snapshot.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::snapshot::{ancestors, FileEntry, ProcessEntry, Snapshot};
use crate::model::{Perms, Policy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccessError {
    #[error("path `{0}` is not in the snapshot")]
    PathNotInSnapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    Execute,
}

impl AccessKind {
    pub const ALL: [AccessKind; 3] = [AccessKind::Read, AccessKind::Write, AccessKind::Execute];

    /// MAC permissions needed on the object's class.
    pub fn required_mac_perms(self) -> &'static [&'static str] {
        match self {
            AccessKind::Read => &["read", "open"],
            AccessKind::Write => &["write", "open"],
            AccessKind::Execute => &["execute"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::Execute => "execute",
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" => Ok(AccessKind::Read),
            "write" => Ok(AccessKind::Write),
            "execute" => Ok(AccessKind::Execute),
            _ => Err(format!("unknown access kind `{s}` (expected read, write or execute)")),
        }
    }
}

/// Union of the permissions granted to `domain` on `target_type:class` by
/// every matching allow rule.
fn granted(policy: &Policy, domain: &str, target_type: &str, class: &str) -> Perms {
    let (Some(s), Some(t)) = (policy.type_id(domain), policy.type_id(target_type)) else {
        return Perms::Set(Default::default());
    };
    let mut union = std::collections::BTreeSet::new();
    for (i, rule) in policy.allows().iter().enumerate() {
        if rule.av.class != class {
            continue;
        }
        let r = policy.resolved_allow(i);
        if r.sources.contains(s) && r.targets.contains_for(s, t) {
            match &rule.av.perms {
                Perms::All => return Perms::All,
                Perms::Set(p) => union.extend(p.iter().cloned()),
            }
        }
    }
    Perms::Set(union)
}

/// True iff the allow rules together grant every permission in `perms`.
pub fn mac_allows(policy: &Policy, domain: &str, target_type: &str, class: &str, perms: &[&str]) -> bool {
    granted(policy, domain, target_type, class).covers(perms.iter().copied())
}

/// Classic permission bits. `root` bypasses the check.
pub fn dac_allows(snapshot: &Snapshot, user: &str, file: &FileEntry, kind: AccessKind) -> bool {
    if user == "root" {
        return true;
    }
    let triad = if file.owner == user {
        0
    } else if snapshot.in_group(user, &file.group) {
        1
    } else {
        2
    };
    let (r, w, x) = file.mode.triad(triad);
    match kind {
        AccessKind::Read => r,
        AccessKind::Write => w,
        AccessKind::Execute => x,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// DAC execute on an ancestor directory.
    DacSearch,
    /// MAC `dir search` on an ancestor directory.
    MacSearch,
    DacFile,
    MacFile,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::DacSearch => "dac-search",
            StepKind::MacSearch => "mac-search",
            StepKind::DacFile => "dac-file",
            StepKind::MacFile => "mac-file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: StepKind,
    pub path: String,
    /// What was checked, e.g. `untrusted_app proc_security:file { read open }`.
    pub detail: String,
    pub allowed: bool,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.allowed { "ok" } else { "DENIED" };
        write!(f, "{} {} [{}]: {verdict}", self.step.as_str(), self.path, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessDecision {
    pub allowed: bool,
    pub trace: Vec<TraceStep>,
}

impl AccessDecision {
    pub fn first_denied(&self) -> Option<&TraceStep> {
        self.trace.iter().find(|s| !s.allowed)
    }
}

/// Policy + snapshot with memoized MAC lookups, for repeated queries.
pub struct AccessChecker<'a> {
    policy: &'a Policy,
    snapshot: &'a Snapshot,
    mac: RefCell<HashMap<(String, String, String), Perms>>,
}

impl<'a> AccessChecker<'a> {
    pub fn new(policy: &'a Policy, snapshot: &'a Snapshot) -> Self {
        Self {
            policy,
            snapshot,
            mac: RefCell::new(HashMap::new()),
        }
    }

    pub fn mac_allows(&self, domain: &str, target_type: &str, class: &str, perms: &[&str]) -> bool {
        let key = (domain.to_owned(), target_type.to_owned(), class.to_owned());
        let mut cache = self.mac.borrow_mut();
        let granted = cache
            .entry(key)
            .or_insert_with(|| granted(self.policy, domain, target_type, class));
        granted.covers(perms.iter().copied())
    }

    fn search_steps(&self, process: &ProcessEntry, dir: &FileEntry, trace: &mut Vec<TraceStep>) {
        trace.push(TraceStep {
            step: StepKind::DacSearch,
            path: dir.path.clone(),
            detail: format!("{} x on {} {}:{}", process.user, dir.mode, dir.owner, dir.group),
            allowed: dac_allows(self.snapshot, &process.user, dir, AccessKind::Execute),
        });
        trace.push(TraceStep {
            step: StepKind::MacSearch,
            path: dir.path.clone(),
            detail: format!("{} {}:dir search", process.domain(), dir.label()),
            allowed: self.mac_allows(process.domain(), dir.label(), "dir", &["search"]),
        });
    }

    /// Every check is evaluated and recorded, even after one fails.
    pub fn can_access(
        &self,
        process: &ProcessEntry,
        path: &str,
        kind: AccessKind,
    ) -> Result<AccessDecision, AccessError> {
        let file = self
            .snapshot
            .file(path)
            .ok_or_else(|| AccessError::PathNotInSnapshot(path.to_owned()))?;
        let mut trace = Vec::new();
        for a in ancestors(path) {
            let dir = self.snapshot.file(a).expect("snapshot is closed under ancestry");
            self.search_steps(process, dir, &mut trace);
        }
        let bit = match kind {
            AccessKind::Read => 'r',
            AccessKind::Write => 'w',
            AccessKind::Execute => 'x',
        };
        trace.push(TraceStep {
            step: StepKind::DacFile,
            path: path.to_owned(),
            detail: format!("{} {bit} on {} {}:{}", process.user, file.mode, file.owner, file.group),
            allowed: dac_allows(self.snapshot, &process.user, file, kind),
        });
        let class = file.mode.class();
        let perms = kind.required_mac_perms();
        trace.push(TraceStep {
            step: StepKind::MacFile,
            path: path.to_owned(),
            detail: format!(
                "{} {}:{class} {{ {} }}",
                process.domain(),
                file.label(),
                perms.join(" ")
            ),
            allowed: self.mac_allows(process.domain(), file.label(), class, perms),
        });
        Ok(AccessDecision {
            allowed: trace.iter().all(|s| s.allowed),
            trace,
        })
    }

    /// Ancestor traversal alone: can `process` reach `path` at all.
    pub fn can_reach(&self, process: &ProcessEntry, path: &str) -> Result<bool, AccessError> {
        if self.snapshot.file(path).is_none() {
            return Err(AccessError::PathNotInSnapshot(path.to_owned()));
        }
        Ok(ancestors(path).into_iter().all(|a| {
            let dir = &self.snapshot.files()[a];
            dac_allows(self.snapshot, &process.user, dir, AccessKind::Execute)
                && self.mac_allows(process.domain(), dir.label(), "dir", &["search"])
        }))
    }

    /// Paths `process` can access with `kind`, sorted.
    pub fn query_files(&self, process: &ProcessEntry, kind: AccessKind) -> Vec<String> {
        // Directory traversability is shared by all children; memoize it.
        let mut searchable: HashMap<&str, bool> = HashMap::new();
        let mut out = Vec::new();
        for (path, file) in self.snapshot.files() {
            let reachable = ancestors(path).into_iter().all(|a| {
                *searchable.entry(a).or_insert_with(|| {
                    let dir = &self.snapshot.files()[a];
                    dac_allows(self.snapshot, &process.user, dir, AccessKind::Execute)
                        && self.mac_allows(process.domain(), dir.label(), "dir", &["search"])
                })
            });
            if reachable
                && dac_allows(self.snapshot, &process.user, file, kind)
                && self.mac_allows(
                    process.domain(),
                    file.label(),
                    file.mode.class(),
                    kind.required_mac_perms(),
                )
            {
                out.push(path.clone());
            }
        }
        out
    }

    /// Processes that can access `path` with `kind`, ordered by pid.
    pub fn query_processes(&self, path: &str, kind: AccessKind) -> Result<Vec<ProcessEntry>, AccessError> {
        let mut out = Vec::new();
        for p in self.snapshot.processes() {
            if self.can_access(p, path, kind)?.allowed {
                out.push(p.clone());
            }
        }
        Ok(out)
    }
}

pub fn can_access(
    policy: &Policy,
    snapshot: &Snapshot,
    process: &ProcessEntry,
    path: &str,
    kind: AccessKind,
) -> Result<AccessDecision, AccessError> {
    AccessChecker::new(policy, snapshot).can_access(process, path, kind)
}

pub fn query_files(policy: &Policy, snapshot: &Snapshot, process: &ProcessEntry, kind: AccessKind) -> Vec<String> {
    AccessChecker::new(policy, snapshot).query_files(process, kind)
}

pub fn query_processes(
    policy: &Policy,
    snapshot: &Snapshot,
    path: &str,
    kind: AccessKind,
) -> Result<Vec<ProcessEntry>, AccessError> {
    AccessChecker::new(policy, snapshot).query_processes(path, kind)
}
