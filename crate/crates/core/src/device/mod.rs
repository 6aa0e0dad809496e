//! Recorded device state and what the policy lets processes do with it.

mod access;
mod ingest;
mod snapshot;

use std::collections::BTreeSet;

use crate::lint::{Detector, Finding};
use crate::model::Policy;

pub use access::{
    can_access, dac_allows, mac_allows, query_files, query_processes, AccessChecker, AccessDecision, AccessError,
    AccessKind, StepKind, TraceStep,
};
pub use ingest::{ingest_groups, ingest_ls, ingest_ps, IngestError, PLACEHOLDER_DIR_CONTEXT, PLACEHOLDER_DIR_MODE};
pub use snapshot::{ancestors, FileEntry, FileMode, ProcessEntry, Snapshot, SnapshotError};

pub const UNREACHABLE_NOTE: &str = "not functional (unreachable on device)";

/// Checks L3/L4/L5 findings against the device. When the snapshot holds
/// files carrying the rule's target types but no process running in one of
/// its source domains can use any of them, the finding is annotated and
/// lowered one severity level. Everything else passes through unchanged.
pub fn refine_findings(policy: &Policy, snapshot: &Snapshot, findings: Vec<Finding>) -> Vec<Finding> {
    let checker = AccessChecker::new(policy, snapshot);
    findings
        .into_iter()
        .map(|mut f| {
            if matches!(f.detector, Detector::L3 | Detector::L4 | Detector::L5) {
                if let Some(false) = f
                    .rule
                    .as_ref()
                    .and_then(|r| functional_on_device(policy, &checker, snapshot, r))
                {
                    f.severity = f.severity.downgraded();
                    f.notes.push(UNREACHABLE_NOTE.to_owned());
                }
            }
            f
        })
        .collect()
}

/// `None` when the snapshot has no file labeled with any target type.
fn functional_on_device(
    policy: &Policy,
    checker: &AccessChecker<'_>,
    snapshot: &Snapshot,
    rule: &crate::model::AvRule,
) -> Option<bool> {
    let resolved = policy.resolve_rule(rule).ok()?;
    let target_bits = resolved.target_union();
    let targets: BTreeSet<&str> = policy.names(&target_bits).collect();
    let evidence: Vec<&FileEntry> = snapshot
        .files()
        .values()
        .filter(|f| targets.contains(f.label()))
        .collect();
    if evidence.is_empty() {
        return None;
    }
    let kinds: Vec<AccessKind> = AccessKind::ALL
        .into_iter()
        .filter(|k| rule.av.perms.contains(k.as_str()))
        .collect();

    let functional = snapshot.processes().iter().any(|p| {
        let Some(s) = policy.type_id(p.domain()).filter(|&s| resolved.sources.contains(s)) else {
            return false;
        };
        evidence.iter().any(|f| {
            let Some(t) = policy.type_id(f.label()) else {
                return false;
            };
            if !resolved.targets.contains_for(s, t) {
                return false;
            }
            if kinds.is_empty() {
                // No read/write/execute in the rule: settle for reaching the file.
                checker.can_reach(p, &f.path).unwrap_or(false)
            } else {
                kinds
                    .iter()
                    .any(|&k| checker.can_access(p, &f.path, k).is_ok_and(|d| d.allowed))
            }
        })
    });
    Some(functional)
}
