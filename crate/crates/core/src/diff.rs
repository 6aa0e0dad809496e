//! Structural comparison of a policy against a baseline, optionally narrowed
//! to the entries that touch one type.

use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

use crate::model::{AvRule, GenfsContext, Policy, TypeTransitionRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("filter type `{0}` is not declared in either policy")]
    FilterUnknownType(String),
}

/// What `subject` adds to or removes from `baseline`. Rules compare by
/// normalized structure (origins ignored) with set semantics: a rule present
/// twice in one policy is reported at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PolicyDiff {
    pub added_types: BTreeSet<String>,
    pub removed_types: BTreeSet<String>,
    pub added_attributes: BTreeSet<String>,
    pub removed_attributes: BTreeSet<String>,
    pub added_allows: Vec<AvRule>,
    pub removed_allows: Vec<AvRule>,
    pub added_neverallows: Vec<AvRule>,
    pub removed_neverallows: Vec<AvRule>,
    pub added_transitions: Vec<TypeTransitionRule>,
    pub removed_transitions: Vec<TypeTransitionRule>,
    pub added_genfs: Vec<GenfsContext>,
    pub removed_genfs: Vec<GenfsContext>,
}

impl PolicyDiff {
    pub fn is_empty(&self) -> bool {
        self.added_types.is_empty()
            && self.removed_types.is_empty()
            && self.added_attributes.is_empty()
            && self.removed_attributes.is_empty()
            && self.added_allows.is_empty()
            && self.removed_allows.is_empty()
            && self.added_neverallows.is_empty()
            && self.removed_neverallows.is_empty()
            && self.added_transitions.is_empty()
            && self.removed_transitions.is_empty()
            && self.added_genfs.is_empty()
            && self.removed_genfs.is_empty()
    }
}

/// Distinct items of `from` absent from `other`, in first-seen order.
fn missing_from<T: Clone + Eq + Hash>(from: &[T], other: &[T]) -> Vec<T> {
    let other: HashSet<&T> = other.iter().collect();
    let mut seen = HashSet::new();
    from.iter()
        .filter(|x| !other.contains(x) && seen.insert(*x))
        .cloned()
        .collect()
}

fn key_diff<'a, I: Iterator<Item = &'a String>>(from: I, other: &dyn Fn(&str) -> bool) -> BTreeSet<String> {
    from.filter(|k| !other(k)).cloned().collect()
}

pub fn diff_policies(baseline: &Policy, subject: &Policy, filter: Option<&str>) -> Result<PolicyDiff, DiffError> {
    if let Some(t) = filter {
        if !baseline.has_type(t) && !subject.has_type(t) {
            return Err(DiffError::FilterUnknownType(t.to_owned()));
        }
    }

    let mut diff = PolicyDiff {
        added_types: key_diff(subject.types().keys(), &|k| baseline.has_type(k)),
        removed_types: key_diff(baseline.types().keys(), &|k| subject.has_type(k)),
        added_attributes: key_diff(subject.attributes().keys(), &|k| baseline.has_attribute(k)),
        removed_attributes: key_diff(baseline.attributes().keys(), &|k| subject.has_attribute(k)),
        added_allows: missing_from(subject.allows(), baseline.allows()),
        removed_allows: missing_from(baseline.allows(), subject.allows()),
        added_neverallows: missing_from(subject.neverallows(), baseline.neverallows()),
        removed_neverallows: missing_from(baseline.neverallows(), subject.neverallows()),
        added_transitions: missing_from(subject.transitions(), baseline.transitions()),
        removed_transitions: missing_from(baseline.transitions(), subject.transitions()),
        added_genfs: missing_from(subject.genfs(), baseline.genfs()),
        removed_genfs: missing_from(baseline.genfs(), subject.genfs()),
    };

    if let Some(t) = filter {
        let (s, b) = (subject, baseline);
        diff.added_types.retain(|x| x == t);
        diff.removed_types.retain(|x| x == t);
        diff.added_attributes.retain(|a| s.members(a).any(|m| m == t));
        diff.removed_attributes.retain(|a| b.members(a).any(|m| m == t));
        diff.added_allows.retain(|r| rule_touches(s, r, t));
        diff.removed_allows.retain(|r| rule_touches(b, r, t));
        diff.added_neverallows.retain(|r| rule_touches(s, r, t));
        diff.removed_neverallows.retain(|r| rule_touches(b, r, t));
        diff.added_transitions.retain(|r| transition_touches(s, r, t));
        diff.removed_transitions.retain(|r| transition_touches(b, r, t));
        diff.added_genfs.retain(|g| g.context.type_name == t);
        diff.removed_genfs.retain(|g| g.context.type_name == t);
    }
    Ok(diff)
}

/// Source or target set of `rule`, resolved in `policy`, contains `t`.
pub(crate) fn rule_touches(policy: &Policy, rule: &AvRule, t: &str) -> bool {
    let Ok(sources) = policy.resolve_type_set(&rule.source, None) else {
        return false;
    };
    if sources.contains(t) {
        return true;
    }
    if rule.target.is_self() {
        return false;
    }
    policy
        .resolve_type_set(&rule.target, None)
        .is_ok_and(|targets| targets.contains(t))
}

fn transition_touches(policy: &Policy, rule: &TypeTransitionRule, t: &str) -> bool {
    let Some(id) = policy.type_id(t) else {
        return false;
    };
    rule.result == t || policy.ident_bits(&rule.subject).contains(id) || policy.ident_bits(&rule.object).contains(id)
}
