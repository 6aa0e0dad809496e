//! Neverallow checking: find allow rules that grant something a neverallow
//! assertion forbids, with a concrete witness for each offending pair.

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::model::{AvRule, ModelError, Perms, Policy, ResolvedRule};

/// One `(neverallow, allow)` conflict and the lexicographically smallest
/// `(source, target)` pair granted by both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NeverallowViolation {
    pub neverallow: AvRule,
    pub allow: AvRule,
    pub witness_source: String,
    pub witness_target: String,
    pub witness_class: String,
    pub witness_perms: Perms,
}

/// Checks every allow rule against the policy's own neverallows followed by
/// `extra`. Results are ordered by neverallow, then allow, in rule order.
pub fn check_neverallows(policy: &Policy, extra: &[AvRule]) -> Result<Vec<NeverallowViolation>, ModelError> {
    let neverallows: Vec<(&AvRule, ResolvedRule)> = policy
        .neverallows()
        .iter()
        .chain(extra)
        .map(|n| Ok((n, policy.resolve_rule(n)?)))
        .collect::<Result<_, ModelError>>()?;

    let mut out = Vec::new();
    for (never, never_sets) in &neverallows {
        for (i, allow) in policy.allows().iter().enumerate() {
            if allow.av.class != never.av.class {
                continue;
            }
            let perms = never.av.perms.intersection(&allow.av.perms);
            if perms.is_empty() {
                continue;
            }
            if let Some((s, t)) = first_witness(never_sets, policy.resolved_allow(i)) {
                out.push(NeverallowViolation {
                    neverallow: (*never).clone(),
                    allow: allow.clone(),
                    witness_source: policy.type_name(s).to_owned(),
                    witness_target: policy.type_name(t).to_owned(),
                    witness_class: allow.av.class.clone(),
                    witness_perms: perms,
                });
            }
        }
    }
    Ok(out)
}

/// Smallest `(s, t)` with `s` in both source sets and `t` in both target
/// sets as seen from `s`.
fn first_witness(never: &ResolvedRule, allow: &ResolvedRule) -> Option<(usize, usize)> {
    let mut sources = never.sources.clone();
    sources.intersect_with(&allow.sources);
    let s0 = sources.minimum()?;

    let mut shared = never.targets.bits.clone();
    shared.intersect_with(&allow.targets.bits);

    // Without `self` on either side the target intersection does not depend
    // on the source, so the smallest source always works if any does.
    if let Some(t) = shared.minimum() {
        let t = if never.targets.contains_for(s0, s0) && allow.targets.contains_for(s0, s0) {
            t.min(s0)
        } else {
            t
        };
        return Some((s0, t));
    }
    if !never.targets.with_self && !allow.targets.with_self {
        return None;
    }
    // Only the diagonal pair (s, s) can be shared.
    let mut diagonal = sources;
    if !never.targets.with_self {
        diagonal.intersect_with(&never.targets.bits);
    }
    if !allow.targets.with_self {
        diagonal.intersect_with(&allow.targets.bits);
    }
    diagonal.minimum().map(|s| (s, s))
}

/// Every `(source, target)` pair shared by the two rules, for verbose output.
pub fn all_witnesses(
    policy: &Policy,
    neverallow: &AvRule,
    allow: &AvRule,
) -> Result<Vec<(String, String)>, ModelError> {
    if neverallow.av.class != allow.av.class || !neverallow.av.perms.intersects(&allow.av.perms) {
        return Ok(Vec::new());
    }
    let n = policy.resolve_rule(neverallow)?;
    let a = policy.resolve_rule(allow)?;
    let mut sources: FixedBitSet = n.sources.clone();
    sources.intersect_with(&a.sources);
    let mut out = Vec::new();
    for s in sources.ones() {
        let mut targets = n.targets.for_source(s);
        targets.intersect_with(&a.targets.for_source(s));
        for t in targets.ones() {
            out.push((policy.type_name(s).to_owned(), policy.type_name(t).to_owned()));
        }
    }
    Ok(out)
}
