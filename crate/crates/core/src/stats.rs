//! Policy size and complexity metrics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::model::Policy;

/// Raw counts describing a policy.
///
/// `allow_rule_count` counts statements as written, so duplicate rules count
/// twice and attribute rules count once. `untrusted_app_rule_count` counts
/// allow statements whose *resolved* source includes the untrusted app
/// domain, whether granted directly or through an attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PolicyStats {
    pub type_count: u64,
    pub domain_count: u64,
    pub type_transition_count: u64,
    pub process_transition_count: u64,
    pub allow_rule_count: u64,
    pub attribute_count: u64,
    pub genfs_context_count: u64,
    pub untrusted_app_rule_count: u64,
    pub class_count: u64,
    pub permission_count: u64,
    pub initial_sid_count: u64,
}

/// Fieldwise `subject - baseline`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StatsDelta {
    pub type_count: i64,
    pub domain_count: i64,
    pub type_transition_count: i64,
    pub process_transition_count: i64,
    pub allow_rule_count: i64,
    pub attribute_count: i64,
    pub genfs_context_count: i64,
    pub untrusted_app_rule_count: i64,
    pub class_count: i64,
    pub permission_count: i64,
    pub initial_sid_count: i64,
}

/// `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityRatios {
    pub allow_per_type: Option<f64>,
    pub types_per_domain: Option<f64>,
    pub process_trans_per_domain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StatsOptions {
    /// Attribute whose members are counted as domains.
    pub domain_attribute: String,
    pub untrusted_domain: String,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            domain_attribute: "domain".into(),
            untrusted_domain: "untrusted_app".into(),
        }
    }
}

pub fn compute_stats(policy: &Policy) -> PolicyStats {
    compute_stats_with(policy, &StatsOptions::default())
}

pub fn compute_stats_with(policy: &Policy, options: &StatsOptions) -> PolicyStats {
    let untrusted = policy.type_id(&options.untrusted_domain);
    let untrusted_rules = match untrusted {
        Some(id) => (0..policy.allows().len())
            .filter(|&i| policy.resolved_allow(i).sources.contains(id))
            .count(),
        None => 0,
    };
    let permissions: BTreeSet<&String> = policy.classes().values().flatten().collect();

    PolicyStats {
        type_count: policy.types().len() as u64,
        domain_count: policy.members(&options.domain_attribute).count() as u64,
        type_transition_count: policy.transitions().len() as u64,
        process_transition_count: policy.transitions().iter().filter(|t| t.is_process()).count() as u64,
        allow_rule_count: policy.allows().len() as u64,
        attribute_count: policy.attributes().len() as u64,
        genfs_context_count: policy.genfs().len() as u64,
        untrusted_app_rule_count: untrusted_rules as u64,
        class_count: policy.classes().len() as u64,
        permission_count: permissions.len() as u64,
        initial_sid_count: policy.sids().len() as u64,
    }
}

/// Number of distinct `(source, target, class)` triples after expanding
/// attributes; reported alongside the statement count.
pub fn expanded_allow_count(policy: &Policy) -> u64 {
    let mut granted: HashMap<(usize, &str), FixedBitSet> = HashMap::new();
    for (i, rule) in policy.allows().iter().enumerate() {
        let resolved = policy.resolved_allow(i);
        for s in resolved.sources.ones() {
            granted
                .entry((s, rule.av.class.as_str()))
                .or_insert_with(|| policy.empty_bits())
                .union_with(&resolved.targets.for_source(s));
        }
    }
    granted.values().map(|b| b.count_ones(..) as u64).sum()
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn complexity_ratios(stats: &PolicyStats) -> ComplexityRatios {
    ComplexityRatios {
        allow_per_type: ratio(stats.allow_rule_count, stats.type_count),
        types_per_domain: ratio(stats.type_count, stats.domain_count),
        process_trans_per_domain: ratio(stats.process_transition_count, stats.domain_count),
    }
}

pub fn stats_delta(baseline: &PolicyStats, subject: &PolicyStats) -> StatsDelta {
    let d = |b: u64, s: u64| s as i64 - b as i64;
    StatsDelta {
        type_count: d(baseline.type_count, subject.type_count),
        domain_count: d(baseline.domain_count, subject.domain_count),
        type_transition_count: d(baseline.type_transition_count, subject.type_transition_count),
        process_transition_count: d(baseline.process_transition_count, subject.process_transition_count),
        allow_rule_count: d(baseline.allow_rule_count, subject.allow_rule_count),
        attribute_count: d(baseline.attribute_count, subject.attribute_count),
        genfs_context_count: d(baseline.genfs_context_count, subject.genfs_context_count),
        untrusted_app_rule_count: d(baseline.untrusted_app_rule_count, subject.untrusted_app_rule_count),
        class_count: d(baseline.class_count, subject.class_count),
        permission_count: d(baseline.permission_count, subject.permission_count),
        initial_sid_count: d(baseline.initial_sid_count, subject.initial_sid_count),
    }
}

impl PolicyStats {
    /// `(label, value)` pairs in display order.
    pub fn rows(&self) -> [(&'static str, u64); 11] {
        [
            ("types", self.type_count),
            ("domains", self.domain_count),
            ("type transitions", self.type_transition_count),
            ("process transitions", self.process_transition_count),
            ("allow rules", self.allow_rule_count),
            ("attributes", self.attribute_count),
            ("genfs contexts", self.genfs_context_count),
            ("untrusted_app rules", self.untrusted_app_rule_count),
            ("classes", self.class_count),
            ("permissions", self.permission_count),
            ("initial SIDs", self.initial_sid_count),
        ]
    }
}

impl StatsDelta {
    pub fn rows(&self) -> [(&'static str, i64); 11] {
        [
            ("types", self.type_count),
            ("domains", self.domain_count),
            ("type transitions", self.type_transition_count),
            ("process transitions", self.process_transition_count),
            ("allow rules", self.allow_rule_count),
            ("attributes", self.attribute_count),
            ("genfs contexts", self.genfs_context_count),
            ("untrusted_app rules", self.untrusted_app_rule_count),
            ("classes", self.class_count),
            ("permissions", self.permission_count),
            ("initial SIDs", self.initial_sid_count),
        ]
    }
}

impl fmt::Display for ComplexityRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |r: Option<f64>| r.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.2}"));
        writeln!(f, "allow rules per type: {}", show(self.allow_per_type))?;
        writeln!(f, "types per domain: {}", show(self.types_per_domain))?;
        write!(
            f,
            "process transitions per domain: {}",
            show(self.process_trans_per_domain)
        )
    }
}
