//! Heuristic detectors for common policy misconfigurations.
//!
//! | id | pattern                                   | severity            |
//! |----|-------------------------------------------|---------------------|
//! | L1 | rule targets a default type               | warning             |
//! | L2 | predefined domain far larger than baseline| warning             |
//! | L3 | `execute` with no way to actually run it  | warning             |
//! | L4 | new rule for an untrusted domain          | error (see below)   |
//! | L5 | rule targets a sensitive type             | warning / error     |
//! | L6 | read/write granted without `open`         | configurable (info) |
//!
//! L1, L2, L4 and L5 are baseline-aware: with a baseline they only report
//! rules the baseline does not contain. L2 needs a baseline to compare
//! against and is skipped without one. Without a baseline L4 cannot tell
//! what was added, so it reports untrusted rules touching sensitive types as
//! warnings instead.
//!
//! A `self` target never counts as reaching a default or sensitive type:
//! a domain acting on itself exposes nothing to anyone else.

mod config;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::device::{self, Snapshot};
use crate::model::{AvRule, Policy, ResolvedRule};

pub use config::{ConfigError, LintConfig, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Detector {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
}

impl Detector {
    pub const ALL: [Detector; 6] = [
        Detector::L1,
        Detector::L2,
        Detector::L3,
        Detector::L4,
        Detector::L5,
        Detector::L6,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Detector::L1 => "default-type usage",
            Detector::L2 => "crowded predefined domains",
            Detector::L3 => "vestigial execute",
            Detector::L4 => "untrusted-domain additions",
            Detector::L5 => "sensitive-type exposure",
            Detector::L6 => "missing open",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub detector: Detector,
    pub severity: Severity,
    /// Offending rule; `None` for domain-level findings (L2).
    pub rule: Option<AvRule>,
    pub subject_type: String,
    pub explanation: String,
    /// Annotations added after detection, e.g. by device refinement.
    pub notes: Vec<String>,
}

impl Serialize for Finding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct RuleRef {
            origin: String,
            text: String,
        }
        let rule = self.rule.as_ref().map(|r| RuleRef {
            origin: r.origin.to_string(),
            text: r.to_string(),
        });
        let mut s = serializer.serialize_struct("Finding", 6)?;
        s.serialize_field("detector", &self.detector)?;
        s.serialize_field("severity", &self.severity)?;
        s.serialize_field("rule", &rule)?;
        s.serialize_field("subject_type", &self.subject_type)?;
        s.serialize_field("explanation", &self.explanation)?;
        s.serialize_field("notes", &self.notes)?;
        s.end()
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {}: {}",
            self.detector, self.severity, self.subject_type, self.explanation
        )?;
        if let Some(rule) = &self.rule {
            write!(f, "\n    {}: {}", rule.origin, rule)?;
        }
        for note in &self.notes {
            write!(f, "\n    note: {note}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LintReport {
    pub findings: Vec<Finding>,
    /// Allow rules per configured default type, over the whole policy.
    pub default_type_usage: BTreeMap<String, u64>,
    /// Snapshot labels that the policy does not declare.
    pub unknown_labels: BTreeSet<String>,
}

impl LintReport {
    pub fn max_severity(&self) -> Option<Severity> {
        self.findings.iter().map(|f| f.severity).max()
    }
}

/// Runs every detector, then refines against `snapshot` when one is given.
pub fn run_lint(
    policy: &Policy,
    baseline: Option<&Policy>,
    snapshot: Option<&Snapshot>,
    config: &LintConfig,
) -> LintReport {
    let ctx = Ctx::new(policy, baseline, config);
    let mut findings = Vec::new();
    ctx.default_types(&mut findings);
    ctx.crowded_domains(&mut findings);
    ctx.vestigial_execute(&mut findings);
    ctx.untrusted_additions(&mut findings);
    ctx.sensitive_exposure(&mut findings);
    ctx.missing_open(&mut findings);

    let mut unknown_labels = BTreeSet::new();
    if let Some(snapshot) = snapshot {
        findings = device::refine_findings(policy, snapshot, findings);
        let labels = snapshot
            .files()
            .values()
            .map(|f| f.label())
            .chain(snapshot.processes().iter().map(|p| p.domain()));
        unknown_labels = labels.filter(|l| !policy.has_type(l)).map(str::to_owned).collect();
    }
    sort_findings(&mut findings);

    LintReport {
        findings,
        default_type_usage: default_type_usage(policy, config),
        unknown_labels,
    }
}

/// Severity (highest first), detector, origin, subject, rule text.
pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by_cached_key(|f| {
        (
            std::cmp::Reverse(f.severity),
            f.detector,
            f.rule.as_ref().map(|r| r.origin.clone()),
            f.subject_type.clone(),
            f.rule.as_ref().map(|r| r.to_string()),
            f.explanation.clone(),
        )
    });
}

/// Number of allow rules whose resolved target contains each default type.
/// `self` pairings count, unlike in the detectors.
pub fn default_type_usage(policy: &Policy, config: &LintConfig) -> BTreeMap<String, u64> {
    config
        .default_types
        .iter()
        .map(|name| {
            let count = match policy.type_id(name) {
                Some(id) => (0..policy.allows().len())
                    .filter(|&i| {
                        let r = policy.resolved_allow(i);
                        r.targets.bits.contains(id) || (r.targets.with_self && r.sources.contains(id))
                    })
                    .count(),
                None => 0,
            };
            (name.clone(), count as u64)
        })
        .collect()
}

const FILE_LIKE: [&str; 6] = ["file", "chr_file", "blk_file", "fifo_file", "sock_file", "lnk_file"];

fn intersects(a: &FixedBitSet, b: &FixedBitSet) -> bool {
    !a.is_disjoint(b)
}

struct Ctx<'a> {
    policy: &'a Policy,
    baseline: Option<&'a Policy>,
    baseline_rules: HashSet<&'a AvRule>,
    config: &'a LintConfig,
    defaults: FixedBitSet,
    sensitive: FixedBitSet,
    untrusted: FixedBitSet,
}

impl<'a> Ctx<'a> {
    fn new(policy: &'a Policy, baseline: Option<&'a Policy>, config: &'a LintConfig) -> Self {
        Self {
            policy,
            baseline,
            baseline_rules: baseline.map(|b| b.allows().iter().collect()).unwrap_or_default(),
            config,
            defaults: policy.names_bits(&config.default_types),
            sensitive: policy.names_bits(&config.sensitive_types),
            untrusted: policy.names_bits(&config.untrusted_domains),
        }
    }

    fn rules(&self) -> impl Iterator<Item = (&'a AvRule, &'a ResolvedRule)> + '_ {
        let p = self.policy;
        p.allows()
            .iter()
            .enumerate()
            .map(move |(i, r)| (r, p.resolved_allow(i)))
    }

    /// Rules the baseline does not already contain.
    fn new_rules(&self) -> impl Iterator<Item = (&'a AvRule, &'a ResolvedRule)> + '_ {
        self.rules().filter(|(r, _)| !self.baseline_rules.contains(r))
    }

    fn first_name(&self, a: &FixedBitSet, b: &FixedBitSet) -> String {
        let mut both = a.clone();
        both.intersect_with(b);
        both.minimum()
            .map_or_else(String::new, |id| self.policy.type_name(id).to_owned())
    }

    fn finding(&self, detector: Detector, severity: Severity, rule: &AvRule, subject: String, why: String) -> Finding {
        Finding {
            detector,
            severity,
            rule: Some(rule.clone()),
            subject_type: subject,
            explanation: why,
            notes: Vec::new(),
        }
    }

    fn default_types(&self, out: &mut Vec<Finding>) {
        for (rule, resolved) in self.new_rules() {
            let targets = &resolved.targets.bits;
            if intersects(targets, &self.defaults) {
                let t = self.first_name(targets, &self.defaults);
                let why = format!("rule grants access to objects carrying the default type {t}");
                out.push(self.finding(Detector::L1, Severity::Warning, rule, t, why));
            }
        }
    }

    fn crowded_domains(&self, out: &mut Vec<Finding>) {
        let Some(baseline) = self.baseline else {
            return;
        };
        let count = |p: &Policy, name: &str| match p.type_id(name) {
            Some(id) => (0..p.allows().len())
                .filter(|&i| p.resolved_allow(i).sources.contains(id))
                .count(),
            None => 0,
        };
        for domain in &self.config.crowded_domains {
            let subject = count(self.policy, domain);
            let base = count(baseline, domain);
            if subject as f64 >= self.config.crowded_ratio_threshold * base.max(1) as f64 {
                out.push(Finding {
                    detector: Detector::L2,
                    severity: Severity::Warning,
                    rule: None,
                    subject_type: domain.clone(),
                    explanation: format!(
                        "{domain} has {subject} allow rules against {base} in the baseline ({:.1}x)",
                        subject as f64 / base.max(1) as f64
                    ),
                    notes: Vec::new(),
                });
            }
        }
    }

    fn vestigial_execute(&self, out: &mut Vec<Finding>) {
        let index = ExecIndex::new(self.policy);
        for (rule, resolved) in self.rules() {
            if rule.av.class != "file" || !rule.av.perms.contains("execute") {
                continue;
            }
            if !index.any_functional(resolved) {
                let targets = resolved.target_union();
                let t = targets
                    .minimum()
                    .map_or_else(String::new, |id| self.policy.type_name(id).to_owned());
                let why = "execute granted but no source can run the target: no process transition \
                           and no execute_no_trans"
                    .to_owned();
                out.push(self.finding(Detector::L3, Severity::Warning, rule, t, why));
            }
        }
    }

    fn untrusted_additions(&self, out: &mut Vec<Finding>) {
        for (rule, resolved) in self.new_rules() {
            if !intersects(&resolved.sources, &self.untrusted) {
                continue;
            }
            let s = self.first_name(&resolved.sources, &self.untrusted);
            if self.baseline.is_some() {
                let why = format!("rule adds access for untrusted domain {s}");
                out.push(self.finding(Detector::L4, Severity::Error, rule, s, why));
            } else if intersects(&resolved.targets.bits, &self.sensitive) {
                let why = format!("untrusted domain {s} reaches a sensitive type (no baseline to compare)");
                out.push(self.finding(Detector::L4, Severity::Warning, rule, s, why));
            }
        }
    }

    fn sensitive_exposure(&self, out: &mut Vec<Finding>) {
        for (rule, resolved) in self.new_rules() {
            let targets = &resolved.targets.bits;
            if !intersects(targets, &self.sensitive) {
                continue;
            }
            let t = self.first_name(targets, &self.sensitive);
            let (severity, why) = if intersects(&resolved.sources, &self.untrusted) {
                (
                    Severity::Error,
                    format!("untrusted domain granted access to sensitive type {t}"),
                )
            } else {
                (Severity::Warning, format!("rule exposes sensitive type {t}"))
            };
            out.push(self.finding(Detector::L5, severity, rule, t, why));
        }
    }

    fn missing_open(&self, out: &mut Vec<Finding>) {
        let p = self.policy;
        let mut open: HashMap<(usize, &str), FixedBitSet> = HashMap::new();
        for (rule, resolved) in self.rules() {
            if FILE_LIKE.contains(&rule.av.class.as_str()) && rule.av.perms.contains("open") {
                for s in resolved.sources.ones() {
                    open.entry((s, rule.av.class.as_str()))
                        .or_insert_with(|| p.empty_bits())
                        .union_with(&resolved.targets.for_source(s));
                }
            }
        }
        let empty = p.empty_bits();
        for (rule, resolved) in self.rules() {
            let class = rule.av.class.as_str();
            if class == "lnk_file" || !FILE_LIKE.contains(&class) {
                continue;
            }
            let perms = &rule.av.perms;
            if !perms.contains("read") && !perms.contains("write") {
                continue;
            }
            let missing = resolved.sources.ones().find_map(|s| {
                let mut lacking = resolved.targets.for_source(s);
                lacking.difference_with(open.get(&(s, class)).unwrap_or(&empty));
                lacking.minimum().map(|t| (s, t))
            });
            if let Some((s, t)) = missing {
                let why = format!(
                    "{} grants {} on {}:{class} but nothing grants open",
                    p.type_name(s),
                    if perms.contains("read") { "read" } else { "write" },
                    p.type_name(t)
                );
                let subject = p.type_name(t).to_owned();
                out.push(self.finding(Detector::L6, self.config.missing_open_severity, rule, subject, why));
            }
        }
    }
}

/// Per source: file targets it may run in its own domain (`execute_no_trans`)
/// or transition out of (`type_transition s t:process d`).
struct ExecIndex {
    runnable: Vec<FixedBitSet>,
}

impl ExecIndex {
    fn new(policy: &Policy) -> Self {
        let mut runnable = vec![policy.empty_bits(); policy.type_count()];
        for (i, rule) in policy.allows().iter().enumerate() {
            if rule.av.class == "file" && rule.av.perms.contains("execute_no_trans") {
                let r = policy.resolved_allow(i);
                for s in r.sources.ones() {
                    runnable[s].union_with(&r.targets.for_source(s));
                }
            }
        }
        for tr in policy.transitions().iter().filter(|t| t.is_process()) {
            let objects = policy.ident_bits(&tr.object);
            for s in policy.ident_bits(&tr.subject).ones() {
                runnable[s].union_with(&objects);
            }
        }
        Self { runnable }
    }

    fn any_functional(&self, rule: &ResolvedRule) -> bool {
        rule.sources.ones().any(|s| {
            let runnable = &self.runnable[s];
            intersects(&rule.targets.bits, runnable) || (rule.targets.with_self && runnable.contains(s))
        })
    }
}
