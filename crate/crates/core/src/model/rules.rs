use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use super::SecurityContext;

/// Where a statement came from. Never part of rule equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Origin {
    pub file: Option<Arc<str>>,
    pub line: usize,
}

impl Origin {
    pub fn new(file: Option<Arc<str>>, line: usize) -> Self {
        Self { file, line }
    }

    pub fn line(line: usize) -> Self {
        Self { file: None, line }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{}:{}", file, self.line),
            None => write!(f, "line {}", self.line),
        }
    }
}

/// Source or target of an access-vector rule.
///
/// Sets hold explicit identifiers only; `~` complements and `*` inside braces
/// are not representable. A set with one positive and no negatives is always
/// stored as [`TypeSetExpr::Single`] so structurally equal rules compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeSetExpr {
    Single(String),
    Set {
        positives: BTreeSet<String>,
        negatives: BTreeSet<String>,
    },
    All,
    /// `self`; legal only in target position.
    SelfTarget,
}

impl TypeSetExpr {
    pub fn single(name: impl Into<String>) -> Self {
        TypeSetExpr::Single(name.into())
    }

    /// Builds a braced set, collapsing `{ x }` to `x`.
    pub fn set<P, N>(positives: P, negatives: N) -> Self
    where
        P: IntoIterator,
        P::Item: Into<String>,
        N: IntoIterator,
        N::Item: Into<String>,
    {
        let positives: BTreeSet<String> = positives.into_iter().map(Into::into).collect();
        let negatives: BTreeSet<String> = negatives.into_iter().map(Into::into).collect();
        if positives.len() == 1 && negatives.is_empty() {
            return TypeSetExpr::Single(positives.into_iter().next().unwrap());
        }
        TypeSetExpr::Set { positives, negatives }
    }

    pub fn is_self(&self) -> bool {
        matches!(self, TypeSetExpr::SelfTarget)
    }

    /// Every identifier mentioned, positive or negative.
    pub fn identifiers(&self) -> Vec<&str> {
        match self {
            TypeSetExpr::Single(name) => vec![name.as_str()],
            TypeSetExpr::Set { positives, negatives } => {
                positives.iter().chain(negatives.iter()).map(String::as_str).collect()
            }
            TypeSetExpr::All | TypeSetExpr::SelfTarget => Vec::new(),
        }
    }
}

impl fmt::Display for TypeSetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeSetExpr::Single(name) => f.write_str(name),
            TypeSetExpr::Set { positives, negatives } => {
                f.write_str("{")?;
                for p in positives {
                    write!(f, " {p}")?;
                }
                for n in negatives {
                    write!(f, " -{n}")?;
                }
                f.write_str(" }")
            }
            TypeSetExpr::All => f.write_str("*"),
            TypeSetExpr::SelfTarget => f.write_str("self"),
        }
    }
}

impl Serialize for TypeSetExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Permission list of a rule, or `*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Perms {
    All,
    Set(BTreeSet<String>),
}

impl Perms {
    pub fn of<I>(perms: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        Perms::Set(perms.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, perm: &str) -> bool {
        match self {
            Perms::All => true,
            Perms::Set(set) => set.contains(perm),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Perms::Set(set) if set.is_empty())
    }

    pub fn intersects(&self, other: &Perms) -> bool {
        !self.intersection(other).is_empty()
    }

    pub fn intersection(&self, other: &Perms) -> Perms {
        match (self, other) {
            (Perms::All, other) | (other, Perms::All) => other.clone(),
            (Perms::Set(a), Perms::Set(b)) => Perms::Set(a.intersection(b).cloned().collect()),
        }
    }

    /// True when every permission in `wanted` is granted.
    pub fn covers<'a, I: IntoIterator<Item = &'a str>>(&self, wanted: I) -> bool {
        match self {
            Perms::All => true,
            Perms::Set(set) => wanted.into_iter().all(|p| set.contains(p)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        let set = match self {
            Perms::All => None,
            Perms::Set(set) => Some(set),
        };
        set.into_iter().flatten().map(String::as_str)
    }
}

impl fmt::Display for Perms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perms::All => f.write_str("*"),
            Perms::Set(set) if set.len() == 1 => f.write_str(set.iter().next().unwrap()),
            Perms::Set(set) => {
                f.write_str("{")?;
                for p in set {
                    write!(f, " {p}")?;
                }
                f.write_str(" }")
            }
        }
    }
}

impl Serialize for Perms {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Perms::All => serializer.serialize_str("*"),
            Perms::Set(set) => set.serialize(serializer),
        }
    }
}

/// `class perms` part of an allow or neverallow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AccessVector {
    pub class: String,
    pub perms: Perms,
}

impl AccessVector {
    pub fn new(class: impl Into<String>, perms: Perms) -> Self {
        Self {
            class: class.into(),
            perms,
        }
    }

    /// Same class and at least one permission in common.
    pub fn matches(&self, class: &str, perms: &BTreeSet<String>) -> bool {
        self.class == class && perms.iter().any(|p| self.perms.contains(p))
    }
}

/// Free-function form of [`AccessVector::matches`].
pub fn av_matches(rule_av: &AccessVector, probe_class: &str, probe_perms: &BTreeSet<String>) -> bool {
    rule_av.matches(probe_class, probe_perms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Allow,
    Neverallow,
}

impl RuleKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RuleKind::Allow => "allow",
            RuleKind::Neverallow => "neverallow",
        }
    }
}

/// An `allow` or `neverallow` statement.
#[derive(Debug, Clone, Serialize)]
pub struct AvRule {
    pub kind: RuleKind,
    pub source: TypeSetExpr,
    pub target: TypeSetExpr,
    pub av: AccessVector,
    pub origin: Origin,
}

pub type AllowRule = AvRule;
pub type NeverallowRule = AvRule;

impl AvRule {
    pub fn allow(source: TypeSetExpr, target: TypeSetExpr, av: AccessVector) -> Self {
        Self {
            kind: RuleKind::Allow,
            source,
            target,
            av,
            origin: Origin::default(),
        }
    }

    pub fn neverallow(source: TypeSetExpr, target: TypeSetExpr, av: AccessVector) -> Self {
        Self {
            kind: RuleKind::Neverallow,
            ..Self::allow(source, target, av)
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    fn key(&self) -> (RuleKind, &TypeSetExpr, &TypeSetExpr, &AccessVector) {
        (self.kind, &self.source, &self.target, &self.av)
    }
}

impl PartialEq for AvRule {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for AvRule {}

impl Hash for AvRule {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for AvRule {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AvRule {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for AvRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}:{} {};",
            self.kind.keyword(),
            self.source,
            self.target,
            self.av.class,
            self.av.perms
        )
    }
}

/// `type_transition subject object:class result;`
#[derive(Debug, Clone, Serialize)]
pub struct TypeTransitionRule {
    pub subject: String,
    pub object: String,
    pub class: String,
    pub result: String,
    pub origin: Origin,
}

impl TypeTransitionRule {
    pub fn new(
        subject: impl Into<String>,
        object: impl Into<String>,
        class: impl Into<String>,
        result: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            object: object.into(),
            class: class.into(),
            result: result.into(),
            origin: Origin::default(),
        }
    }

    /// Domain transition on exec, as opposed to an object-creation transition.
    pub fn is_process(&self) -> bool {
        self.class == "process"
    }

    fn key(&self) -> (&str, &str, &str, &str) {
        (&self.subject, &self.object, &self.class, &self.result)
    }
}

impl PartialEq for TypeTransitionRule {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for TypeTransitionRule {}

impl Hash for TypeTransitionRule {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for TypeTransitionRule {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TypeTransitionRule {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for TypeTransitionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "type_transition {} {}:{} {};",
            self.subject, self.object, self.class, self.result
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GenfsContext {
    pub filesystem: String,
    pub path: String,
    pub context: SecurityContext,
}

impl fmt::Display for GenfsContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "genfscon {} {} {};", self.filesystem, self.path, self.context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InitialSid {
    pub name: String,
    pub context: Option<SecurityContext>,
}

impl fmt::Display for InitialSid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.context {
            Some(ctx) => write!(f, "sid {} {};", self.name, ctx),
            None => write!(f, "sid {};", self.name),
        }
    }
}
