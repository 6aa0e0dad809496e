use std::collections::{BTreeMap, BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use serde::Serialize;

use super::{AvRule, GenfsContext, InitialSid, ModelError, Origin, RuleKind, TypeSetExpr, TypeTransitionRule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecurityType {
    pub name: String,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentKind {
    Type,
    Class,
    Permission,
}

/// A reference the policy accepted without a matching declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnknownIdentifier {
    pub kind: IdentKind,
    pub name: String,
    /// Owning class, for permissions.
    pub class: Option<String>,
    pub origin: Origin,
}

/// Concrete types an expression denotes, as a bitset over type ids.
///
/// `self` cannot be resolved without a source type, so it is carried as a
/// flag and paired per source at use sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ResolvedSet {
    pub bits: FixedBitSet,
    pub with_self: bool,
}

impl ResolvedSet {
    /// Targets reachable from source `s`.
    pub fn for_source(&self, s: usize) -> FixedBitSet {
        let mut out = self.bits.clone();
        if self.with_self {
            out.insert(s);
        }
        out
    }

    pub fn contains_for(&self, s: usize, t: usize) -> bool {
        self.bits.contains(t) || (self.with_self && s == t)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedRule {
    pub sources: FixedBitSet,
    pub targets: ResolvedSet,
}

impl ResolvedRule {
    /// Union of targets over all sources (`self` contributes the sources).
    pub fn target_union(&self) -> FixedBitSet {
        let mut out = self.targets.bits.clone();
        if self.targets.with_self {
            out.union_with(&self.sources);
        }
        out
    }
}

/// A parsed, indexed type enforcement policy. Immutable once built.
#[derive(Debug, Clone)]
pub struct Policy {
    types: BTreeMap<String, SecurityType>,
    attributes: BTreeMap<String, Attribute>,
    classes: BTreeMap<String, BTreeSet<String>>,
    allows: Vec<AvRule>,
    neverallows: Vec<AvRule>,
    transitions: Vec<TypeTransitionRule>,
    genfs: Vec<GenfsContext>,
    sids: Vec<InitialSid>,
    journal: Vec<UnknownIdentifier>,
    strict: bool,

    type_names: Vec<String>,
    type_ids: HashMap<String, usize>,
    attribute_bits: HashMap<String, FixedBitSet>,
    allow_index: Vec<ResolvedRule>,
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.types == other.types
            && self.attributes == other.attributes
            && self.classes == other.classes
            && self.allows == other.allows
            && self.neverallows == other.neverallows
            && self.transitions == other.transitions
            && self.genfs == other.genfs
            && self.sids == other.sids
    }
}

impl Eq for Policy {}

impl Default for Policy {
    fn default() -> Self {
        PolicyBuilder::new().build().expect("empty policy is well-formed")
    }
}

impl Policy {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn types(&self) -> &BTreeMap<String, SecurityType> {
        &self.types
    }

    pub fn attributes(&self) -> &BTreeMap<String, Attribute> {
        &self.attributes
    }

    /// Declared classes and their permissions.
    pub fn classes(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.classes
    }

    pub fn permissions(&self, class: &str) -> Option<&BTreeSet<String>> {
        self.classes.get(class)
    }

    pub fn allows(&self) -> &[AvRule] {
        &self.allows
    }

    pub fn neverallows(&self) -> &[AvRule] {
        &self.neverallows
    }

    pub fn transitions(&self) -> &[TypeTransitionRule] {
        &self.transitions
    }

    pub fn genfs(&self) -> &[GenfsContext] {
        &self.genfs
    }

    pub fn sids(&self) -> &[InitialSid] {
        &self.sids
    }

    /// Identifiers referenced but never declared (lenient mode only).
    pub fn journal(&self) -> &[UnknownIdentifier] {
        &self.journal
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn has_type(&self, name: &str) -> bool {
        self.types.contains_key(name)
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.contains_key(name)
    }

    /// Members of an attribute; empty when undeclared.
    pub fn members(&self, attribute: &str) -> impl Iterator<Item = &str> {
        self.attributes
            .get(attribute)
            .into_iter()
            .flat_map(|a| a.members.iter().map(String::as_str))
    }

    /// Resolves `expr` to concrete type names.
    ///
    /// Attributes expand to their members, negatives are subtracted after all
    /// positives are unioned, `*` is every declared type and `self` is
    /// `self_type`. Undeclared identifiers resolve to nothing unless the
    /// policy is strict.
    pub fn resolve_type_set(
        &self,
        expr: &TypeSetExpr,
        self_type: Option<&str>,
    ) -> Result<BTreeSet<String>, ModelError> {
        if expr.is_self() {
            return self_type
                .map(|t| BTreeSet::from([t.to_owned()]))
                .ok_or(ModelError::SelfWithoutContext);
        }
        let resolved = self.resolve_bits(expr)?;
        Ok(self.names(&resolved.bits).map(str::to_owned).collect())
    }

    pub(crate) fn resolve_bits(&self, expr: &TypeSetExpr) -> Result<ResolvedSet, ModelError> {
        let mut bits = self.empty_bits();
        let mut with_self = false;
        match expr {
            TypeSetExpr::Single(name) => self.union_ident(&mut bits, name)?,
            TypeSetExpr::Set { positives, negatives } => {
                for p in positives {
                    self.union_ident(&mut bits, p)?;
                }
                let mut minus = self.empty_bits();
                for n in negatives {
                    self.union_ident(&mut minus, n)?;
                }
                bits.difference_with(&minus);
            }
            TypeSetExpr::All => bits.insert_range(..),
            TypeSetExpr::SelfTarget => with_self = true,
        }
        Ok(ResolvedSet { bits, with_self })
    }

    fn union_ident(&self, bits: &mut FixedBitSet, name: &str) -> Result<(), ModelError> {
        if let Some(&id) = self.type_ids.get(name) {
            bits.insert(id);
        } else if let Some(members) = self.attribute_bits.get(name) {
            bits.union_with(members);
        } else if self.strict {
            return Err(ModelError::UnresolvedIdentifier(name.to_owned()));
        }
        Ok(())
    }

    /// Bitset of a plain type or attribute name; unknown names give the empty set.
    pub(crate) fn ident_bits(&self, name: &str) -> FixedBitSet {
        let mut bits = self.empty_bits();
        if let Some(&id) = self.type_ids.get(name) {
            bits.insert(id);
        } else if let Some(members) = self.attribute_bits.get(name) {
            bits.union_with(members);
        }
        bits
    }

    pub(crate) fn names_bits<'a, I: IntoIterator<Item = &'a String>>(&self, names: I) -> FixedBitSet {
        let mut bits = self.empty_bits();
        for name in names {
            bits.union_with(&self.ident_bits(name));
        }
        bits
    }

    pub(crate) fn empty_bits(&self) -> FixedBitSet {
        FixedBitSet::with_capacity(self.type_names.len())
    }

    pub(crate) fn type_count(&self) -> usize {
        self.type_names.len()
    }

    pub(crate) fn type_id(&self, name: &str) -> Option<usize> {
        self.type_ids.get(name).copied()
    }

    pub(crate) fn type_name(&self, id: usize) -> &str {
        &self.type_names[id]
    }

    pub(crate) fn names<'a>(&'a self, bits: &'a FixedBitSet) -> impl Iterator<Item = &'a str> + 'a {
        bits.ones().map(move |id| self.type_names[id].as_str())
    }

    /// Pre-resolved source/target sets of `allows()[index]`.
    pub(crate) fn resolved_allow(&self, index: usize) -> &ResolvedRule {
        &self.allow_index[index]
    }

    pub(crate) fn resolve_rule(&self, rule: &AvRule) -> Result<ResolvedRule, ModelError> {
        Ok(ResolvedRule {
            sources: self.resolve_bits(&rule.source)?.bits,
            targets: self.resolve_bits(&rule.target)?,
        })
    }
}

/// Free-function form of [`Policy::resolve_type_set`].
pub fn resolve_type_set(
    policy: &Policy,
    expr: &TypeSetExpr,
    self_type: Option<&str>,
) -> Result<BTreeSet<String>, ModelError> {
    policy.resolve_type_set(expr, self_type)
}

/// Accumulates declarations and rules; [`PolicyBuilder::build`] checks
/// cross-references and produces an indexed [`Policy`].
#[derive(Debug, Default)]
pub struct PolicyBuilder {
    strict: bool,
    classes: BTreeMap<String, BTreeSet<String>>,
    sids: Vec<InitialSid>,
    attributes: BTreeMap<String, Origin>,
    types: BTreeMap<String, (BTreeSet<String>, Origin)>,
    typeattributes: Vec<(String, Vec<String>, Origin)>,
    allows: Vec<AvRule>,
    neverallows: Vec<AvRule>,
    transitions: Vec<TypeTransitionRule>,
    genfs: Vec<GenfsContext>,
}

impl PolicyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reject undeclared identifiers instead of journaling them.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Repeated class statements merge their permission lists.
    pub fn class<I>(&mut self, name: impl Into<String>, perms: I) -> &mut Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        self.classes
            .entry(name.into())
            .or_default()
            .extend(perms.into_iter().map(Into::into));
        self
    }

    pub fn sid(&mut self, sid: InitialSid) -> Result<&mut Self, ModelError> {
        match self.sids.iter_mut().find(|s| s.name == sid.name) {
            None => self.sids.push(sid),
            Some(existing) => match (&existing.context, sid.context) {
                (_, None) => {}
                (None, Some(ctx)) => existing.context = Some(ctx),
                (Some(a), Some(b)) if *a == b => {}
                (Some(_), Some(_)) => return Err(ModelError::ConflictingSid(sid.name)),
            },
        }
        Ok(self)
    }

    pub fn attribute(&mut self, name: impl Into<String>, origin: Origin) -> Result<&mut Self, ModelError> {
        let name = name.into();
        if self.attributes.contains_key(&name) {
            return Err(ModelError::DuplicateAttribute { name, origin });
        }
        self.attributes.insert(name, origin);
        Ok(self)
    }

    pub fn declare_type<I>(
        &mut self,
        name: impl Into<String>,
        attributes: I,
        origin: Origin,
    ) -> Result<&mut Self, ModelError>
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        let name = name.into();
        if self.types.contains_key(&name) {
            return Err(ModelError::DuplicateType { name, origin });
        }
        let attrs = attributes.into_iter().map(Into::into).collect();
        self.types.insert(name, (attrs, origin));
        Ok(self)
    }

    pub fn typeattribute<I>(&mut self, type_name: impl Into<String>, attributes: I, origin: Origin) -> &mut Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        self.typeattributes.push((
            type_name.into(),
            attributes.into_iter().map(Into::into).collect(),
            origin,
        ));
        self
    }

    pub fn rule(&mut self, rule: AvRule) -> Result<&mut Self, ModelError> {
        if rule.source.is_self() {
            return Err(ModelError::SelfInSource { origin: rule.origin });
        }
        match rule.kind {
            RuleKind::Allow => self.allows.push(rule),
            RuleKind::Neverallow => self.neverallows.push(rule),
        }
        Ok(self)
    }

    pub fn transition(&mut self, rule: TypeTransitionRule) -> &mut Self {
        self.transitions.push(rule);
        self
    }

    pub fn genfs(&mut self, genfs: GenfsContext) -> Result<&mut Self, ModelError> {
        if !genfs.path.starts_with('/') {
            return Err(ModelError::BadGenfsPath(genfs.path));
        }
        self.genfs.push(genfs);
        Ok(self)
    }

    pub fn build(self) -> Result<Policy, Vec<ModelError>> {
        let mut errors = Vec::new();

        for (name, (_, origin)) in &self.types {
            if self.attributes.contains_key(name) {
                errors.push(ModelError::NameCollision {
                    name: name.clone(),
                    origin: origin.clone(),
                });
            }
        }

        let mut types: BTreeMap<String, SecurityType> = BTreeMap::new();
        for (name, (attrs, origin)) in &self.types {
            for a in attrs {
                if !self.attributes.contains_key(a) {
                    errors.push(ModelError::UnknownAttribute {
                        name: a.clone(),
                        origin: origin.clone(),
                    });
                }
            }
            types.insert(
                name.clone(),
                SecurityType {
                    name: name.clone(),
                    attributes: attrs
                        .iter()
                        .filter(|a| self.attributes.contains_key(*a))
                        .cloned()
                        .collect(),
                },
            );
        }
        for (type_name, attrs, origin) in &self.typeattributes {
            let Some(ty) = types.get_mut(type_name) else {
                errors.push(ModelError::UnknownTypeInTypeattribute {
                    name: type_name.clone(),
                    origin: origin.clone(),
                });
                continue;
            };
            for a in attrs {
                if self.attributes.contains_key(a) {
                    ty.attributes.insert(a.clone());
                } else {
                    errors.push(ModelError::UnknownAttribute {
                        name: a.clone(),
                        origin: origin.clone(),
                    });
                }
            }
        }

        let mut attributes: BTreeMap<String, Attribute> = self
            .attributes
            .keys()
            .map(|name| {
                (
                    name.clone(),
                    Attribute {
                        name: name.clone(),
                        members: BTreeSet::new(),
                    },
                )
            })
            .collect();
        for ty in types.values() {
            for a in &ty.attributes {
                attributes.get_mut(a).unwrap().members.insert(ty.name.clone());
            }
        }

        let type_names: Vec<String> = types.keys().cloned().collect();
        let type_ids: HashMap<String, usize> = type_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let attribute_bits = attributes
            .values()
            .map(|a| {
                let mut bits = FixedBitSet::with_capacity(type_names.len());
                bits.extend(a.members.iter().map(|m| type_ids[m]));
                (a.name.clone(), bits)
            })
            .collect();

        let mut policy = Policy {
            types,
            attributes,
            classes: self.classes,
            allows: self.allows,
            neverallows: self.neverallows,
            transitions: self.transitions,
            genfs: self.genfs,
            sids: self.sids,
            journal: Vec::new(),
            strict: self.strict,
            type_names,
            type_ids,
            attribute_bits,
            allow_index: Vec::new(),
        };

        let journal = policy.collect_unknowns();
        if policy.strict {
            errors.extend(journal.into_iter().map(|u| ModelError::Undeclared {
                kind: u.kind,
                name: u.name,
                origin: u.origin,
            }));
        } else {
            policy.journal = journal;
        }

        if !errors.is_empty() {
            return Err(errors);
        }

        policy.allow_index = policy
            .allows
            .iter()
            .map(|r| policy.resolve_rule(r).expect("identifiers checked above"))
            .collect();
        Ok(policy)
    }
}

impl Policy {
    fn collect_unknowns(&self) -> Vec<UnknownIdentifier> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut note = |kind: IdentKind, name: &str, class: Option<&str>, origin: &Origin| {
            if seen.insert((kind, name.to_owned(), class.map(str::to_owned))) {
                out.push(UnknownIdentifier {
                    kind,
                    name: name.to_owned(),
                    class: class.map(str::to_owned),
                    origin: origin.clone(),
                });
            }
        };
        let is_type_like = |n: &str| self.types.contains_key(n) || self.attributes.contains_key(n);

        for rule in self.allows.iter().chain(&self.neverallows) {
            for id in rule.source.identifiers().into_iter().chain(rule.target.identifiers()) {
                if !is_type_like(id) {
                    note(IdentKind::Type, id, None, &rule.origin);
                }
            }
            match self.classes.get(&rule.av.class) {
                None => note(IdentKind::Class, &rule.av.class, None, &rule.origin),
                Some(perms) => {
                    for p in rule.av.perms.names() {
                        if !perms.contains(p) {
                            note(IdentKind::Permission, p, Some(&rule.av.class), &rule.origin);
                        }
                    }
                }
            }
        }
        for tr in &self.transitions {
            for id in [&tr.subject, &tr.object, &tr.result] {
                if !is_type_like(id) {
                    note(IdentKind::Type, id, None, &tr.origin);
                }
            }
            if !self.classes.contains_key(&tr.class) {
                note(IdentKind::Class, &tr.class, None, &tr.origin);
            }
        }
        out
    }
}
