//! Type enforcement policy model: declarations, rules and the type-set
//! algebra (attribute expansion, negation, wildcard, `self`) the analyses
//! are built on.

mod context;
mod policy;
mod rules;

use thiserror::Error;

pub use context::{is_identifier, SecurityContext};
pub(crate) use policy::ResolvedRule;
pub use policy::{resolve_type_set, Attribute, IdentKind, Policy, PolicyBuilder, SecurityType, UnknownIdentifier};
pub use rules::{
    av_matches, AccessVector, AllowRule, AvRule, GenfsContext, InitialSid, NeverallowRule, Origin, Perms, RuleKind,
    TypeSetExpr, TypeTransitionRule,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("identifier `{0}` is neither a type nor an attribute")]
    UnresolvedIdentifier(String),
    #[error("`self` cannot be resolved without a source type")]
    SelfWithoutContext,
    #[error("{origin}: `self` is only allowed in target position")]
    SelfInSource { origin: Origin },
    #[error("{origin}: duplicate declaration of type `{name}`")]
    DuplicateType { name: String, origin: Origin },
    #[error("{origin}: duplicate declaration of attribute `{name}`")]
    DuplicateAttribute { name: String, origin: Origin },
    #[error("{origin}: `{name}` is declared both as a type and as an attribute")]
    NameCollision { name: String, origin: Origin },
    #[error("{origin}: undeclared attribute `{name}`")]
    UnknownAttribute { name: String, origin: Origin },
    #[error("{origin}: typeattribute names undeclared type `{name}`")]
    UnknownTypeInTypeattribute { name: String, origin: Origin },
    #[error("{origin}: undeclared {kind:?} `{name}`")]
    Undeclared {
        kind: IdentKind,
        name: String,
        origin: Origin,
    },
    #[error("initial SID `{0}` has conflicting contexts")]
    ConflictingSid(String),
    #[error("genfscon path `{0}` must be absolute")]
    BadGenfsPath(String),
    #[error("malformed security context `{0}`")]
    BadContext(String),
}

impl ModelError {
    pub fn origin(&self) -> Option<&Origin> {
        match self {
            ModelError::SelfInSource { origin }
            | ModelError::DuplicateType { origin, .. }
            | ModelError::DuplicateAttribute { origin, .. }
            | ModelError::NameCollision { origin, .. }
            | ModelError::UnknownAttribute { origin, .. }
            | ModelError::UnknownTypeInTypeattribute { origin, .. }
            | ModelError::Undeclared { origin, .. } => Some(origin),
            _ => None,
        }
    }
}
