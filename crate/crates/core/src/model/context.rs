use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// A full SELinux label, `user:role:type:range`.
///
/// Only the type component is interpreted by the analyses; user, role and
/// range are carried through untouched. The range may itself contain colons
/// (`s0:c512,c768`), so parsing splits at most three times from the left.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SecurityContext {
    pub user: String,
    pub role: String,
    pub type_name: String,
    pub range: String,
}

impl SecurityContext {
    pub fn new(
        user: impl Into<String>,
        role: impl Into<String>,
        type_name: impl Into<String>,
        range: impl Into<String>,
    ) -> Self {
        Self {
            user: user.into(),
            role: role.into(),
            type_name: type_name.into(),
            range: range.into(),
        }
    }
}

impl FromStr for SecurityContext {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadContext(s.to_owned());
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        let mut parts = s.splitn(4, ':');
        let user = parts.next().ok_or_else(bad)?;
        let role = parts.next().ok_or_else(bad)?;
        let type_name = parts.next().ok_or_else(bad)?;
        let range = parts.next().ok_or_else(bad)?;
        if user.is_empty() || role.is_empty() || range.is_empty() || !is_identifier(type_name) {
            return Err(bad());
        }
        Ok(Self::new(user, role, type_name, range))
    }
}

impl fmt::Display for SecurityContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.user, self.role, self.type_name, self.range)
    }
}

impl Serialize for SecurityContext {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SecurityContext {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `[A-Za-z_][A-Za-z0-9_.-]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}
