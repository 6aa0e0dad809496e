use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }

    /// One level lower; `info` stays `info`.
    pub fn downgraded(self) -> Severity {
        match self {
            Severity::Error => Severity::Warning,
            _ => Severity::Info,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "info" => Ok(Severity::Info),
            "warning" => Ok(Severity::Warning),
            "error" => Ok(Severity::Error),
            _ => Err(format!("unknown severity `{s}` (expected error, warning or info)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LintConfig {
    pub default_types: BTreeSet<String>,
    pub sensitive_types: BTreeSet<String>,
    pub untrusted_domains: BTreeSet<String>,
    pub crowded_domains: BTreeSet<String>,
    pub crowded_ratio_threshold: f64,
    pub missing_open_severity: Severity,
}

fn set_of(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl Default for LintConfig {
    fn default() -> Self {
        Self {
            default_types: set_of(&[
                "unlabeled",
                "socket_device",
                "device",
                "default_prop",
                "system_data_file",
            ]),
            sensitive_types: set_of(&["proc_security", "kmem_device", "security_file", "tee", "keystore"]),
            untrusted_domains: set_of(&["untrusted_app"]),
            crowded_domains: set_of(&["system_app", "platform_app"]),
            crowded_ratio_threshold: 2.0,
            missing_open_severity: Severity::Info,
        }
    }
}

impl LintConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.crowded_ratio_threshold.is_finite() || self.crowded_ratio_threshold <= 1.0 {
            return Err(ConfigError::Invalid(format!(
                "crowded_ratio_threshold must be a finite number greater than 1.0, got {}",
                self.crowded_ratio_threshold
            )));
        }
        let sets = [
            ("default_types", &self.default_types),
            ("sensitive_types", &self.sensitive_types),
            ("untrusted_domains", &self.untrusted_domains),
            ("crowded_domains", &self.crowded_domains),
        ];
        for (key, set) in sets {
            if set.is_empty() {
                return Err(ConfigError::Invalid(format!("{key} must not be empty")));
            }
            if let Some(bad) = set.iter().find(|n| !is_identifier(n)) {
                return Err(ConfigError::Invalid(format!("{key}: `{bad}` is not an identifier")));
            }
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = LintConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Syntax { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let list = || -> BTreeSet<String> {
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            };
            match key {
                "default_types" => config.default_types = list(),
                "sensitive_types" => config.sensitive_types = list(),
                "untrusted_domains" => config.untrusted_domains = list(),
                "crowded_domains" => config.crowded_domains = list(),
                "crowded_ratio_threshold" => {
                    config.crowded_ratio_threshold = value
                        .parse()
                        .map_err(|_| err(format!("`{value}` is not a decimal number")))?
                }
                "missing_open_severity" => config.missing_open_severity = value.parse().map_err(err)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        config.validate()?;
        Ok(config)
    }
}
