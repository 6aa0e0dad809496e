//! Analysis toolkit for SEAndroid/SELinux type enforcement policies.

pub mod model;
pub mod parser;

pub use model::{Policy, PolicyBuilder, SecurityContext, TypeSetExpr};
pub use parser::{parse_policy, parse_policy_with, serialize_policy, ParseError, ParseOptions};
pub mod assertions;
pub mod cli;
pub mod device;
pub mod diff;
pub mod graph;
pub mod lint;
pub mod stats;
