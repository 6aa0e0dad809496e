use std::fmt::Write;

use crate::model::Policy;

/// Canonical policy text: classes, SIDs, attributes, types, typeattributes,
/// allows, neverallows, type transitions, genfscons; one statement per line.
pub fn serialize_policy(policy: &Policy) -> String {
    let mut out = String::new();
    for (class, perms) in policy.classes() {
        if perms.is_empty() {
            writeln!(out, "class {class};").unwrap();
        } else {
            let perms: Vec<&str> = perms.iter().map(String::as_str).collect();
            writeln!(out, "class {class} {{ {} }};", perms.join(" ")).unwrap();
        }
    }
    for sid in policy.sids() {
        writeln!(out, "{sid}").unwrap();
    }
    for name in policy.attributes().keys() {
        writeln!(out, "attribute {name};").unwrap();
    }
    for name in policy.types().keys() {
        writeln!(out, "type {name};").unwrap();
    }
    for ty in policy.types().values() {
        if !ty.attributes.is_empty() {
            let attrs: Vec<&str> = ty.attributes.iter().map(String::as_str).collect();
            writeln!(out, "typeattribute {} {};", ty.name, attrs.join(", ")).unwrap();
        }
    }
    for rule in policy.allows().iter().chain(policy.neverallows()) {
        writeln!(out, "{rule}").unwrap();
    }
    for tr in policy.transitions() {
        writeln!(out, "{tr}").unwrap();
    }
    for g in policy.genfs() {
        writeln!(out, "{g}").unwrap();
    }
    out
}
