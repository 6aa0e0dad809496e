//! DOT rendering of the type → attribute membership hierarchy.

use std::fmt::Write;

use crate::model::Policy;

fn quote(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One node per type (ellipse) and attribute (box), one edge per membership.
/// Nodes and edges are emitted in lexicographic order.
pub fn export_attribute_graph(policy: &Policy) -> String {
    let mut nodes: Vec<(&str, &str)> = policy
        .types()
        .keys()
        .map(|t| (t.as_str(), "ellipse"))
        .chain(policy.attributes().keys().map(|a| (a.as_str(), "box")))
        .collect();
    nodes.sort_unstable();

    let mut out = String::from("digraph attributes {\n");
    for (name, shape) in nodes {
        writeln!(out, "  {} [shape={shape}];", quote(name)).unwrap();
    }
    for ty in policy.types().values() {
        for attr in &ty.attributes {
            writeln!(out, "  {} -> {};", quote(&ty.name), quote(attr)).unwrap();
        }
    }
    out.push_str("}\n");
    out
}
