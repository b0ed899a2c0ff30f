use std::fmt::Write;

use bigdecimal::BigDecimal;
use num_bigint::{BigInt, Sign};

use super::report::money;
use super::{NodeClass, TaintGraph};

fn node_attrs(class: NodeClass) -> &'static str {
    match class {
        NodeClass::Market => "shape=house",
        NodeClass::Malicious => "shape=circle",
        NodeClass::Suspicious => "shape=box",
        NodeClass::Unknown => "shape=box, style=filled, fillcolor=gray",
    }
}

/// Graphviz digraph of the traced flows. Nodes are quoted addresses; edges carry the summed
/// Ether with two decimals.
pub fn export_dot(graph: &TaintGraph) -> String {
    let mut out = String::from("digraph taint {\n  rankdir=LR;\n");
    for (addr, node) in &graph.nodes {
        let _ = writeln!(out, "  \"{addr}\" [{}];", node_attrs(node.class));
    }
    for e in &graph.edges {
        let ether = BigDecimal::new(BigInt::from_biguint(Sign::Plus, e.total.0.clone()), 18);
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", e.from, e.to, money(&ether));
    }
    out.push_str("}\n");
    out
}
