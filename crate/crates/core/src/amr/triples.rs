use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AmrGraph;

/// Label of the root-marker triple.
pub const ROOT_MARKER_LABEL: &str = "TOP";
/// The root marker's tail is a fixed constant, not the root concept, so root
/// alignment is credited independently of the root's concept.
pub const ROOT_MARKER_TAIL: &str = "top";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TripleKind {
    Instance,
    Relation,
    Attribute,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub kind: TripleKind,
    pub head: String,
    pub label: String,
    /// A variable for relations, a constant otherwise.
    pub tail: String,
}

impl Triple {
    fn new(kind: TripleKind, head: &str, label: &str, tail: &str) -> Self {
        Triple { kind, head: head.into(), label: label.into(), tail: tail.into() }
    }
}

pub(super) fn graph_triples(g: &AmrGraph) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    for n in g.nodes() {
        out.insert(Triple::new(TripleKind::Instance, &n.variable, "instance", &n.concept));
    }
    for e in g.edges() {
        out.insert(Triple::new(TripleKind::Relation, &e.source, &e.role, &e.target));
    }
    for a in g.attributes() {
        out.insert(Triple::new(TripleKind::Attribute, &a.variable, &a.role, &a.value));
    }
    out.insert(Triple::new(TripleKind::Root, g.root(), ROOT_MARKER_LABEL, ROOT_MARKER_TAIL));
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_penman;
    use super::*;

    #[test]
    fn single_node_has_two_triples() {
        let t = parse_penman("(z0 / dog)").unwrap().to_triples();
        assert_eq!(t.len(), 2);
        assert!(t.contains(&Triple::new(TripleKind::Instance, "z0", "instance", "dog")));
        assert!(t.contains(&Triple::new(TripleKind::Root, "z0", "TOP", "top")));
    }

    #[test]
    fn conjunction_has_six_triples() {
        let t = parse_penman("(a / and :op1 (b / boat) :op2 (c / house))").unwrap().to_triples();
        assert_eq!(t.len(), 6);
        assert_eq!(t.iter().filter(|x| x.kind == TripleKind::Relation).count(), 2);
    }
}
