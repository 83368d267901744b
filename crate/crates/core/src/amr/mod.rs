//! Abstract Meaning Representation graphs.
//!
//! An [`AmrGraph`] is a rooted, labeled, directed graph. Each variable carries
//! exactly one concept, edges carry role labels (`:ARG0`, `:location`, ...)
//! and attributes attach constants (`:polarity -`, `:op1 "Sydney"`) to a
//! variable. Graphs are validated on construction and immutable afterwards.
//!
//! Inverse roles (`:ARG0-of`) never appear on stored edges; the parser flips
//! them into forward edges and remembers the surface orientation in
//! [`Edge::inverted_in_surface`] so that serialization can reproduce it.

mod penman;
mod triples;

pub use penman::{
    parse_alignments, parse_penman, parse_penman_document, serialize_penman,
    serialize_penman_pretty, PenmanBlock,
};
pub use triples::{Triple, TripleKind, ROOT_MARKER_LABEL, ROOT_MARKER_TAIL};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmrError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable `{0}` is instantiated more than once")]
    DuplicateInstance(String),
    #[error("variable `{0}` is referenced but never instantiated")]
    DanglingVariable(String),
    #[error("variable `{0}` has an empty concept")]
    EmptyConcept(String),
    #[error("root `{0}` is not a node of the graph")]
    UnknownRoot(String),
    #[error("role `{0}` must start with ':' and must not be an inverse role")]
    InvalidRole(String),
    #[error("node `{0}` is not connected to the root")]
    Disconnected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub variable: String,
    pub concept: String,
}

impl Node {
    pub fn new(variable: impl Into<String>, concept: impl Into<String>) -> Self {
        Node { variable: variable.into(), concept: concept.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub role: String,
    pub target: String,
    /// The edge was written as `:role-of` from the target's side.
    pub inverted_in_surface: bool,
}

impl Edge {
    pub fn new(source: impl Into<String>, role: impl Into<String>, target: impl Into<String>) -> Self {
        Edge { source: source.into(), role: role.into(), target: target.into(), inverted_in_surface: false }
    }

    pub fn key(&self) -> (&str, &str, &str) {
        (&self.source, &self.role, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub variable: String,
    pub role: String,
    /// Constant exactly as written, including quotes for strings.
    pub value: String,
}

impl Attribute {
    pub fn new(variable: impl Into<String>, role: impl Into<String>, value: impl Into<String>) -> Self {
        Attribute { variable: variable.into(), role: role.into(), value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrGraph {
    root: String,
    nodes: BTreeMap<String, Node>,
    edges: Vec<Edge>,
    attributes: Vec<Attribute>,
}

impl AmrGraph {
    /// Builds a graph and checks every structural invariant. Repeated
    /// `(source, role, target)` edges and repeated attributes collapse to one.
    pub fn new(
        root: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
        edges: Vec<Edge>,
        attributes: Vec<Attribute>,
    ) -> Result<Self, AmrError> {
        let root = root.into();
        let mut seen_edges = BTreeSet::new();
        let edges: Vec<Edge> = edges
            .into_iter()
            .filter(|e| seen_edges.insert((e.source.clone(), e.role.clone(), e.target.clone())))
            .collect();
        let mut seen_attrs = BTreeSet::new();
        let attributes: Vec<Attribute> = attributes.into_iter().filter(|a| seen_attrs.insert(a.clone())).collect();
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.concept.is_empty() {
                return Err(AmrError::EmptyConcept(node.variable));
            }
            if map.contains_key(&node.variable) {
                return Err(AmrError::DuplicateInstance(node.variable));
            }
            map.insert(node.variable.clone(), node);
        }
        if !map.contains_key(&root) {
            return Err(AmrError::UnknownRoot(root));
        }
        for edge in &edges {
            check_role(&edge.role)?;
            for end in [&edge.source, &edge.target] {
                if !map.contains_key(end) {
                    return Err(AmrError::DanglingVariable(end.clone()));
                }
            }
        }
        for attr in &attributes {
            check_role(&attr.role)?;
            if !map.contains_key(&attr.variable) {
                return Err(AmrError::DanglingVariable(attr.variable.clone()));
            }
        }
        let graph = AmrGraph { root, nodes: map, edges, attributes };
        let reached = graph.reachable_undirected(&graph.root);
        if let Some(lost) = graph.nodes.keys().find(|v| !reached.contains(*v)) {
            return Err(AmrError::Disconnected(lost.clone()));
        }
        Ok(graph)
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, var: &str) -> Option<&Node> {
        self.nodes.get(var)
    }

    pub fn concept(&self, var: &str) -> Option<&str> {
        self.nodes.get(var).map(|n| n.concept.as_str())
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.nodes.contains_key(var)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn outgoing<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.source == var)
    }

    pub fn incoming<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.target == var)
    }

    pub fn attributes_of<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a Attribute> + 'a {
        self.attributes.iter().filter(move |a| a.variable == var)
    }

    /// Variables adjacent to `var` in either direction (self-loops excluded).
    pub fn neighbors(&self, var: &str) -> Vec<&str> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.source == var && e.target != var {
                out.push(e.target.as_str());
            } else if e.target == var && e.source != var {
                out.push(e.source.as_str());
            }
        }
        out
    }

    /// A node is a predicate when its concept carries a two-digit sense
    /// suffix and it has at least one outgoing `:ARG0`..`:ARG5` edge.
    pub fn is_predicate(&self, var: &str) -> bool {
        self.concept(var).is_some_and(is_sense_label) && self.outgoing(var).any(|e| is_core_arg_role(&e.role))
    }

    pub fn reachable_undirected(&self, start: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        if !self.nodes.contains_key(start) {
            return seen;
        }
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            adjacency.entry(&e.source).or_default().push(&e.target);
            adjacency.entry(&e.target).or_default().push(&e.source);
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start.to_string());
        while let Some(v) = queue.pop_front() {
            for &w in adjacency.get(v).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(w.to_string()) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn to_triples(&self) -> BTreeSet<Triple> {
        triples::graph_triples(self)
    }

    pub fn to_penman(&self) -> String {
        serialize_penman(self)
    }

    /// Variables in the order the serializer first instantiates them.
    pub fn traversal_order(&self) -> Vec<String> {
        penman::plan(self).order
    }

    /// Renames every variable to `{prefix}{n}` following the traversal order.
    /// Returns the renamed graph and the old → new variable map.
    pub fn relettered(&self, prefix: &str) -> (AmrGraph, BTreeMap<String, String>) {
        let map: BTreeMap<String, String> = self
            .traversal_order()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, format!("{prefix}{i}")))
            .collect();
        (self.renamed(&map), map)
    }

    /// Applies a total, injective variable renaming.
    pub(crate) fn renamed(&self, map: &BTreeMap<String, String>) -> AmrGraph {
        let r = |v: &String| map.get(v).cloned().unwrap_or_else(|| v.clone());
        AmrGraph {
            root: r(&self.root),
            nodes: self
                .nodes
                .values()
                .map(|n| (r(&n.variable), Node::new(r(&n.variable), n.concept.clone())))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    source: r(&e.source),
                    role: e.role.clone(),
                    target: r(&e.target),
                    inverted_in_surface: e.inverted_in_surface,
                })
                .collect(),
            attributes: self
                .attributes
                .iter()
                .map(|a| Attribute::new(r(&a.variable), a.role.clone(), a.value.clone()))
                .collect(),
        }
    }

    /// Same structure with each concept replaced by `f(var, concept)`.
    pub fn with_concepts(&self, mut f: impl FnMut(&str, &str) -> String) -> AmrGraph {
        let mut g = self.clone();
        for node in g.nodes.values_mut() {
            let c = f(&node.variable, &node.concept);
            assert!(!c.is_empty(), "concept replacement for {} is empty", node.variable);
            node.concept = c;
        }
        g
    }

    /// Structural equality ignoring surface orientation of edges.
    pub fn same_structure(&self, other: &AmrGraph) -> bool {
        self.root == other.root && self.to_triples() == other.to_triples()
    }
}

impl std::fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&serialize_penman(self))
    }
}

impl std::str::FromStr for AmrGraph {
    type Err = AmrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_penman(s)
    }
}

fn check_role(role: &str) -> Result<(), AmrError> {
    if role.len() < 2 || !role.starts_with(':') || role.ends_with("-of") {
        return Err(AmrError::InvalidRole(role.to_string()));
    }
    Ok(())
}

/// `name-DD`: a non-empty stem, a hyphen and exactly two trailing digits.
pub fn is_sense_label(label: &str) -> bool {
    let b = label.as_bytes();
    b.len() >= 4 && b[b.len() - 3] == b'-' && b[b.len() - 2].is_ascii_digit() && b[b.len() - 1].is_ascii_digit()
}

/// `:ARG0` through `:ARG5`.
pub fn is_core_arg_role(role: &str) -> bool {
    matches!(role.strip_prefix(":ARG"), Some(d) if d.len() == 1 && (b'0'..=b'5').contains(&d.as_bytes()[0]))
}

/// Drops a trailing `-DD` sense suffix: `sit-01` → `sit`.
pub fn strip_sense(label: &str) -> &str {
    if is_sense_label(label) {
        &label[..label.len() - 3]
    } else {
        label
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sense_labels() {
        assert!(is_sense_label("sit-01"));
        assert!(is_sense_label("green-03"));
        assert!(is_sense_label("have-rel-role-91"));
        assert!(!is_sense_label("boat"));
        assert!(!is_sense_label("-01"));
        assert!(!is_sense_label("sit-1"));
        assert_eq!(strip_sense("dock-01"), "dock");
        assert_eq!(strip_sense("boat"), "boat");
    }

    #[test]
    fn core_arg_roles() {
        for r in [":ARG0", ":ARG3", ":ARG5"] {
            assert!(is_core_arg_role(r));
        }
        for r in [":ARG6", ":ARG10", ":location", ":ARG", ":op1"] {
            assert!(!is_core_arg_role(r));
        }
    }

    #[test]
    fn constructor_rejects_broken_graphs() {
        let nodes = || vec![Node::new("a", "dog"), Node::new("b", "run-01")];
        assert_eq!(
            AmrGraph::new("a", nodes(), vec![], vec![]).unwrap_err(),
            AmrError::Disconnected("b".into())
        );
        assert_eq!(
            AmrGraph::new("a", nodes(), vec![Edge::new("b", ":ARG0", "c")], vec![]).unwrap_err(),
            AmrError::DanglingVariable("c".into())
        );
        assert_eq!(
            AmrGraph::new("a", nodes(), vec![Edge::new("b", ":ARG0-of", "a")], vec![]).unwrap_err(),
            AmrError::InvalidRole(":ARG0-of".into())
        );
        assert_eq!(
            AmrGraph::new("x", nodes(), vec![], vec![]).unwrap_err(),
            AmrError::UnknownRoot("x".into())
        );
        assert!(AmrGraph::new("a", nodes(), vec![Edge::new("b", ":ARG0", "a")], vec![]).is_ok());
    }

    #[test]
    fn predicate_needs_sense_and_argument() {
        let g = parse_penman("(z0 / sit-01 :ARG1 (z1 / boat) :location (z2 / dock-01))").unwrap();
        assert!(g.is_predicate("z0"));
        assert!(!g.is_predicate("z1"));
        assert!(!g.is_predicate("z2"));
    }

    #[test]
    fn reletter_follows_traversal() {
        let g = parse_penman("(b / boat :ARG1-of (s / sit-01 :location (d / dock)))").unwrap();
        let (r, map) = g.relettered("z");
        assert_eq!(map["b"], "z0");
        assert_eq!(map["s"], "z1");
        assert_eq!(map["d"], "z2");
        assert_eq!(r.to_penman(), "(z0 / boat :ARG1-of (z1 / sit-01 :location (z2 / dock)))");
    }
}
