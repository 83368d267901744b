use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{AmrError, AmrGraph, Attribute, Edge, Node};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Atom(String),
}

fn syntax(offset: usize, message: impl Into<String>) -> AmrError {
    AmrError::Syntax { offset, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, AmrError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            b'/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            b'"' => {
                let start = i;
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err(syntax(start, "unterminated string")),
                        Some(b'\\') => i += 2,
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                out.push((start, Tok::Atom(text[start..i].to_string())));
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !b"()/\"".contains(&bytes[i]) {
                    // a colon only opens a role at the start of a token
                    if bytes[i] == b':' && i > start && c != b':' {
                        break;
                    }
                    i += 1;
                }
                let word = &text[start..i];
                if c == b':' {
                    out.push((start, Tok::Role(word.to_string())));
                } else {
                    out.push((start, Tok::Atom(word.to_string())));
                }
            }
        }
    }
    Ok(out)
}

enum RawTarget {
    Var(String),
    Atom(String),
}

struct RawGraph {
    instances: Vec<(String, String)>,
    relations: Vec<(String, String, RawTarget, usize)>,
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    raw: RawGraph,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn node(&mut self) -> Result<String, AmrError> {
        let at = self.offset();
        if self.next() != Some(Tok::Open) {
            return Err(syntax(at, "expected '('"));
        }
        let at = self.offset();
        let var = match self.next() {
            Some(Tok::Atom(v)) if !v.starts_with('"') => v,
            _ => return Err(syntax(at, "expected a variable after '('")),
        };
        let at = self.offset();
        if self.next() != Some(Tok::Slash) {
            return Err(syntax(at, format!("missing '/' after variable `{var}`")));
        }
        let at = self.offset();
        let concept = match self.next() {
            Some(Tok::Atom(c)) => c,
            _ => return Err(syntax(at, format!("missing concept for variable `{var}`"))),
        };
        self.raw.instances.push((var.clone(), concept));
        loop {
            let at = self.offset();
            match self.peek() {
                Some(Tok::Close) => {
                    self.pos += 1;
                    return Ok(var);
                }
                Some(Tok::Role(_)) => {
                    let Some(Tok::Role(role)) = self.next() else { unreachable!() };
                    let target = match self.peek() {
                        Some(Tok::Open) => RawTarget::Var(self.node()?),
                        Some(Tok::Atom(_)) => {
                            let Some(Tok::Atom(a)) = self.next() else { unreachable!() };
                            RawTarget::Atom(a)
                        }
                        _ => return Err(syntax(self.offset(), format!("role `{role}` has no value"))),
                    };
                    self.raw.relations.push((var.clone(), role, target, at));
                }
                None => return Err(syntax(at, "unbalanced parentheses: missing ')'")),
                Some(_) => return Err(syntax(at, "expected a role or ')'")),
            }
        }
    }
}

/// Looks like an AMR variable: a lowercase letter optionally followed by
/// digits, or a lowercase stem followed by digits (`z12`, `b`, `ab2`).
fn variable_like(atom: &str) -> bool {
    let stem_len = atom.bytes().take_while(|b| b.is_ascii_lowercase()).count();
    let rest = &atom[stem_len..];
    stem_len >= 1 && rest.bytes().all(|b| b.is_ascii_digit()) && (stem_len == 1 || !rest.is_empty())
}

/// Parses one PENMAN graph. Inverse roles are normalized to forward edges and
/// re-entrant variables resolve to the single instantiated node.
pub fn parse_penman(text: &str) -> Result<AmrGraph, AmrError> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty input"));
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        raw: RawGraph { instances: Vec::new(), relations: Vec::new() },
    };
    let root = p.node()?;
    if p.pos < p.toks.len() {
        let at = p.offset();
        return Err(match p.peek() {
            Some(Tok::Close) => syntax(at, "unbalanced parentheses: extra ')'"),
            _ => syntax(at, "trailing content after graph"),
        });
    }

    let mut nodes = Vec::with_capacity(p.raw.instances.len());
    let mut seen = BTreeSet::new();
    for (var, concept) in p.raw.instances {
        if !seen.insert(var.clone()) {
            return Err(AmrError::DuplicateInstance(var));
        }
        nodes.push(Node::new(var, concept));
    }

    let mut edges = Vec::new();
    let mut attributes = Vec::new();
    for (source, role, target, at) in p.raw.relations {
        let (inverse, base) = match role.strip_suffix("-of") {
            Some(base) if base.len() > 1 => (true, base.to_string()),
            _ => (false, role.clone()),
        };
        if role.len() < 2 {
            return Err(syntax(at, "empty role"));
        }
        let target_var = match target {
            RawTarget::Var(v) => Some(v),
            RawTarget::Atom(a) if seen.contains(&a) => Some(a),
            RawTarget::Atom(a) if variable_like(&a) => return Err(AmrError::DanglingVariable(a)),
            RawTarget::Atom(a) => {
                if inverse {
                    return Err(syntax(at, format!("inverse role `{role}` cannot take a constant")));
                }
                attributes.push(Attribute::new(source.clone(), role, a));
                None
            }
        };
        if let Some(t) = target_var {
            edges.push(if inverse {
                Edge { source: t, role: base, target: source, inverted_in_surface: true }
            } else {
                Edge { source, role: base, target: t, inverted_in_surface: false }
            });
        }
    }
    AmrGraph::new(root, nodes, edges, attributes)
}

/// One blank-line separated block of a PENMAN file with its `#` comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PenmanBlock {
    pub metadata: Vec<String>,
    pub graph: AmrGraph,
}

impl PenmanBlock {
    /// Value of a `# ::key value` metadata line.
    pub fn meta(&self, key: &str) -> Option<&str> {
        let tag = format!("::{key}");
        self.metadata.iter().find_map(|line| {
            let rest = line.trim_start_matches('#').trim_start();
            let value = rest.strip_prefix(&tag)?;
            (value.is_empty() || value.starts_with(char::is_whitespace)).then(|| value.trim())
        })
    }
}

pub fn parse_penman_document(text: &str) -> Result<Vec<PenmanBlock>, AmrError> {
    let mut blocks = Vec::new();
    let mut metadata = Vec::new();
    let mut body = String::new();
    let mut flush = |metadata: &mut Vec<String>, body: &mut String| -> Result<(), AmrError> {
        if !body.trim().is_empty() {
            blocks.push(PenmanBlock { metadata: std::mem::take(metadata), graph: parse_penman(body)? });
        } else {
            metadata.clear();
        }
        body.clear();
        Ok(())
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut metadata, &mut body)?;
        } else if line.trim_start().starts_with('#') && body.trim().is_empty() {
            metadata.push(line.trim_end().to_string());
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    flush(&mut metadata, &mut body)?;
    Ok(blocks)
}

/// Parses the `# ::alignments` value: whitespace-separated `start-end|var`
/// entries with half-open token spans.
pub fn parse_alignments(value: &str) -> Result<Vec<(String, (usize, usize))>, AmrError> {
    let bad = |e: &str| syntax(0, format!("malformed alignment `{e}` (expected start-end|var)"));
    value
        .split_whitespace()
        .map(|entry| {
            let (span, var) = entry.split_once('|').ok_or_else(|| bad(entry))?;
            let (s, e) = span.split_once('-').ok_or_else(|| bad(entry))?;
            let s = s.parse().map_err(|_| bad(entry))?;
            let e = e.parse().map_err(|_| bad(entry))?;
            if var.is_empty() {
                return Err(bad(entry));
            }
            Ok((var.to_string(), (s, e)))
        })
        .collect()
}

#[derive(Debug)]
enum Child {
    Node { var: String, expand: bool },
    Constant(String),
}

pub(super) struct Plan {
    children: BTreeMap<String, Vec<(String, Child)>>,
    pub(super) order: Vec<String>,
}

/// Decides which edge is written under which node. Edges are emitted from
/// their surface parent whenever that parent is reachable; nodes reachable
/// only against the surface orientation are attached by flipping one edge.
pub(super) fn plan(graph: &AmrGraph) -> Plan {
    struct State<'g> {
        graph: &'g AmrGraph,
        emitted: Vec<bool>,
        expanded: BTreeSet<String>,
        plan: Plan,
    }

    impl State<'_> {
        fn expand(&mut self, var: &str) {
            self.expanded.insert(var.to_string());
            self.plan.order.push(var.to_string());
            let g = self.graph;
            let mut cands: Vec<(String, String, Option<usize>)> = Vec::new();
            for (i, e) in g.edges.iter().enumerate() {
                if self.emitted[i] {
                    continue;
                }
                if !e.inverted_in_surface && e.source == var {
                    cands.push((e.role.clone(), e.target.clone(), Some(i)));
                } else if e.inverted_in_surface && e.target == var {
                    cands.push((format!("{}-of", e.role), e.source.clone(), Some(i)));
                }
            }
            for a in g.attributes_of(var) {
                cands.push((a.role.clone(), a.value.clone(), None));
            }
            cands.sort();
            for (role, other, edge) in cands {
                match edge {
                    None => self.push(var, role, Child::Constant(other)),
                    Some(i) => {
                        if self.emitted[i] {
                            continue;
                        }
                        self.emitted[i] = true;
                        let expand = !self.expanded.contains(&other);
                        self.push(var, role, Child::Node { var: other.clone(), expand });
                        if expand {
                            self.expand(&other);
                        }
                    }
                }
            }
        }

        fn push(&mut self, var: &str, role: String, child: Child) {
            self.plan.children.entry(var.to_string()).or_default().push((role, child));
        }
    }

    let mut st = State {
        graph,
        emitted: vec![false; graph.edges.len()],
        expanded: BTreeSet::new(),
        plan: Plan { children: BTreeMap::new(), order: Vec::new() },
    };
    st.expand(&graph.root);
    while st.expanded.len() < graph.nodes.len() {
        let mut bridge: Option<(&Edge, usize)> = None;
        for (i, e) in graph.edges.iter().enumerate() {
            if st.emitted[i] || st.expanded.contains(&e.source) == st.expanded.contains(&e.target) {
                continue;
            }
            if bridge.is_none_or(|(b, _)| e.key() < b.key()) {
                bridge = Some((e, i));
            }
        }
        let (e, i) = bridge.expect("graph is connected");
        st.emitted[i] = true;
        let (parent, role, child) = if st.expanded.contains(&e.source) {
            (e.source.clone(), e.role.clone(), e.target.clone())
        } else {
            (e.target.clone(), format!("{}-of", e.role), e.source.clone())
        };
        st.push(&parent, role, Child::Node { var: child.clone(), expand: true });
        st.expand(&child);
    }
    for list in st.plan.children.values_mut() {
        list.sort_by(|(ra, ca), (rb, cb)| {
            let key = |c: &Child| match c {
                Child::Node { var, .. } => var.clone(),
                Child::Constant(v) => v.clone(),
            };
            (ra, key(ca)).cmp(&(rb, key(cb)))
        });
    }
    st.plan
}

fn write_node(graph: &AmrGraph, plan: &Plan, var: &str, indent: Option<usize>, depth: usize, out: &mut String) {
    let _ = write!(out, "({} / {}", var, graph.nodes[var].concept);
    for (role, child) in plan.children.get(var).map(Vec::as_slice).unwrap_or_default() {
        match indent {
            Some(width) => {
                out.push('\n');
                out.extend(std::iter::repeat_n(' ', width * (depth + 1)));
            }
            None => out.push(' '),
        }
        out.push_str(role);
        out.push(' ');
        match child {
            Child::Constant(v) => out.push_str(v),
            Child::Node { var, expand: false } => out.push_str(var),
            Child::Node { var, expand: true } => write_node(graph, plan, var, indent, depth + 1, out),
        }
    }
    out.push(')');
}

/// Single-line PENMAN. Children are ordered by (role, target) and the second
/// mention of a re-entrant variable is written as a bare reference.
pub fn serialize_penman(graph: &AmrGraph) -> String {
    let plan = plan(graph);
    let mut out = String::new();
    write_node(graph, &plan, &graph.root, None, 0, &mut out);
    out
}

/// Multi-line PENMAN indented by `width` spaces per level.
pub fn serialize_penman_pretty(graph: &AmrGraph, width: usize) -> String {
    let plan = plan(graph);
    let mut out = String::new();
    write_node(graph, &plan, &graph.root, Some(width), 0, &mut out);
    out
}
