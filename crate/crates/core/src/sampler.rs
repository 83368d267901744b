//! Event-focused subgraphs rooted at predicate nodes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amr::{is_core_arg_role, is_sense_label, AmrGraph, Attribute, Edge};
use crate::grounding::VgAmr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    ArgumentClosure,
    Extended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    /// Re-lettered graph; every synonym list holds the one chosen label.
    pub graph: VgAmr,
    /// Predicate variable in the meta graph.
    pub origin_predicate: String,
    pub kind: SampleKind,
    /// Sample variable → meta variable.
    pub source_nodes: BTreeMap<String, String>,
}

/// Nodes whose concept or a synonym is a sense-tagged label and which have
/// an outgoing `:ARG0`..`:ARG5` edge, in traversal order.
pub fn find_predicates(meta: &VgAmr) -> Vec<String> {
    meta.graph
        .traversal_order()
        .into_iter()
        .filter(|v| {
            meta.labels(v).iter().any(|l| is_sense_label(l))
                && meta.graph.outgoing(v).any(|e| is_core_arg_role(&e.role))
        })
        .collect()
}

fn closure(g: &AmrGraph, start: BTreeSet<String>, follow: impl Fn(&Edge) -> bool) -> BTreeSet<String> {
    let mut seen = start.clone();
    let mut stack: Vec<String> = start.into_iter().collect();
    while let Some(v) = stack.pop() {
        for e in g.outgoing(&v) {
            if follow(e) && seen.insert(e.target.clone()) {
                stack.push(e.target.clone());
            }
        }
    }
    seen
}

/// Node set of the argument closure of `p`: `p` plus everything reachable
/// along outgoing core-argument edges.
pub fn argument_closure(g: &AmrGraph, p: &str) -> BTreeSet<String> {
    closure(g, [p.to_string()].into(), |e| is_core_arg_role(&e.role))
}

/// Argument closure plus the non-argument branches of `p`, each followed
/// through every outgoing edge.
pub fn extended_closure(g: &AmrGraph, p: &str) -> BTreeSet<String> {
    let branches = g.outgoing(p).filter(|e| !is_core_arg_role(&e.role)).map(|e| e.target.clone()).collect();
    let mut all = argument_closure(g, p);
    all.extend(closure(g, branches, |_| true));
    all
}

/// Induced subgraph on `nodes` rooted at `root`, edges oriented outward so
/// the root reaches every node.
fn induced(meta: &VgAmr, root: &str, nodes: &BTreeSet<String>) -> VgAmr {
    let g = &meta.graph;
    let kept = g.nodes().filter(|n| nodes.contains(&n.variable)).cloned();
    let edges: Vec<Edge> = g
        .edges()
        .iter()
        .filter(|e| nodes.contains(&e.source) && nodes.contains(&e.target))
        .map(|e| Edge::new(&e.source, &e.role, &e.target))
        .collect();
    let attrs: Vec<Attribute> = g.attributes().iter().filter(|a| nodes.contains(&a.variable)).cloned().collect();
    let graph = AmrGraph::new(root, kept, edges, attrs).expect("closure of a valid graph is connected");
    VgAmr {
        graph,
        grounding: meta.grounding.iter().filter(|(v, _)| nodes.contains(*v)).map(|(k, b)| (k.clone(), b.clone())).collect(),
        synonyms: meta.synonyms.iter().filter(|(v, _)| nodes.contains(*v)).map(|(k, s)| (k.clone(), s.clone())).collect(),
    }
}

/// Picks one synonym per node; nodes are visited in variable order.
fn resolve_synonyms(g: &VgAmr, rng: &mut ChaCha8Rng) -> VgAmr {
    let mut chosen = BTreeMap::new();
    for v in g.graph.variables() {
        let labels = g.labels(v);
        let l = labels.choose(rng).expect("every node has a label");
        chosen.insert(v.to_string(), l.to_string());
    }
    VgAmr {
        graph: g.graph.with_concepts(|v, _| chosen[v].clone()),
        grounding: g.grounding.clone(),
        synonyms: chosen.into_iter().map(|(v, l)| (v, vec![l])).collect(),
    }
}

/// Two samples per predicate: its argument closure and the closure extended
/// with the predicate's optional branches. An extended sample with the same
/// node set as its closure is dropped, as is any sample whose PENMAN and
/// grounding repeat an earlier one.
pub fn sample_event_subgraphs(meta: &VgAmr, seed: u64) -> Vec<SampledSubgraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen_sets: HashSet<(String, BTreeSet<String>)> = HashSet::new();
    let mut seen_text: HashSet<(String, String)> = HashSet::new();
    for p in find_predicates(meta) {
        let arg = argument_closure(&meta.graph, &p);
        let ext = extended_closure(&meta.graph, &p);
        for (kind, nodes) in [(SampleKind::ArgumentClosure, arg), (SampleKind::Extended, ext)] {
            if !seen_sets.insert((p.clone(), nodes.clone())) {
                continue;
            }
            let sub = resolve_synonyms(&induced(meta, &p, &nodes), &mut rng);
            let (_, rename) = sub.graph.relettered("z");
            let sub = sub.renamed(&rename);
            let key = (sub.graph.to_penman(), serde_json::to_string(&sub.grounding).unwrap_or_default());
            if !seen_text.insert(key) {
                continue;
            }
            let source_nodes = rename.into_iter().map(|(old, new)| (new, old)).collect();
            out.push(SampledSubgraph { graph: sub, origin_predicate: p.clone(), kind, source_nodes });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::BBox;

    fn vg(s: &str) -> VgAmr {
        VgAmr::ungrounded(s.parse().unwrap())
    }

    #[test]
    fn predicates_need_sense_and_argument() {
        let g = vg("(a / and :op1 (s / sit-01 :ARG1 (b / boat) :location (d / dock)) :op2 (g / green-03 :ARG1 (h / house)) :op3 (r / run-02))");
        assert_eq!(find_predicates(&g), vec!["s", "g"]);
    }

    #[test]
    fn synonym_with_sense_counts() {
        let mut g = vg("(b / boat :ARG1 (d / dock))");
        assert!(find_predicates(&g).is_empty());
        g.synonyms.insert("b".into(), vec!["boat".into(), "float-01".into()]);
        assert_eq!(find_predicates(&g), vec!["b"]);
    }

    #[test]
    fn single_predicate_gives_one_sample() {
        let s = sample_event_subgraphs(&vg("(z0 / sit-01 :ARG1 (z1 / boat))"), 0);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].graph.graph.to_penman(), "(z0 / sit-01 :ARG1 (z1 / boat))");
        assert_eq!(s[0].kind, SampleKind::ArgumentClosure);
    }

    #[test]
    fn location_only_in_extended() {
        let g = vg("(s / sit-01 :ARG1 (b / boat :mod (r / red)) :location (d / dock))");
        let s = sample_event_subgraphs(&g, 0);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].graph.graph.to_penman(), "(z0 / sit-01 :ARG1 (z1 / boat))");
        assert_eq!(s[1].kind, SampleKind::Extended);
        assert_eq!(s[1].graph.graph.to_penman(), "(z0 / sit-01 :ARG1 (z1 / boat) :location (z2 / dock))");
    }

    #[test]
    fn closure_recurses_through_nested_predicates() {
        let g: AmrGraph = "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b :ARG4 (p / park)) :time (n / now))"
            .parse()
            .unwrap();
        assert_eq!(argument_closure(&g, "w"), ["b", "g", "p", "w"].map(String::from).into());
        let ext = extended_closure(&g, "w");
        assert!(ext.is_superset(&argument_closure(&g, "w")) && ext.contains("n"));
    }

    #[test]
    fn inverse_edges_are_reoriented() {
        let g = vg("(b / boat :ARG1-of (s / sit-01 :location (d / dock)))");
        let s = sample_event_subgraphs(&g, 0);
        assert_eq!(s[0].graph.graph.to_penman(), "(z0 / sit-01 :ARG1 (z1 / boat))");
        assert_eq!(s[0].graph.graph.root(), "z0");
    }

    #[test]
    fn grounding_is_restricted_and_synonyms_chosen() {
        let mut g = vg("(s / sit-01 :ARG1 (b / boat) :location (d / dock))");
        let bb = BBox::new(0.0, 0.0, 4.0, 2.0);
        g.grounding.insert("b".into(), [bb].into());
        g.synonyms.insert("b".into(), vec!["boat".into(), "ship".into(), "vessel".into()]);
        for seed in 0..20 {
            let s = sample_event_subgraphs(&g, seed);
            assert_eq!(s, sample_event_subgraphs(&g, seed));
            for x in &s {
                for (v, m) in &x.source_nodes {
                    assert_eq!(x.graph.grounding.get(v), g.grounding.get(m));
                }
                assert!(x.graph.synonyms.values().all(|l| l.len() == 1));
                assert!(x.graph.check().is_ok());
            }
        }
        let labels: BTreeSet<String> =
            (0..40).map(|seed| sample_event_subgraphs(&g, seed)[0].graph.graph.concept("z1").unwrap().to_string()).collect();
        assert_eq!(labels.len(), 3);
    }
}
