//! Per-image meta graph construction.
//!
//! Graphs are merged pairwise in UPGMA order over Smatch distances. Each
//! merge unifies the nodes found by [`find_common_nodes`] and takes the union
//! of both edge sets.

mod common;
mod upgma;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use common::{find_common_nodes, NodePair, NodePairing, PairReason, AGGREGATE_CONCEPTS};
pub use upgma::{upgma_order, MergeStep, MergeTree};

use crate::amr::{AmrGraph, Attribute, Edge, Node};
use crate::embedding::EmbeddingStore;
use crate::grounding::VgAmr;
use crate::smatch::distance_matrix;

pub const MULTI_SENTENCE: &str = "multi-sentence";

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("merge thresholds must satisfy 0 <= predicate ({predicate}) < synonym ({synonym}) <= 1")]
    BadThresholds { synonym: f64, predicate: f64 },
    #[error("nothing to merge")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeParams {
    pub synonym_threshold: f64,
    pub predicate_threshold: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams { synonym_threshold: 0.7, predicate_threshold: 0.5 }
    }
}

impl MergeParams {
    pub fn new(synonym_threshold: f64, predicate_threshold: f64) -> Result<Self, MergeError> {
        let p = MergeParams { synonym_threshold, predicate_threshold };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MergeError> {
        let (s, p) = (self.synonym_threshold, self.predicate_threshold);
        if (0.0..s).contains(&p) && s <= 1.0 {
            Ok(())
        } else {
            Err(MergeError::BadThresholds { synonym: s, predicate: p })
        }
    }
}

/// Old variable → variable in the merged graph.
pub type NodeMap = BTreeMap<String, String>;

#[derive(Debug, Clone)]
pub struct TracedMerge {
    pub graph: VgAmr,
    pub left_map: NodeMap,
    pub right_map: NodeMap,
}

pub fn merge_pair(a: &VgAmr, b: &VgAmr, pairing: &NodePairing) -> VgAmr {
    merge_pair_traced(a, b, pairing).graph
}

/// Merges two graphs along `pairing` and re-letters the result `z0, z1, ...`.
///
/// Paired nodes keep A's concept and gather both box sets and synonym lists.
/// With no pairs the two graphs hang under a new `multi-sentence` root as
/// `:snt1` and `:snt2`; otherwise the root is the image of A's root.
///
/// # Panics
///
/// If the pairing is not injective or names unknown variables.
pub fn merge_pair_traced(a: &VgAmr, b: &VgAmr, pairing: &NodePairing) -> TracedMerge {
    assert!(pairing.is_injective(), "pairing is not injective");
    let b_to_a: BTreeMap<&str, &str> = pairing.pairs.iter().map(|p| (p.right.as_str(), p.left.as_str())).collect();
    for p in &pairing.pairs {
        assert!(a.graph.contains(&p.left) && b.graph.contains(&p.right), "pairing names unknown nodes");
    }
    // Temporary names keep the two variable spaces apart.
    let left: NodeMap = a.graph.variables().map(|v| (v.to_string(), format!("a:{v}"))).collect();
    let right: NodeMap = b
        .graph
        .variables()
        .map(|v| {
            let name = match b_to_a.get(v) {
                Some(u) => format!("a:{u}"),
                None => format!("b:{v}"),
            };
            (v.to_string(), name)
        })
        .collect();

    let mut concepts: BTreeMap<String, String> = BTreeMap::new();
    let mut grounding: BTreeMap<String, crate::grounding::BoxSet> = BTreeMap::new();
    let mut synonyms: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut attrs = Vec::new();
    for (g, map) in [(a, &left), (b, &right)] {
        for n in g.graph.nodes() {
            let name = &map[&n.variable];
            concepts.entry(name.clone()).or_insert_with(|| n.concept.clone());
            if let Some(bx) = g.boxes(&n.variable) {
                grounding.entry(name.clone()).or_default().extend(bx.iter().copied());
            }
            let list = synonyms.entry(name.clone()).or_default();
            for l in g.labels(&n.variable) {
                if !list.iter().any(|x| x == l) {
                    list.push(l.to_string());
                }
            }
        }
        for e in g.graph.edges() {
            let mut e2 = Edge::new(&map[&e.source], &e.role, &map[&e.target]);
            e2.inverted_in_surface = e.inverted_in_surface;
            edges.push(e2);
        }
        for at in g.graph.attributes() {
            attrs.push(Attribute::new(&map[&at.variable], &at.role, &at.value));
        }
    }
    // Paired nodes take A's concept, which must lead the synonym list.
    for (name, list) in synonyms.iter_mut() {
        let c = &concepts[name];
        if list.first() != Some(c) {
            list.retain(|x| x != c);
            list.insert(0, c.clone());
        }
    }
    let mut root = left[a.graph.root()].clone();
    if pairing.is_empty() {
        let ms = "m:".to_string();
        edges.push(Edge::new(&ms, ":snt1", &left[a.graph.root()]));
        edges.push(Edge::new(&ms, ":snt2", &right[b.graph.root()]));
        concepts.insert(ms.clone(), MULTI_SENTENCE.into());
        synonyms.insert(ms.clone(), vec![MULTI_SENTENCE.into()]);
        root = ms;
    }
    let nodes = concepts.iter().map(|(v, c)| Node::new(v, c));
    let graph = AmrGraph::new(root, nodes, edges, attrs).expect("union of two valid graphs is valid");
    let merged = VgAmr { graph, grounding, synonyms };
    let (_, rename) = merged.graph.relettered("z");
    let merged = merged.renamed(&rename);
    let compose = |m: NodeMap| m.into_iter().map(|(k, v)| (k, rename[&v].clone())).collect();
    TracedMerge { graph: merged, left_map: compose(left), right_map: compose(right) }
}

/// Collapses grounded nodes that share a box set and have synonymous labels.
/// Returns the new graph and the variable map; the kept node is the one met
/// first in traversal order.
pub fn consolidate_grounded(
    g: &VgAmr,
    params: &MergeParams,
    store: &EmbeddingStore,
    missing: &mut BTreeSet<String>,
) -> (VgAmr, NodeMap) {
    let mut cur = g.clone();
    let mut total: NodeMap = g.graph.variables().map(|v| (v.to_string(), v.to_string())).collect();
    while let Some((keep, drop)) = find_redundant(&cur, params, store, missing) {
        cur = absorb(&cur, &keep, &drop);
        for v in total.values_mut() {
            if *v == drop {
                v.clone_from(&keep);
            }
        }
    }
    if total.iter().all(|(k, v)| k == v) {
        return (cur, total);
    }
    let (_, rename) = cur.graph.relettered("z");
    let cur = cur.renamed(&rename);
    let total = total.into_iter().map(|(k, v)| (k, rename[&v].clone())).collect();
    (cur, total)
}

fn find_redundant(
    g: &VgAmr,
    params: &MergeParams,
    store: &EmbeddingStore,
    missing: &mut BTreeSet<String>,
) -> Option<(String, String)> {
    let order = g.graph.traversal_order();
    let grounded: Vec<&String> = order.iter().filter(|v| g.is_grounded(v)).collect();
    for (i, u) in grounded.iter().enumerate() {
        for v in &grounded[i + 1..] {
            if g.boxes(u) == g.boxes(v)
                && common::synonym_similarity(store, &g.labels(u), &g.labels(v), missing) >= params.synonym_threshold
            {
                return Some(((*u).clone(), (*v).clone()));
            }
        }
    }
    None
}

/// Redirects every edge and attribute of `drop` to `keep` and removes `drop`.
fn absorb(g: &VgAmr, keep: &str, drop: &str) -> VgAmr {
    let r = |v: &str| if v == drop { keep.to_string() } else { v.to_string() };
    let nodes = g.graph.nodes().filter(|n| n.variable != drop).cloned();
    let edges = g
        .graph
        .edges()
        .iter()
        .map(|e| {
            let mut e2 = Edge::new(r(&e.source), &e.role, r(&e.target));
            e2.inverted_in_surface = e.inverted_in_surface;
            e2
        })
        .collect();
    let attrs = g.graph.attributes().iter().map(|a| Attribute::new(r(&a.variable), &a.role, &a.value)).collect();
    let graph = AmrGraph::new(r(g.graph.root()), nodes, edges, attrs).expect("absorbing a node keeps the graph valid");
    let mut synonyms = g.synonyms.clone();
    let extra = synonyms.remove(drop).unwrap_or_default();
    let list = synonyms.entry(keep.to_string()).or_default();
    for l in extra {
        if !list.contains(&l) {
            list.push(l);
        }
    }
    let mut grounding = g.grounding.clone();
    if let Some(bx) = grounding.remove(drop) {
        grounding.entry(keep.to_string()).or_default().extend(bx);
    }
    VgAmr { graph, grounding, synonyms }
}

#[derive(Debug, Clone)]
pub struct MetaVgAmr {
    pub meta: VgAmr,
    pub tree: MergeTree,
    /// For each input graph, its variables mapped into `meta`.
    pub node_maps: Vec<NodeMap>,
    pub missing_labels: BTreeSet<String>,
    pub merge_calls: usize,
}

/// Folds all graphs of one image into a single meta graph.
///
/// Pairwise Smatch distances drive a UPGMA tree whose steps are replayed as
/// [`merge_pair`] calls. A single input is returned unchanged. After the fold
/// any grounded nodes that still duplicate one another are collapsed.
pub fn build_meta_vgamr(
    graphs: &[VgAmr],
    params: &MergeParams,
    store: &EmbeddingStore,
    restarts: usize,
    seed: u64,
) -> Result<MetaVgAmr, MergeError> {
    params.validate()?;
    if graphs.is_empty() {
        return Err(MergeError::Empty);
    }
    let identity = |g: &VgAmr| -> NodeMap { g.graph.variables().map(|v| (v.to_string(), v.to_string())).collect() };
    if graphs.len() == 1 {
        return Ok(MetaVgAmr {
            meta: graphs[0].clone(),
            tree: MergeTree { leaves: 1, steps: Vec::new() },
            node_maps: vec![identity(&graphs[0])],
            missing_labels: BTreeSet::new(),
            merge_calls: 0,
        });
    }
    let amrs: Vec<AmrGraph> = graphs.iter().map(|g| g.graph.clone()).collect();
    let tree = upgma_order(&distance_matrix(&amrs, restarts, seed));

    // cluster id → (graph, [(input index, map into that graph)])
    type Cluster = (VgAmr, Vec<(usize, NodeMap)>);
    let mut clusters: Vec<Option<Cluster>> =
        graphs.iter().enumerate().map(|(i, g)| Some((g.clone(), vec![(i, identity(g))]))).collect();
    let mut missing = BTreeSet::new();
    let mut calls = 0;
    for step in &tree.steps {
        let (ga, ma) = clusters[step.left].take().expect("cluster merged once");
        let (gb, mb) = clusters[step.right].take().expect("cluster merged once");
        let pairing = find_common_nodes(&ga, &gb, params, store);
        missing.extend(pairing.missing_labels.iter().cloned());
        let t = merge_pair_traced(&ga, &gb, &pairing);
        calls += 1;
        let through = |maps: Vec<(usize, NodeMap)>, m: &NodeMap| -> Vec<(usize, NodeMap)> {
            maps.into_iter().map(|(i, nm)| (i, nm.into_iter().map(|(k, v)| (k, m[&v].clone())).collect())).collect()
        };
        let mut maps = through(ma, &t.left_map);
        maps.extend(through(mb, &t.right_map));
        clusters.push(Some((t.graph, maps)));
    }
    let (meta, maps) = clusters.pop().flatten().expect("fold leaves one cluster");
    let (meta, cmap) = consolidate_grounded(&meta, params, store, &mut missing);
    let mut node_maps = vec![NodeMap::new(); graphs.len()];
    for (i, nm) in maps {
        node_maps[i] = nm.into_iter().map(|(k, v)| (k, cmap[&v].clone())).collect();
    }
    Ok(MetaVgAmr { meta, tree, node_maps, missing_labels: missing, merge_calls: calls })
}
