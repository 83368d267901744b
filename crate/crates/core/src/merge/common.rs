use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::MergeParams;
use crate::amr::is_core_arg_role;
use crate::embedding::EmbeddingStore;
use crate::grounding::VgAmr;

/// AMR-specific aggregation concepts handled by the conjunction rule.
pub const AGGREGATE_CONCEPTS: [&str; 3] = ["and", "or", "multi-sentence"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairReason {
    AndOr,
    GroundedSameBoxes,
    LabelNeighborhood,
    PredicateChildren,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePair {
    pub left: String,
    pub right: String,
    pub reason: PairReason,
}

/// Injective pairing of nodes of two graphs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePairing {
    pub pairs: Vec<NodePair>,
    /// Labels that had no embedding; they were scored as similarity 0.
    pub missing_labels: BTreeSet<String>,
}

impl NodePairing {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn left_to_right(&self) -> BTreeMap<&str, &str> {
        self.pairs.iter().map(|p| (p.left.as_str(), p.right.as_str())).collect()
    }

    pub fn is_injective(&self) -> bool {
        let l: BTreeSet<_> = self.pairs.iter().map(|p| &p.left).collect();
        let r: BTreeSet<_> = self.pairs.iter().map(|p| &p.right).collect();
        l.len() == self.pairs.len() && r.len() == self.pairs.len()
    }

    /// Identity pairing of a graph with itself.
    pub fn identity(g: &VgAmr) -> Self {
        NodePairing {
            pairs: g
                .graph
                .variables()
                .map(|v| NodePair { left: v.into(), right: v.into(), reason: PairReason::LabelNeighborhood })
                .collect(),
            missing_labels: BTreeSet::new(),
        }
    }
}

/// Best similarity over both nodes' synonym lists; missing labels count 0.
pub(super) fn synonym_similarity(
    store: &EmbeddingStore,
    left: &[&str],
    right: &[&str],
    missing: &mut BTreeSet<String>,
) -> f64 {
    let mut best = 0.0f64;
    for l in left {
        for r in right {
            match store.label_similarity(l, r) {
                Some(s) => best = best.max(s),
                None => {
                    missing.extend([l, r].into_iter().filter(|w| !store.knows_label(w)).map(|w| w.to_string()))
                }
            }
        }
    }
    best
}

struct Matcher<'a> {
    a: &'a VgAmr,
    b: &'a VgAmr,
    params: &'a MergeParams,
    store: &'a EmbeddingStore,
    l2r: HashMap<String, String>,
    r2l: HashMap<String, String>,
    pairs: Vec<NodePair>,
    missing: BTreeSet<String>,
    sim_cache: HashMap<(String, String), f64>,
}

impl<'a> Matcher<'a> {
    fn sim(&mut self, u: &str, v: &str) -> f64 {
        if let Some(&s) = self.sim_cache.get(&(u.to_string(), v.to_string())) {
            return s;
        }
        let s = synonym_similarity(self.store, &self.a.labels(u), &self.b.labels(v), &mut self.missing);
        self.sim_cache.insert((u.to_string(), v.to_string()), s);
        s
    }

    fn free(&self, u: &str, v: &str) -> bool {
        !self.l2r.contains_key(u) && !self.r2l.contains_key(v)
    }

    fn add(&mut self, u: &str, v: &str, reason: PairReason) {
        self.l2r.insert(u.into(), v.into());
        self.r2l.insert(v.into(), u.into());
        self.pairs.push(NodePair { left: u.into(), right: v.into(), reason });
    }

    /// Accepts candidates greedily, most similar first.
    fn accept(&mut self, mut cands: Vec<(f64, String, String)>, reason: PairReason) -> bool {
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| (&x.1, &x.2).cmp(&(&y.1, &y.2))));
        let mut changed = false;
        for (_, u, v) in cands {
            if self.free(&u, &v) {
                self.add(&u, &v, reason);
                changed = true;
            }
        }
        changed
    }

    fn is_aggregate(g: &VgAmr, v: &str) -> bool {
        g.graph.concept(v).is_some_and(|c| AGGREGATE_CONCEPTS.contains(&c))
    }

    fn ungrounded_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for u in self.a.graph.variables().filter(|u| !self.a.is_grounded(u) && !self.l2r.contains_key(*u)) {
            for v in self.b.graph.variables().filter(|v| !self.b.is_grounded(v) && !self.r2l.contains_key(*v)) {
                out.push((u.to_string(), v.to_string()));
            }
        }
        out
    }

    /// (role, child) pairs over outgoing edges selected by `keep`.
    fn children<'g>(g: &'g VgAmr, v: &'g str, keep: impl Fn(&str) -> bool) -> BTreeSet<(&'g str, &'g str)> {
        g.graph.outgoing(v).filter(|e| keep(&e.role)).map(|e| (e.role.as_str(), e.target.as_str())).collect()
    }

    /// Every child of `u` is paired with a child of `v` under the same role
    /// and vice versa; at least one child.
    fn children_pair_up(&self, u: &str, v: &str, keep: impl Fn(&str) -> bool + Copy) -> bool {
        let cu = Self::children(self.a, u, keep);
        let cv = Self::children(self.b, v, keep);
        if cu.is_empty() || cu.len() != cv.len() {
            return false;
        }
        let mapped: Option<BTreeSet<(&str, &str)>> =
            cu.iter().map(|(r, c)| self.l2r.get(*c).map(|m| (*r, m.as_str()))).collect();
        mapped.is_some_and(|m| m == cv)
    }

    /// Neighborhood signal of the label rule: predicates need a paired ARGn
    /// child under the same role, other nodes a paired parent under the same
    /// role (two roots count as sharing a parent).
    fn neighborhood_similar(&self, u: &str, v: &str) -> bool {
        let (ga, gb) = (&self.a.graph, &self.b.graph);
        if ga.is_predicate(u) && gb.is_predicate(v) {
            return ga.outgoing(u).filter(|e| is_core_arg_role(&e.role)).any(|e| {
                self.l2r
                    .get(&e.target)
                    .is_some_and(|m| gb.outgoing(v).any(|f| f.role == e.role && &f.target == m))
            });
        }
        if ga.root() == u && gb.root() == v {
            return true;
        }
        ga.incoming(u).any(|e| {
            self.l2r.get(&e.source).is_some_and(|m| gb.incoming(v).any(|f| f.role == e.role && &f.source == m))
        })
    }

    fn conjunction_pass(&mut self) -> bool {
        let mut cands = Vec::new();
        for (u, v) in self.ungrounded_pairs() {
            if !Self::is_aggregate(self.a, &u) || self.a.graph.concept(&u) != self.b.graph.concept(&v) {
                continue;
            }
            let roots = self.a.graph.root() == u && self.b.graph.root() == v;
            if roots || self.children_pair_up(&u, &v, |_| true) {
                cands.push((1.0, u, v));
            }
        }
        self.accept(cands, PairReason::AndOr)
    }

    fn grounded_pass(&mut self) -> bool {
        let mut cands = Vec::new();
        for (u, bu) in &self.a.grounding {
            for (v, bv) in &self.b.grounding {
                if bu.is_empty() || bu != bv || !self.free(u, v) {
                    continue;
                }
                let s = self.sim(u, v);
                if s >= self.params.synonym_threshold {
                    cands.push((s, u.clone(), v.clone()));
                }
            }
        }
        self.accept(cands, PairReason::GroundedSameBoxes)
    }

    fn label_pass(&mut self) -> bool {
        let mut cands = Vec::new();
        for (u, v) in self.ungrounded_pairs() {
            if Self::is_aggregate(self.a, &u) || Self::is_aggregate(self.b, &v) {
                continue;
            }
            let s = self.sim(&u, &v);
            if s >= self.params.synonym_threshold && self.neighborhood_similar(&u, &v) {
                cands.push((s, u, v));
            }
        }
        self.accept(cands, PairReason::LabelNeighborhood)
    }

    fn predicate_pass(&mut self) -> bool {
        let mut cands = Vec::new();
        for (u, v) in self.ungrounded_pairs() {
            if !self.a.graph.is_predicate(&u) || !self.b.graph.is_predicate(&v) {
                continue;
            }
            if !self.children_pair_up(&u, &v, is_core_arg_role) {
                continue;
            }
            let s = self.sim(&u, &v);
            if s >= self.params.predicate_threshold {
                cands.push((s, u, v));
            }
        }
        self.accept(cands, PairReason::PredicateChildren)
    }
}

/// Finds the nodes two vgAMRs have in common.
///
/// Root conjunctions pair first, then grounded nodes with identical box sets
/// and synonymous labels. The remaining rules depend on earlier pairings, so
/// conjunction, label/neighborhood and predicate passes repeat until no new
/// pair appears. A grounded node never pairs with an ungrounded one.
pub fn find_common_nodes(a: &VgAmr, b: &VgAmr, params: &MergeParams, store: &EmbeddingStore) -> NodePairing {
    let mut m = Matcher {
        a,
        b,
        params,
        store,
        l2r: HashMap::new(),
        r2l: HashMap::new(),
        pairs: Vec::new(),
        missing: BTreeSet::new(),
        sim_cache: HashMap::new(),
    };
    let (ra, rb) = (a.graph.root(), b.graph.root());
    if !a.is_grounded(ra)
        && !b.is_grounded(rb)
        && Matcher::is_aggregate(a, ra)
        && a.graph.concept(ra) == b.graph.concept(rb)
    {
        m.add(ra, rb, PairReason::AndOr);
    }
    m.grounded_pass();
    loop {
        let mut changed = m.conjunction_pass();
        changed |= m.label_pass();
        changed |= m.predicate_pass();
        if !changed {
            break;
        }
    }
    for w in &m.missing {
        log::warn!("no embedding for label `{w}`; treated as dissimilar");
    }
    NodePairing { pairs: m.pairs, missing_labels: m.missing }
}
