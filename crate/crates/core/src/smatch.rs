//! Smatch: F-score over matched triples under the best injective variable
//! mapping, found by hill-climbing with random restarts.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{AmrGraph, TripleKind};

pub const DEFAULT_RESTARTS: usize = 4;
/// Largest smaller-side variable count the exhaustive matcher accepts.
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmatchError {
    #[error("exhaustive matching needs min(|vars|) <= {limit}, got {vars}")]
    TooLarge { vars: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmatchResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Variable of the first graph → variable of the second.
    pub mapping: BTreeMap<String, String>,
    pub matched_triples: usize,
    pub left_triples: usize,
    pub right_triples: usize,
}

impl SmatchResult {
    fn from_counts(matched: usize, left: usize, right: usize, mapping: BTreeMap<String, String>) -> Self {
        let (precision, recall, f1) = prf(matched, left, right);
        SmatchResult { precision, recall, f1, mapping, matched_triples: matched, left_triples: left, right_triples: right }
    }
}

/// Precision, recall and F1 from triple counts.
pub fn prf(matched: usize, left: usize, right: usize) -> (f64, f64, f64) {
    let p = if left == 0 { 0.0 } else { matched as f64 / left as f64 };
    let r = if right == 0 { 0.0 } else { matched as f64 / right as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Triples of one graph with variables replaced by indices.
struct Indexed {
    vars: Vec<String>,
    /// (var, label, constant) for instance, attribute and root-marker triples.
    unary: Vec<(usize, String, String)>,
    /// (source, role, target) for relation triples.
    binary: Vec<(usize, String, usize)>,
}

impl Indexed {
    fn new(g: &AmrGraph) -> Self {
        let vars: Vec<String> = g.variables().map(String::from).collect();
        let index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut unary = Vec::new();
        let mut binary = Vec::new();
        for t in g.to_triples() {
            let head = index[t.head.as_str()];
            match t.kind {
                TripleKind::Relation => binary.push((head, t.label, index[t.tail.as_str()])),
                _ => unary.push((head, t.label, t.tail)),
            }
        }
        Indexed { vars, unary, binary }
    }

    fn triple_count(&self) -> usize {
        self.unary.len() + self.binary.len()
    }
}

/// Precomputed match weights between a left and a right graph.
struct Scorer {
    n_left: usize,
    n_right: usize,
    /// unary[i][j]: unary triples of left var i matched when i ↦ j.
    unary: Vec<Vec<usize>>,
    /// Relation pairs (i1, i2, j1, j2): matched when i1 ↦ j1 and i2 ↦ j2.
    pairs: Vec<(usize, usize, usize, usize)>,
    /// Indices into `pairs` touching each left variable.
    touching: Vec<Vec<usize>>,
    left_total: usize,
    right_total: usize,
}

impl Scorer {
    fn new(a: &Indexed, b: &Indexed) -> Self {
        let (n_left, n_right) = (a.vars.len(), b.vars.len());
        let mut unary = vec![vec![0usize; n_right]; n_left];
        let right_unary: HashSet<(usize, &str, &str)> =
            b.unary.iter().map(|(v, l, c)| (*v, l.as_str(), c.as_str())).collect();
        for (i, label, constant) in &a.unary {
            for (j, row) in unary[*i].iter_mut().enumerate() {
                if right_unary.contains(&(j, label.as_str(), constant.as_str())) {
                    *row += 1;
                }
            }
        }
        let mut by_role: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
        for (s, r, t) in &b.binary {
            by_role.entry(r.as_str()).or_default().push((*s, *t));
        }
        let mut pairs = Vec::new();
        let mut touching = vec![Vec::new(); n_left];
        for (s, r, t) in &a.binary {
            for &(bs, bt) in by_role.get(r.as_str()).map(Vec::as_slice).unwrap_or_default() {
                // a self-loop can only match a self-loop under an injective map
                if (s == t) != (bs == bt) {
                    continue;
                }
                let k = pairs.len();
                pairs.push((*s, *t, bs, bt));
                touching[*s].push(k);
                if t != s {
                    touching[*t].push(k);
                }
            }
        }
        Scorer {
            n_left,
            n_right,
            unary,
            pairs,
            touching,
            left_total: a.triple_count(),
            right_total: b.triple_count(),
        }
    }

    fn score(&self, map: &[Option<usize>]) -> usize {
        let unary: usize = map.iter().enumerate().filter_map(|(i, m)| m.map(|j| self.unary[i][j])).sum();
        let binary = self
            .pairs
            .iter()
            .filter(|&&(s, t, bs, bt)| map[s] == Some(bs) && map[t] == Some(bt))
            .count();
        unary + binary
    }

    /// Contribution of left variable `i` under `map` (relations counted once
    /// per incident variable, so use only for differences).
    fn local(&self, map: &[Option<usize>], i: usize) -> usize {
        let u = map[i].map_or(0, |j| self.unary[i][j]);
        let b = self.touching[i]
            .iter()
            .filter(|&&k| {
                let (s, t, bs, bt) = self.pairs[k];
                map[s] == Some(bs) && map[t] == Some(bt)
            })
            .count();
        u + b
    }

    /// Score change from setting `i ↦ target` (and any displaced variable to
    /// `i`'s old image, which makes this a swap).
    fn gain(&self, map: &mut [Option<usize>], i: usize, target: Option<usize>, owner: Option<usize>) -> isize {
        let old = map[i];
        let before = self.local(map, i) as isize + owner.map_or(0, |o| self.local(map, o) as isize)
            - owner.map_or(0, |o| self.shared(map, i, o) as isize);
        map[i] = target;
        if let Some(o) = owner {
            map[o] = old;
        }
        let after = self.local(map, i) as isize + owner.map_or(0, |o| self.local(map, o) as isize)
            - owner.map_or(0, |o| self.shared(map, i, o) as isize);
        map[i] = old;
        if let Some(o) = owner {
            map[o] = target;
        }
        after - before
    }

    /// Matched relation pairs incident to both `i` and `o` (double counted by
    /// `local(i) + local(o)`).
    fn shared(&self, map: &[Option<usize>], i: usize, o: usize) -> usize {
        self.touching[i]
            .iter()
            .filter(|&&k| {
                let (s, t, bs, bt) = self.pairs[k];
                ((s == i && t == o) || (s == o && t == i)) && map[s] == Some(bs) && map[t] == Some(bt)
            })
            .count()
    }

    /// Each variable (in random order) takes a free image with the most
    /// matching unary triples, ties broken at random; the rest are random.
    fn smart_init(&self, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut map = vec![None; self.n_left];
        let mut used = vec![false; self.n_right];
        let mut order: Vec<usize> = (0..self.n_left).collect();
        order.shuffle(rng);
        for &i in &order {
            let top = (0..self.n_right).filter(|&j| !used[j]).map(|j| self.unary[i][j]).max().unwrap_or(0);
            if top == 0 {
                continue;
            }
            let ties: Vec<usize> = (0..self.n_right).filter(|&j| !used[j] && self.unary[i][j] == top).collect();
            let j = *ties.choose(rng).expect("non-empty");
            map[i] = Some(j);
            used[j] = true;
        }
        self.fill_random(&mut map, &mut used, rng);
        map
    }

    fn random_init(&self, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut map = vec![None; self.n_left];
        let mut used = vec![false; self.n_right];
        self.fill_random(&mut map, &mut used, rng);
        map
    }

    /// Maps still-unmapped variables to random free images. A total map never
    /// scores below any of its restrictions.
    fn fill_random(&self, map: &mut [Option<usize>], used: &mut [bool], rng: &mut ChaCha8Rng) {
        let mut free: Vec<usize> = (0..self.n_right).filter(|&j| !used[j]).collect();
        free.shuffle(rng);
        let mut unmapped: Vec<usize> = (0..self.n_left).filter(|&i| map[i].is_none()).collect();
        unmapped.shuffle(rng);
        for (i, j) in unmapped.into_iter().zip(free) {
            map[i] = Some(j);
            used[j] = true;
        }
    }

    /// Greedy best-improvement over single reassignments and swaps. On a
    /// plateau, up to `2 * (n_left + n_right)` consecutive zero-gain moves to unvisited
    /// mappings are taken (chosen at random) before giving up.
    fn climb(&self, map: &mut Vec<Option<usize>>, rng: &mut ChaCha8Rng) -> usize {
        let mut current = self.score(map);
        let mut best = (current, map.clone());
        let mut visited: HashSet<Vec<Option<usize>>> = HashSet::from([map.clone()]);
        let sideways_limit = 2 * (self.n_left + self.n_right);
        let mut sideways = 0;
        loop {
            let mut owner_of = vec![None; self.n_right];
            for (i, m) in map.iter().enumerate() {
                if let Some(j) = m {
                    owner_of[*j] = Some(i);
                }
            }
            let mut moves: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
            for i in 0..self.n_left {
                // reassign to a free image or to nothing
                for target in (0..self.n_right).filter(|&j| owner_of[j].is_none()).map(Some).chain([None]) {
                    if target != map[i] {
                        moves.push((i, target, None));
                    }
                }
                // swap images with a later variable
                for o in (i + 1)..self.n_left {
                    if map[o] != map[i] {
                        moves.push((i, map[o], Some(o)));
                    }
                }
            }
            let mut improving: Option<(isize, usize, Option<usize>, Option<usize>)> = None;
            let mut level = Vec::new();
            for &(i, target, owner) in &moves {
                let g = self.gain(map, i, target, owner);
                if g > 0 && improving.is_none_or(|(bg, ..)| g > bg) {
                    improving = Some((g, i, target, owner));
                } else if g == 0 {
                    level.push((i, target, owner));
                }
            }
            let apply = |map: &mut Vec<Option<usize>>, (i, target, owner): (usize, Option<usize>, Option<usize>)| {
                let old = map[i];
                map[i] = target;
                if let Some(o) = owner {
                    map[o] = old;
                }
            };
            if let Some((g, i, target, owner)) = improving {
                apply(map, (i, target, owner));
                current = (current as isize + g) as usize;
                sideways = 0;
            } else {
                if sideways >= sideways_limit {
                    break;
                }
                level.retain(|&mv| {
                    let mut next = map.clone();
                    apply(&mut next, mv);
                    !visited.contains(&next)
                });
                let Some(&mv) = level.choose(rng) else { break };
                apply(map, mv);
                sideways += 1;
            }
            visited.insert(map.clone());
            debug_assert_eq!(current, self.score(map));
            if current > best.0 {
                best = (current, map.clone());
            }
        }
        *map = best.1;
        best.0
    }
}

fn mapping_names(a: &Indexed, b: &Indexed, map: &[Option<usize>]) -> BTreeMap<String, String> {
    map.iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (a.vars[i].clone(), b.vars[j].clone())))
        .collect()
}

/// Hill-climbing Smatch. Restart 0 starts from concept-matching candidates,
/// later restarts from random total mappings; all randomness derives from
/// `seed`, so more restarts never lower the result.
pub fn smatch_score(a: &AmrGraph, b: &AmrGraph, restarts: usize, seed: u64) -> SmatchResult {
    let restarts = restarts.max(1);
    let (ia, ib) = (Indexed::new(a), Indexed::new(b));
    let scorer = Scorer::new(&ia, &ib);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec<Option<usize>>)> = None;
    for r in 0..restarts {
        let mut map = if r == 0 { scorer.smart_init(&mut rng) } else { scorer.random_init(&mut rng) };
        let s = scorer.climb(&mut map, &mut rng);
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, map));
        }
        if s == scorer.left_total.min(scorer.right_total) {
            break;
        }
    }
    let (matched, map) = best.expect("at least one restart");
    SmatchResult::from_counts(matched, scorer.left_total, scorer.right_total, mapping_names(&ia, &ib, &map))
}

/// Exact Smatch by enumerating every injective map from the smaller
/// variable set into the larger one.
pub fn smatch_brute_force(a: &AmrGraph, b: &AmrGraph) -> Result<SmatchResult, SmatchError> {
    let (ia, ib) = (Indexed::new(a), Indexed::new(b));
    let vars = ia.vars.len().min(ib.vars.len());
    if vars > BRUTE_FORCE_LIMIT {
        return Err(SmatchError::TooLarge { vars, limit: BRUTE_FORCE_LIMIT });
    }
    let scorer = Scorer::new(&ia, &ib);
    let mut map = vec![None; scorer.n_left];
    let mut used = vec![false; scorer.n_right];
    let mut best = (0usize, map.clone());
    let left_is_smaller = scorer.n_left <= scorer.n_right;

    // Assign each variable of the smaller side in turn.
    fn rec(
        s: &Scorer,
        left_is_smaller: bool,
        depth: usize,
        map: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut (usize, Vec<Option<usize>>),
    ) {
        let small = if left_is_smaller { s.n_left } else { s.n_right };
        if depth == small {
            let sc = s.score(map);
            if sc > best.0 {
                *best = (sc, map.clone());
            }
            return;
        }
        if left_is_smaller {
            for j in 0..s.n_right {
                if !used[j] {
                    used[j] = true;
                    map[depth] = Some(j);
                    rec(s, left_is_smaller, depth + 1, map, used, best);
                    map[depth] = None;
                    used[j] = false;
                }
            }
        } else {
            // right variable `depth` chooses its left preimage
            for i in 0..s.n_left {
                if map[i].is_none() {
                    map[i] = Some(depth);
                    rec(s, left_is_smaller, depth + 1, map, used, best);
                    map[i] = None;
                }
            }
        }
    }
    rec(&scorer, left_is_smaller, 0, &mut map, &mut used, &mut best);
    let (matched, map) = best;
    Ok(SmatchResult::from_counts(matched, scorer.left_total, scorer.right_total, mapping_names(&ia, &ib, &map)))
}

/// Symmetric `n × n` matrix of `1 − F1` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    /// Checks shape, zero diagonal, symmetry and range.
    pub fn from_rows(d: Vec<Vec<f64>>) -> Result<Self, String> {
        let n = d.len();
        for (i, row) in d.iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row[i] != 0.0 {
                return Err(format!("diagonal entry {i} is {}", row[i]));
            }
            for (j, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) || x != d[j][i] {
                    return Err(format!("entry ({i},{j}) = {x} is out of range or asymmetric"));
                }
            }
        }
        Ok(DistanceMatrix { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.d
    }
}

/// Seed for pair `(i, j)` derived from the global seed (SplitMix64 finalizer).
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut z = seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `d[i][j] = 1 − max(F1(g_i, g_j), F1(g_j, g_i))`, scored in parallel over
/// the upper triangle.
pub fn distance_matrix(graphs: &[AmrGraph], restarts: usize, seed: u64) -> DistanceMatrix {
    let n = graphs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = pair_seed(seed, i, j);
            let fwd = smatch_score(&graphs[i], &graphs[j], restarts, s).f1;
            let bwd = smatch_score(&graphs[j], &graphs[i], restarts, s.rotate_left(17)).f1;
            1.0 - fwd.max(bwd)
        })
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for (&(i, j), &x) in pairs.iter().zip(&scores) {
        let x = x.clamp(0.0, 1.0);
        d[i][j] = x;
        d[j][i] = x;
    }
    DistanceMatrix { n, d }
}

/// Random graph generator shared by tests and benchmarks.
pub fn random_graph(rng: &mut impl Rng, max_vars: usize) -> AmrGraph {
    use crate::amr::{Attribute, Edge, Node};
    const CONCEPTS: [&str; 6] = ["dog", "cat", "sit-01", "boat", "and", "red"];
    const ROLES: [&str; 4] = [":ARG0", ":ARG1", ":mod", ":location"];
    let n = rng.gen_range(1..=max_vars);
    let vars: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let nodes: Vec<Node> = vars.iter().map(|v| Node::new(v.clone(), *CONCEPTS.choose(rng).unwrap())).collect();
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        let (s, t) = if rng.gen_bool(0.8) { (parent, k) } else { (k, parent) };
        edges.push(Edge::new(vars[s].clone(), *ROLES.choose(rng).unwrap(), vars[t].clone()));
    }
    for _ in 0..rng.gen_range(0..=n / 2) {
        let s = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        edges.push(Edge::new(vars[s].clone(), *ROLES.choose(rng).unwrap(), vars[t].clone()));
    }
    let mut attributes = Vec::new();
    if rng.gen_bool(0.3) {
        attributes.push(Attribute::new(vars[rng.gen_range(0..n)].clone(), ":polarity", "-"));
    }
    AmrGraph::new(vars[rng.gen_range(0..n)].clone(), nodes, edges, attributes).expect("generated graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    fn g(s: &str) -> AmrGraph {
        parse_penman(s).unwrap()
    }

    #[test]
    fn identical_graphs_score_one() {
        let a = g("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))");
        let r = smatch_score(&a, &a, 4, 0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.matched_triples, 7);
        assert_eq!(smatch_brute_force(&a, &a).unwrap().f1, 1.0);
    }

    #[test]
    fn dog_versus_cat() {
        let r = smatch_score(&g("(z0 / dog)"), &g("(z0 / cat)"), 4, 1);
        assert_eq!(r.matched_triples, 1);
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn disjoint_vocabularies_match_only_root() {
        let a = g("(a / sit-01 :ARG1 (b / boat) :location (c / dock))");
        let b = g("(x / eat-01 :ARG0 (y / cat) :manner (z / slow))");
        let r = smatch_brute_force(&a, &b).unwrap();
        assert_eq!(r.matched_triples, 1);
    }

    #[test]
    fn brute_force_guard() {
        let chain = |n: usize| {
            let mut s = String::new();
            for i in 0..n {
                s.push_str(&format!("(v{i} / dog :mod "));
            }
            s.push_str("(last / cat)");
            s.push_str(&")".repeat(n));
            g(&s)
        };
        assert!(smatch_brute_force(&chain(8), &chain(8)).is_err());
        assert!(smatch_brute_force(&chain(6), &chain(8)).is_ok());
    }

    #[test]
    fn asymmetric_sizes() {
        let a = g("(z0 / dog)");
        let b = g("(x / and :op1 (y / dog) :op2 (z / cat))");
        let h = smatch_score(&a, &b, 4, 3);
        let bf = smatch_brute_force(&a, &b).unwrap();
        assert_eq!(h.matched_triples, bf.matched_triples);
        assert_eq!(bf.matched_triples, 1);
        let back = smatch_brute_force(&b, &a).unwrap();
        assert_eq!(back.matched_triples, 1);
        assert_eq!(back.precision, bf.recall);
    }

    #[test]
    fn distance_matrix_shape() {
        let a = g("(z0 / dog)");
        let b = g("(z0 / cat)");
        let d = distance_matrix(&[a.clone(), b], 4, 0);
        assert_eq!(d.rows(), &[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let same = distance_matrix(&[a.clone(), a.clone(), a], 4, 0);
        assert!(same.rows().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn mapping_is_injective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_graph(&mut rng, 7);
            let b = random_graph(&mut rng, 7);
            let r = smatch_score(&a, &b, 2, 5);
            let images: HashSet<_> = r.mapping.values().collect();
            assert_eq!(images.len(), r.mapping.len());
            assert!((0.0..=1.0).contains(&r.f1));
        }
    }

    #[test]
    fn more_restarts_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..30 {
            let a = random_graph(&mut rng, 9);
            let b = random_graph(&mut rng, 9);
            let mut last = 0.0;
            for r in 1..=5 {
                let f = smatch_score(&a, &b, r, seed).f1;
                assert!(f >= last);
                last = f;
            }
        }
    }

    #[test]
    fn matrix_validation() {
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, 0.2], vec![0.3, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![0.1]]).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, 0.2], vec![0.2, 0.0]]).is_ok());
    }
}
