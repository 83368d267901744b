#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use ssa_core::amr::{Attribute, Edge, Node};
use ssa_core::grounding::BoxSet;
use ssa_core::{AmrGraph, BBox, EmbeddingStore, VgAmr};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

const ENTITIES: [&[&str]; 7] = [
    &["boat", "ship"],
    &["man", "guy"],
    &["dog", "puppy"],
    &["dock", "pier"],
    &["house", "home"],
    &["tree"],
    &["ball"],
];
const PREDICATES: [&str; 5] = ["sit-01", "hold-01", "stand-01", "chase-01", "watch-01"];
const MODIFIERS: [&str; 3] = ["red", "small", "wooden"];

/// Synonyms share one axis; every other word has its own.
pub fn scene_store() -> EmbeddingStore {
    let words: Vec<Vec<&str>> = ENTITIES
        .iter()
        .map(|e| e.to_vec())
        .chain(PREDICATES.iter().map(|p| vec![p.split('-').next().unwrap()]))
        .chain(MODIFIERS.iter().map(|m| vec![*m]))
        .collect();
    let dim = words.len();
    let mut pairs = Vec::new();
    for (axis, group) in words.iter().enumerate() {
        for w in group {
            let mut v = vec![0.0f32; dim];
            v[axis] = 1.0;
            pairs.push((w.to_string(), v));
        }
    }
    EmbeddingStore::from_pairs(pairs)
}

fn random_box(rng: &mut impl Rng, w: u32, h: u32) -> BBox {
    let x1 = rng.gen_range(0..w - 1);
    let y1 = rng.gen_range(0..h - 1);
    let x2 = rng.gen_range(x1 + 1..=w);
    let y2 = rng.gen_range(y1 + 1..=h);
    BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)
}

pub fn random_boxes(rng: &mut impl Rng, w: u32, h: u32, max: usize) -> BoxSet {
    (0..rng.gen_range(0..=max)).map(|_| random_box(rng, w, h)).collect()
}

/// Captions of one synthetic image: each describes one event over a shared
/// set of boxed entities, with random synonym choices and some nodes left
/// unaligned.
pub fn random_scene(rng: &mut impl Rng, captions: usize) -> Vec<VgAmr> {
    let mut kinds: Vec<usize> = (0..ENTITIES.len()).collect();
    kinds.shuffle(rng);
    let present: Vec<(usize, BBox)> =
        kinds[..rng.gen_range(3..=5)].iter().map(|&k| (k, random_box(rng, 100, 100))).collect();
    (0..captions)
        .map(|_| {
            let mut nodes = Vec::new();
            let mut edges = Vec::new();
            let mut attributes = Vec::new();
            let mut grounded = Vec::new();
            let pred = PREDICATES.choose(rng).unwrap();
            nodes.push(Node::new("p", *pred));
            let mut picked = present.clone();
            picked.shuffle(rng);
            let roles = [":ARG0", ":ARG1", ":location"];
            let n_args = rng.gen_range(1..=3.min(picked.len()));
            for (i, (kind, bx)) in picked[..n_args].iter().enumerate() {
                let var = format!("e{i}");
                nodes.push(Node::new(var.clone(), *ENTITIES[*kind].choose(rng).unwrap()));
                edges.push(Edge::new("p", roles[i], var.clone()));
                if rng.gen_bool(0.85) {
                    grounded.push((var.clone(), *bx));
                }
                if rng.gen_bool(0.25) {
                    let m = format!("m{i}");
                    nodes.push(Node::new(m.clone(), *MODIFIERS.choose(rng).unwrap()));
                    edges.push(Edge::new(var.clone(), ":mod", m));
                }
            }
            if rng.gen_bool(0.15) {
                attributes.push(Attribute::new("p", ":polarity", "-"));
            }
            let graph = AmrGraph::new("p", nodes, edges, attributes).expect("scene graph is valid");
            let mut g = VgAmr::ungrounded(graph);
            for (v, b) in grounded {
                g.grounding.entry(v).or_default().insert(b);
            }
            g
        })
        .collect()
}

/// Pairs of distinct grounded nodes with equal boxes and a synonym pair at
/// or above `threshold`. Labels without embeddings match only themselves.
pub fn redundant_pairs(g: &VgAmr, store: &EmbeddingStore, threshold: f64) -> Vec<(String, String)> {
    let grounded: Vec<&String> = g.grounding.keys().filter(|v| g.is_grounded(v)).collect();
    let mut out = Vec::new();
    for (i, u) in grounded.iter().enumerate() {
        for v in &grounded[i + 1..] {
            if g.grounding[*u] != g.grounding[*v] {
                continue;
            }
            let similar = g.labels(u).iter().any(|a| {
                g.labels(v).iter().any(|b| a == b || store.label_similarity(a, b).is_some_and(|s| s >= threshold))
            });
            if similar {
                out.push((u.to_string(), v.to_string()));
            }
        }
    }
    out
}

/// Pixels whose centre lies in some box.
pub fn pixel_coverage(boxes: &BoxSet, w: u32, h: u32) -> f64 {
    let mut hit = 0u64;
    for y in 0..h {
        for x in 0..w {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if boxes.iter().any(|b| b.x1 <= cx && cx < b.x2 && b.y1 <= cy && cy < b.y2) {
                hit += 1;
            }
        }
    }
    hit as f64 / (w as f64 * h as f64)
}

/// Best assignment total by enumerating injective maps of the smaller side.
pub fn brute_force_assignment(sim: &[Vec<f64>]) -> f64 {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let t: Vec<Vec<f64>>;
    let m = if rows <= cols {
        sim
    } else {
        t = (0..cols).map(|j| (0..rows).map(|i| sim[i][j]).collect()).collect();
        &t
    };
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == m.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(m[row][j] + go(m, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(m, 0, &mut vec![false; m[0].len()])
}

pub fn variance(counts: &[usize]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n
}

pub fn string_set<I: IntoIterator<Item = S>, S: Into<String>>(xs: I) -> BTreeSet<String> {
    xs.into_iter().map(Into::into).collect()
}
