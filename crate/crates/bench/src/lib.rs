//! Seeded input generators for the criterion benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssa_core::grounding::BoxSet;
use ssa_core::BBox;

const WORDS: [&str; 24] = [
    "a", "the", "man", "woman", "dog", "boat", "red", "small", "sits", "runs", "holds", "on", "near", "dock",
    "house", "tree", "ball", "grass", "water", "with", "umbrella", "street", "old", "blue",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn captions(rng: &mut impl Rng, count: usize, len: usize) -> Vec<String> {
    (0..count)
        .map(|_| (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" "))
        .collect()
}

pub fn similarity_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
}

pub fn boxes(rng: &mut impl Rng, count: usize, w: f64, h: f64) -> BoxSet {
    (0..count)
        .map(|_| {
            let (x1, y1) = (rng.gen_range(0.0..w - 1.0), rng.gen_range(0.0..h - 1.0));
            BBox::new(x1, y1, rng.gen_range(x1 + 1.0..=w), rng.gen_range(y1 + 1.0..=h))
        })
        .collect()
}
