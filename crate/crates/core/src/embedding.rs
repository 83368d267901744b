//! Word vectors in the plain-text GloVe layout: `word v1 v2 ... vd` per line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::amr::strip_sense;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: `{token}` is not a number")]
    BadNumber { line: usize, token: String },
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dimension: usize,
    table: HashMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut store = EmbeddingStore::default();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vector = parts
                .map(|t| t.parse::<f32>().map_err(|_| EmbeddingError::BadNumber { line: i + 1, token: t.into() }))
                .collect::<Result<Vec<_>, _>>()?;
            if store.table.is_empty() {
                store.dimension = vector.len();
            }
            if vector.len() != store.dimension || vector.is_empty() {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 1,
                    expected: store.dimension,
                    found: vector.len(),
                });
            }
            store.table.entry(word.to_lowercase()).or_insert(vector);
        }
        if store.table.is_empty() {
            return Err(EmbeddingError::EmptyFile);
        }
        Ok(store)
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: AsRef<str>,
    {
        let mut store = EmbeddingStore::default();
        for (w, v) in pairs {
            if store.table.is_empty() {
                store.dimension = v.len();
            }
            assert_eq!(v.len(), store.dimension, "vector for {} has the wrong dimension", w.as_ref());
            store.table.insert(w.as_ref().to_lowercase(), v);
        }
        store
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.table.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    /// Cosine similarity, `None` when either word is missing.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.get(a)?, self.get(b)?))
    }

    /// Similarity of two words or AMR concept labels. Sense suffixes are
    /// ignored, equal labels score 1 even when out of vocabulary, and
    /// hyphenated labels fall back to the mean of their known parts.
    pub fn label_similarity(&self, a: &str, b: &str) -> Option<f64> {
        let a = strip_sense(a).to_lowercase();
        let b = strip_sense(b).to_lowercase();
        if a == b {
            return Some(1.0);
        }
        Some(cosine(&self.label_vector(&a)?, &self.label_vector(&b)?))
    }

    /// Whether [`label_similarity`](Self::label_similarity) can embed `label`.
    pub fn knows_label(&self, label: &str) -> bool {
        self.label_vector(&strip_sense(label).to_lowercase()).is_some()
    }

    fn label_vector(&self, label: &str) -> Option<Vec<f32>> {
        if let Some(v) = self.get(label) {
            return Some(v.to_vec());
        }
        let parts: Vec<&[f32]> = label.split('-').filter_map(|p| self.get(p)).collect();
        if parts.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.dimension];
        for p in &parts {
            for (m, x) in mean.iter_mut().zip(p.iter()) {
                *m += x / parts.len() as f32;
            }
        }
        Some(mean)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_two_by_three() {
        let s = EmbeddingStore::parse("boat 1 0 0\nDock 0 1 0.5\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dimension(), 3);
        assert!(s.contains("dock"));
        assert!((s.cosine("boat", "boat").unwrap() - 1.0).abs() < 1e-12);
        assert!((s.cosine("DOCK", "dock").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.cosine("boat", "dock"), Some(0.0));
        assert_eq!(s.cosine("boat", "ship"), None);
    }

    #[test]
    fn mixed_dimensions_fail() {
        assert!(matches!(
            EmbeddingStore::parse("a 1 2 3\nb 1 2\n"),
            Err(EmbeddingError::DimensionMismatch { line: 2, expected: 3, found: 2 })
        ));
        assert!(matches!(EmbeddingStore::parse("\n\n"), Err(EmbeddingError::EmptyFile)));
        assert!(matches!(EmbeddingStore::parse("a 1 x"), Err(EmbeddingError::BadNumber { .. })));
    }

    #[test]
    fn label_similarity_rules() {
        let s = EmbeddingStore::from_pairs([("sit", vec![1.0, 0.0]), ("rest", vec![1.0, 1.0])]);
        assert_eq!(s.label_similarity("sit-01", "sit-02"), Some(1.0));
        assert_eq!(s.label_similarity("walrus", "walrus"), Some(1.0));
        assert_eq!(s.label_similarity("walrus", "sit"), None);
        let c = s.label_similarity("sit-01", "rest-01").unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(s.label_similarity("sit-rest", "rest").unwrap() > c);
    }
}
