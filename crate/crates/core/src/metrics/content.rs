use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{hungarian_match, MetricsError};
use crate::embedding::EmbeddingStore;
use crate::text::words;

/// Extracts the nouns of a caption.
pub trait NounExtractor: Send + Sync {
    fn nouns(&self, caption: &str) -> Result<BTreeSet<String>, MetricsError>;
}

/// Nouns are the caption words listed in a lexicon.
#[derive(Debug, Clone, Default)]
pub struct LexiconNouns {
    lexicon: BTreeSet<String>,
}

impl LexiconNouns {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        LexiconNouns { lexicon: words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect() }
    }

    /// One noun per line; `#` starts a comment line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| MetricsError::LexiconMissing(format!("{}: {e}", path.display())))?;
        Ok(Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#'))))
    }

    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }
}

impl NounExtractor for LexiconNouns {
    fn nouns(&self, caption: &str) -> Result<BTreeSet<String>, MetricsError> {
        Ok(words(caption).into_iter().filter(|w| self.lexicon.contains(w)).collect())
    }
}

/// Nouns supplied with the data, keyed by caption text.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedNouns {
    by_caption: HashMap<String, BTreeSet<String>>,
}

impl AnnotatedNouns {
    pub fn insert(&mut self, caption: &str, nouns: impl IntoIterator<Item = String>) {
        self.by_caption.entry(caption.to_string()).or_default().extend(nouns.into_iter().map(|n| n.to_lowercase()));
    }
}

impl NounExtractor for AnnotatedNouns {
    fn nouns(&self, caption: &str) -> Result<BTreeSet<String>, MetricsError> {
        self.by_caption
            .get(caption)
            .cloned()
            .ok_or_else(|| MetricsError::MissingAnnotation(caption.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// (generated noun, control entity, similarity)
    pub assignment: Vec<(String, String, f64)>,
    pub intersection: f64,
    pub iou: f64,
    pub hal: f64,
}

/// Soft IoU and hallucination rate between generated nouns and control
/// entities. Similarities are embedding cosines clamped to `[0, 1]`; a word
/// without an embedding matches only itself.
pub fn content_iou(nouns: &BTreeSet<String>, entities: &BTreeSet<String>, store: &EmbeddingStore) -> MatchResult {
    let n: Vec<&String> = nouns.iter().collect();
    let e: Vec<&String> = entities.iter().collect();
    let sim: Vec<Vec<f64>> = n
        .iter()
        .map(|a| e.iter().map(|b| store.label_similarity(a, b).unwrap_or(0.0).clamp(0.0, 1.0)).collect())
        .collect();
    let (pairs, total) = hungarian_match(&sim);
    let assignment = pairs.iter().map(|&(i, j)| (n[i].clone(), e[j].clone(), sim[i][j])).collect();
    let union = n.len() as f64 + e.len() as f64 - total;
    let iou = if union > 0.0 { (total / union).clamp(0.0, 1.0) } else { 0.0 };
    let hal = if n.is_empty() { 0.0 } else { ((n.len() as f64 - total) / n.len() as f64).clamp(0.0, 1.0) };
    MatchResult { assignment, intersection: total, iou, hal }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lexicon_extraction() {
        let lx = LexiconNouns::new(["boat", "Dock"]);
        assert_eq!(lx.nouns("A boat sits at the dock. The boat!").unwrap(), set(&["boat", "dock"]));
        assert!(lx.nouns("").unwrap().is_empty());
        assert!(matches!(LexiconNouns::load("/nonexistent/nouns.txt"), Err(MetricsError::LexiconMissing(_))));
    }

    #[test]
    fn annotated_extraction() {
        let mut a = AnnotatedNouns::default();
        a.insert("a dog", ["Dog".to_string()]);
        assert_eq!(a.nouns("a dog").unwrap(), set(&["dog"]));
        assert!(a.nouns("a cat").is_err());
    }

    #[test]
    fn iou_hand_cases() {
        let s = EmbeddingStore::from_pairs([("a", vec![1.0, 0.0]), ("b", vec![0.1, (1.0f32 - 0.01).sqrt()])]);
        let r = content_iou(&set(&["a"]), &set(&["b"]), &s);
        assert!((r.intersection - 0.1).abs() < 1e-6);
        assert!((r.iou - 0.1 / 1.9).abs() < 1e-6);
        assert!((r.hal - 0.9).abs() < 1e-6);

        let r = content_iou(&set(&["a", "b"]), &set(&["a", "b"]), &s);
        assert!((r.iou - 1.0).abs() < 1e-12);
        assert_eq!(r.hal, 0.0);

        let r = content_iou(&set(&["w"]), &set(&[]), &s);
        assert_eq!((r.intersection, r.iou, r.hal), (0.0, 0.0, 1.0));
        let r = content_iou(&set(&[]), &set(&[]), &s);
        assert_eq!((r.iou, r.hal), (0.0, 0.0));
    }
}
