//! Evaluation of controllable captioning output.
//!
//! Content control is scored by soft noun IoU and the hallucination rate,
//! diversity by distinct n-grams, self-CIDEr and best-5 subsets, length
//! control by MAE and level precision. All scores are fractions in `[0, 1]`
//! except `L`, which is measured in words.

mod content;
mod diversity;
mod hungarian;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use content::{content_iou, AnnotatedNouns, LexiconNouns, MatchResult, NounExtractor};
pub use diversity::{
    best5_diversity, best_k_diversity, best_k_diversity_brute, cider_kernel, distinct_ngram_diversity, self_cider,
};
pub use hungarian::hungarian_match;
pub use render::{bands_csv, parse_bands_csv, render_table};

use crate::augment::{bin_index, uniform_bins, ControlCaptionPair, LengthLevel};
use crate::embedding::EmbeddingStore;
use crate::text::word_count;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("noun lexicon unavailable: {0}")]
    LexiconMissing(String),
    #[error("no noun annotation for caption `{0}`")]
    MissingAnnotation(String),
    #[error("need at least {needed} captions, found {found}")]
    TooFewCaptions { needed: usize, found: usize },
    #[error("similarity kernel is all zero")]
    DegenerateKernel,
    #[error("{targets} length targets but {outputs} outputs")]
    LengthMismatch { targets: usize, outputs: usize },
    #[error("harmonic mean needs positive values, got {0}")]
    NonPositiveValue(f64),
    #[error("expected {expected} captions per image, found {found}")]
    WrongSetSize { expected: usize, found: usize },
    #[error("malformed report: {0}")]
    Schema(String),
}

/// `n / sum(1 / v)`.
pub fn harmonic_mean(values: &[f64]) -> Result<f64, MetricsError> {
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(MetricsError::NonPositiveValue(bad));
    }
    if values.is_empty() {
        return Err(MetricsError::NonPositiveValue(0.0));
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// Mean absolute word-count error `L` and the percentage `LP` of outputs
/// whose length level equals the target's.
pub fn length_metrics<S: AsRef<str>>(targets: &[usize], outputs: &[S]) -> Result<(f64, f64), MetricsError> {
    if targets.len() != outputs.len() {
        return Err(MetricsError::LengthMismatch { targets: targets.len(), outputs: outputs.len() });
    }
    if targets.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut abs = 0.0;
    let mut hits = 0usize;
    for (&t, o) in targets.iter().zip(outputs) {
        let n = word_count(o.as_ref());
        abs += (t as f64 - n as f64).abs();
        if LengthLevel::of(n).is_some() && LengthLevel::of(n) == LengthLevel::of(t) {
            hits += 1;
        }
    }
    let k = targets.len() as f64;
    Ok((abs / k, 100.0 * hits as f64 / k))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub iou: Option<f64>,
    pub hal: Option<f64>,
    pub g: Option<f64>,
    pub sc: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub l: Option<f64>,
    pub lp: Option<f64>,
    pub h: Option<f64>,
    pub best5_d1: Option<f64>,
    pub best5_d2: Option<f64>,
}

impl Scores {
    fn fields(&self) -> [Option<f64>; 11] {
        [
            self.iou, self.hal, self.g, self.sc, self.d1, self.d2, self.l, self.lp, self.h, self.best5_d1,
            self.best5_d2,
        ]
    }

    fn from_fields(f: [Option<f64>; 11]) -> Self {
        let [iou, hal, g, sc, d1, d2, l, lp, h, best5_d1, best5_d2] = f;
        Scores { iou, hal, g, sc, d1, d2, l, lp, h, best5_d1, best5_d2 }
    }

    /// Harmonic mean of IoU, G and self-CIDEr when all three are positive.
    fn with_h(mut self) -> Self {
        self.h = match (self.iou, self.g, self.sc) {
            (Some(a), Some(b), Some(c)) => harmonic_mean(&[a, b, c]).ok(),
            _ => None,
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub captions: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Share of all evaluated captions, in percent.
    pub percent: f64,
    pub mean_iou: Option<f64>,
    pub mean_hal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub aggregate: Scores,
    pub per_image: Vec<ImageMetrics>,
    pub coverage_bands: Vec<BandStats>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Groups `(coverage, iou, hal)` samples into equal-width coverage bands.
pub fn coverage_band_report(samples: &[(f64, f64, f64)], bands: usize) -> Vec<BandStats> {
    let edges = uniform_bins(bands);
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); edges.len() - 1];
    for &(c, iou, hal) in samples {
        groups[bin_index(&edges, c)].push((iou, hal));
    }
    let total = samples.len();
    groups
        .iter()
        .enumerate()
        .map(|(b, g)| BandStats {
            lower: edges[b],
            upper: edges[b + 1],
            count: g.len(),
            percent: if total == 0 { 0.0 } else { 100.0 * g.len() as f64 / total as f64 },
            mean_iou: mean(g.iter().map(|x| x.0)),
            mean_hal: mean(g.iter().map(|x| x.1)),
        })
        .collect()
}

/// Scores generated captions against the controls they were produced for.
///
/// Each pair's `caption` is the generated text, its `control` the requested
/// signal and `quality` the fluency score. Metrics are computed per image
/// and averaged; set-level metrics that an image cannot support (self-CIDEr
/// with one caption, best-5 without exactly ten) are left out of its mean.
pub fn evaluate(
    pairs: &[ControlCaptionPair],
    store: &EmbeddingStore,
    nouns: &dyn NounExtractor,
    bands: usize,
) -> Result<MetricReport, MetricsError> {
    let mut by_image: BTreeMap<&str, Vec<&ControlCaptionPair>> = BTreeMap::new();
    for p in pairs {
        by_image.entry(p.image_id.as_str()).or_default().push(p);
    }
    let mut per_image = Vec::new();
    let mut samples = Vec::new();
    for (id, group) in by_image {
        let mut ious = Vec::new();
        let mut hals = Vec::new();
        for p in &group {
            let entities = p.control.entity_labels.iter().map(|e| e.to_lowercase()).collect();
            let m = content_iou(&nouns.nouns(&p.caption)?, &entities, store);
            samples.push((p.control.coverage, m.iou, m.hal));
            ious.push(m.iou);
            hals.push(m.hal);
        }
        let caps: Vec<&str> = group.iter().map(|p| p.caption.as_str()).collect();
        let targets: Vec<usize> = group.iter().map(|p| p.control.word_count_target).collect();
        let (l, lp) = length_metrics(&targets, &caps)?;
        let sc = if caps.len() >= 2 {
            match self_cider(&caps) {
                Ok(v) => Some(v),
                Err(MetricsError::DegenerateKernel) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let best5 = |n| (caps.len() == 10).then(|| best_k_diversity(&caps, 5, n));
        let scores = Scores {
            iou: mean(ious),
            hal: mean(hals),
            g: mean(group.iter().filter_map(|p| p.quality)),
            sc,
            d1: Some(distinct_ngram_diversity(&caps, 1)),
            d2: Some(distinct_ngram_diversity(&caps, 2)),
            l: Some(l),
            lp: Some(lp / 100.0),
            h: None,
            best5_d1: best5(1),
            best5_d2: best5(2),
        }
        .with_h();
        per_image.push(ImageMetrics { image_id: id.to_string(), captions: group.len(), scores });
    }
    let mut agg = [None; 11];
    for (k, slot) in agg.iter_mut().enumerate() {
        *slot = mean(per_image.iter().filter_map(|m| m.scores.fields()[k]));
    }
    let aggregate = Scores::from_fields(agg).with_h();
    Ok(MetricReport { aggregate, per_image, coverage_bands: coverage_band_report(&samples, bands) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_table_rows() {
        for (v, want) in [
            ([67.3, 64.4, 42.8], 55.8),
            ([77.6, 39.0, 67.4], 56.2),
            ([76.2, 73.0, 78.7], 75.9),
            ([54.0, 85.0, 78.6], 69.8),
        ] {
            assert!((harmonic_mean(&v).unwrap() - want).abs() <= 0.05);
        }
        assert!((harmonic_mean(&[0.4; 3]).unwrap() - 0.4).abs() < 1e-12);
        assert!(harmonic_mean(&[0.5, 0.0]).is_err());
        assert!(harmonic_mean(&[]).is_err());
    }

    #[test]
    fn length_hand_cases() {
        let (l, lp) = length_metrics(&[3, 2], &["one two three", "a b"]).unwrap();
        assert_eq!((l, lp), (0.0, 100.0));
        let twelve = "w ".repeat(12);
        let nineteen = "w ".repeat(19);
        let (l, lp) = length_metrics(&[10, 20], &[twelve, nineteen]).unwrap();
        assert_eq!((l, lp), (1.5, 50.0));
        assert!(length_metrics(&[1], &["a", "b"]).is_err());
    }

    #[test]
    fn bands_sum_to_hundred() {
        let b = coverage_band_report(&[(0.05, 1.0, 0.0); 4], 10);
        assert_eq!(b.len(), 10);
        assert_eq!(b[0].percent, 100.0);
        assert_eq!(b[0].mean_iou, Some(1.0));
        let b = coverage_band_report(&[(0.05, 0.2, 0.1), (0.5, 0.4, 0.3), (1.0, 0.6, 0.0)], 10);
        assert!((b.iter().map(|x| x.percent).sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(b[9].count, 1);
        assert_eq!(b[3].mean_iou, None);
    }
}
