//! Turning sampled subgraphs into control/caption pairs, and mixing them
//! with the original data.

mod coverage;
mod mix;
mod realize;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coverage::compute_coverage;
pub use mix::{bin_index, mix_datasets, uniform_bins, MixSpec, MixStrategy};
pub use realize::{
    CaptionGenerator, ConstScorer, FnScorer, MockGruenScorer, QualityScorer, StubGenerator,
};

use crate::amr::{is_sense_label, strip_sense};
use crate::grounding::{BBox, VgAmr};
use crate::text::word_count;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("sample has no grounded node")]
    NoGroundedNodes,
    #[error("caption generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("caption generator returned empty text")]
    EmptyOutput,
    #[error("quality scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("invalid mix specification: {0}")]
    BadMixSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthLevel {
    A,
    B,
    C,
    D,
    E,
}

impl LengthLevel {
    pub const ALL: [LengthLevel; 5] = [LengthLevel::A, LengthLevel::B, LengthLevel::C, LengthLevel::D, LengthLevel::E];

    /// A: 1-9 words, B: 10-19, C: 20-29, D: 30-39, E: 40 or more.
    /// Empty text has no level.
    pub fn of(words: usize) -> Option<LengthLevel> {
        Some(match words {
            0 => return None,
            1..=9 => LengthLevel::A,
            10..=19 => LengthLevel::B,
            20..=29 => LengthLevel::C,
            30..=39 => LengthLevel::D,
            _ => LengthLevel::E,
        })
    }

    /// Inclusive word-count range; `E` is open above.
    pub fn range(self) -> (usize, Option<usize>) {
        match self {
            LengthLevel::A => (1, Some(9)),
            LengthLevel::B => (10, Some(19)),
            LengthLevel::C => (20, Some(29)),
            LengthLevel::D => (30, Some(39)),
            LengthLevel::E => (40, None),
        }
    }
}

impl fmt::Display for LengthLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub fn length_level(words: usize) -> Option<LengthLevel> {
    LengthLevel::of(words)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub boxes: BTreeSet<BBox>,
    pub entity_labels: BTreeSet<String>,
    pub coverage: f64,
    pub length_level: Option<LengthLevel>,
    pub word_count_target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbs: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Original,
    Ssa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCaptionPair {
    pub image_id: String,
    pub caption: String,
    pub control: ControlSignal,
    pub source: PairSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    /// PENMAN of the graph the caption was realized from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amr: Option<String>,
}

/// Control signal of a grounded graph and the caption realized from it.
///
/// Boxes are the union over grounded nodes, entity labels their concepts.
/// Verbs are the sense-stripped predicate concepts.
pub fn extract_control(g: &VgAmr, width: f64, height: f64, caption: &str) -> Result<ControlSignal, AugmentError> {
    let mut boxes = BTreeSet::new();
    let mut entity_labels = BTreeSet::new();
    for (v, bx) in &g.grounding {
        if bx.is_empty() {
            continue;
        }
        boxes.extend(bx.iter().copied());
        entity_labels.insert(strip_sense(g.graph.concept(v).unwrap_or(v)).to_string());
    }
    if boxes.is_empty() {
        return Err(AugmentError::NoGroundedNodes);
    }
    Ok(control_from(boxes, entity_labels, predicate_verbs(g), width, height, caption))
}

/// Control signal of an original annotated caption. Unlike SSA samples an
/// original caption may have no grounded node; its box set is then empty.
pub fn original_control(g: &VgAmr, width: f64, height: f64, caption: &str) -> ControlSignal {
    match extract_control(g, width, height, caption) {
        Ok(c) => c,
        Err(_) => control_from(BTreeSet::new(), BTreeSet::new(), predicate_verbs(g), width, height, caption),
    }
}

fn predicate_verbs(g: &VgAmr) -> Option<Vec<String>> {
    let mut verbs: Vec<String> = g
        .graph
        .traversal_order()
        .iter()
        .filter(|v| g.graph.is_predicate(v))
        .filter_map(|v| g.graph.concept(v))
        .filter(|c| is_sense_label(c))
        .map(|c| strip_sense(c).to_string())
        .collect();
    verbs.dedup();
    (!verbs.is_empty()).then_some(verbs)
}

fn control_from(
    boxes: BTreeSet<BBox>,
    entity_labels: BTreeSet<String>,
    verbs: Option<Vec<String>>,
    width: f64,
    height: f64,
    caption: &str,
) -> ControlSignal {
    let n = word_count(caption);
    ControlSignal {
        coverage: compute_coverage(&boxes, width, height),
        boxes,
        entity_labels,
        length_level: LengthLevel::of(n),
        word_count_target: n,
        verbs,
    }
}

/// Splits pairs at `threshold` on the scorer's value and records each score.
pub fn filter_by_quality(
    pairs: Vec<ControlCaptionPair>,
    scorer: &dyn QualityScorer,
    threshold: f64,
) -> Result<(Vec<ControlCaptionPair>, Vec<ControlCaptionPair>), AugmentError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AugmentError::BadThreshold(threshold));
    }
    let captions: Vec<&str> = pairs.iter().map(|p| p.caption.as_str()).collect();
    let scores = scorer.score_batch(&captions)?;
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (mut p, s) in pairs.into_iter().zip(scores) {
        p.quality = Some(s);
        if s >= threshold {
            kept.push(p);
        } else {
            dropped.push(p);
        }
    }
    Ok((kept, dropped))
}
