//! Visual grounding of AMR nodes.
//!
//! A caption arrives with two alignments: AMR variables to token spans (from
//! the text-to-AMR parser) and token spans to image boxes (from the dataset).
//! Joining them on overlapping spans yields a [`VgAmr`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::amr::{parse_alignments, parse_penman, AmrError, AmrGraph};

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("AMR of caption {caption_id}: {error}")]
    Parse { caption_id: String, error: AmrError },
    #[error("caption {caption_id}: token span [{start},{end}) outside 0..{len}")]
    SpanOutOfRange { caption_id: String, start: usize, end: usize, len: usize },
    #[error("caption {caption_id}: box {bbox:?} outside a {width}x{height} image or degenerate")]
    BoxOutOfRange { caption_id: String, bbox: BBox, width: f64, height: f64 },
    #[error("caption {caption_id}: alignment refers to unknown variable `{var}`")]
    UnknownVariable { caption_id: String, var: String },
}

/// Axis-aligned box in pixel coordinates, corners `(x1, y1)`–`(x2, y2)`.
///
/// Serialized as `[x1, y1, x2, y2]`; an object with those four keys is also
/// accepted on input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.is_valid() && self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl Eq for BBox {}

impl Ord for BBox {
    fn cmp(&self, other: &Self) -> Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for BBox {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Array([f64; 4]),
            Object { x1: f64, y1: f64, x2: f64, y2: f64 },
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Array([x1, y1, x2, y2]) | Repr::Object { x1, y1, x2, y2 } => BBox { x1, y1, x2, y2 },
        })
    }
}

pub type BoxSet = BTreeSet<BBox>;

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl From<(usize, usize)> for TokenSpan {
    fn from((start, end): (usize, usize)) -> Self {
        TokenSpan { start, end }
    }
}

impl From<TokenSpan> for (usize, usize) {
    fn from(s: TokenSpan) -> Self {
        (s.start, s.end)
    }
}

impl TokenSpan {
    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub token_span: TokenSpan,
    pub entity_id: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub variable: String,
    pub token_span: TokenSpan,
}

/// One annotated caption, one per JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedCaptionRecord {
    pub image_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub caption_id: String,
    pub tokens: Vec<String>,
    pub groundings: Vec<Grounding>,
    pub amr: String,
    /// When empty, alignments are read from a `# ::alignments` line in `amr`.
    #[serde(default)]
    pub alignments: Vec<Alignment>,
}

impl GroundedCaptionRecord {
    pub fn caption(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn validate(&self) -> Result<(), GroundingError> {
        let len = self.tokens.len();
        let check_span = |s: &TokenSpan| {
            if s.start >= s.end || s.end > len {
                Err(GroundingError::SpanOutOfRange {
                    caption_id: self.caption_id.clone(),
                    start: s.start,
                    end: s.end,
                    len,
                })
            } else {
                Ok(())
            }
        };
        for g in &self.groundings {
            check_span(&g.token_span)?;
            for b in &g.boxes {
                if !b.within(self.image_width, self.image_height) {
                    return Err(GroundingError::BoxOutOfRange {
                        caption_id: self.caption_id.clone(),
                        bbox: *b,
                        width: self.image_width,
                        height: self.image_height,
                    });
                }
            }
        }
        for a in &self.alignments {
            check_span(&a.token_span)?;
        }
        Ok(())
    }

    /// Parsed graph plus effective alignments (sidecar field first, then the
    /// `# ::alignments` comment convention).
    pub fn parsed(&self) -> Result<(AmrGraph, Vec<Alignment>), GroundingError> {
        let parse_err = |error| GroundingError::Parse { caption_id: self.caption_id.clone(), error };
        let mut comment_alignments = None;
        let body: String = self
            .amr
            .lines()
            .filter(|line| {
                let t = line.trim_start();
                if let Some(rest) = t.strip_prefix('#') {
                    if let Some(v) = rest.trim_start().strip_prefix("::alignments") {
                        comment_alignments = Some(v.trim().to_string());
                    }
                    false
                } else {
                    true
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let graph = parse_penman(&body).map_err(parse_err)?;
        let alignments = if !self.alignments.is_empty() {
            self.alignments.clone()
        } else if let Some(v) = comment_alignments {
            parse_alignments(&v)
                .map_err(parse_err)?
                .into_iter()
                .map(|(variable, span)| Alignment { variable, token_span: span.into() })
                .collect()
        } else {
            Vec::new()
        };
        Ok((graph, alignments))
    }
}

/// AMR graph with per-node box sets and synonym lists.
#[derive(Debug, Clone, PartialEq)]
pub struct VgAmr {
    pub graph: AmrGraph,
    pub grounding: BTreeMap<String, BoxSet>,
    /// First entry is the node's concept.
    pub synonyms: BTreeMap<String, Vec<String>>,
}

impl VgAmr {
    /// Wraps a graph with no grounding and singleton synonym lists.
    pub fn ungrounded(graph: AmrGraph) -> Self {
        let synonyms = graph.nodes().map(|n| (n.variable.clone(), vec![n.concept.clone()])).collect();
        VgAmr { graph, grounding: BTreeMap::new(), synonyms }
    }

    pub fn is_grounded(&self, var: &str) -> bool {
        self.grounding.get(var).is_some_and(|b| !b.is_empty())
    }

    pub fn boxes(&self, var: &str) -> Option<&BoxSet> {
        self.grounding.get(var).filter(|b| !b.is_empty())
    }

    /// Synonym labels of `var`, falling back to its concept.
    pub fn labels(&self, var: &str) -> Vec<&str> {
        match self.synonyms.get(var) {
            Some(list) if !list.is_empty() => list.iter().map(String::as_str).collect(),
            _ => self.graph.concept(var).into_iter().collect(),
        }
    }

    /// Union of every node's boxes.
    pub fn all_boxes(&self) -> BoxSet {
        self.grounding.values().flatten().copied().collect()
    }

    /// Checks the grounding and synonym invariants.
    pub fn check(&self) -> Result<(), String> {
        for (v, boxes) in &self.grounding {
            if !self.graph.contains(v) {
                return Err(format!("grounded variable {v} is not in the graph"));
            }
            if boxes.is_empty() {
                return Err(format!("grounded variable {v} has no boxes"));
            }
        }
        for n in self.graph.nodes() {
            match self.synonyms.get(&n.variable) {
                Some(list) if list.first() == Some(&n.concept) => {}
                _ => return Err(format!("synonyms of {} do not start with {}", n.variable, n.concept)),
            }
        }
        Ok(())
    }

    /// Applies a variable renaming to the graph and both side tables.
    pub(crate) fn renamed(&self, map: &BTreeMap<String, String>) -> VgAmr {
        let r = |v: &String| map.get(v).cloned().unwrap_or_else(|| v.clone());
        VgAmr {
            graph: self.graph.renamed(map),
            grounding: self.grounding.iter().map(|(k, v)| (r(k), v.clone())).collect(),
            synonyms: self.synonyms.iter().map(|(k, v)| (r(k), v.clone())).collect(),
        }
    }
}

/// Grounds node `v` to box `b` iff some alignment of `v` overlaps some
/// grounding span carrying `b`. Identical boxes collapse.
pub fn build_vgamr(record: &GroundedCaptionRecord) -> Result<VgAmr, GroundingError> {
    record.validate()?;
    let (graph, alignments) = record.parsed()?;
    let mut grounding: BTreeMap<String, BoxSet> = BTreeMap::new();
    for a in &alignments {
        if !graph.contains(&a.variable) {
            return Err(GroundingError::UnknownVariable {
                caption_id: record.caption_id.clone(),
                var: a.variable.clone(),
            });
        }
        if a.token_span.end > record.tokens.len() || a.token_span.start >= a.token_span.end {
            return Err(GroundingError::SpanOutOfRange {
                caption_id: record.caption_id.clone(),
                start: a.token_span.start,
                end: a.token_span.end,
                len: record.tokens.len(),
            });
        }
        for g in &record.groundings {
            if a.token_span.overlaps(&g.token_span) && !g.boxes.is_empty() {
                grounding.entry(a.variable.clone()).or_default().extend(g.boxes.iter().copied());
            }
        }
    }
    let mut vg = VgAmr::ungrounded(graph);
    vg.grounding = grounding;
    Ok(vg)
}
