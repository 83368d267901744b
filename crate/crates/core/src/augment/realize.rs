use std::collections::BTreeSet;

use super::AugmentError;
use crate::amr::{strip_sense, AmrGraph};
use crate::text::word_count;

/// Turns an AMR graph into a sentence.
pub trait CaptionGenerator: Send + Sync {
    fn realize(&self, graph: &AmrGraph) -> Result<String, AugmentError>;

    fn realize_batch(&self, graphs: &[AmrGraph]) -> Result<Vec<String>, AugmentError> {
        graphs.iter().map(|g| self.realize(g)).collect()
    }
}

/// Scores caption well-formedness in `[0, 1]`.
pub trait QualityScorer: Send + Sync {
    fn score(&self, caption: &str) -> Result<f64, AugmentError>;

    fn score_batch(&self, captions: &[&str]) -> Result<Vec<f64>, AugmentError> {
        captions.iter().map(|c| self.score(c)).collect()
    }
}

/// Same score for every caption.
#[derive(Debug, Clone, Copy)]
pub struct ConstScorer(pub f64);

impl QualityScorer for ConstScorer {
    fn score(&self, _: &str) -> Result<f64, AugmentError> {
        Ok(self.0)
    }
}

/// Scores with a plain function.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&str) -> f64 + Send + Sync> QualityScorer for FnScorer<F> {
    fn score(&self, caption: &str) -> Result<f64, AugmentError> {
        Ok((self.0)(caption))
    }
}

/// Length-based stand-in for a fluency model: `0.5 + 0.05 * min(words, 10)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGruenScorer;

impl MockGruenScorer {
    pub fn formula(caption: &str) -> f64 {
        (0.5 + 0.05 * word_count(caption).min(10) as f64).clamp(0.0, 1.0)
    }
}

impl QualityScorer for MockGruenScorer {
    fn score(&self, caption: &str) -> Result<f64, AugmentError> {
        Ok(Self::formula(caption))
    }
}

/// Deterministic template realizer.
///
/// Concepts are emitted depth-first from the root with sense suffixes
/// stripped. The subject (`:ARG0`, else `:ARG1`) and modifiers precede the
/// head, other arguments follow it, and a few roles get a preposition.
/// Conjunctions join their operands.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubGenerator;

impl CaptionGenerator for StubGenerator {
    fn realize(&self, graph: &AmrGraph) -> Result<String, AugmentError> {
        let mut visited = BTreeSet::new();
        let text = phrase(graph, graph.root(), &mut visited);
        if text.trim().is_empty() {
            return Err(AugmentError::EmptyOutput);
        }
        Ok(text)
    }
}

const PRE_ROLES: [&str; 4] = [":mod", ":quant", ":age", ":color"];

fn preposition(role: &str) -> Option<&'static str> {
    Some(match role {
        ":location" => "at",
        ":direction" | ":destination" => "to",
        ":source" => "from",
        ":instrument" | ":accompanier" => "with",
        ":beneficiary" | ":purpose" => "for",
        ":poss" | ":part" | ":part-of" => "of",
        ":topic" => "about",
        ":time" => "during",
        _ => return None,
    })
}

fn word(concept: &str) -> String {
    strip_sense(concept).replace('-', " ")
}

fn phrase(g: &AmrGraph, v: &str, visited: &mut BTreeSet<String>) -> String {
    let concept = g.concept(v).unwrap_or(v);
    if !visited.insert(v.to_string()) {
        return word(concept);
    }
    let mut out: Vec<_> = g.outgoing(v).map(|e| (e.role.clone(), e.target.clone())).collect();
    out.sort();
    let joiner = match concept {
        "and" => Some(" and "),
        "or" => Some(" or "),
        "multi-sentence" => Some(" . "),
        _ => None,
    };
    if let Some(j) = joiner {
        let parts: Vec<String> = out.iter().map(|(_, t)| phrase(g, t, visited)).filter(|p| !p.is_empty()).collect();
        if !parts.is_empty() {
            return parts.join(j);
        }
    }
    let subject_role = if out.iter().any(|(r, _)| r == ":ARG0") { ":ARG0" } else { ":ARG1" };
    let (mut subject, mut pre, mut post) = (Vec::new(), Vec::new(), Vec::new());
    for a in g.attributes_of(v) {
        let val = a.value.trim_matches('"');
        match (a.role.as_str(), val) {
            (":polarity", "-") => pre.push("not".to_string()),
            _ => post.push(val.to_string()),
        }
    }
    let mut subject_taken = false;
    for (role, t) in &out {
        let p = phrase(g, t, visited);
        if !subject_taken && role == subject_role {
            subject.push(p);
            subject_taken = true;
        } else if PRE_ROLES.contains(&role.as_str()) {
            pre.push(p);
        } else if let Some(prep) = preposition(role) {
            post.push(format!("{prep} {p}"));
        } else {
            post.push(p);
        }
    }
    let mut words = subject;
    words.extend(pre);
    words.push(word(concept));
    words.extend(post);
    words.retain(|w| !w.is_empty());
    words.join(" ")
}
