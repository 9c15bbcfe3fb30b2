//! Span-level scoring: strict and lenient precision/recall/F1, confusion
//! matrices and inter-annotator agreement.

mod confusion;
mod matching;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use confusion::{confusion, confusion_note, ConfusionMatrix};
pub use matching::{match_lenient, match_spans, match_strict, Counts, MatchCounts, MatchMode, Span};
pub use report::{parse_report_json, render_report, report_csv, ReportFormat};

use crate::corpus::{AnnotatedNote, SymptomCategory};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("annotation layers cover different notes (only in first: {only_a:?}, only in second: {only_b:?})")]
    NoteSetMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),
}

/// Spans of one system or annotator, keyed by note id.
pub type NoteSpans = BTreeMap<String, Vec<Span>>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Scores {
    pub fn from_counts(c: &Counts) -> Scores {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Scores {
            precision,
            recall,
            f1: f1_from(precision, recall),
        }
    }

    pub fn from_pr(precision: f64, recall: f64) -> Scores {
        Scores {
            precision,
            recall,
            f1: f1_from(precision, recall),
        }
    }
}

/// Rounds half away from zero (half-up for the non-negative scores used here).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

/// Per-category and micro-averaged scores for one matching mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeReport {
    pub counts: MatchCounts,
    pub per_category: BTreeMap<SymptomCategory, Scores>,
    pub micro: Scores,
}

/// Scores counts; the micro average comes from summed counts.
pub fn score(counts: &MatchCounts) -> ModeReport {
    ModeReport {
        per_category: counts
            .per_category
            .iter()
            .map(|(c, n)| (*c, Scores::from_counts(n)))
            .collect(),
        micro: Scores::from_counts(&counts.total()),
        counts: counts.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub strict: ModeReport,
    pub lenient: ModeReport,
}

impl EvalReport {
    pub fn mode(&self, mode: MatchMode) -> &ModeReport {
        match mode {
            MatchMode::Strict => &self.strict,
            MatchMode::Lenient => &self.lenient,
        }
    }
}

fn scoped<'a>(spans: &'a [Span], categories: &'a [SymptomCategory]) -> Vec<Span> {
    spans
        .iter()
        .filter(|s| categories.contains(&s.category))
        .copied()
        .collect()
}

fn note_ids<'a>(gold: &'a NoteSpans, pred: &'a NoteSpans) -> BTreeSet<&'a str> {
    gold.keys().chain(pred.keys()).map(String::as_str).collect()
}

/// Counts matches over every note in either map; a note missing from one side
/// counts as having no spans there.
pub fn count_matches(
    gold: &NoteSpans,
    pred: &NoteSpans,
    mode: MatchMode,
    categories: &[SymptomCategory],
) -> MatchCounts {
    let mut counts = MatchCounts::zeroed(categories);
    let empty = Vec::new();
    for id in note_ids(gold, pred) {
        let g = scoped(gold.get(id).unwrap_or(&empty), categories);
        let p = scoped(pred.get(id).unwrap_or(&empty), categories);
        counts.merge(&match_spans(&g, &p, mode));
    }
    counts
}

/// Strict and lenient scores over the given categories.
pub fn evaluate(gold: &NoteSpans, pred: &NoteSpans, categories: &[SymptomCategory]) -> EvalReport {
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        strict: score(&count_matches(gold, pred, MatchMode::Strict, categories)),
        lenient: score(&count_matches(gold, pred, MatchMode::Lenient, categories)),
    }
}

/// Agreement between two annotation layers: `layer_a` is scored as the
/// reference and `layer_b` as the response. Both must cover the same notes.
pub fn agreement(
    layer_a: &NoteSpans,
    layer_b: &NoteSpans,
    mode: MatchMode,
    categories: &[SymptomCategory],
) -> Result<Scores, EvalError> {
    let only_a: Vec<String> = layer_a.keys().filter(|k| !layer_b.contains_key(*k)).cloned().collect();
    let only_b: Vec<String> = layer_b.keys().filter(|k| !layer_a.contains_key(*k)).cloned().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(EvalError::NoteSetMismatch { only_a, only_b });
    }
    let counts = count_matches(layer_a, layer_b, mode, categories);
    Ok(Scores::from_counts(&counts.total()))
}

/// Gold spans of a corpus, keyed by note id (every note gets an entry).
pub fn corpus_spans(corpus: &[AnnotatedNote], include_other: bool) -> NoteSpans {
    corpus
        .iter()
        .map(|n| (n.id().to_string(), n.scoped(include_other).map(Span::from).collect()))
        .collect()
}

/// One annotator's layer of a multiply-annotated corpus.
pub fn annotator_layer(corpus: &[AnnotatedNote], annotator: Option<&str>) -> NoteSpans {
    corpus
        .iter()
        .map(|n| {
            (
                n.id().to_string(),
                n.layer(annotator).into_iter().map(Span::from).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use SymptomCategory::*;

    fn spans(list: &[(&str, usize, usize, SymptomCategory)]) -> NoteSpans {
        let mut m = NoteSpans::new();
        for &(id, s, e, c) in list {
            m.entry(id.to_string()).or_default().push(Span::new(s, e, c));
        }
        m
    }

    #[test]
    fn f1_from_published_pairs() {
        assert_eq!(round_half_up(f1_from(0.7520, 0.8022), 4), 0.7763);
        // Exact harmonic mean of the rounded pair; the published row lists
        // 0.8055, the harmonic mean of the rounded values rounds to 0.8056.
        assert!((f1_from(0.7993, 0.8119) - 0.805_550_732).abs() < 1e-9);
    }

    #[test]
    fn zero_counts_score_zero() {
        let s = Scores::from_counts(&Counts::default());
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn micro_from_summed_counts() {
        let mut counts = MatchCounts::zeroed(&SymptomCategory::SYMPTOMS);
        counts.per_category.insert(Fluctuations, Counts { tp: 1, fp: 0, fn_: 0 });
        counts.per_category.insert(MemoryDeficit, Counts { tp: 1, fp: 3, fn_: 1 });
        let r = score(&counts);
        // macro precision would be (1 + 0.25) / 2; micro is 2/5
        assert!((r.micro.precision - 0.4).abs() < 1e-12);
        assert!((r.micro.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_category.len(), 8);
    }

    #[test]
    fn evaluate_identical_is_perfect() {
        let g = spans(&[("a", 0, 4, Fluctuations), ("b", 3, 9, DisturbedSleep)]);
        let r = evaluate(&g, &g, &SymptomCategory::SYMPTOMS);
        assert_eq!(r.strict.micro.f1, 1.0);
        assert_eq!(r.lenient.micro.f1, 1.0);
    }

    #[test]
    fn evaluate_ignores_other_unless_scoped() {
        let g = spans(&[("a", 0, 4, Other)]);
        let p = NoteSpans::new();
        let r = evaluate(&g, &p, &SymptomCategory::SYMPTOMS);
        assert_eq!(r.strict.counts.total(), Counts::default());
        let r = evaluate(&g, &p, &SymptomCategory::ALL);
        assert_eq!(r.strict.counts.total().fn_, 1);
    }

    #[test]
    fn agreement_identical_and_disjoint() {
        let a = spans(&[("n", 0, 4, Fluctuations), ("n", 10, 14, DisturbedSleep)]);
        let b = spans(&[("n", 20, 24, Fluctuations)]);
        let cats = SymptomCategory::SYMPTOMS;
        assert_eq!(agreement(&a, &a, MatchMode::Strict, &cats).unwrap().f1, 1.0);
        assert_eq!(agreement(&a, &b, MatchMode::Strict, &cats).unwrap().f1, 0.0);
    }

    #[test]
    fn agreement_requires_same_notes() {
        let a = spans(&[("n1", 0, 4, Fluctuations)]);
        let b = spans(&[("n2", 0, 4, Fluctuations)]);
        assert!(matches!(
            agreement(&a, &b, MatchMode::Strict, &SymptomCategory::SYMPTOMS),
            Err(EvalError::NoteSetMismatch { .. })
        ));
    }

    #[test]
    fn agreement_swaps_precision_and_recall() {
        let a = spans(&[("n", 0, 4, Fluctuations), ("n", 10, 14, DisturbedSleep)]);
        let b = spans(&[("n", 0, 4, Fluctuations)]);
        let cats = SymptomCategory::SYMPTOMS;
        let ab = agreement(&a, &b, MatchMode::Strict, &cats).unwrap();
        let ba = agreement(&b, &a, MatchMode::Strict, &cats).unwrap();
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }
}
