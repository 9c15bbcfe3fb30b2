use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::{SpanAnnotation, SymptomCategory};
use crate::preprocess::TokenSpan;

/// A typed character span, the unit of span-level scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub category: SymptomCategory,
}

impl Span {
    pub fn new(start: usize, end: usize, category: SymptomCategory) -> Span {
        Span {
            start,
            end,
            category,
        }
    }

    /// Number of shared characters.
    pub fn overlap(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    pub fn same_boundaries(&self, other: &Span) -> bool {
        self.start == other.start && self.end == other.end
    }
}

impl From<&SpanAnnotation> for Span {
    fn from(a: &SpanAnnotation) -> Span {
        Span::new(a.start, a.end, a.category)
    }
}

impl From<&TokenSpan> for Span {
    fn from(t: &TokenSpan) -> Span {
        Span::new(t.start, t.end, t.category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Identical boundaries and category.
    Strict,
    /// Same category and at least one shared character.
    Lenient,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "lenient" => Ok(MatchMode::Lenient),
            other => Err(format!("unknown match mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// True/false positive and false negative counts per category, for one mode.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub per_category: BTreeMap<SymptomCategory, Counts>,
}

impl MatchCounts {
    /// Zeroed counts for the given categories.
    pub fn zeroed(categories: &[SymptomCategory]) -> MatchCounts {
        MatchCounts {
            per_category: categories.iter().map(|&c| (c, Counts::default())).collect(),
        }
    }

    pub fn get(&self, category: SymptomCategory) -> Counts {
        self.per_category.get(&category).copied().unwrap_or_default()
    }

    pub fn total(&self) -> Counts {
        let mut sum = Counts::default();
        for c in self.per_category.values() {
            sum += *c;
        }
        sum
    }

    pub fn merge(&mut self, other: &MatchCounts) {
        for (cat, c) in &other.per_category {
            *self.per_category.entry(*cat).or_default() += *c;
        }
    }

    fn from_matches(gold: &[Span], pred: &[Span], pairs: &[(usize, usize)]) -> MatchCounts {
        let mut counts = MatchCounts::default();
        for g in gold {
            counts.per_category.entry(g.category).or_default().fn_ += 1;
        }
        for p in pred {
            counts.per_category.entry(p.category).or_default().fp += 1;
        }
        for &(gi, _) in pairs {
            let c = counts.per_category.entry(gold[gi].category).or_default();
            c.tp += 1;
            c.fn_ -= 1;
            c.fp -= 1;
        }
        counts
    }
}

/// Pairs gold and predicted spans with identical boundaries and category.
/// Each span takes part in at most one pair.
pub(crate) fn strict_pairs(gold: &[Span], pred: &[Span]) -> Vec<(usize, usize)> {
    let mut g: Vec<usize> = (0..gold.len()).collect();
    let mut p: Vec<usize> = (0..pred.len()).collect();
    g.sort_by_key(|&i| (gold[i], i));
    p.sort_by_key(|&i| (pred[i], i));
    let (mut a, mut b) = (0, 0);
    let mut pairs = Vec::new();
    while a < g.len() && b < p.len() {
        match gold[g[a]].cmp(&pred[p[b]]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                pairs.push((g[a], p[b]));
                a += 1;
                b += 1;
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Greedy one-to-one pairing of overlapping spans, largest overlap first;
/// ties go to the earlier gold start, then the earlier predicted start.
/// Spans already marked as used are skipped.
pub(crate) fn greedy_overlap_pairs(
    gold: &[Span],
    pred: &[Span],
    same_category: bool,
    gold_used: &mut [bool],
    pred_used: &mut [bool],
) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        if gold_used[gi] {
            continue;
        }
        for (pi, p) in pred.iter().enumerate() {
            if pred_used[pi] || (same_category && g.category != p.category) {
                continue;
            }
            let overlap = g.overlap(p);
            if overlap > 0 {
                candidates.push((std::cmp::Reverse(overlap), g.start, p.start, gi, pi));
            }
        }
    }
    candidates.sort_unstable();
    let mut pairs = Vec::new();
    for (_, _, _, gi, pi) in candidates {
        if !gold_used[gi] && !pred_used[pi] {
            gold_used[gi] = true;
            pred_used[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs
}

pub(crate) fn lenient_pairs(gold: &[Span], pred: &[Span]) -> Vec<(usize, usize)> {
    let mut gu = vec![false; gold.len()];
    let mut pu = vec![false; pred.len()];
    greedy_overlap_pairs(gold, pred, true, &mut gu, &mut pu)
}

/// Strict counts for one note.
pub fn match_strict(gold: &[Span], pred: &[Span]) -> MatchCounts {
    MatchCounts::from_matches(gold, pred, &strict_pairs(gold, pred))
}

/// Lenient counts for one note, with one-to-one greedy matching.
pub fn match_lenient(gold: &[Span], pred: &[Span]) -> MatchCounts {
    MatchCounts::from_matches(gold, pred, &lenient_pairs(gold, pred))
}

pub fn match_spans(gold: &[Span], pred: &[Span], mode: MatchMode) -> MatchCounts {
    match mode {
        MatchMode::Strict => match_strict(gold, pred),
        MatchMode::Lenient => match_lenient(gold, pred),
    }
}
