//! Notes, span annotations and the corpus-level operations built on them.
//!
//! All offsets are character offsets (Unicode scalar values), end-exclusive.
//! Every module in this crate uses the same convention, so `[start, end)` on a
//! note's text always means `text.chars().skip(start).take(end - start)`.

mod io;
mod split;
mod summary;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{load_corpus, parse_jsonl, save_corpus, to_jsonl, CorpusFormat};
pub use split::{split_corpus, Split, SplitPlan, SplitSpec, Splits};
pub use summary::{summarize, CategoryRow, SplitCount, Summary};
pub use synth::{default_phrase_bank, synth_generate, PhraseBank};

/// Errors raised while loading, saving or partitioning a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("note {note_id}: {violation}")]
    Invalid { note_id: String, violation: Violation },
    #[error("duplicate note id {0}")]
    DuplicateId(String),
    #[error("unknown note id {0} in split assignment")]
    UnknownSplitId(String),
    #[error("note {0} has no split assignment")]
    UnassignedNote(String),
    #[error("invalid split ratios ({train}, {dev}, {test}): {reason}")]
    InvalidRatios {
        train: f64,
        dev: f64,
        test: f64,
        reason: String,
    },
    #[error("phrase bank is empty")]
    EmptyPhraseBank,
    #[error("n_notes must be at least 1")]
    NoNotesRequested,
}

/// The closed set of symptom categories. `Other` holds hard cases and is kept
/// in corpora but left out of summaries, training and scoring unless asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymptomCategory {
    DisturbedAttention,
    DisturbedPerception,
    PsychomotorActivity,
    Fluctuations,
    MemoryDeficit,
    ConsciousnessLevel,
    DisturbedSleep,
    DisorganizedThinking,
    Other,
}

impl SymptomCategory {
    pub const ALL: [SymptomCategory; 9] = [
        SymptomCategory::DisturbedAttention,
        SymptomCategory::DisturbedPerception,
        SymptomCategory::PsychomotorActivity,
        SymptomCategory::Fluctuations,
        SymptomCategory::MemoryDeficit,
        SymptomCategory::ConsciousnessLevel,
        SymptomCategory::DisturbedSleep,
        SymptomCategory::DisorganizedThinking,
        SymptomCategory::Other,
    ];

    /// The eight symptom categories, without `Other`.
    pub const SYMPTOMS: [SymptomCategory; 8] = [
        SymptomCategory::DisturbedAttention,
        SymptomCategory::DisturbedPerception,
        SymptomCategory::PsychomotorActivity,
        SymptomCategory::Fluctuations,
        SymptomCategory::MemoryDeficit,
        SymptomCategory::ConsciousnessLevel,
        SymptomCategory::DisturbedSleep,
        SymptomCategory::DisorganizedThinking,
    ];

    /// Categories in scope for summaries, training and evaluation.
    pub fn in_scope(include_other: bool) -> &'static [SymptomCategory] {
        if include_other {
            &Self::ALL
        } else {
            &Self::SYMPTOMS
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SymptomCategory::DisturbedAttention => "DisturbedAttention",
            SymptomCategory::DisturbedPerception => "DisturbedPerception",
            SymptomCategory::PsychomotorActivity => "PsychomotorActivity",
            SymptomCategory::Fluctuations => "Fluctuations",
            SymptomCategory::MemoryDeficit => "MemoryDeficit",
            SymptomCategory::ConsciousnessLevel => "ConsciousnessLevel",
            SymptomCategory::DisturbedSleep => "DisturbedSleep",
            SymptomCategory::DisorganizedThinking => "DisorganizedThinking",
            SymptomCategory::Other => "Other",
        }
    }

    /// Three-letter code used inside BIO labels (`B-PMA`).
    pub fn code(self) -> &'static str {
        match self {
            SymptomCategory::DisturbedAttention => "ATT",
            SymptomCategory::DisturbedPerception => "PER",
            SymptomCategory::PsychomotorActivity => "PMA",
            SymptomCategory::Fluctuations => "FLU",
            SymptomCategory::MemoryDeficit => "MEM",
            SymptomCategory::ConsciousnessLevel => "CON",
            SymptomCategory::DisturbedSleep => "SLP",
            SymptomCategory::DisorganizedThinking => "DIS",
            SymptomCategory::Other => "OTH",
        }
    }

    /// Human-readable label as used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            SymptomCategory::DisturbedAttention => "Disturbed attention",
            SymptomCategory::DisturbedPerception => "Disturbed perception",
            SymptomCategory::PsychomotorActivity => "Psychomotor activity",
            SymptomCategory::Fluctuations => "Fluctuations",
            SymptomCategory::MemoryDeficit => "Memory deficit",
            SymptomCategory::ConsciousnessLevel => "Consciousness level",
            SymptomCategory::DisturbedSleep => "Disturbed sleep",
            SymptomCategory::DisorganizedThinking => "Disorganized thinking",
            SymptomCategory::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SymptomCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown symptom category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for SymptomCategory {
    type Err = UnknownCategory;

    /// Accepts the canonical name (`PsychomotorActivity`) or the short code (`PMA`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SymptomCategory::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s || c.code() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

impl Serialize for SymptomCategory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SymptomCategory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A clinical note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Note {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Note {
            id: id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    /// Length of the text in characters.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub category: SymptomCategory,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
}

impl SpanAnnotation {
    /// Builds an annotation whose surface is sliced from `text`.
    /// Returns `None` when the range is empty or out of bounds.
    pub fn from_text(
        text: &str,
        start: usize,
        end: usize,
        category: SymptomCategory,
    ) -> Option<SpanAnnotation> {
        if start >= end {
            return None;
        }
        let surface = char_slice(text, start, end)?;
        Some(SpanAnnotation {
            start,
            end,
            category,
            surface: surface.to_string(),
            annotator: None,
        })
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &SpanAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// A note together with its annotations, kept sorted by `(start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedNote {
    pub note: Note,
    pub annotations: Vec<SpanAnnotation>,
}

impl AnnotatedNote {
    pub fn new(note: Note, mut annotations: Vec<SpanAnnotation>) -> Self {
        sort_annotations(&mut annotations);
        AnnotatedNote { note, annotations }
    }

    pub fn id(&self) -> &str {
        &self.note.id
    }

    /// Distinct annotator ids present on this note; `None` stands for
    /// annotations without an annotator.
    pub fn annotators(&self) -> Vec<Option<&str>> {
        let mut out: Vec<Option<&str>> = self
            .annotations
            .iter()
            .map(|a| a.annotator.as_deref())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Annotations made by one annotator.
    pub fn layer(&self, annotator: Option<&str>) -> Vec<&SpanAnnotation> {
        self.annotations
            .iter()
            .filter(|a| a.annotator.as_deref() == annotator)
            .collect()
    }

    /// Annotations whose category is in scope.
    pub fn scoped(&self, include_other: bool) -> impl Iterator<Item = &SpanAnnotation> {
        self.annotations
            .iter()
            .filter(move |a| include_other || a.category != SymptomCategory::Other)
    }
}

pub(crate) fn sort_annotations(annotations: &mut [SpanAnnotation]) {
    annotations.sort_by(|a, b| {
        (a.start, a.end, a.category, &a.annotator).cmp(&(b.start, b.end, b.category, &b.annotator))
    });
}

/// One broken annotation invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index into `AnnotatedNote::annotations`.
    pub annotation: usize,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    EmptyOrInverted { start: usize, end: usize },
    OutOfBounds { end: usize, text_len: usize },
    SurfaceMismatch { surface: String, actual: String },
    SameCategoryOverlap { other: usize, category: SymptomCategory },
    Unsorted,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = self.annotation;
        match &self.rule {
            Rule::EmptyOrInverted { start, end } => {
                write!(f, "annotation {i}: empty or inverted span ({start},{end})")
            }
            Rule::OutOfBounds { end, text_len } => write!(
                f,
                "annotation {i}: end {end} beyond text length {text_len}"
            ),
            Rule::SurfaceMismatch { surface, actual } => write!(
                f,
                "annotation {i}: surface mismatch, annotation says {surface:?} but text reads {actual:?}"
            ),
            Rule::SameCategoryOverlap { other, category } => write!(
                f,
                "annotation {i}: overlaps annotation {other} of the same category {category}"
            ),
            Rule::Unsorted => write!(f, "annotation {i}: annotations not sorted by (start, end)"),
        }
    }
}

/// Checks every annotation invariant; an empty result means the note is valid.
///
/// Same-category overlap is checked within one annotator's layer, so
/// independent layers of a multiply-annotated note may agree on a span.
pub fn validate(note: &AnnotatedNote) -> Vec<Violation> {
    let mut out = Vec::new();
    let index = CharIndex::new(&note.note.text);
    let text_len = index.len();
    for (i, ann) in note.annotations.iter().enumerate() {
        if ann.start >= ann.end {
            out.push(Violation {
                annotation: i,
                rule: Rule::EmptyOrInverted {
                    start: ann.start,
                    end: ann.end,
                },
            });
            continue;
        }
        if ann.end > text_len {
            out.push(Violation {
                annotation: i,
                rule: Rule::OutOfBounds {
                    end: ann.end,
                    text_len,
                },
            });
            continue;
        }
        let actual = index.slice(&note.note.text, ann.start, ann.end);
        if actual != ann.surface {
            out.push(Violation {
                annotation: i,
                rule: Rule::SurfaceMismatch {
                    surface: ann.surface.clone(),
                    actual: actual.to_string(),
                },
            });
        }
        if i > 0 {
            let prev = &note.annotations[i - 1];
            if (prev.start, prev.end) > (ann.start, ann.end) {
                out.push(Violation {
                    annotation: i,
                    rule: Rule::Unsorted,
                });
            }
        }
    }
    for (i, a) in note.annotations.iter().enumerate() {
        for (j, b) in note.annotations.iter().enumerate().skip(i + 1) {
            if a.category == b.category
                && a.annotator == b.annotator
                && a.start < a.end
                && b.start < b.end
                && a.overlaps(b)
            {
                out.push(Violation {
                    annotation: j,
                    rule: Rule::SameCategoryOverlap {
                        other: i,
                        category: a.category,
                    },
                });
            }
        }
    }
    out
}

/// Byte positions of every character boundary, for repeated char-offset slicing.
#[derive(Debug, Clone)]
pub struct CharIndex {
    boundaries: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut boundaries: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        boundaries.push(text.len());
        CharIndex { boundaries }
    }

    /// Number of characters.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> usize {
        self.boundaries[char_offset]
    }

    /// Character offset of a byte position that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> usize {
        self.boundaries
            .binary_search(&byte_offset)
            .expect("byte offset not on a char boundary")
    }

    /// Panics if the range is out of bounds.
    pub fn slice<'a>(&self, text: &'a str, start: usize, end: usize) -> &'a str {
        &text[self.boundaries[start]..self.boundaries[end]]
    }
}

/// Slices `text` by character offsets; `None` when out of bounds.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut iter = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let begin = iter.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        iter.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}
