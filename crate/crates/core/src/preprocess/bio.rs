use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Token;
use crate::corpus::{char_slice, SpanAnnotation, SymptomCategory};

/// A per-token BIO label. `O` never carries a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BioLabel {
    O,
    B(SymptomCategory),
    I(SymptomCategory),
}

impl BioLabel {
    pub fn category(self) -> Option<SymptomCategory> {
        match self {
            BioLabel::O => None,
            BioLabel::B(c) | BioLabel::I(c) => Some(c),
        }
    }

    /// Whether `self` may directly follow `prev` (`None` = sentence start).
    pub fn may_follow(self, prev: Option<BioLabel>) -> bool {
        match self {
            BioLabel::I(c) => matches!(prev, Some(BioLabel::B(p)) | Some(BioLabel::I(p)) if p == c),
            _ => true,
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::O => f.write_str("O"),
            BioLabel::B(c) => write!(f, "B-{}", c.code()),
            BioLabel::I(c) => write!(f, "I-{}", c.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown BIO label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for BioLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioLabel::O);
        }
        let unknown = || UnknownLabel(s.to_string());
        let (tag, cat) = s.split_once('-').ok_or_else(unknown)?;
        let cat: SymptomCategory = cat.parse().map_err(|_| unknown())?;
        match tag {
            "B" => Ok(BioLabel::B(cat)),
            "I" => Ok(BioLabel::I(cat)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for BioLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every `I-X` follows a `B-X` or `I-X`.
pub fn is_bio_valid(labels: &[BioLabel]) -> bool {
    let mut prev = None;
    for &label in labels {
        if !label.may_follow(prev) {
            return false;
        }
        prev = Some(label);
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub labels: Vec<BioLabel>,
    /// Annotations that reached past the sentence edges and were clipped.
    pub clipped: usize,
}

/// Labels the tokens of one sentence.
///
/// A token is covered by an annotation when their character ranges share at
/// least one character. When annotations of different categories cover the
/// same token, the longest annotation wins and ties go to the earlier start.
pub fn encode_bio(tokens: &[Token], annotations: &[SpanAnnotation]) -> Encoded {
    let (Some(first), Some(last)) = (tokens.first(), tokens.last()) else {
        return Encoded {
            labels: Vec::new(),
            clipped: 0,
        };
    };
    let (sent_start, sent_end) = (first.start, last.end);

    let mut clipped = 0;
    let relevant: Vec<(usize, &SpanAnnotation)> = annotations
        .iter()
        .enumerate()
        .filter(|(_, a)| a.start < sent_end && sent_start < a.end && a.start < a.end)
        .inspect(|(_, a)| {
            if a.start < sent_start || a.end > sent_end {
                clipped += 1;
            }
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    for (t, tok) in tokens.iter().enumerate() {
        owner[t] = relevant
            .iter()
            .filter(|(_, a)| a.start < tok.end && tok.start < a.end)
            .min_by_key(|(i, a)| (std::cmp::Reverse(a.len()), a.start, a.end, a.category, *i))
            .map(|(i, _)| *i);
    }

    let mut labels = Vec::with_capacity(tokens.len());
    let mut prev: Option<usize> = None;
    for own in &owner {
        let label = match own {
            None => BioLabel::O,
            Some(i) if prev == Some(*i) => BioLabel::I(annotations[*i].category),
            Some(i) => BioLabel::B(annotations[*i].category),
        };
        labels.push(label);
        prev = *own;
    }
    Encoded { labels, clipped }
}

/// A decoded mention in token and character coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    /// First token index.
    pub first: usize,
    /// One past the last token index.
    pub last: usize,
    pub start: usize,
    pub end: usize,
    pub category: SymptomCategory,
}

impl TokenSpan {
    /// Converts to an annotation, slicing the surface from the note text.
    pub fn to_annotation(&self, text: &str) -> Option<SpanAnnotation> {
        Some(SpanAnnotation {
            start: self.start,
            end: self.end,
            category: self.category,
            surface: char_slice(text, self.start, self.end)?.to_string(),
            annotator: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Decoded {
    pub spans: Vec<TokenSpan>,
    /// Number of `I` labels that had no compatible predecessor and were read as `B`.
    pub repairs: usize,
}

/// Turns maximal `B I*` runs into spans. An `I-X` without a `B-X`/`I-X` before
/// it opens a new span and is counted as a repair.
pub fn decode_bio(tokens: &[Token], labels: &[BioLabel]) -> Decoded {
    assert_eq!(tokens.len(), labels.len(), "one label per token");
    let mut out = Decoded::default();
    let mut open: Option<(usize, SymptomCategory)> = None;
    let mut prev: Option<BioLabel> = None;

    let close = |out: &mut Decoded, open: Option<(usize, SymptomCategory)>, upto: usize| {
        if let Some((first, category)) = open {
            out.spans.push(TokenSpan {
                first,
                last: upto,
                start: tokens[first].start,
                end: tokens[upto - 1].end,
                category,
            });
        }
    };

    for (t, &label) in labels.iter().enumerate() {
        match label {
            BioLabel::O => {
                close(&mut out, open.take(), t);
            }
            BioLabel::B(c) => {
                close(&mut out, open.take(), t);
                open = Some((t, c));
            }
            BioLabel::I(c) => {
                if !label.may_follow(prev) {
                    out.repairs += 1;
                    close(&mut out, open.take(), t);
                    open = Some((t, c));
                }
            }
        }
        prev = Some(label);
    }
    close(&mut out, open.take(), labels.len());
    out
}
