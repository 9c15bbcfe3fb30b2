//! Tokenization, sentence splitting and BIO conversion.

mod bio;
mod tokenize;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bio::{
    decode_bio, encode_bio, is_bio_valid, BioLabel, Decoded, Encoded, TokenSpan, UnknownLabel,
};
pub use tokenize::{char_class, is_boundary, split_sentences, tokenize, CharClass, Token};

use crate::corpus::{AnnotatedNote, SymptomCategory};

/// One tokenized sentence with its labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceExample {
    pub note_id: String,
    pub sentence_index: usize,
    pub tokens: Vec<Token>,
    pub labels: Vec<BioLabel>,
}

/// Counters reported alongside preprocessing output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub notes: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub annotations: usize,
    /// Annotation fragments clipped at a sentence boundary.
    pub clipped: usize,
    /// I-as-B repairs applied while decoding.
    pub repairs: usize,
}

impl PreprocessStats {
    fn add(&mut self, other: &PreprocessStats) {
        self.notes += other.notes;
        self.sentences += other.sentences;
        self.tokens += other.tokens;
        self.annotations += other.annotations;
        self.clipped += other.clipped;
        self.repairs += other.repairs;
    }
}

/// Tokenizes, splits and BIO-encodes one note.
pub fn note_to_examples(
    note: &AnnotatedNote,
    include_other: bool,
) -> (Vec<SequenceExample>, PreprocessStats) {
    let text = &note.note.text;
    let tokens = tokenize(text);
    let sentences = split_sentences(text, &tokens);
    let annotations: Vec<_> = note.scoped(include_other).cloned().collect();

    let mut stats = PreprocessStats {
        notes: 1,
        sentences: sentences.len(),
        tokens: tokens.len(),
        annotations: annotations.len(),
        ..Default::default()
    };
    let examples = sentences
        .into_iter()
        .enumerate()
        .map(|(i, range)| {
            let tokens = tokens[range].to_vec();
            let enc = encode_bio(&tokens, &annotations);
            stats.clipped += enc.clipped;
            SequenceExample {
                note_id: note.id().to_string(),
                sentence_index: i,
                tokens,
                labels: enc.labels,
            }
        })
        .collect();
    (examples, stats)
}

/// Preprocesses a corpus in parallel; output order follows the input.
pub fn preprocess_corpus(
    corpus: &[AnnotatedNote],
    include_other: bool,
) -> (Vec<SequenceExample>, PreprocessStats) {
    let per_note: Vec<_> = corpus
        .par_iter()
        .map(|n| note_to_examples(n, include_other))
        .collect();
    let mut stats = PreprocessStats::default();
    let mut examples = Vec::new();
    for (ex, st) in per_note {
        stats.add(&st);
        examples.extend(ex);
    }
    (examples, stats)
}

/// Decodes labelled sentences into character spans grouped by note id.
/// Notes with sentences but no spans still get an (empty) entry.
pub fn spans_by_note(examples: &[SequenceExample]) -> (BTreeMap<String, Vec<TokenSpan>>, usize) {
    let mut out: BTreeMap<String, Vec<TokenSpan>> = BTreeMap::new();
    let mut repairs = 0;
    for ex in examples {
        let decoded = decode_bio(&ex.tokens, &ex.labels);
        repairs += decoded.repairs;
        out.entry(ex.note_id.clone()).or_default().extend(decoded.spans);
    }
    (out, repairs)
}

/// Label set order used by the tagger: `O`, then `B-X`, `I-X` per category.
pub fn label_inventory(include_other: bool) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::O];
    for &c in SymptomCategory::in_scope(include_other) {
        labels.push(BioLabel::B(c));
        labels.push(BioLabel::I(c));
    }
    labels
}

#[derive(Debug, thiserror::Error)]
pub enum SequenceFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{origin}:{line}: malformed line: {message}")]
    Malformed {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}:{line}: {source}")]
    UnknownLabel {
        origin: String,
        line: usize,
        #[source]
        source: UnknownLabel,
    },
}

/// Writes the column format: a `# note_id sentence_index` header, one
/// `token<TAB>start<TAB>end<TAB>label` line per token, blank line after each
/// sentence.
pub fn write_sequences<W: Write>(mut w: W, examples: &[SequenceExample]) -> std::io::Result<()> {
    for ex in examples {
        writeln!(w, "# {} {}", ex.note_id, ex.sentence_index)?;
        for (tok, label) in ex.tokens.iter().zip(&ex.labels) {
            writeln!(w, "{}\t{}\t{}\t{}", tok.text, tok.start, tok.end, label)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn sequences_to_string(examples: &[SequenceExample]) -> String {
    let mut buf = Vec::new();
    write_sequences(&mut buf, examples).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("sequence output is UTF-8")
}

/// Reads the column format written by [`write_sequences`], e.g. predictions
/// produced by an external model.
pub fn read_sequences<R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<Vec<SequenceExample>, SequenceFileError> {
    let mut out: Vec<SequenceExample> = Vec::new();
    let mut current: Option<SequenceExample> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let malformed = |message: String| SequenceFileError::Malformed {
            origin: origin.to_string(),
            line: lineno,
            message,
        };
        if line.is_empty() {
            if let Some(ex) = current.take() {
                out.push(ex);
            }
            continue;
        }
        if let Some(header) = line.strip_prefix("# ") {
            if let Some(ex) = current.take() {
                out.push(ex);
            }
            let (id, idx) = header
                .rsplit_once(' ')
                .ok_or_else(|| malformed("header needs `# note_id sentence_index`".into()))?;
            if id.is_empty() {
                return Err(malformed("empty note id".into()));
            }
            let sentence_index = idx
                .parse()
                .map_err(|_| malformed(format!("bad sentence index {idx:?}")))?;
            current = Some(SequenceExample {
                note_id: id.to_string(),
                sentence_index,
                tokens: Vec::new(),
                labels: Vec::new(),
            });
            continue;
        }
        let ex = current
            .as_mut()
            .ok_or_else(|| malformed("token line before any sentence header".into()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        let [text, start, end, label] = fields[..] else {
            return Err(malformed(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        };
        let start: usize = start
            .parse()
            .map_err(|_| malformed(format!("bad start offset {start:?}")))?;
        let end: usize = end
            .parse()
            .map_err(|_| malformed(format!("bad end offset {end:?}")))?;
        if text.is_empty() || end <= start || end - start != text.chars().count() {
            return Err(malformed(format!(
                "token {text:?} does not fit offsets ({start},{end})"
            )));
        }
        if ex.tokens.last().is_some_and(|prev| prev.end > start) {
            return Err(malformed("tokens overlap or are out of order".into()));
        }
        let label: BioLabel = label.parse().map_err(|e| SequenceFileError::UnknownLabel {
            origin: origin.to_string(),
            line: lineno,
            source: e,
        })?;
        ex.tokens.push(Token {
            text: text.to_string(),
            start,
            end,
        });
        ex.labels.push(label);
    }
    if let Some(ex) = current.take() {
        out.push(ex);
    }
    Ok(out)
}
