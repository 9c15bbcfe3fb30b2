//! Keyword scanning, snowball keyword-list maintenance, threshold filtering
//! and seeded sampling of candidate notes.

use std::collections::HashSet;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{default_phrase_bank, CharIndex, Note};
use crate::preprocess::{is_boundary, tokenize};

pub const MAX_PHRASE_TOKENS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("invalid keyword phrase {phrase:?}: {reason}")]
    InvalidPhrase { phrase: String, reason: String },
    #[error("{origin}:{line}: {message}")]
    Malformed {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("cannot sample {n} ids from a population of {population}")]
    SampleTooLarge { n: usize, population: usize },
    #[error("keyword list is empty")]
    EmptyKeywords,
    #[error("min_hits must be at least 1")]
    ZeroMinHits,
}

/// Lowercases one character when that maps to exactly one character, so
/// character offsets in folded text equal those in the original.
fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn fold(text: &str) -> String {
    if text.is_ascii() {
        text.to_ascii_lowercase()
    } else {
        text.chars().map(fold_char).collect()
    }
}

/// Case-folds and collapses internal whitespace to single spaces. `None` for
/// blank phrases or phrases over [`MAX_PHRASE_TOKENS`] tokens.
pub fn normalize_phrase(phrase: &str) -> Option<String> {
    let folded = fold(phrase);
    let normalized = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    let n_tokens = tokenize(&normalized).len();
    (1..=MAX_PHRASE_TOKENS)
        .contains(&n_tokens)
        .then_some(normalized)
}

/// A versioned, case-folded, deduplicated list of keyword phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordList {
    entries: Vec<String>,
    version: u64,
}

impl KeywordList {
    pub fn new<I, S>(phrases: I) -> Result<KeywordList, FilterError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = KeywordList {
            entries: Vec::new(),
            version: 1,
        };
        let mut seen = HashSet::new();
        for p in phrases {
            let p = p.as_ref();
            let normalized = normalize_phrase(p).ok_or_else(|| FilterError::InvalidPhrase {
                phrase: p.to_string(),
                reason: format!("must contain 1 to {MAX_PHRASE_TOKENS} tokens"),
            })?;
            if seen.insert(normalized.clone()) {
                list.entries.push(normalized);
            }
        }
        Ok(list)
    }

    /// Starter list drawn from the guideline example phrases (phrases longer
    /// than five tokens are left out). Not the curated production list.
    pub fn starter() -> KeywordList {
        let phrases: Vec<String> = default_phrase_bank()
            .into_values()
            .flatten()
            .filter_map(|p| normalize_phrase(&p))
            .collect();
        KeywordList::new(phrases).expect("normalized phrases are valid")
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a keyword file: one phrase per line, `#` comments, optional
    /// `# version: N` line.
    pub fn parse(input: &str, origin: &str) -> Result<KeywordList, FilterError> {
        let mut version = None;
        let mut phrases = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(v) = trimmed.strip_prefix("# version:") {
                version = Some(v.trim().parse().map_err(|_| FilterError::Malformed {
                    origin: origin.to_string(),
                    line: i + 1,
                    message: format!("bad version {:?}", v.trim()),
                })?);
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if normalize_phrase(trimmed).is_none() {
                return Err(FilterError::Malformed {
                    origin: origin.to_string(),
                    line: i + 1,
                    message: format!(
                        "phrase {trimmed:?} must contain 1 to {MAX_PHRASE_TOKENS} tokens"
                    ),
                });
            }
            phrases.push(trimmed.to_string());
        }
        let mut list = KeywordList::new(phrases)?;
        if let Some(v) = version {
            list.version = v;
        }
        Ok(list)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("# version: {}\n", self.version);
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }
}

/// Case-folded union of `base` and `additions`. The version increments only
/// when the entry set grows; invalid phrases (blank or too long) are skipped.
pub fn merge_keywords<S: AsRef<str>>(base: &KeywordList, additions: &[S]) -> KeywordList {
    let mut merged = base.clone();
    let mut seen: HashSet<String> = merged.entries.iter().cloned().collect();
    let mut changed = false;
    for p in additions {
        if let Some(normalized) = normalize_phrase(p.as_ref()) {
            if seen.insert(normalized.clone()) {
                merged.entries.push(normalized);
                changed = true;
            }
        }
    }
    if changed {
        merged.version += 1;
    }
    merged
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub keyword: String,
    /// Character offset of the match start.
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub note_id: String,
    pub hits: Vec<Hit>,
    pub hit_count: usize,
}

impl MatchRecord {
    pub fn distinct_keywords(&self) -> usize {
        self.hits
            .iter()
            .map(|h| h.keyword.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn count(&self, mode: ThresholdMode) -> usize {
        match mode {
            ThresholdMode::Occurrences => self.hit_count,
            ThresholdMode::Distinct => self.distinct_keywords(),
        }
    }
}

/// What `min_hits` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Total keyword occurrences.
    #[default]
    Occurrences,
    /// Distinct keywords with at least one occurrence.
    Distinct,
}

impl std::str::FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "occurrences" => Ok(ThresholdMode::Occurrences),
            "distinct" => Ok(ThresholdMode::Distinct),
            other => Err(format!("unknown threshold mode {other:?}")),
        }
    }
}

/// A compiled keyword list. Build once and share across threads.
#[derive(Debug, Clone)]
pub struct Scanner {
    keywords: KeywordList,
    automaton: AhoCorasick,
}

impl Scanner {
    pub fn new(keywords: &KeywordList) -> Result<Scanner, FilterError> {
        if keywords.is_empty() {
            return Err(FilterError::EmptyKeywords);
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::Standard)
            .build(keywords.entries())
            .expect("keyword automaton builds");
        Ok(Scanner {
            keywords: keywords.clone(),
            automaton,
        })
    }

    pub fn keywords(&self) -> &KeywordList {
        &self.keywords
    }

    /// Finds every whole-token, case-insensitive keyword occurrence.
    /// Occurrences of different keywords may overlap and each counts.
    pub fn scan(&self, note: &Note) -> MatchRecord {
        let text = &note.text;
        let folded = fold(text);
        let mut found: Vec<(usize, usize)> = Vec::new();
        if text.is_ascii() {
            let bytes = text.as_bytes();
            for m in self.automaton.find_overlapping_iter(&folded) {
                let (s, e) = (m.start(), m.end());
                let starts = s == 0 || is_boundary(bytes[s - 1] as char, bytes[s] as char);
                let ends = e == bytes.len() || is_boundary(bytes[e - 1] as char, bytes[e] as char);
                if starts && ends {
                    found.push((s, m.pattern().as_usize()));
                }
            }
        } else {
            let chars: Vec<char> = text.chars().collect();
            let index = CharIndex::new(&folded);
            for m in self.automaton.find_overlapping_iter(&folded) {
                let s = index.char_offset(m.start());
                let e = index.char_offset(m.end());
                let starts = s == 0 || is_boundary(chars[s - 1], chars[s]);
                let ends = e == chars.len() || is_boundary(chars[e - 1], chars[e]);
                if starts && ends {
                    found.push((s, m.pattern().as_usize()));
                }
            }
        }
        found.sort_unstable();
        let hits: Vec<Hit> = found
            .into_iter()
            .map(|(start, k)| Hit {
                keyword: self.keywords.entries[k].clone(),
                start,
            })
            .collect();
        MatchRecord {
            note_id: note.id.clone(),
            hit_count: hits.len(),
            hits,
        }
    }
}

/// Scans one note. Compiles the keyword list on every call; use [`Scanner`]
/// for repeated scans.
pub fn scan_note(note: &Note, keywords: &KeywordList) -> Result<MatchRecord, FilterError> {
    Ok(Scanner::new(keywords)?.scan(note))
}

/// Scans all notes in parallel and returns match records in input order.
pub fn scan_corpus(notes: &[Note], scanner: &Scanner) -> Vec<MatchRecord> {
    notes.par_iter().map(|n| scanner.scan(n)).collect()
}

/// Ids of notes reaching `min_hits`, in input order.
pub fn filter_corpus(
    notes: &[Note],
    scanner: &Scanner,
    min_hits: usize,
    mode: ThresholdMode,
) -> Result<Vec<String>, FilterError> {
    if min_hits == 0 {
        return Err(FilterError::ZeroMinHits);
    }
    Ok(notes
        .par_iter()
        .filter(|n| scanner.scan(n).count(mode) >= min_hits)
        .map(|n| n.id.clone())
        .collect())
}

/// Single-threaded [`filter_corpus`].
pub fn filter_corpus_serial(
    notes: &[Note],
    scanner: &Scanner,
    min_hits: usize,
    mode: ThresholdMode,
) -> Result<Vec<String>, FilterError> {
    if min_hits == 0 {
        return Err(FilterError::ZeroMinHits);
    }
    Ok(notes
        .iter()
        .filter(|n| scanner.scan(n).count(mode) >= min_hits)
        .map(|n| n.id.clone())
        .collect())
}

/// Uniform sample of `n` ids without replacement, returned in original order.
pub fn sample(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>, FilterError> {
    if n > ids.len() {
        return Err(FilterError::SampleTooLarge {
            n,
            population: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, ids.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ids[i].clone()).collect())
}
