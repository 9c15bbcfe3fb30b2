//! Sparse binary token features.

use crate::preprocess::{char_class, tokenize, CharClass, Token};

/// Active feature ids, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    indices: Vec<u32>,
}

impl FeatureVector {
    /// Sorts and deduplicates the given ids.
    pub fn new(mut indices: Vec<u32>) -> FeatureVector {
        indices.sort_unstable();
        indices.dedup();
        FeatureVector { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Coarse character pattern: `Confused` -> `Xx`, `2mg` -> `dx`, `...` -> `.`.
pub fn word_shape(token: &str) -> String {
    let mut shape = String::new();
    for c in token.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else if char_class(c) == CharClass::Punct {
            '.'
        } else {
            'o'
        };
        if !shape.ends_with(s) {
            shape.push(s);
        }
    }
    shape
}

fn affix(lower: &str, n: usize, prefix: bool) -> String {
    let chars: Vec<char> = lower.chars().collect();
    let take = n.min(chars.len());
    if prefix {
        chars[..take].iter().collect()
    } else {
        chars[chars.len() - take..].iter().collect()
    }
}

/// Builds feature strings for tokens of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureExtractor {
    /// Keyword phrases as lowercase token sequences.
    keywords: Vec<Vec<String>>,
}

impl FeatureExtractor {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> FeatureExtractor {
        let keywords = keywords
            .iter()
            .map(|k| {
                tokenize(k.as_ref())
                    .into_iter()
                    .map(|t| t.text.to_lowercase())
                    .collect::<Vec<_>>()
            })
            .filter(|k| !k.is_empty())
            .collect();
        FeatureExtractor { keywords }
    }

    /// Marks tokens covered by any keyword phrase occurrence.
    fn keyword_mask(&self, lower: &[String]) -> Vec<bool> {
        let mut mask = vec![false; lower.len()];
        for kw in &self.keywords {
            if kw.len() > lower.len() {
                continue;
            }
            for start in 0..=lower.len() - kw.len() {
                if lower[start..start + kw.len()] == kw[..] {
                    mask[start..start + kw.len()].iter_mut().for_each(|m| *m = true);
                }
            }
        }
        mask
    }

    /// Feature strings for every token in a sentence.
    pub fn sentence_features(&self, tokens: &[Token]) -> Vec<Vec<String>> {
        let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mask = self.keyword_mask(&lower);
        (0..tokens.len())
            .map(|i| self.features_at(tokens, &lower, &mask, i))
            .collect()
    }

    /// Feature strings for one position.
    pub fn token_features(&self, tokens: &[Token], position: usize) -> Vec<String> {
        assert!(position < tokens.len(), "position out of range");
        let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mask = self.keyword_mask(&lower);
        self.features_at(tokens, &lower, &mask, position)
    }

    fn features_at(&self, tokens: &[Token], lower: &[String], mask: &[bool], i: usize) -> Vec<String> {
        let at = |offset: isize| -> &str {
            let j = i as isize + offset;
            if j < 0 {
                "<s>"
            } else if j as usize >= lower.len() {
                "</s>"
            } else {
                &lower[j as usize]
            }
        };
        let w = &lower[i];
        let mut f = vec![
            format!("w={w}"),
            format!("w-1={}", at(-1)),
            format!("w+1={}", at(1)),
            format!("w-2={}", at(-2)),
            format!("w+2={}", at(2)),
            format!("shape={}", word_shape(&tokens[i].text)),
            format!("pre3={}", affix(w, 3, true)),
            format!("suf3={}", affix(w, 3, false)),
        ];
        if i == 0 {
            f.push("first".to_string());
        }
        if mask[i] {
            f.push("kw".to_string());
        }
        f
    }
}
