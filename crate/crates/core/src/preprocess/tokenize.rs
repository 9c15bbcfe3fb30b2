use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A token with character offsets into its source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Space,
    Punct,
    Word,
}

pub fn char_class(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() {
        CharClass::Word
    } else {
        CharClass::Punct
    }
}

/// True when a token boundary lies between two adjacent characters.
pub fn is_boundary(before: char, after: char) -> bool {
    let (a, b) = (char_class(before), char_class(after));
    a == CharClass::Space || b == CharClass::Space || a != b
}

/// Splits on whitespace, then separates runs of punctuation from word
/// characters. `"don't."` yields `don`, `'`, `t`, `.`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_class = CharClass::Space;
    let mut start = 0;
    for (pos, c) in text.chars().enumerate() {
        let class = char_class(c);
        if class != current_class || class == CharClass::Space {
            if current_class != CharClass::Space {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    start,
                    end: pos,
                });
            }
            start = pos;
            current_class = class;
        }
        if class != CharClass::Space {
            current.push(c);
        }
    }
    if current_class != CharClass::Space {
        let end = start + current.chars().count();
        tokens.push(Token {
            text: current,
            start,
            end,
        });
    }
    tokens
}

/// Groups tokens into sentences, returned as token-index ranges.
///
/// A sentence ends after a punctuation token ending in `.`, `!` or `?` when it
/// is followed by whitespace and a token starting with an uppercase letter, and
/// at every blank line.
pub fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    if tokens.is_empty() {
        return Vec::new();
    }
    // Character positions of newlines let gap checks avoid re-walking the text.
    let newlines: Vec<usize> = text
        .chars()
        .enumerate()
        .filter(|&(_, c)| c == '\n')
        .map(|(i, _)| i)
        .collect();
    let newlines_in = |from: usize, to: usize| -> usize {
        let lo = newlines.partition_point(|&p| p < from);
        let hi = newlines.partition_point(|&p| p < to);
        hi - lo
    };

    let mut ranges = Vec::new();
    let mut begin = 0;
    for i in 0..tokens.len() - 1 {
        let (cur, next) = (&tokens[i], &tokens[i + 1]);
        let gap = next.start > cur.end;
        let terminal = cur
            .text
            .chars()
            .last()
            .is_some_and(|c| matches!(c, '.' | '!' | '?'))
            && char_class(cur.text.chars().next().unwrap_or(' ')) == CharClass::Punct;
        let capital = next.text.chars().next().is_some_and(char::is_uppercase);
        let blank_line = gap && newlines_in(cur.end, next.start) >= 2;
        if (gap && terminal && capital) || blank_line {
            ranges.push(begin..i + 1);
            begin = i + 1;
        }
    }
    ranges.push(begin..tokens.len());
    ranges
}
