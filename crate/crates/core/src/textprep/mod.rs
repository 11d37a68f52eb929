//! Tweet text cleaning and normalized TF-IDF.

pub mod porter;
mod tfidf;

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use tfidf::{
    build_matrix, cosine, vectorize, DocTermMatrix, SparseVec, TextError, Vocabulary,
};

const STOP_WORDS: &str = include_str!("../../data/stopwords.txt");

/// The shipped English stop list (one word per line).
pub fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOP_WORDS
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

/// Lowercased alphanumeric runs. Used for dictionary and gazetteer
/// matching, which must see the raw words.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// A post's cleaned, stemmed tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl CleanDoc {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens,
        }
    }

    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        Self::new(doc_id, preprocess(text))
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const MIN_TOKEN_LEN: usize = 3;

fn strip_mentions_and_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        let lower_head: String = rest.chars().take(8).collect::<String>().to_lowercase();
        if c == '@' {
            let skip: usize = rest[1..]
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .map(char::len_utf8)
                .sum();
            rest = &rest[1 + skip..];
            out.push(' ');
        } else if lower_head.starts_with("http://") || lower_head.starts_with("https://") {
            let skip: usize = rest
                .chars()
                .take_while(|c| !c.is_whitespace())
                .map(char::len_utf8)
                .sum();
            rest = &rest[skip..];
            out.push(' ');
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

fn keep(token: &str) -> bool {
    token.chars().count() >= MIN_TOKEN_LEN && !stop_words().contains(token)
}

/// Stems until the word stops changing; a single pass of the original
/// algorithm is not idempotent on its own output.
fn stem_fixed(word: &str) -> String {
    let mut cur = word.to_string();
    for _ in 0..8 {
        let next = porter::stem(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Cleans a tweet: drops @mentions and http(s) links, turns punctuation
/// into spaces, removes digits, lowercases, splits on whitespace, drops stop
/// words and short tokens, then Porter-stems. Stems that come out short or
/// as stop words are dropped as well.
pub fn preprocess(text: &str) -> Vec<String> {
    let stripped = strip_mentions_and_links(text);
    let cleaned: String = stripped
        .chars()
        .filter(|c| !c.is_numeric())
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase();
    cleaned
        .split_whitespace()
        .filter(|t| keep(t))
        .map(stem_fixed)
        .filter(|t| keep(t))
        .collect()
}
