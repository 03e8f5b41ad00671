//! Corpus admission: Cyrillic-run language detection, function-word query
//! matching and removal of mention/link/hashtag noise tokens.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Function words used as the stream query: conjunctions, pronouns and
/// prepositions specific to Russian.
pub const DEFAULT_QUERY_WORDS: [&str; 13] = [
    "я", "у", "к", "в", "по", "на", "ты", "мы", "до", "она", "он", "и", "да",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_cyrillic_run: usize,
    /// Query matching is disabled when empty.
    pub query_words: BTreeSet<String>,
    pub strip_mentions: bool,
    pub strip_links: bool,
    /// Hashtags keep their body when set; otherwise whole hashtag tokens are dropped.
    pub strip_hashmarks_only: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_cyrillic_run: 3,
            query_words: DEFAULT_QUERY_WORDS.iter().map(|w| w.to_string()).collect(),
            strip_mentions: false,
            strip_links: false,
            strip_hashmarks_only: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cyrillic_run == 0 {
            return Err(Error::Config("min_cyrillic_run must be at least 1".into()));
        }
        Ok(())
    }

    pub fn query_enabled(&self) -> bool {
        !self.query_words.is_empty()
    }
}

pub fn is_cyrillic(c: char) -> bool {
    ('\u{0400}'..='\u{04FF}').contains(&c)
}

/// True iff `text` holds at least `min_run` consecutive Cyrillic code points.
pub fn has_cyrillic_run(text: &str, min_run: usize) -> bool {
    if min_run == 0 {
        return true;
    }
    let mut run = 0;
    for c in text.chars() {
        if is_cyrillic(c) {
            run += 1;
            if run >= min_run {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// True iff some token equals a query word exactly.
pub fn matches_query<S: AsRef<str>>(tokens: &[S], query_words: &BTreeSet<String>) -> bool {
    tokens.iter().any(|t| query_words.contains(t.as_ref()))
}

pub fn is_link(token: &str) -> bool {
    let lower = token
        .chars()
        .take(8)
        .collect::<String>()
        .to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://")
}

/// Removes mention, link and hashtag noise from raw whitespace tokens.
pub fn strip_noise<S: AsRef<str>>(tokens: &[S], config: &FilterConfig) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        if config.strip_mentions && t.starts_with('@') {
            continue;
        }
        if config.strip_links && is_link(t) {
            continue;
        }
        if let Some(body) = t.strip_prefix('#') {
            if config.strip_hashmarks_only && !body.is_empty() {
                out.push(body.to_string());
            }
            continue;
        }
        out.push(t.to_string());
    }
    out
}
