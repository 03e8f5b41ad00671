//! Message normalization: sentence splitting, tokenization, lowercasing,
//! edge punctuation removal and optional stemming.
//!
//! The preprocessed corpus format is one sentence per line with tokens
//! separated by a single tab.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::filter::{strip_noise, FilterConfig};
use crate::ingest::RawMessage;

/// Ordered non-empty lowercase tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tab-joined corpus line, without the newline.
    pub fn to_line(&self) -> String {
        self.tokens.join("\t")
    }

    pub fn from_line(line: &str) -> Sentence {
        Sentence {
            tokens: line
                .split('\t')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        }
    }
}

impl<S: Into<String>> FromIterator<S> for Sentence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Sentence {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// Maps a token to its stem. Implementations must be deterministic and
/// idempotent.
pub trait Stemmer: Send + Sync {
    fn name(&self) -> &str;
    fn stem(&self, token: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn name(&self) -> &str {
        "identity"
    }

    fn stem(&self, token: &str) -> String {
        token.to_string()
    }
}

/// Crude Russian suffix chopper. Strips the longest known inflectional
/// ending while at least [`SuffixStemmer::MIN_STEM`] characters remain, and
/// repeats until nothing changes, which makes it idempotent.
#[derive(Debug, Clone)]
pub struct SuffixStemmer {
    suffixes: Vec<&'static str>,
}

const RUSSIAN_SUFFIXES: &[&str] = &[
    "иями", "ями", "ами", "ого", "его", "ому", "ему", "ыми", "ими", "ость", "ости", "ать", "ять",
    "ить", "ешь", "ишь", "ует", "уют", "ала", "ила", "ыла", "ется", "ются", "ться", "тся", "ах",
    "ях", "ов", "ев", "ей", "ой", "ий", "ый", "ая", "яя", "ое", "ее", "ые", "ие", "ом", "ем", "ам",
    "ям", "ую", "юю", "ть", "ла", "ло", "ли", "а", "я", "о", "е", "ы", "и", "у", "ю", "ь",
];

impl SuffixStemmer {
    pub const MIN_STEM: usize = 3;

    pub fn russian() -> Self {
        let mut suffixes = RUSSIAN_SUFFIXES.to_vec();
        suffixes.sort_by_key(|s| std::cmp::Reverse(s.chars().count()));
        SuffixStemmer { suffixes }
    }

    fn chop_once<'a>(&self, token: &'a str) -> Option<&'a str> {
        let len = token.chars().count();
        self.suffixes.iter().find_map(|suf| {
            let stem = token.strip_suffix(suf)?;
            (len - suf.chars().count() >= Self::MIN_STEM).then_some(stem)
        })
    }
}

impl Default for SuffixStemmer {
    fn default() -> Self {
        Self::russian()
    }
}

impl Stemmer for SuffixStemmer {
    fn name(&self) -> &str {
        "suffix-ru"
    }

    fn stem(&self, token: &str) -> String {
        let mut cur = token;
        while let Some(next) = self.chop_once(cur) {
            cur = next;
        }
        cur.to_string()
    }
}

/// Looks a stemmer up by its [`Stemmer::name`].
pub fn stemmer_by_name(name: &str) -> Option<Box<dyn Stemmer>> {
    match name {
        "identity" | "none" => Some(Box::new(IdentityStemmer)),
        "suffix-ru" | "suffix" => Some(Box::new(SuffixStemmer::russian())),
        _ => None,
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Splits on `.`, `!`, `?` and newlines, dropping empty segments.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(is_terminator)
        .filter(|s| !s.is_empty())
        .collect()
}

static EDGE_PUNCT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[\p{P}\p{S}]+|[\p{P}\p{S}]+$").expect("valid edge punctuation pattern")
});

/// Whitespace split, edge punctuation strip, lowercase; empty tokens dropped.
pub fn tokenize(sentence: &str) -> Sentence {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let core = EDGE_PUNCT.replace_all(raw, "");
            let lower = core.to_lowercase();
            (!lower.is_empty()).then_some(lower)
        })
        .collect()
}

/// Noise stripping, sentence splitting and tokenization, without stemming.
pub fn normalize_text(text: &str, config: &FilterConfig) -> Vec<Sentence> {
    let cleaned: Vec<String> = text
        .split('\n')
        .map(|line| {
            let raw: Vec<&str> = line.split_whitespace().collect();
            strip_noise(&raw, config).join(" ")
        })
        .collect();
    let cleaned = cleaned.join("\n");
    split_sentences(&cleaned)
        .into_iter()
        .map(tokenize)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Applies `stemmer` to every token, dropping tokens it empties.
pub fn stem_sentence(sentence: Sentence, stemmer: &dyn Stemmer) -> Option<Sentence> {
    let s: Sentence = sentence
        .tokens
        .iter()
        .map(|t| stemmer.stem(t))
        .filter(|t| !t.is_empty())
        .collect();
    (!s.is_empty()).then_some(s)
}

/// Full message pipeline: strip noise, split, tokenize, stem.
pub fn preprocess_message(
    msg: &RawMessage,
    stemmer: &dyn Stemmer,
    config: &FilterConfig,
) -> Vec<Sentence> {
    normalize_text(&msg.text, config)
        .into_iter()
        .filter_map(|s| stem_sentence(s, stemmer))
        .collect()
}

pub fn write_sentence<W: Write>(out: &mut W, sentence: &Sentence) -> std::io::Result<()> {
    out.write_all(sentence.to_line().as_bytes())?;
    out.write_all(b"\n")
}

/// Streams sentences from a tab-separated corpus file. Blank lines are skipped.
pub struct CorpusReader {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(CorpusReader {
            lines: BufReader::new(f).lines(),
            path,
        })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.lines.next()? {
                Ok(line) => {
                    let s = Sentence::from_line(&line);
                    if !s.is_empty() {
                        return Some(Ok(s));
                    }
                }
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
        }
    }
}

/// Reads every sentence of the given corpus files, in order.
pub fn read_corpus<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for p in paths {
        for s in CorpusReader::open(p)? {
            out.push(s?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &Sentence) -> Vec<&str> {
        s.tokens.iter().map(String::as_str).collect()
    }

    #[test]
    fn sentence_split_examples() {
        assert_eq!(
            split_sentences("привет. как дела?"),
            vec!["привет", " как дела"]
        );
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("a...b!\n?c"), vec!["a", "b", "c"]);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks(&tokenize("Привет, МИР!")), vec!["привет", "мир"]);
        assert!(tokenize("...!!!").is_empty());
        assert_eq!(toks(&tokenize("с2015-го года")), vec!["с2015-го", "года"]);
        assert_eq!(toks(&tokenize("«Ёлка» — $100")), vec!["ёлка", "100"]);
    }

    #[test]
    fn preprocess_example() {
        let cfg = FilterConfig {
            strip_mentions: true,
            ..FilterConfig::default()
        };
        let msg = RawMessage::new(1, 0, "@a Привет мир! #лето");
        let out = preprocess_message(&msg, &IdentityStemmer, &cfg);
        let got: Vec<Vec<&str>> = out.iter().map(toks).collect();
        assert_eq!(got, vec![vec!["привет", "мир"], vec!["лето"]]);
        assert!(preprocess_message(&RawMessage::new(2, 0, ""), &IdentityStemmer, &cfg).is_empty());
    }

    #[test]
    fn mentions_kept_without_at_by_default() {
        let msg = RawMessage::new(1, 0, "@вася привет");
        let out = preprocess_message(&msg, &IdentityStemmer, &FilterConfig::default());
        assert_eq!(toks(&out[0]), vec!["вася", "привет"]);
    }

    #[test]
    fn newlines_split_sentences() {
        let out = normalize_text("первая строка\nвторая строка", &FilterConfig::default());
        assert_eq!(out.len(), 2);
    }

    struct Twice<S>(S);
    impl<S: Stemmer> Stemmer for Twice<S> {
        fn name(&self) -> &str {
            "twice"
        }
        fn stem(&self, token: &str) -> String {
            self.0.stem(&self.0.stem(token))
        }
    }

    #[test]
    fn identity_twice_is_identity() {
        let msg = RawMessage::new(1, 0, "Кошки ловят мышей. Собаки лают!");
        let cfg = FilterConfig::default();
        assert_eq!(
            preprocess_message(&msg, &IdentityStemmer, &cfg),
            preprocess_message(&msg, &Twice(IdentityStemmer), &cfg)
        );
    }

    #[test]
    fn suffix_stemmer_conflates_forms() {
        let s = SuffixStemmer::russian();
        assert_eq!(s.stem("кошками"), s.stem("кошка"));
        assert_eq!(s.stem("я"), "я");
        assert_eq!(s.stem("на"), "на");
        assert_eq!(s.stem("hello"), "hello");
    }

    #[test]
    fn stemmer_lookup() {
        assert_eq!(stemmer_by_name("identity").unwrap().name(), "identity");
        assert_eq!(stemmer_by_name("suffix-ru").unwrap().name(), "suffix-ru");
        assert!(stemmer_by_name("mystem").is_none());
    }

    #[test]
    fn corpus_line_roundtrip() {
        let s: Sentence = ["а", "б"].into_iter().collect();
        assert_eq!(s.to_line(), "а\tб");
        assert_eq!(Sentence::from_line("а\tб"), s);
    }

    // Counts maximal runs of non-terminator characters.
    fn segment_oracle(text: &str) -> usize {
        let mut count = 0;
        let mut in_seg = false;
        for c in text.chars() {
            let term = c == '.' || c == '!' || c == '?' || c == '\n';
            if !term && !in_seg {
                count += 1;
            }
            in_seg = !term;
        }
        count
    }

    fn tweetish() -> impl Strategy<Value = String> {
        "[а-яА-Яa-zA-Z0-9 .,!?\n@#«»:;()-]{0,80}"
    }

    proptest! {
        #[test]
        fn split_matches_oracle(text in tweetish()) {
            prop_assert_eq!(split_sentences(&text).len(), segment_oracle(&text));
        }

        #[test]
        fn tokenize_is_idempotent(text in tweetish()) {
            let once = tokenize(&text);
            let again = tokenize(&once.tokens.join(" "));
            prop_assert_eq!(once, again);
        }

        #[test]
        fn tokens_are_clean(text in tweetish()) {
            for t in tokenize(&text).tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
                prop_assert!(!t.chars().all(|c| c.is_ascii_punctuation()));
                prop_assert!(!t.chars().any(char::is_uppercase));
                prop_assert!(!t.starts_with('@') && !t.starts_with('#'));
            }
        }

        #[test]
        fn preprocessing_only_removes(text in tweetish()) {
            let msg = RawMessage::new(0, 0, text.clone());
            let out = preprocess_message(&msg, &SuffixStemmer::russian(), &FilterConfig::default());
            let n: usize = out.iter().map(Sentence::len).sum();
            prop_assert!(n <= text.split_whitespace().count() + text.matches(['.', '!', '?']).count());
        }

        #[test]
        fn suffix_stemmer_idempotent(word in "[а-я]{1,12}") {
            let s = SuffixStemmer::russian();
            let once = s.stem(&word);
            prop_assert_eq!(s.stem(&once), once);
        }
    }
}
