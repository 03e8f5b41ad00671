//! Dictionary construction, corpus statistics, frequent-word subsampling and
//! the negative-sampling noise distribution.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::Sentence;

/// Pruned word dictionary. Index 0 is the most frequent word; ties are
/// ordered lexicographically.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total_tokens: u64,
    min_freq: u64,
}

impl Vocabulary {
    /// Builds from raw counts, dropping words below `min_freq`.
    pub fn from_counts(counts: HashMap<String, u64>, min_freq: u64) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq && *c > 0)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut v = Vocabulary {
            min_freq,
            ..Default::default()
        };
        for (i, (w, c)) in entries.into_iter().enumerate() {
            v.index.insert(w.clone(), i);
            v.words.push(w);
            v.counts.push(c);
            v.total_tokens += c;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count_of(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.counts[i])
    }

    /// Sum of retained counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    /// Maps a sentence to vocabulary indices, dropping unknown words.
    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        sentence
            .tokens
            .iter()
            .filter_map(|t| self.index_of(t))
            .collect()
    }

    /// Writes `word<TAB>count` lines in index order.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a dump written by [`Vocabulary::dump`]. `min_freq` is taken as
    /// the smallest count present.
    pub fn load_dump(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts = HashMap::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let (word, count) = line.rsplit_once('\t').ok_or_else(|| {
                Error::format(
                    path.display().to_string(),
                    Some(n + 1),
                    "expected word<TAB>count",
                )
            })?;
            let count: u64 = count.parse().map_err(|_| {
                Error::format(
                    path.display().to_string(),
                    Some(n + 1),
                    format!("bad count {count:?}"),
                )
            })?;
            if counts.insert(word.to_string(), count).is_some() {
                return Err(Error::format(
                    path.display().to_string(),
                    Some(n + 1),
                    format!("duplicate word {word:?}"),
                ));
            }
        }
        let min = counts.values().copied().min().unwrap_or(1);
        Ok(Vocabulary::from_counts(counts, min))
    }
}

/// Counts tokens and keeps words seen at least `min_freq` times.
pub fn build_vocabulary<'a, I>(corpus: I, min_freq: u64) -> Vocabulary
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for s in corpus {
        for t in &s.tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    Vocabulary::from_counts(counts, min_freq)
}

/// Probability of keeping one occurrence of a word with `count` occurrences
/// among `total` retained tokens, for downsampling threshold `t`:
/// `min(1, sqrt(t/f) + t/f)` with `f = count / total`.
pub fn keep_probability(count: u64, total: u64, t: f64) -> f64 {
    if count == 0 || total == 0 {
        return 1.0;
    }
    let f = count as f64 / total as f64;
    let r = t / f;
    (r.sqrt() + r).min(1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_messages: u64,
    pub n_tokens: u64,
    pub n_sentences: u64,
    pub dict_size_full: u64,
    pub dict_size_pruned: u64,
    pub n_tokens_pruned: u64,
    pub avg_sentence_length: f64,
    /// Threshold used for the pruned fields.
    pub min_freq: u64,
}

/// Single-pass accumulator behind [`corpus_stats`].
#[derive(Debug, Default)]
pub struct StatsAccumulator {
    counts: HashMap<String, u64>,
    n_messages: u64,
    n_tokens: u64,
    n_sentences: u64,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_message(&mut self, sentences: &[Sentence]) {
        self.n_messages += 1;
        for s in sentences {
            self.add_sentence(s);
        }
    }

    /// For sources where message boundaries are known only as a count.
    pub fn add_message_count(&mut self, n: u64) {
        self.n_messages += n;
    }

    pub fn add_sentence(&mut self, s: &Sentence) {
        self.n_sentences += 1;
        self.n_tokens += s.len() as u64;
        for t in &s.tokens {
            *self.counts.entry(t.clone()).or_insert(0) += 1;
        }
    }

    pub fn finish(self, min_freq: u64) -> CorpusStats {
        let (pruned, tokens_pruned) = self
            .counts
            .values()
            .filter(|&&c| c >= min_freq)
            .fold((0u64, 0u64), |(n, t), &c| (n + 1, t + c));
        CorpusStats {
            n_messages: self.n_messages,
            n_tokens: self.n_tokens,
            n_sentences: self.n_sentences,
            dict_size_full: self.counts.len() as u64,
            dict_size_pruned: pruned,
            n_tokens_pruned: tokens_pruned,
            avg_sentence_length: if self.n_sentences == 0 {
                0.0
            } else {
                self.n_tokens as f64 / self.n_sentences as f64
            },
            min_freq,
        }
    }
}

/// Statistics over messages given as their sentence lists.
pub fn corpus_stats<'a, I>(messages: I, min_freq: u64) -> CorpusStats
where
    I: IntoIterator<Item = &'a [Sentence]>,
{
    let mut acc = StatsAccumulator::new();
    for m in messages {
        acc.add_message(m);
    }
    acc.finish(min_freq)
}

/// Exponent applied to counts in the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

/// Unigram distribution raised to a power, sampled by binary search over
/// the cumulative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDistribution {
    cumulative: Vec<f64>,
    exponent: f64,
}

impl NoiseDistribution {
    pub fn new(vocab: &Vocabulary) -> Self {
        Self::with_exponent(vocab.counts(), NOISE_EXPONENT)
    }

    pub fn with_exponent(counts: &[u64], exponent: f64) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        NoiseDistribution {
            cumulative,
            exponent,
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Probability mass of index `i`.
    pub fn probability(&self, i: usize) -> f64 {
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        self.cumulative[i] - lo
    }

    /// Draws one vocabulary index. Panics on an empty distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sentences(lines: &[&str]) -> Vec<Sentence> {
        lines
            .iter()
            .map(|l| l.split(' ').filter(|t| !t.is_empty()).collect())
            .collect()
    }

    #[test]
    fn prunes_below_min_freq() {
        let v = build_vocabulary(&sentences(&["a a b"]), 2);
        assert_eq!(v.len(), 1);
        assert_eq!(v.count_of("a"), Some(2));
        assert_eq!(v.index_of("b"), None);
        assert_eq!(v.total_tokens(), 2);
    }

    #[test]
    fn min_freq_one_keeps_everything() {
        let corpus = sentences(&["a b c", "c d"]);
        let v = build_vocabulary(&corpus, 1);
        let stats = corpus_stats(corpus.iter().map(std::slice::from_ref), 1);
        assert_eq!(v.len() as u64, stats.dict_size_full);
        assert_eq!(stats.dict_size_pruned, stats.dict_size_full);
    }

    #[test]
    fn index_order_descending_count_then_lexicographic() {
        let v = build_vocabulary(&sentences(&["b a c c b"]), 1);
        assert_eq!(v.words(), &["b", "c", "a"]);
    }

    #[test]
    fn empty_corpus() {
        let v = build_vocabulary(&[], 1);
        assert!(v.is_empty());
        let s = corpus_stats(std::iter::empty(), 40);
        assert_eq!(
            s,
            CorpusStats {
                min_freq: 40,
                ..Default::default()
            }
        );
    }

    #[test]
    fn counts_match_hash_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let words: Vec<String> = (0..3000).map(|i| format!("w{i}")).collect();
        let mut corpus = Vec::new();
        let mut produced = 0;
        while produced < 10_000 {
            let len = rng.gen_range(1..15);
            let s: Sentence = (0..len)
                .map(|_| {
                    // skewed choice so that many words fall below the threshold
                    let r: f64 = rng.gen();
                    words[(r * r * words.len() as f64) as usize].clone()
                })
                .collect();
            produced += s.len();
            corpus.push(s);
        }
        let mut oracle: std::collections::BTreeMap<&str, u64> = Default::default();
        for s in &corpus {
            for t in &s.tokens {
                *oracle.entry(t).or_default() += 1;
            }
        }
        let v = build_vocabulary(&corpus, 5);
        let kept: Vec<_> = oracle.iter().filter(|(_, &c)| c >= 5).collect();
        assert_eq!(v.len(), kept.len());
        assert!(kept.len() < oracle.len());
        for (w, &c) in kept {
            assert_eq!(v.count_of(w), Some(c));
        }
        assert_eq!(v.total_tokens(), v.counts().iter().sum::<u64>());
    }

    #[test]
    fn keep_probability_examples() {
        assert_eq!(keep_probability(1, 1000, 1e-3), 1.0);
        let p = keep_probability(100, 1000, 1e-3);
        assert!((p - 0.11).abs() < 1e-12, "{p}");
        assert_eq!(keep_probability(999, 1000, 1.0), 1.0);
        assert_eq!(keep_probability(1000, 1000, 1.0), 1.0);
    }

    #[test]
    fn stats_average() {
        let corpus = sentences(&["a b c", "a b c d e f g"]);
        let s = corpus_stats([&corpus[..]], 1);
        assert_eq!(s.n_messages, 1);
        assert_eq!(s.n_sentences, 2);
        assert_eq!(s.avg_sentence_length, 5.0);
    }

    #[test]
    fn dump_roundtrip() {
        let v = build_vocabulary(&sentences(&["x y y z z z"]), 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.tsv");
        v.dump(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "z\t3\ny\t2\nx\t1\n");
        assert_eq!(Vocabulary::load_dump(&p).unwrap(), v);
    }

    #[test]
    fn noise_distribution_shape() {
        let counts = [100u64, 10, 1, 1];
        let n = NoiseDistribution::with_exponent(&counts, 0.75);
        assert!(n.cumulative().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*n.cumulative().last().unwrap(), 1.0);
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        for (i, &c) in counts.iter().enumerate() {
            assert!((n.probability(i) - (c as f64).powf(0.75) / z).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_sampling_frequencies() {
        let counts = [500u64, 120, 40, 9, 3, 1];
        let n = NoiseDistribution::with_exponent(&counts, 0.75);
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        let draws = 1_000_000;
        let mut hist = [0usize; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..draws {
            hist[n.sample(&mut rng)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = (c as f64).powf(0.75) / z;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = hist[i] as f64 / draws as f64;
            assert!((freq - p).abs() < 5.0 * se, "index {i}: {freq} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn keep_probability_monotone(c1 in 1u64..10_000, c2 in 1u64..10_000, t in 1e-6f64..1.0) {
            let total = 20_000;
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let (plo, phi) = (keep_probability(lo, total, t), keep_probability(hi, total, t));
            prop_assert!(phi <= plo);
            prop_assert!(phi > 0.0 && plo <= 1.0);
        }

        #[test]
        fn rare_words_always_kept(total in 1000u64..1_000_000, t in 1e-4f64..1e-2) {
            let count = ((t * total as f64).floor() as u64).max(1);
            if (count as f64 / total as f64) <= t {
                prop_assert_eq!(keep_probability(count, total, t), 1.0);
            }
        }

        #[test]
        fn pruning_conservation(tokens in prop::collection::vec(0u8..20, 0..300), min_freq in 1u64..6) {
            let s: Sentence = tokens.iter().map(|t| t.to_string()).collect();
            let corpus = vec![s];
            let v = build_vocabulary(&corpus, min_freq);
            let stats = corpus_stats([&corpus[..]], min_freq);
            prop_assert_eq!(stats.n_tokens_pruned, v.counts().iter().sum::<u64>());
            prop_assert_eq!(stats.dict_size_pruned as usize, v.len());
            prop_assert!(v.counts().iter().all(|&c| c >= min_freq));
            let mut idx: Vec<usize> = v.words().iter().map(|w| v.index_of(w).unwrap()).collect();
            idx.sort_unstable();
            prop_assert_eq!(idx, (0..v.len()).collect::<Vec<_>>());
        }
    }
}
