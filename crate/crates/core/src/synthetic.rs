//! Generated corpora with known structure, used for checks that need a
//! ground truth: topic clusters and planted word relations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{WordPair, WordPairDataset};
use crate::textprep::Sentence;

#[derive(Debug, Clone)]
pub struct ClusterCorpusSpec {
    pub clusters: usize,
    pub words_per_cluster: usize,
    pub tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ClusterCorpusSpec {
    fn default() -> Self {
        ClusterCorpusSpec {
            clusters: 2,
            words_per_cluster: 20,
            tokens: 1_000_000,
            min_len: 5,
            max_len: 15,
            seed: 2015,
        }
    }
}

pub fn cluster_word(cluster: usize, i: usize) -> String {
    format!("c{cluster}w{i:02}")
}

/// Cluster id encoded in a word produced by [`cluster_word`].
pub fn cluster_of(word: &str) -> Option<usize> {
    word.strip_prefix('c')?.split_once('w')?.0.parse().ok()
}

impl ClusterCorpusSpec {
    pub fn words(&self) -> Vec<String> {
        (0..self.clusters)
            .flat_map(|c| (0..self.words_per_cluster).map(move |i| cluster_word(c, i)))
            .collect()
    }

    /// Sentences drawn uniformly from a single cluster each, until the
    /// token budget is reached (the last sentence is truncated to fit).
    pub fn generate(&self) -> Vec<Sentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        let mut produced = 0;
        while produced < self.tokens {
            let c = rng.gen_range(0..self.clusters);
            let len = rng
                .gen_range(self.min_len..=self.max_len)
                .min(self.tokens - produced);
            let s: Sentence = (0..len)
                .map(|_| cluster_word(c, rng.gen_range(0..self.words_per_cluster)))
                .collect();
            produced += len;
            out.push(s);
        }
        out
    }

    /// Gold pairs: same-cluster pairs score in [0.6, 1], cross-cluster pairs
    /// in [0, 0.4]. Scores within each band are random, so only the cluster
    /// split is recoverable from the corpus.
    pub fn gold(&self, n_pairs: usize, seed: u64) -> WordPairDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = self.words();
        let mut all: Vec<(usize, usize)> = (0..words.len())
            .flat_map(|i| ((i + 1)..words.len()).map(move |j| (i, j)))
            .collect();
        all.shuffle(&mut rng);
        let pairs = all
            .into_iter()
            .take(n_pairs)
            .map(|(i, j)| {
                let same = cluster_of(&words[i]) == cluster_of(&words[j]);
                let base = if same { 0.6 } else { 0.0 };
                let gold = ((base + rng.gen_range(0.0..0.4)) * 100.0f64).round() / 100.0;
                WordPair {
                    word1: words[i].clone(),
                    word2: words[j].clone(),
                    gold,
                }
            })
            .collect();
        WordPairDataset { pairs }
    }
}

/// Corpus with planted `country : capital` relations. Every entity `i` has
/// a private topic; countries co-occur with a shared country marker and
/// capitals with a shared capital marker.
#[derive(Debug, Clone)]
pub struct RelationCorpusSpec {
    pub entities: usize,
    pub topic_words: usize,
    pub sentences: usize,
    pub seed: u64,
}

impl Default for RelationCorpusSpec {
    fn default() -> Self {
        RelationCorpusSpec {
            entities: 10,
            topic_words: 4,
            sentences: 40_000,
            seed: 7,
        }
    }
}

impl RelationCorpusSpec {
    pub fn country(i: usize) -> String {
        format!("country{i}")
    }

    pub fn capital(i: usize) -> String {
        format!("capital{i}")
    }

    pub fn generate(&self) -> Vec<Sentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let markers = [
            ["страна", "государство", "граница"],
            ["столица", "город", "мэр"],
        ];
        (0..self.sentences)
            .map(|_| {
                let i = rng.gen_range(0..self.entities);
                let is_capital = rng.gen_bool(0.5);
                let mut toks = vec![if is_capital {
                    Self::capital(i)
                } else {
                    Self::country(i)
                }];
                for _ in 0..2 {
                    toks.push(markers[is_capital as usize][rng.gen_range(0..3)].to_string());
                }
                for _ in 0..3 {
                    toks.push(format!("topic{i}x{}", rng.gen_range(0..self.topic_words)));
                }
                toks.shuffle(&mut rng);
                toks.into_iter().collect()
            })
            .collect()
    }

    /// `(a, b, c, expected)` queries: `country_j : capital_j :: country_i : capital_i`.
    pub fn queries(&self) -> Vec<[String; 4]> {
        let mut q = Vec::new();
        for i in 0..self.entities {
            let j = (i + 1) % self.entities;
            q.push([
                Self::country(j),
                Self::capital(j),
                Self::country(i),
                Self::capital(i),
            ]);
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_corpus_shape() {
        let spec = ClusterCorpusSpec {
            tokens: 10_000,
            ..Default::default()
        };
        let corpus = spec.generate();
        assert_eq!(corpus.iter().map(Sentence::len).sum::<usize>(), 10_000);
        for s in &corpus {
            let c = cluster_of(&s.tokens[0]).unwrap();
            assert!(s.tokens.iter().all(|t| cluster_of(t) == Some(c)));
        }
        assert_eq!(spec.generate(), corpus);
    }

    #[test]
    fn gold_bands() {
        let spec = ClusterCorpusSpec::default();
        let gold = spec.gold(100, 1);
        assert_eq!(gold.len(), 100);
        for p in &gold.pairs {
            let same = cluster_of(&p.word1) == cluster_of(&p.word2);
            assert_eq!(same, p.gold >= 0.6, "{p:?}");
        }
    }

    #[test]
    fn relation_queries_refer_to_generated_words() {
        let spec = RelationCorpusSpec {
            sentences: 500,
            ..Default::default()
        };
        let corpus = spec.generate();
        let words: std::collections::HashSet<&str> = corpus
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect();
        for q in spec.queries() {
            assert!(q.iter().all(|w| words.contains(w.as_str())));
        }
    }
}
