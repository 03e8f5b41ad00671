//! Word-pair similarity evaluation against human judgements.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::{Lookup, VectorStore};
use crate::error::{Error, Result};
use crate::textprep::Stemmer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPair {
    pub word1: String,
    pub word2: String,
    pub gold: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordPairDataset {
    pub pairs: Vec<WordPair>,
}

impl WordPairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses `word1,word2,score` CSV. A first line whose score column is
    /// not numeric is taken as a header.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.trim_start_matches('\u{feff}').trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    origin,
                    Some(lineno),
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            let gold: f64 = match fields[2].parse() {
                Ok(g) => g,
                Err(_) if lineno == 1 => continue,
                Err(_) => {
                    return Err(Error::format(
                        origin,
                        Some(lineno),
                        format!("score {:?} is not a number", fields[2]),
                    ))
                }
            };
            if !(0.0..=1.0).contains(&gold) {
                return Err(Error::format(
                    origin,
                    Some(lineno),
                    format!("score {gold} outside [0, 1]"),
                ));
            }
            let (a, b) = (fields[0].to_string(), fields[1].to_string());
            let key = if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            if !seen.insert(key) {
                return Err(Error::format(
                    origin,
                    Some(lineno),
                    format!("duplicate pair {a},{b}"),
                ));
            }
            pairs.push(WordPair {
                word1: a,
                word2: b,
                gold,
            });
        }
        Ok(WordPairDataset { pairs })
    }
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<WordPairDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    WordPairDataset::parse(&text, &path.display().to_string())
}

/// Ascending ranks from 1; tied values share the mean of their rank span.
pub fn rank(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "sample lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two pairs".into(),
        ));
    }
    Ok(())
}

/// Product-moment correlation, two-pass.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pairs(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of the tie-averaged ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pairs(xs, ys)?;
    pearson(&rank(xs), &rank(ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPair {
    pub word1: String,
    pub word2: String,
    /// Stemmed words that were missing or below the frequency floor.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spearman_rho: f64,
    pub pearson_r: f64,
    pub n_scored: usize,
    pub n_excluded: usize,
    pub excluded_pairs: Vec<ExcludedPair>,
}

impl EvalReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>10}", "metric", "value");
        let _ = writeln!(s, "{:<16} {:>10.4}", "spearman_rho", self.spearman_rho);
        let _ = writeln!(s, "{:<16} {:>10.4}", "pearson_r", self.pearson_r);
        let _ = writeln!(s, "{:<16} {:>10}", "n_scored", self.n_scored);
        let _ = writeln!(s, "{:<16} {:>10}", "n_excluded", self.n_excluded);
        for p in &self.excluded_pairs {
            let _ = writeln!(
                s,
                "excluded: {},{} (missing: {})",
                p.word1,
                p.word2,
                p.missing.join(", ")
            );
        }
        s
    }
}

/// Scores `store` on `dataset`. Both words of a pair are stemmed; the pair is
/// excluded when either is out of vocabulary or, with `frequency_floor`, has
/// a corpus count below it.
pub fn evaluate(
    store: &VectorStore,
    dataset: &WordPairDataset,
    stemmer: &dyn Stemmer,
    frequency_floor: Option<u64>,
) -> Result<EvalReport> {
    if frequency_floor.is_some() && !store.has_counts() {
        return Err(Error::Contract(
            "frequency floor requires word counts for the store".into(),
        ));
    }
    let mut model_scores = Vec::new();
    let mut gold_scores = Vec::new();
    let mut excluded = Vec::new();
    for pair in &dataset.pairs {
        let stems = [stemmer.stem(&pair.word1), stemmer.stem(&pair.word2)];
        let mut missing: Vec<String> = Vec::new();
        if let Some(floor) = frequency_floor {
            for s in &stems {
                if store.count(s).unwrap_or(0) < floor && !missing.contains(s) {
                    missing.push(s.clone());
                }
            }
        }
        if missing.is_empty() {
            match store.similarity(&stems[0], &stems[1], &crate::textprep::IdentityStemmer)? {
                Lookup::Found(sim) => {
                    model_scores.push(sim);
                    gold_scores.push(pair.gold);
                    continue;
                }
                Lookup::Oov(m) => missing = m,
            }
        }
        excluded.push(ExcludedPair {
            word1: pair.word1.clone(),
            word2: pair.word2.clone(),
            missing,
        });
    }
    if model_scores.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} of {} pairs scorable, need at least 2",
            model_scores.len(),
            dataset.len()
        )));
    }
    Ok(EvalReport {
        spearman_rho: spearman(&model_scores, &gold_scores)?,
        pearson_r: pearson(&model_scores, &gold_scores)?,
        n_scored: model_scores.len(),
        n_excluded: excluded.len(),
        excluded_pairs: excluded,
    })
}
