//! Train-and-evaluate grids over one hyperparameter.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use wordsim_core::config::RunConfig;
use wordsim_core::eval::{evaluate, WordPairDataset};
use wordsim_core::textprep::{read_corpus, Sentence};
use wordsim_core::{Error, Result};

use crate::commands::{fit, stemmer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    CorpusDays,
    ContextSize,
    VectorSize,
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corpus_days" | "days" => Ok(SweepVariable::CorpusDays),
            "context_size" | "window" => Ok(SweepVariable::ContextSize),
            "vector_size" | "dim" => Ok(SweepVariable::VectorSize),
            other => Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::CorpusDays => "corpus_days",
            SweepVariable::ContextSize => "context_size",
            SweepVariable::VectorSize => "vector_size",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub fixed: RunConfig,
    pub repeats: usize,
    /// Split the day files into `repeats` contiguous rounds; repeat `r`
    /// trains on round `r` only.
    pub rounds: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.values.contains(&0) {
            return Err(Error::Config(format!(
                "{} values must be positive",
                self.variable
            )));
        }
        if self.rounds && self.variable == SweepVariable::CorpusDays {
            return Err(Error::Config(
                "rounds cannot be combined with a corpus_days sweep".into(),
            ));
        }
        Ok(())
    }

    /// Day files used by repeat `r` of a cell with value `value`.
    pub fn cell_files<'a>(
        &self,
        value: usize,
        repeat: usize,
        day_files: &'a [PathBuf],
    ) -> &'a [PathBuf] {
        if self.rounds {
            let per = day_files.len() / self.repeats;
            return &day_files[repeat * per..(repeat + 1) * per];
        }
        match self.variable {
            SweepVariable::CorpusDays => &day_files[..value],
            _ => day_files,
        }
    }

    /// Configuration for one cell. Repeat `r` uses seed `fixed.seed + r`.
    pub fn cell_config(&self, value: usize, repeat: usize) -> RunConfig {
        let mut cfg = self.fixed.clone();
        cfg.train.seed = self.fixed.train.seed.wrapping_add(repeat as u64);
        match self.variable {
            SweepVariable::ContextSize => cfg.train.context = value,
            SweepVariable::VectorSize => cfg.train.dim = value,
            SweepVariable::CorpusDays => {}
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: usize,
    pub repeat: usize,
    pub seed: u64,
    pub corpus_days: usize,
    pub min_freq: u64,
    pub n_tokens: u64,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub n_scored: usize,
    pub n_excluded: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub variable: SweepVariable,
    pub value: usize,
    pub n_ok: usize,
    pub mean_spearman: Option<f64>,
    /// Sample standard deviation; absent with fewer than two successful repeats.
    pub std_spearman: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record<'a> {
    Row(&'a SweepRow),
    Summary(&'a SweepSummary),
}

impl SweepResult {
    pub fn to_json_lines(&self) -> String {
        let rows = self.rows.iter().map(Record::Row);
        let sums = self.summaries.iter().map(Record::Summary);
        rows.chain(sums)
            .map(|r| serde_json::to_string(&r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let fmt_opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.4}"));
        let mut out = String::new();
        out.push_str(&format!(
            "{:>8} {:>6} {:>8} {:>5} {:>10} {:>9} {:>9} {:>7} {:>8}  error\n",
            "value",
            "repeat",
            "seed",
            "days",
            "tokens",
            "spearman",
            "pearson",
            "scored",
            "excluded"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>8} {:>6} {:>8} {:>5} {:>10} {:>9} {:>9} {:>7} {:>8}  {}\n",
                r.value,
                r.repeat,
                r.seed,
                r.corpus_days,
                r.n_tokens,
                fmt_opt(r.spearman),
                fmt_opt(r.pearson),
                r.n_scored,
                r.n_excluded,
                r.error.as_deref().unwrap_or("")
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:>8} {:>4} {:>9} {:>9}\n",
            "value", "ok", "mean", "std"
        ));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:>8} {:>4} {:>9} {:>9}\n",
                s.value,
                s.n_ok,
                fmt_opt(s.mean_spearman),
                fmt_opt(s.std_spearman)
            ));
        }
        out
    }
}

/// Mean and sample standard deviation (`None` below two values).
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

pub fn summarize(
    variable: SweepVariable,
    values: &[usize],
    rows: &[SweepRow],
) -> Vec<SweepSummary> {
    values
        .iter()
        .map(|&value| {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| r.value == value)
                .filter_map(|r| r.spearman)
                .collect();
            let (mean, std) = mean_std(&scores);
            SweepSummary {
                variable,
                value,
                n_ok: scores.len(),
                mean_spearman: mean,
                std_spearman: std,
            }
        })
        .collect()
}

/// Runs every (value, repeat) cell. `day_files` are corpus files in
/// chronological order; a `corpus_days` value of `n` trains on the first `n`.
/// Other variables train on all of them, or on one round each when
/// `rounds` is set. A failing cell is recorded in its row and the sweep
/// moves on.
pub fn run_sweep(
    spec: &SweepSpec,
    day_files: &[PathBuf],
    gold: &WordPairDataset,
) -> Result<SweepResult> {
    spec.validate()?;
    if day_files.is_empty() {
        return Err(Error::Config("sweep needs at least one corpus file".into()));
    }
    if spec.variable == SweepVariable::CorpusDays {
        if let Some(&v) = spec.values.iter().find(|&&v| v > day_files.len()) {
            return Err(Error::Config(format!(
                "corpus_days {v} exceeds the {} files given",
                day_files.len()
            )));
        }
    }
    if spec.rounds && day_files.len() < spec.repeats {
        return Err(Error::Config(format!(
            "{} rounds need at least as many files, got {}",
            spec.repeats,
            day_files.len()
        )));
    }
    let stemmer = stemmer(&spec.fixed)?;

    let mut corpora: HashMap<&[PathBuf], Vec<Sentence>> = HashMap::new();
    let mut rows = Vec::new();
    for &value in &spec.values {
        for repeat in 0..spec.repeats {
            let files = spec.cell_files(value, repeat, day_files);
            if !corpora.contains_key(files) {
                corpora.insert(files, read_corpus(files)?);
            }
            let sentences = &corpora[files];
            let cfg = spec.cell_config(value, repeat);
            let mut row = SweepRow {
                variable: spec.variable,
                value,
                repeat,
                seed: cfg.train.seed,
                corpus_days: files.len(),
                min_freq: cfg.train.min_freq,
                n_tokens: sentences.iter().map(|s| s.len() as u64).sum(),
                spearman: None,
                pearson: None,
                n_scored: 0,
                n_excluded: 0,
                error: None,
            };
            let outcome = fit(sentences, &cfg).and_then(|(store, vocab, _)| {
                evaluate(&store.with_counts(&vocab), gold, stemmer.as_ref(), None)
            });
            match outcome {
                Ok(report) => {
                    row.spearman = Some(report.spearman_rho);
                    row.pearson = Some(report.pearson_r);
                    row.n_scored = report.n_scored;
                    row.n_excluded = report.n_excluded;
                }
                Err(e) => {
                    log::warn!(
                        "sweep cell {}={value} repeat {repeat} failed: {e}",
                        spec.variable
                    );
                    row.error = Some(e.to_string());
                }
            }
            log::info!(
                "sweep {}={value} repeat {repeat}: {:?}",
                spec.variable,
                row.spearman
            );
            rows.push(row);
        }
    }
    let summaries = summarize(spec.variable, &spec.values, &rows);
    Ok(SweepResult { rows, summaries })
}
