//! Run configuration: training hyperparameters and filter settings, read
//! from a flat `key = value` file.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    SkipGram,
    Cbow,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "skipgram" | "skip-gram" | "sg" => Ok(Mode::SkipGram),
            "cbow" => Ok(Mode::Cbow),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?}, expected skipgram or cbow"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SkipGram => "skipgram",
            Mode::Cbow => "cbow",
        })
    }
}

/// Largest supported half-window; sentences are short enough that wider
/// windows add nothing.
pub const MAX_CONTEXT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Maximum half-window C.
    pub context: usize,
    pub min_freq: u64,
    pub subsample_t: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub lr_initial: f64,
    /// Defaults to `1e-4 * lr_initial` when unset.
    pub lr_floor: Option<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub workers: usize,
    /// Always use the full window instead of drawing b from 1..=C.
    pub fixed_window: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            context: 5,
            min_freq: 40,
            subsample_t: 1e-3,
            epochs: 1,
            negatives: 5,
            lr_initial: 0.025,
            lr_floor: None,
            seed: 1,
            mode: Mode::SkipGram,
            workers: 1,
            fixed_window: false,
        }
    }
}

impl TrainConfig {
    pub fn lr_floor(&self) -> f64 {
        self.lr_floor.unwrap_or(1e-4 * self.lr_initial)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(1..=MAX_CONTEXT).contains(&self.context) {
            return bad("window must be within 1..=10");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.min_freq == 0 {
            return bad("min_freq must be at least 1");
        }
        if self.subsample_t.is_nan() || self.subsample_t <= 0.0 {
            return bad("subsample must be positive");
        }
        if [self.lr_initial, self.lr_floor()]
            .iter()
            .any(|x| x.is_nan() || *x < 0.0)
        {
            return bad("learning rates must be non-negative");
        }
        Ok(())
    }
}

/// Everything a run needs, as loaded from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub filter: FilterConfig,
    pub stemmer: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            filter: FilterConfig::default(),
            stemmer: "identity".to_string(),
        }
    }
}

/// Every key accepted in a config file.
pub const KEYS: &[&str] = &[
    "dim",
    "window",
    "min_freq",
    "subsample",
    "epochs",
    "negatives",
    "lr_initial",
    "lr_floor",
    "seed",
    "mode",
    "workers",
    "fixed_window",
    "min_cyrillic_run",
    "query_words",
    "strip_mentions",
    "strip_links",
    "strip_hashmarks_only",
    "stemmer",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let f = &mut self.filter;
        match key {
            "dim" => t.dim = parse_value(key, value)?,
            "window" => t.context = parse_value(key, value)?,
            "min_freq" => t.min_freq = parse_value(key, value)?,
            "subsample" => t.subsample_t = parse_value(key, value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "negatives" => t.negatives = parse_value(key, value)?,
            "lr_initial" => t.lr_initial = parse_value(key, value)?,
            "lr_floor" => t.lr_floor = Some(parse_value(key, value)?),
            "seed" => t.seed = parse_value(key, value)?,
            "mode" => t.mode = value.parse()?,
            "workers" => t.workers = parse_value(key, value)?,
            "fixed_window" => t.fixed_window = parse_bool(key, value)?,
            "min_cyrillic_run" => f.min_cyrillic_run = parse_value(key, value)?,
            "query_words" => {
                f.query_words = value
                    .split(',')
                    .map(|w| w.trim().to_lowercase())
                    .filter(|w| !w.is_empty())
                    .collect::<BTreeSet<_>>()
            }
            "strip_mentions" => f.strip_mentions = parse_bool(key, value)?,
            "strip_links" => f.strip_links = parse_bool(key, value)?,
            "strip_hashmarks_only" => f.strip_hashmarks_only = parse_bool(key, value)?,
            "stemmer" => self.stemmer = value.to_string(),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line. Returns the
    /// config and the keys left at their defaults.
    pub fn parse(text: &str) -> Result<(RunConfig, Vec<&'static str>)> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            cfg.set(key, value.trim()).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("configuration error: ")
                ))
            })?;
            seen.insert(key.to_string());
        }
        let defaulted = KEYS
            .iter()
            .copied()
            .filter(|k| !seen.contains(*k))
            .collect();
        cfg.validate()?;
        Ok((cfg, defaulted))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.filter.validate()?;
        if crate::textprep::stemmer_by_name(&self.stemmer).is_none() {
            return Err(Error::Config(format!("unknown stemmer {:?}", self.stemmer)));
        }
        Ok(())
    }

    /// Effective settings in the config file syntax, one key per line.
    pub fn dump(&self) -> String {
        let t = &self.train;
        let f = &self.filter;
        let words: Vec<&str> = f.query_words.iter().map(String::as_str).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("dim", t.dim.to_string()),
            ("window", t.context.to_string()),
            ("min_freq", t.min_freq.to_string()),
            ("subsample", t.subsample_t.to_string()),
            ("epochs", t.epochs.to_string()),
            ("negatives", t.negatives.to_string()),
            ("lr_initial", t.lr_initial.to_string()),
            ("lr_floor", t.lr_floor().to_string()),
            ("seed", t.seed.to_string()),
            ("mode", t.mode.to_string()),
            ("workers", t.workers.to_string()),
            ("fixed_window", t.fixed_window.to_string()),
            ("min_cyrillic_run", f.min_cyrillic_run.to_string()),
            ("query_words", words.join(",")),
            ("strip_mentions", f.strip_mentions.to_string()),
            ("strip_links", f.strip_links.to_string()),
            ("strip_hashmarks_only", f.strip_hashmarks_only.to_string()),
            ("stemmer", self.stemmer.clone()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reported_setup() {
        let t = TrainConfig::default();
        assert_eq!(
            (t.dim, t.context, t.min_freq, t.subsample_t, t.epochs),
            (300, 5, 40, 1e-3, 1)
        );
        assert_eq!(t.negatives, 5);
        assert!((t.lr_floor() - 2.5e-6).abs() < 1e-18);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let (cfg, defaulted) = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(defaulted.len(), KEYS.len());
    }

    #[test]
    fn parses_keys_and_comments() {
        let text =
            "# run\ndim = 50\nwindow=2\nmode = cbow\nquery_words = Я, ты\nstrip_links = yes\n";
        let (cfg, defaulted) = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.train.dim, 50);
        assert_eq!(cfg.train.context, 2);
        assert_eq!(cfg.train.mode, Mode::Cbow);
        assert!(cfg.filter.strip_links);
        assert_eq!(cfg.filter.query_words.len(), 2);
        assert!(cfg.filter.query_words.contains("я"));
        assert!(!defaulted.contains(&"dim"));
        assert!(defaulted.contains(&"seed"));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::parse("dims = 3\n").unwrap_err();
        assert!(err.to_string().contains("dims"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::parse("dim = abc").is_err());
        assert!(RunConfig::parse("window = 11").is_err());
        assert!(RunConfig::parse("window = 0").is_err());
        assert!(RunConfig::parse("epochs = 0").is_err());
        assert!(RunConfig::parse("stemmer = mystem").is_err());
        assert!(RunConfig::parse("just a line").is_err());
    }

    #[test]
    fn dump_reparses_to_effective_settings() {
        let (cfg, _) =
            RunConfig::parse("dim = 7\nlr_initial = 0.05\nseed = 42\nstrip_mentions = true\n")
                .unwrap();
        let (again, defaulted) = RunConfig::parse(&cfg.dump()).unwrap();
        assert!(defaulted.is_empty());
        assert_eq!(again.train.lr_floor(), cfg.train.lr_floor());
        assert_eq!(again.dump(), cfg.dump());
        assert_eq!(again.filter, cfg.filter);
        let mut a = again.train.clone();
        let mut b = cfg.train.clone();
        a.lr_floor = None;
        b.lr_floor = None;
        assert_eq!(a, b);
    }
}
