//! One function per subcommand. Each returns a typed result; printing is
//! left to the binary.

use std::collections::btree_map::{BTreeMap, Entry};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use wordsim_core::config::RunConfig;
use wordsim_core::embeddings::{Lookup, StoreFormat, VectorStore};
use wordsim_core::eval::{evaluate, load_gold, EvalReport};
use wordsim_core::filter::{has_cyrillic_run, matches_query, FilterConfig};
use wordsim_core::ingest::{read_stream, IdRegistry, RawMessage, Source};
use wordsim_core::textprep::{
    normalize_text, read_corpus, stem_sentence, stemmer_by_name, write_sentence, CorpusReader,
    Sentence, Stemmer,
};
use wordsim_core::trainer::{train, TrainReport};
use wordsim_core::vocab::{
    build_vocabulary, CorpusStats, NoiseDistribution, StatsAccumulator, Vocabulary,
};
use wordsim_core::{Error, Result};

pub const CORPUS_EXT: &str = "tsv";
pub const META_EXT: &str = "meta.json";
pub const IDS_FILE: &str = "ids.txt";

pub fn stemmer(cfg: &RunConfig) -> Result<Box<dyn Stemmer>> {
    stemmer_by_name(&cfg.stemmer)
        .ok_or_else(|| Error::Config(format!("unknown stemmer {:?}", cfg.stemmer)))
}

/// Loads a config file (or defaults), logging every key left at its default.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        log::info!("no config file; using defaults for all keys");
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (cfg, defaulted) = RunConfig::parse(&text)?;
    for key in defaulted {
        log::info!("config key {key} not set; using default");
    }
    Ok(cfg)
}

/// Per-day bookkeeping written next to each corpus file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayMeta {
    pub date: String,
    pub messages_in: u64,
    pub messages_kept: u64,
    pub sentences: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines_in: usize,
    pub skipped_lines: usize,
    pub messages_in: u64,
    pub messages_kept: u64,
    pub days: Vec<DayMeta>,
    pub files: Vec<PathBuf>,
    pub ids_file: PathBuf,
}

/// Whether a message enters the corpus, and its unstemmed sentences.
pub fn admit(msg: &RawMessage, filter: &FilterConfig) -> Option<Vec<Sentence>> {
    if !has_cyrillic_run(&msg.text, filter.min_cyrillic_run) {
        return None;
    }
    let sentences = normalize_text(&msg.text, filter);
    if filter.query_enabled() {
        let tokens: Vec<&str> = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect();
        if !matches_query(&tokens, &filter.query_words) {
            return None;
        }
    }
    Some(sentences)
}

pub fn corpus_path(out_dir: &Path, date: NaiveDate) -> PathBuf {
    out_dir.join(format!("{date}.{CORPUS_EXT}"))
}

pub fn meta_path(corpus: &Path) -> PathBuf {
    corpus.with_extension(META_EXT)
}

struct DayOut {
    writer: BufWriter<File>,
    path: PathBuf,
    meta: DayMeta,
}

/// Reads a stream, filters and preprocesses it, and writes one corpus file
/// per UTC day plus the id registry. Every day present in the stream gets a
/// file, even when none of its messages pass the filter.
pub fn cmd_ingest(source: &Source, out_dir: &Path, cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.filter.validate()?;
    let stemmer = stemmer(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut registry = IdRegistry::create(out_dir.join(IDS_FILE))?;
    let mut days: BTreeMap<NaiveDate, DayOut> = BTreeMap::new();
    let mut reader = read_stream(source)?;

    for msg in reader.by_ref() {
        let msg = msg?;
        let date = msg.day();
        let day = match days.entry(date) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let path = corpus_path(out_dir, date);
                let f = File::create(&path).map_err(|err| Error::io(&path, err))?;
                e.insert(DayOut {
                    writer: BufWriter::new(f),
                    path,
                    meta: DayMeta {
                        date: date.to_string(),
                        ..Default::default()
                    },
                })
            }
        };
        day.meta.messages_in += 1;
        let Some(sentences) = admit(&msg, &cfg.filter) else {
            continue;
        };
        day.meta.messages_kept += 1;
        for s in sentences
            .into_iter()
            .filter_map(|s| stem_sentence(s, stemmer.as_ref()))
        {
            write_sentence(&mut day.writer, &s).map_err(|e| Error::io(&day.path, e))?;
            day.meta.sentences += 1;
        }
        registry.register(msg.id)?;
    }
    registry.flush()?;

    let mut summary = IngestSummary {
        lines_in: reader.lines_in(),
        skipped_lines: reader.skipped(),
        ids_file: registry.path().to_path_buf(),
        ..Default::default()
    };
    for (_, mut day) in days {
        day.writer.flush().map_err(|e| Error::io(&day.path, e))?;
        let meta = meta_path(&day.path);
        let json = serde_json::to_string_pretty(&day.meta).expect("meta serializes");
        fs::write(&meta, json + "\n").map_err(|e| Error::io(&meta, e))?;
        summary.messages_in += day.meta.messages_in;
        summary.messages_kept += day.meta.messages_kept;
        summary.files.push(day.path);
        summary.days.push(day.meta);
    }
    if summary.messages_kept == 0 {
        log::warn!("no message passed the language filter; corpus files are empty");
    }
    if summary.skipped_lines > 0 {
        log::warn!("skipped {} malformed lines", summary.skipped_lines);
    }
    Ok(summary)
}

/// Statistics over corpus files. Message counts come from the `.meta.json`
/// sidecars written by `ingest`.
pub fn cmd_stats<P: AsRef<Path>>(files: &[P], min_freq: u64) -> Result<CorpusStats> {
    let mut acc = StatsAccumulator::new();
    for file in files {
        let file = file.as_ref();
        for s in CorpusReader::open(file)? {
            acc.add_sentence(&s?);
        }
        let meta = meta_path(file);
        match fs::read_to_string(&meta) {
            Ok(text) => {
                let m: DayMeta = serde_json::from_str(&text)
                    .map_err(|e| Error::format(meta.display().to_string(), None, e.to_string()))?;
                acc.add_message_count(m.messages_kept);
            }
            Err(_) => log::warn!(
                "{} has no {} sidecar; message count unknown",
                file.display(),
                META_EXT
            ),
        }
    }
    Ok(acc.finish(min_freq))
}

pub fn stats_table(s: &CorpusStats) -> String {
    let rows = [
        ("Number of messages", s.n_messages.to_string()),
        ("Number of tokens", s.n_tokens.to_string()),
        ("Number of sentences", s.n_sentences.to_string()),
        ("Size of dictionary (full)", s.dict_size_full.to_string()),
        (
            &*format!("Size of dictionary (minfreq={})", s.min_freq),
            s.dict_size_pruned.to_string(),
        ),
        (
            &*format!("Number of tokens (minfreq={})", s.min_freq),
            s.n_tokens_pruned.to_string(),
        ),
        (
            "Average sentence length",
            format!("{:.2}", s.avg_sentence_length),
        ),
    ]
    .map(|(k, v)| format!("{k:<34} {v:>12}\n"));
    rows.concat()
}

/// Paths written by `train` for a model at `model`.
pub fn vocab_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".vocab");
    PathBuf::from(p)
}

pub fn config_dump_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".config");
    PathBuf::from(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: PathBuf,
    pub vocab_size: usize,
    pub tokens_seen: u64,
    pub tokens_trained: u64,
    pub loss_first_decile: f64,
    pub loss_last_decile: f64,
}

/// Builds the vocabulary from `sentences` and trains a model.
pub fn fit(
    sentences: &[Sentence],
    cfg: &RunConfig,
) -> Result<(VectorStore, Vocabulary, TrainReport)> {
    let vocab = build_vocabulary(sentences, cfg.train.min_freq);
    let noise = NoiseDistribution::new(&vocab);
    let (model, report) = train(sentences, &vocab, &noise, &cfg.train)?;
    Ok((VectorStore::from_model(&model), vocab, report))
}

/// Trains on corpus files and writes the model, its vocabulary dump and the
/// effective configuration.
pub fn cmd_train<P: AsRef<Path>>(
    files: &[P],
    cfg: &RunConfig,
    out: &Path,
    format: StoreFormat,
) -> Result<TrainSummary> {
    let sentences = read_corpus(files)?;
    let (store, vocab, report) = fit(&sentences, cfg)?;
    store.save(out, format)?;
    vocab.dump(vocab_path(out))?;
    let cfg_path = config_dump_path(out);
    fs::write(&cfg_path, cfg.dump()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(TrainSummary {
        model: out.to_path_buf(),
        vocab_size: vocab.len(),
        tokens_seen: report.tokens_seen,
        tokens_trained: report.tokens_trained,
        loss_first_decile: report.mean_loss(0.0, 0.1),
        loss_last_decile: report.mean_loss(0.9, 1.0),
    })
}

/// Loads a model; `.bin` files are binary. Counts are attached from the
/// `.vocab` dump next to it when present.
pub fn load_model(path: &Path) -> Result<VectorStore> {
    let store = VectorStore::load(path, StoreFormat::from_path(path))?;
    let vp = vocab_path(path);
    if vp.exists() {
        Ok(store.with_counts(&Vocabulary::load_dump(&vp)?))
    } else {
        Ok(store)
    }
}

pub fn describe_oov<T>(l: Lookup<T>) -> std::result::Result<T, String> {
    match l {
        Lookup::Found(t) => Ok(t),
        Lookup::Oov(words) => Err(format!("out of vocabulary: {}", words.join(", "))),
    }
}

pub fn cmd_eval(
    model: &Path,
    gold: &Path,
    cfg: &RunConfig,
    frequency_floor: Option<u64>,
) -> Result<EvalReport> {
    let store = load_model(model)?;
    let dataset = load_gold(gold)?;
    let stemmer = stemmer(cfg)?;
    evaluate(&store, &dataset, stemmer.as_ref(), frequency_floor)
}
