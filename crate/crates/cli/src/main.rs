use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wordsim_cli::commands::{self, describe_oov};
use wordsim_cli::exit_code;
use wordsim_cli::sweep::{run_sweep, SweepSpec, SweepVariable};
use wordsim_core::config::{Mode, RunConfig};
use wordsim_core::embeddings::StoreFormat;
use wordsim_core::eval::load_gold;
use wordsim_core::ingest::Source;
use wordsim_core::textprep::stemmer_by_name;
use wordsim_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wordsim",
    version,
    about = "Word embeddings from message streams, with word-similarity evaluation"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override keys from the config file.
#[derive(Args)]
struct Overrides {
    /// Flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    strip_mentions: bool,
    #[arg(long, global = true)]
    strip_links: bool,
    #[arg(long, global = true)]
    min_freq: Option<u64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// identity or suffix-ru
    #[arg(long, global = true)]
    stemmer: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = commands::load_config(self.config.as_deref())?;
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.train.workers = v;
        }
        if self.strip_mentions {
            cfg.filter.strip_mentions = true;
        }
        if self.strip_links {
            cfg.filter.strip_links = true;
        }
        if let Some(v) = self.min_freq {
            cfg.train.min_freq = v;
        }
        if let Some(v) = self.dim {
            cfg.train.dim = v;
        }
        if let Some(v) = self.window {
            cfg.train.context = v;
        }
        if let Some(v) = self.mode {
            cfg.train.mode = v;
        }
        if let Some(v) = &self.stemmer {
            if stemmer_by_name(v).is_none() {
                return Err(Error::Config(format!("unknown stemmer {v:?}")));
            }
            cfg.stemmer = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter and preprocess a JSONL stream into one corpus file per day
    Ingest {
        /// File path or tcp://host:port
        #[arg(long)]
        source: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics over day files
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train a model; `.bin` output selects the binary format
    Train {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cosine similarity of two words
    Similar {
        #[arg(long)]
        model: PathBuf,
        word1: String,
        word2: String,
    },
    /// Nearest neighbours of a word
    Nearest {
        #[arg(long)]
        model: PathBuf,
        word: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Words closest to b - a + c
    Analogy {
        #[arg(long)]
        model: PathBuf,
        a: String,
        b: String,
        c: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Rank correlation against a gold word-pair CSV
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Exclude pairs with a word seen fewer than N times
        #[arg(long)]
        frequency_floor: Option<u64>,
    },
    /// Train and evaluate over a grid of one hyperparameter
    Sweep {
        /// corpus_days, context_size or vector_size
        #[arg(long)]
        variable: SweepVariable,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Repeat r trains on the r-th contiguous slice of the files
        #[arg(long)]
        rounds: bool,
        #[arg(long)]
        gold: PathBuf,
        /// Day files in chronological order
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn model_format(path: &Path) -> StoreFormat {
    StoreFormat::from_path(path)
}

// Ok(false) means the command ran but a queried word was out of vocabulary.
fn run(cli: Cli) -> Result<bool> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Ingest { source, out } => {
            let summary = commands::cmd_ingest(&Source::parse(&source), &out, &cfg)?;
            for (day, file) in summary.days.iter().zip(&summary.files) {
                println!(
                    "{}\t{}\t{}/{}",
                    day.date,
                    file.display(),
                    day.messages_kept,
                    day.messages_in
                );
            }
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
        }
        Command::Stats { files, json } => {
            let stats = commands::cmd_stats(&files, cfg.train.min_freq)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string(&stats).expect("stats serialize")
                );
            } else {
                print!("{}", commands::stats_table(&stats));
            }
        }
        Command::Train { files, out } => {
            let summary = commands::cmd_train(&files, &cfg, &out, model_format(&out))?;
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
        }
        Command::Similar {
            model,
            word1,
            word2,
        } => {
            let store = commands::load_model(&model)?;
            let stemmer = commands::stemmer(&cfg)?;
            match describe_oov(store.similarity(&word1, &word2, stemmer.as_ref())?) {
                Ok(sim) => println!("{sim:.6}"),
                Err(msg) => {
                    eprintln!("{msg}");
                    return Ok(false);
                }
            }
        }
        Command::Nearest { model, word, k } => {
            let store = commands::load_model(&model)?;
            match describe_oov(store.nearest(&word, k)?) {
                Ok(list) => list.iter().for_each(|(w, s)| println!("{w}\t{s:.6}")),
                Err(msg) => {
                    eprintln!("{msg}");
                    return Ok(false);
                }
            }
        }
        Command::Analogy { model, a, b, c, k } => {
            let store = commands::load_model(&model)?;
            match describe_oov(store.analogy(&a, &b, &c, k)?) {
                Ok(list) => list.iter().for_each(|(w, s)| println!("{w}\t{s:.6}")),
                Err(msg) => {
                    eprintln!("{msg}");
                    return Ok(false);
                }
            }
        }
        Command::Eval {
            model,
            gold,
            frequency_floor,
        } => {
            let report = commands::cmd_eval(&model, &gold, &cfg, frequency_floor)?;
            print!("{}", report.to_table());
            println!("{}", report.to_json_line());
        }
        Command::Sweep {
            variable,
            values,
            repeats,
            rounds,
            gold,
            files,
        } => {
            let spec = SweepSpec {
                variable,
                values,
                fixed: cfg,
                repeats,
                rounds,
            };
            let result = run_sweep(&spec, &files, &load_gold(&gold)?)?;
            print!("{}", result.to_table());
            print!("{}", result.to_json_lines());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
