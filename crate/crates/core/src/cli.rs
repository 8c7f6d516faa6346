//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{import_csv, Corpus, DrugRecord, MatchMode};
use crate::dataset::{build_dataset, EvalDataset, Subset};
use crate::error::{Error, Result};
use crate::metrics::InvalidPolicy;
use crate::protocols::{run_protocol, Lang, Protocol, RunLog, RunOptions};
use crate::providers::{build_provider, ProviderConfig, ProviderContext};
use crate::report::{default_label, load_summaries, render_report, score_run, write_score_dir};
use crate::retrieval::{build_index, Bm25Params, Index};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "herbprobe", version, about = "Drug-ingredient knowledge probes for language models")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Evaluation dataset construction.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run a protocol against a provider.
    Run(RunArgs),
    /// Score a run log.
    Score(ScoreArgs),
    /// Combine scored runs into a markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Convert a CSV file (name, ingredients, text) to the JSONL corpus format.
    ImportCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Build the mixed dataset and its T-only and F-only views.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Mixed dataset path; the views go next to it as <stem>.T.jsonl and
        /// <stem>.F.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Treat processing markers as part of ingredient identity.
        #[arg(long)]
        match_markers: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProtocolArg {
    Inquiry,
    Verify,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Inquiry => Protocol::Inquiry,
            ProtocolArg::Verify => Protocol::Verify,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LangArg {
    Zh,
    En,
}

impl From<LangArg> for Lang {
    fn from(l: LangArg) -> Self {
        match l {
            LangArg::Zh => Lang::Zh,
            LangArg::En => Lang::En,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Provider configuration (TOML or JSON).
    #[arg(long)]
    pub provider_config: PathBuf,
    /// Run log (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Needed by corpus-backed providers (oracle, grounded, rag, ...).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Parallel provider calls; defaults to the config's concurrency_limit.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Keep records already in --out and run only the missing items.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, value_enum, default_value = "zh")]
    pub lang: LangArg,
    #[arg(long)]
    pub match_markers: bool,
    /// Index cache file, rebuilt when stale.
    #[arg(long)]
    pub index_cache: Option<PathBuf>,
    /// Exit 1 when more items than this fail. Default: fail only when every
    /// item failed.
    #[arg(long)]
    pub max_errors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Leave unparseable answers out of the confusion matrix.
    #[arg(long, conflicts_with = "invalid_as_no")]
    pub exclude_invalid: bool,
    /// Count unparseable answers as "No".
    #[arg(long)]
    pub invalid_as_no: bool,
    #[arg(long)]
    pub match_markers: bool,
    /// Row label in reports; defaults to the model name or provider kind.
    #[arg(long)]
    pub label: Option<String>,
    /// Length of the top and bottom herb tables.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for metrics.json files.
    #[arg(long)]
    pub metrics_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Corpus(CorpusCommand::ImportCsv { input, out }) => cmd_import_csv(&input, &out),
        Command::Dataset(DatasetCommand::Build {
            corpus,
            seed,
            out,
            match_markers,
        }) => cmd_dataset_build(&corpus, seed, &out, MatchMode::from_flag(match_markers)).map(|paths| {
            for p in paths {
                say!("{}", p.display());
            }
        }),
        Command::Run(args) => cmd_run(&args),
        Command::Score(args) => cmd_score(&args),
        Command::Report(args) => cmd_report(&args.metrics_dir, &args.out),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn cmd_import_csv(input: &Path, out: &Path) -> Result<()> {
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let lines = import_csv(file)?;
    let records = lines.iter().map(DrugRecord::from_line).collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::new(records)?;
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).map_err(|e| Error::io(out, e))?;
    write_file(out, &buf)?;
    say!("{} records -> {}", corpus.len(), out.display());
    Ok(())
}

/// `<dir>/<stem>.<view>.jsonl` next to `out`.
pub fn view_path(out: &Path, view: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{view}.jsonl"))
}

/// Writes the mixed dataset and its T and F views; returns the three paths.
pub fn cmd_dataset_build(corpus_path: &Path, seed: u64, out: &Path, mode: MatchMode) -> Result<Vec<PathBuf>> {
    let corpus = Corpus::load(corpus_path)?;
    let dataset = build_dataset(&corpus, seed, mode)?;
    let t_path = view_path(out, "T");
    let f_path = view_path(out, "F");
    write_file(out, dataset.to_jsonl().as_bytes())?;
    write_file(&t_path, dataset.view(Subset::T).to_jsonl().as_bytes())?;
    write_file(&f_path, dataset.view(Subset::F).to_jsonl().as_bytes())?;
    let (t, f) = dataset.counts();
    log::info!("dataset: {t} T items, {f} F items");
    Ok(vec![out.to_path_buf(), t_path, f_path])
}

fn dataset_mode(dataset: &EvalDataset, match_markers: bool) -> MatchMode {
    if match_markers {
        MatchMode::WithMarkers
    } else {
        dataset.meta.match_mode
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let dataset = EvalDataset::load(&args.dataset)?;
    let config = ProviderConfig::load(&args.provider_config)?;
    config.validate()?;
    let corpus = match &args.corpus {
        Some(path) => {
            let corpus = Corpus::load(path)?;
            if corpus.fingerprint() != dataset.meta.corpus_fingerprint {
                return Err(Error::FingerprintMismatch {
                    what: "corpus",
                    expected: dataset.meta.corpus_fingerprint.clone(),
                    found: corpus.fingerprint().to_string(),
                });
            }
            Some(Arc::new(corpus))
        }
        None if config.needs_corpus() => {
            return Err(Error::Usage(format!(
                "provider kind {:?} needs --corpus",
                config.kind
            )))
        }
        None => None,
    };
    let index = match (&corpus, &args.index_cache) {
        (Some(c), Some(cache)) => Some(Arc::new(Index::load_or_build(cache, c, Bm25Params::default())?)),
        (Some(c), None) if config.needs_corpus() => Some(Arc::new(build_index(c))),
        _ => None,
    };
    let lang: Lang = args.lang.into();
    let ctx = ProviderContext {
        corpus,
        index,
        dataset: Some(&dataset),
        mode: dataset_mode(&dataset, args.match_markers),
        lang,
    };
    let provider = build_provider(&config, &ctx)?;
    let concurrency = args.concurrency.unwrap_or(config.concurrency_limit);
    if concurrency == 0 {
        return Err(Error::Usage("--concurrency must be at least 1".into()));
    }
    let opts = RunOptions {
        protocol: args.protocol.into(),
        lang,
        concurrency,
        provider_config: config.clone(),
        log_path: Some(args.out.clone()),
        resume: args.resume,
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let log = run_protocol(&dataset, provider.as_ref(), &opts)?;
    let errors = log.error_count();
    say!(
        "{} records, {} invalid, {} errors -> {}",
        log.records.len(),
        log.invalid_count(),
        errors,
        args.out.display()
    );
    let too_many = match args.max_errors {
        Some(max) => errors > max,
        None => errors > 0 && errors == log.records.len(),
    };
    if too_many {
        return Err(Error::Runtime(format!("{errors} of {} items failed", log.records.len())));
    }
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let run = RunLog::load(&args.run)?;
    let dataset = EvalDataset::load(&args.dataset)?;
    let corpus = Corpus::load(&args.corpus)?;
    let policy = if args.exclude_invalid {
        InvalidPolicy::Exclude
    } else if args.invalid_as_no {
        InvalidPolicy::AsNo
    } else {
        InvalidPolicy::Incorrect
    };
    let label = args.label.clone().unwrap_or_else(|| default_label(&run.meta.provider));
    let mode = dataset_mode(&dataset, args.match_markers);
    let scored = score_run(&run, &dataset, &corpus, mode, policy, &label)?;
    let written = write_score_dir(
        &args.out_dir,
        &scored,
        args.top_n,
        &args.corpus,
        &args.dataset,
        &args.run,
        &run,
        policy,
    )?;
    if let Some(v) = &scored.summary.verify {
        say!(
            "{label}: accuracy {:.2} precision {:.2} recall {:.2} f1 {:.2}",
            v.rounded.accuracy, v.rounded.precision, v.rounded.recall, v.rounded.f1
        );
    }
    if let Some(i) = &scored.summary.inquiry {
        say!("{label}: micro f1 {:.4} macro f1 {:.4}", i.micro.f1, i.macro_avg.f1);
    }
    for p in written {
        say!("{}", p.display());
    }
    Ok(())
}

pub fn cmd_report(metrics_dir: &Path, out: &Path) -> Result<()> {
    if !metrics_dir.is_dir() {
        return Err(Error::Usage(format!("{} is not a directory", metrics_dir.display())));
    }
    let summaries = load_summaries(metrics_dir)?;
    if summaries.is_empty() {
        return Err(Error::Usage(format!("no metrics.json files under {}", metrics_dir.display())));
    }
    write_file(out, render_report(&summaries, metrics_dir).as_bytes())?;
    say!("{} runs -> {}", summaries.len(), out.display());
    Ok(())
}
