mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtk_core::alignment::PartitionReduce;
use rtk_core::index::CorpusFormat;
use rtk_core::scoring::ScorerKind;

use crate::config::Config;

/// A command-line mistake: bad flags, missing inputs, invalid settings.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "rtk", version, about = "Thesaurus-augmented retrieval, alignment and fidelity toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML config file (defaults to $RTK_CONFIG when set).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (output does not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and inspect inverted indexes.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Rank documents for a query file and write a TREC run.
    Search(SearchArgs),
    /// Build, filter and report relevance thesauri.
    #[command(subcommand)]
    Thesaurus(ThesaurusCmd),
    /// Turn attention tensors into partial-segment pairs.
    #[command(subcommand)]
    Align(AlignCmd),
    /// Emit supervision records for external trainers.
    #[command(subcommand)]
    Traindata(TraindataCmd),
    /// Effectiveness and fidelity metrics over TREC runs.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Bias probes over any scorer.
    #[command(subcommand)]
    Probe(ProbeCmd),
}

#[derive(Subcommand, Debug)]
enum IndexCmd {
    /// Index a JSONL (`{"doc_id", "text"}`) or TSV (`doc_id<TAB>text`) corpus.
    Build(IndexBuildArgs),
    /// Print collection statistics of an index.
    Stats {
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct IndexBuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<CorpusFormat>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_stem: bool,
    /// Word-list file replacing the built-in stopwords.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stopwords: bool,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    thesaurus: Option<PathBuf>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Normalize each QLT translation row to sum to one.
    #[arg(long)]
    qlt_normalize: bool,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Query file, `qid<TAB>text` per line.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Bm25)]
    scorer: ScorerKind,
    #[command(flatten)]
    model: ModelArgs,
    /// Documents kept per query.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Rerank this run's documents instead of retrieving.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Candidates taken per query from --candidates.
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    /// Score every document rather than only posting-list candidates.
    #[arg(long)]
    full_scan: bool,
    /// Run tag (defaults to the scorer name).
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ThesaurusCmd {
    /// Keep externally scored pairs above the score threshold.
    Filter {
        /// `qt<TAB>dt<TAB>score` rows.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        min_score: Option<f64>,
        /// Re-analyze terms with this index's analyzer.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List candidate (qt, dt) pairs for external scoring.
    Candidates {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        n_query_terms: Option<usize>,
        #[arg(long)]
        n_doc_terms: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the highest-weighted entries.
    Top {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        thesaurus: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate local alignments into a thesaurus.
    Ltog {
        /// JSONL `{"query_terms": [..], "alignments": [[qt, dt], ..]}`.
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum AlignCmd {
    /// Sample segment pairs from ATTN1 attention files.
    Extract {
        #[arg(long = "attn", required = true)]
        attn: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = PartitionReduce::Max)]
        reduce: PartitionReduce,
        /// Include the word-level affinity matrix in each record.
        #[arg(long)]
        affinity: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum TraindataCmd {
    /// Segment-pair records with teacher scores.
    Phase1 {
        /// JSONL `{qid, pos_doc_id, neg_doc_id, attn_pos, attn_neg}`.
        #[arg(long)]
        inputs: PathBuf,
        /// Teacher run in TREC format.
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, value_enum, default_value_t = PartitionReduce::Max)]
        reduce: PartitionReduce,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Term-pair records from triplets and a thesaurus.
    Phase2 {
        /// Index whose analyzer is used.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        format: Option<CorpusFormat>,
        /// `query<TAB>pos_doc_id<TAB>neg_doc_id` (optionally led by a qid).
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long)]
        thesaurus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum EvalCmd {
    /// MRR / NDCG against relevance judgments.
    Effectiveness {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// mrr@k or ndcg@k; repeatable.
        #[arg(long = "metric", default_values = ["mrr@10", "ndcg@10"])]
        metrics: Vec<String>,
        /// Paired t-test against this run.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        per_query: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between an explanation run and a target run.
    Fidelity {
        #[arg(long)]
        run_e: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        /// pearson, kendall, topk@k or pairwise; repeatable.
        #[arg(long = "metric", default_values = ["pearson"])]
        metrics: Vec<String>,
        /// Restrict each query to this run's top documents.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        depth: usize,
        #[arg(long)]
        per_query: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct ProbeScorerArgs {
    /// bm25, bm25t, ql, qlt, or external (precomputed --scores).
    #[arg(long, default_value = "bm25t")]
    scorer: String,
    #[command(flatten)]
    model: ModelArgs,
    /// JSONL `{"query", "doc", "score"}` for the external scorer.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ProbeCmd {
    /// Score templates with each slot value.
    Grid {
        #[command(flatten)]
        scorer: ProbeScorerArgs,
        /// JSONL `{"query", "template", "original_value"}` with one `{X}` slot.
        #[arg(long = "in")]
        input: PathBuf,
        /// Slot values, one per line.
        #[arg(long)]
        columns: PathBuf,
        /// `value<TAB>score` reference for the bias correlation.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Append characters to a shared term and measure score changes.
    Postfix {
        #[command(flatten)]
        scorer: ProbeScorerArgs,
        /// JSONL `{"query", "doc", "common_term"}`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "abcdefghijklmnopqrstuvwxyz")]
        chars: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a `{year}` template across a year range.
    Years {
        #[command(flatten)]
        scorer: ProbeScorerArgs,
        #[arg(long)]
        query: String,
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 1990)]
        from: i32,
        #[arg(long, default_value_t = 2025)]
        to: i32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn effective_config(global: &GlobalArgs) -> anyhow::Result<Config> {
    let mut cfg = Config::load(global.config.as_deref())?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if global.threads.is_some() {
        cfg.threads = global.threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_logging(cli.global.verbose);
    let cfg = effective_config(&cli.global)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    commands::dispatch(cli.command, cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    let data = err.chain().any(|e| {
        e.is::<rtk_core::Error>() || e.is::<std::io::Error>() || e.is::<serde_json::Error>() || e.is::<toml::de::Error>()
    });
    if data {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
        Err(_) => ExitCode::from(3),
    }
}
