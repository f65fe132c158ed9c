use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tqa_rag::commands::{self, AskTarget, CommandError, EvalOverrides, Expectation};
use tqa_rag::config::RunConfig;
use tqa_rag::corpus::{load_dataset, CorpusFormat, Split};
use tqa_rag::embedder::{EmbedderConfig, ProviderKind};
use tqa_rag::promptgen::{ContextMode, TokenBudget};
use tqa_rag::synthetic::SyntheticSpec;

/// Retrieval-augmented question answering over textbook lessons.
///
/// Exit codes: 0 ok, 2 configuration or data error, 3 I/O error,
/// 4 provider error.
#[derive(Parser)]
#[command(name = "tqa-rag", version)]
struct Cli {
    /// Refuse any network use: local embedder, local reranker and stub models only.
    #[arg(long, global = true)]
    offline: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Native,
    Normalized,
}

impl From<Format> for CorpusFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Native => CorpusFormat::NativeCk12,
            Format::Normalized => CorpusFormat::Normalized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Expect {
    /// The synthetic manifest when the input directory has one.
    Auto,
    /// The public CK12 release counts.
    Ck12,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    NoContext,
    FullLesson,
    RagOnly,
    RagPlusLesson,
}

impl From<Mode> for ContextMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::NoContext => ContextMode::NoContext,
            Mode::FullLesson => ContextMode::FullLesson,
            Mode::RagOnly => ContextMode::RagOnly,
            Mode::RagPlusLesson => ContextMode::RagPlusLesson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file or directory.
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus, check its split statistics and write normalized JSON.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Directory for the normalized split files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        expect: Expect,
        /// Exit with status 2 when the statistics disagree with the expectation.
        #[arg(long)]
        strict: bool,
    },
    /// Embed every topic and save the vector index.
    Index {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Index file to write.
        #[arg(long)]
        out: PathBuf,
        /// Embedding dimension of the deterministic local embedder.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        /// Use an OpenAI-compatible embeddings endpoint instead.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "text-embedding-ada-002")]
        model_id: String,
        /// Environment variable holding the embeddings API key.
        #[arg(long)]
        api_key_env: Option<String>,
        /// Directory of the embedding cache.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Prefix each topic with its title before embedding.
        #[arg(long)]
        include_title: bool,
    },
    /// Answer one question and print the result.
    Ask {
        /// Run config supplying corpus, embedder, index and model.
        #[arg(long)]
        config: PathBuf,
        /// Question id from the corpus.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        id: Option<String>,
        /// Free-text question; give its options with --option.
        #[arg(long, requires = "option")]
        text: Option<String>,
        #[arg(long = "option")]
        option: Vec<String>,
        #[arg(long, value_enum, default_value = "no-context")]
        mode: Mode,
        #[arg(long)]
        rerank: bool,
        /// Print the exact prompt sent to the model.
        #[arg(long)]
        show_prompt: bool,
        /// Chat-completions endpoint overriding the config's model.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Evaluate one config and write report files.
    Eval {
        config: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        rerank: Option<bool>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        question_limit: Option<usize>,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Chat-completions endpoint overriding the config's model.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Run every config of a matrix file and print the comparison table.
    Ablation {
        matrix: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// In-lesson rate and parse-status histogram of a trace directory.
    Stats { dir: PathBuf },
    /// Write prompt/answer training pairs as JSON lines.
    Export {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "full-lesson")]
        mode: Mode,
    },
    /// Generate the seeded synthetic corpus.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = tqa_rag::synthetic::DEFAULT_SEED)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let offline = cli.offline;
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            expect,
            strict,
        } => {
            let expect = match expect {
                Expect::Auto => Expectation::Auto,
                Expect::Ck12 => Expectation::Ck12Release,
                Expect::None => Expectation::None,
            };
            let o = commands::cmd_ingest(&corpus.corpus, corpus.format.into(), out.as_deref(), expect)?;
            print!("{}", o.render());
            if strict && !o.report.all_match() {
                return Err(CommandError::Data("statistics differ from the expected counts".into()));
            }
        }
        Command::Index {
            corpus,
            out,
            dim,
            endpoint,
            model_id,
            api_key_env,
            cache_dir,
            include_title,
        } => {
            let mut cfg = EmbedderConfig::deterministic(dim);
            if let Some(url) = endpoint {
                cfg.provider = ProviderKind::RemoteHttp;
                cfg.endpoint = Some(url);
                cfg.model_id = model_id;
                cfg.api_key_env = api_key_env;
            }
            cfg.cache_dir = cache_dir;
            cfg.include_title = include_title;
            let (ds, _) = load_dataset(&corpus.corpus, corpus.format.into())?;
            let o = commands::cmd_index(&ds, cfg, &out, offline)?;
            println!(
                "indexed {} topics into {} ({} provider calls)",
                o.entries,
                o.path.display(),
                o.provider_calls
            );
        }
        Command::Ask {
            config,
            id,
            text,
            option,
            mode,
            rerank,
            show_prompt,
            endpoint,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            EvalOverrides {
                endpoint,
                ..Default::default()
            }
            .apply(&mut cfg);
            let target = match (id, text) {
                (Some(id), _) => AskTarget::Id(id),
                (None, Some(stem)) => AskTarget::Text { stem, options: option },
                (None, None) => unreachable!("clap requires --id or --text"),
            };
            let o = commands::cmd_ask(&cfg, &target, mode.into(), rerank, offline)?;
            print!("{}", o.render(show_prompt));
        }
        Command::Eval {
            config,
            name,
            mode,
            rerank,
            concurrency,
            question_limit,
            split,
            out_dir,
            endpoint,
        } => {
            let overrides = EvalOverrides {
                name,
                context_mode: mode.map(Into::into),
                rerank,
                concurrency,
                question_limit,
                split: split.map(Into::into),
                out_dir,
                endpoint,
            };
            let o = commands::cmd_eval(&config, &overrides, offline)?;
            print!("{}", o.render());
        }
        Command::Ablation { matrix, out_dir } => {
            let o = commands::cmd_ablation(&matrix, out_dir.as_deref(), offline)?;
            print!("{}", o.table);
            println!("\nwrote {}\n      {}", o.csv_path.display(), o.text_path.display());
            if let Some(e) = o.failure() {
                return Err(e);
            }
        }
        Command::Stats { dir } => {
            print!("{}", commands::cmd_stats(&dir)?.render());
        }
        Command::Export {
            corpus,
            out,
            split,
            mode,
        } => {
            let (ds, _) = load_dataset(&corpus.corpus, corpus.format.into())?;
            let n = commands::cmd_export(&ds, split.into(), mode.into(), &TokenBudget::default(), &out)?;
            println!("wrote {n} records to {}", out.display());
        }
        Command::Synth { out, seed } => {
            let spec = SyntheticSpec {
                seed,
                ..Default::default()
            };
            for p in commands::cmd_synth(&spec, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
