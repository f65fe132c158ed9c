//! The operations behind each CLI subcommand. Every function returns what
//! it would print so the binary stays a thin argument parser.
//!
//! Exit codes: 0 ok, 2 configuration or data error, 3 I/O error, 4 provider
//! error (a remote service failed after retries).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, MatrixConfig, RunConfig};
use crate::corpus::{
    lesson_text, load_dataset, validate_dataset, write_normalized, AnswerOption, CorpusError, CorpusFormat,
    Dataset, LoadSummary, Question, QuestionKind, Split, StatsExpectation, StatsReport,
};
use crate::embedder::{EmbedError, Embedder, EmbedderConfig};
use crate::eval::{
    answer_question, comparison_csv, comparison_text, read_trace_dir, render_report, render_trace,
    run_ablation, run_eval, trace_stats, write_report, AblationRow, EvalConfig, EvalEnv, EvalError,
    EvalReport, QuestionTrace, ReportPaths, TraceStats,
};
use crate::generation::{GenerationError, ModelClientConfig, ModelKind};
use crate::manifest::{self, manifest_path, ENGINE_VERSION};
use crate::promptgen::{assemble_context, training_record, AssembledPrompt, ContextMode, TokenBudget};
use crate::retrieval::{index_corpus, Reranker, RetrievalError};
use crate::synthetic::{self, SyntheticSpec};
use crate::vectorstore::{load_index, save_index, StoreError, VectorIndex};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("provider error: {0}")]
    Provider(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Data(_) => 2,
            CommandError::Io(_) => 3,
            CommandError::Provider(_) => 4,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CommandError::Io(format!("{}: {e}", path.display()))
    }
}

pub type Result<T, E = CommandError> = std::result::Result<T, E>;

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CommandError::Io(e.to_string()),
            _ => CommandError::Config(e.to_string()),
        }
    }
}

impl From<CorpusError> for CommandError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CommandError::Io(e.to_string()),
            _ => CommandError::Data(e.to_string()),
        }
    }
}

impl From<EmbedError> for CommandError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::ProviderUnavailable(_) | EmbedError::Auth(_) | EmbedError::MalformedResponse(_) => {
                CommandError::Provider(e.to_string())
            }
            EmbedError::Config(_) => CommandError::Config(e.to_string()),
            EmbedError::Cache(_) => CommandError::Io(e.to_string()),
            _ => CommandError::Data(e.to_string()),
        }
    }
}

impl From<StoreError> for CommandError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CommandError::Io(e.to_string()),
            _ => CommandError::Data(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CommandError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embed(inner) => inner.into(),
            RetrievalError::Store(inner) => inner.into(),
            RetrievalError::ProviderUnavailable(_)
            | RetrievalError::Auth(_)
            | RetrievalError::MalformedServiceResponse(_) => CommandError::Provider(e.to_string()),
            RetrievalError::Config(_) | RetrievalError::MissingReranker | RetrievalError::ModelIdMismatch { .. } => {
                CommandError::Config(e.to_string())
            }
            _ => CommandError::Data(e.to_string()),
        }
    }
}

impl From<GenerationError> for CommandError {
    fn from(e: GenerationError) -> Self {
        if e.is_provider() {
            CommandError::Provider(e.to_string())
        } else if matches!(e, GenerationError::ScriptMissing(_)) {
            CommandError::Data(e.to_string())
        } else {
            CommandError::Config(e.to_string())
        }
    }
}

impl From<EvalError> for CommandError {
    fn from(e: EvalError) -> Self {
        if e.is_provider() {
            return CommandError::Provider(e.to_string());
        }
        match e {
            EvalError::Config(_) => CommandError::Config(e.to_string()),
            EvalError::Io { .. } | EvalError::Trace { .. } => CommandError::Io(e.to_string()),
            EvalError::Corpus(inner) => inner.into(),
            EvalError::Setup(inner) => inner.into(),
            EvalError::Model(inner) => inner.into(),
            EvalError::Generation { source, .. } => source.into(),
            _ => CommandError::Data(e.to_string()),
        }
    }
}

fn offline_violation(what: &str) -> CommandError {
    CommandError::Config(format!("--offline forbids {what}"))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CommandError::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| CommandError::io(path, e))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- ingest

/// Which split counts to check the loaded corpus against.
#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    None,
    /// The public CK12 release counts.
    Ck12Release,
    /// Use the synthetic generator's manifest when the input directory has one.
    Auto,
    Given(StatsExpectation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub engine_version: String,
    pub corpus_hash: String,
    pub source_format: CorpusFormat,
    pub summary: LoadSummary,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub report: StatsReport,
    pub summary: LoadSummary,
    pub written: Vec<PathBuf>,
    pub checked: bool,
}

impl IngestOutcome {
    pub fn render(&self) -> String {
        let mut out = self.report.render();
        let s = &self.summary;
        out.push_str(&format!(
            "dropped: {} diagram, {} other-type questions; adjunct topics: {}; empty blocks skipped: {}\n",
            s.dropped_diagram, s.dropped_other, s.adjunct_topics, s.skipped_empty_blocks
        ));
        if !self.checked {
            out.push_str("no expected counts given\n");
        }
        for p in &self.written {
            out.push_str(&format!("wrote {}\n", p.display()));
        }
        out
    }
}

fn resolve_expectation(expect: Expectation, input: &Path) -> Option<StatsExpectation> {
    match expect {
        Expectation::None => None,
        Expectation::Ck12Release => Some(StatsExpectation::ck12_release()),
        Expectation::Given(e) => Some(e),
        Expectation::Auto => input
            .is_dir()
            .then(|| synthetic::read_manifest(input).ok())
            .flatten()
            .map(|m| m.expected),
    }
}

/// Loads `input`, checks its statistics and, with `out`, writes the
/// normalized split files plus `ingest.manifest.json` into that directory.
pub fn cmd_ingest(input: &Path, format: CorpusFormat, out: Option<&Path>, expect: Expectation) -> Result<IngestOutcome> {
    let (ds, summary) = load_dataset(input, format)?;
    let expected = resolve_expectation(expect, input);
    let report = validate_dataset(&ds, expected.as_ref());
    let mut written = Vec::new();
    if let Some(dir) = out {
        written = write_normalized(&ds, dir)?;
        let m = IngestManifest {
            engine_version: ENGINE_VERSION.into(),
            corpus_hash: manifest::corpus_hash(&ds),
            source_format: format,
            summary: summary.clone(),
        };
        let path = dir.join("ingest.manifest.json");
        write_file(&path, &pretty(&m))?;
        written.push(path);
    }
    Ok(IngestOutcome {
        report,
        summary,
        written,
        checked: expected.is_some(),
    })
}

// ----------------------------------------------------------------- index

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub engine_version: String,
    pub corpus_hash: String,
    pub embedder_hash: String,
    pub index_model_id: String,
    pub entries: usize,
}

/// Hash of the embedder settings that decide vector values.
pub fn embedder_hash(cfg: &EmbedderConfig) -> String {
    manifest::json_hash(&(cfg.provider, &cfg.model_id, cfg.dim, cfg.include_title))
}

fn index_manifest(ds: &Dataset, cfg: &EmbedderConfig, index: &VectorIndex) -> IndexManifest {
    IndexManifest {
        engine_version: ENGINE_VERSION.into(),
        corpus_hash: manifest::corpus_hash(ds),
        embedder_hash: embedder_hash(cfg),
        index_model_id: index.model_id().to_string(),
        entries: index.len(),
    }
}

fn save_with_manifest(index: &VectorIndex, m: &IndexManifest, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CommandError::io(dir, e))?;
    }
    save_index(index, path)?;
    write_file(&manifest_path(path), &pretty(m))
}

#[derive(Debug)]
pub struct IndexOutcome {
    pub entries: usize,
    pub provider_calls: usize,
    pub path: PathBuf,
}

pub fn cmd_index(ds: &Dataset, embedder_cfg: EmbedderConfig, out: &Path, offline: bool) -> Result<IndexOutcome> {
    if offline && embedder_cfg.is_remote() {
        return Err(offline_violation("the remote-http embedder"));
    }
    let embedder = Embedder::new(embedder_cfg)?;
    let index = index_corpus(ds, &embedder)?;
    save_with_manifest(&index, &index_manifest(ds, embedder.config(), &index), out)?;
    Ok(IndexOutcome {
        entries: index.len(),
        provider_calls: embedder.provider_calls(),
        path: out.to_path_buf(),
    })
}

/// Loads the index at `path` when its manifest matches this corpus and
/// embedder; otherwise builds it (and saves it when a path is given).
pub fn load_or_build_index(ds: &Dataset, embedder: &Embedder, path: Option<&Path>) -> Result<VectorIndex> {
    if let Some(p) = path.filter(|p| p.is_file()) {
        let wanted = (manifest::corpus_hash(ds), embedder_hash(embedder.config()));
        let on_disk: Option<IndexManifest> = fs::read_to_string(manifest_path(p))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        match on_disk {
            Some(m) if (m.corpus_hash.clone(), m.embedder_hash.clone()) == wanted => {
                log::info!("loading index {}", p.display());
                return Ok(load_index(p)?);
            }
            _ => log::info!("index {} is stale or lacks a manifest; rebuilding", p.display()),
        }
    }
    let index = index_corpus(ds, embedder)?;
    if let Some(p) = path {
        save_with_manifest(&index, &index_manifest(ds, embedder.config(), &index), p)?;
    }
    Ok(index)
}

// ------------------------------------------------------------- resources

/// Corpus, embedder, index and reranker for a run config.
pub struct Resources {
    pub ds: Dataset,
    pub embedder: Option<Embedder>,
    pub index: Option<VectorIndex>,
    pub reranker: Option<Box<dyn Reranker>>,
}

impl Resources {
    pub fn load(cfg: &RunConfig, retrieval: bool, rerank: bool) -> Result<Self> {
        let (ds, _) = load_dataset(&cfg.corpus.path, cfg.corpus.format)?;
        let (embedder, index) = if retrieval {
            let embedder = Embedder::new(cfg.embedder_config())?;
            let index = load_or_build_index(&ds, &embedder, cfg.index.path.as_deref())?;
            (Some(embedder), Some(index))
        } else {
            (None, None)
        };
        let reranker = if rerank { Some(cfg.rerank_config().build()?) } else { None };
        Ok(Resources {
            ds,
            embedder,
            index,
            reranker,
        })
    }

    pub fn env(&self) -> EvalEnv<'_> {
        EvalEnv {
            index: self.index.as_ref(),
            embedder: self.embedder.as_ref(),
            reranker: self.reranker.as_deref(),
            model: None,
        }
    }
}

// ------------------------------------------------------------------- ask

/// The question to ask: one from the corpus, or free text with options.
#[derive(Debug, Clone, PartialEq)]
pub enum AskTarget {
    Id(String),
    Text { stem: String, options: Vec<String> },
}

#[derive(Debug)]
pub struct AskOutcome {
    pub prompt: AssembledPrompt,
    pub trace: QuestionTrace,
    /// Fig.-8 style block; only for questions from the corpus.
    pub rendered: Option<String>,
}

impl AskOutcome {
    pub fn render(&self, show_prompt: bool) -> String {
        let mut out = String::new();
        if show_prompt {
            out.push_str(&self.prompt.text);
            out.push_str("\n\n");
        }
        match &self.rendered {
            Some(r) => out.push_str(r),
            None => {
                out.push_str(&format!("Raw Answer: {}\n", self.trace.raw_text));
                let parsed = self
                    .trace
                    .parsed_label
                    .and_then(|l| self.prompt.options.iter().find(|o| o.label == l))
                    .map(|o| format!("({}) {}", o.label, o.text))
                    .unwrap_or_else(|| "none".into());
                out.push_str(&format!(
                    "Predicted Answer: {parsed} [{}]\n",
                    self.trace.parse_status.as_str()
                ));
            }
        }
        out
    }
}

fn adhoc_question(stem: &str, options: &[String]) -> Result<Question> {
    if stem.trim().is_empty() {
        return Err(CommandError::Config("question text is empty".into()));
    }
    if !(2..=7).contains(&options.len()) {
        return Err(CommandError::Config(format!(
            "a free-text question needs 2 to 7 options, got {}",
            options.len()
        )));
    }
    let kind = if options.len() == 2 && options.iter().all(|o| matches!(o.to_ascii_lowercase().as_str(), "true" | "false")) {
        QuestionKind::TrueFalse
    } else {
        QuestionKind::MultipleChoice
    };
    Ok(Question {
        question_id: "adhoc".into(),
        lesson_id: String::new(),
        kind,
        stem: stem.trim().to_string(),
        options: options
            .iter()
            .zip('A'..)
            .map(|(t, label)| AnswerOption {
                label,
                text: t.trim().to_string(),
            })
            .collect(),
        // Unknown for free text; the rendering never shows it.
        gold_label: 'A',
        split: Split::Test,
    })
}

/// Answers one question with the given context mode.
pub fn cmd_ask(cfg: &RunConfig, target: &AskTarget, mode: ContextMode, rerank: bool, offline: bool) -> Result<AskOutcome> {
    let mut ecfg = cfg.eval_config();
    ecfg.name = "ask".into();
    ecfg.context_mode = mode;
    ecfg.rerank = rerank;
    if ecfg.retrieval.is_none() && mode.needs_retrieval() {
        ecfg.retrieval = Some(Default::default());
    }
    ecfg.validate()?;
    if offline {
        cfg.check_offline(mode.needs_retrieval(), rerank, true)?;
    }
    let res = Resources::load(cfg, mode.needs_retrieval(), rerank)?;
    let q = match target {
        AskTarget::Id(id) => res
            .ds
            .question(id)
            .cloned()
            .ok_or_else(|| CommandError::Data(format!("no question with id {id}")))?,
        AskTarget::Text { stem, options } => {
            if mode.needs_lesson() {
                return Err(CommandError::Config(format!(
                    "context mode {} needs a question from the corpus",
                    mode.as_str()
                )));
            }
            adhoc_question(stem, options)?
        }
    };
    let (trace, prompt) = answer_question(&res.ds, &ecfg, &res.env(), &q)?;
    let rendered = match target {
        AskTarget::Id(_) => Some(render_trace(&trace, &res.ds)?),
        AskTarget::Text { .. } => None,
    };
    Ok(AskOutcome { prompt, trace, rendered })
}

// ------------------------------------------------------------------ eval

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOverrides {
    pub name: Option<String>,
    pub context_mode: Option<ContextMode>,
    pub rerank: Option<bool>,
    pub concurrency: Option<usize>,
    pub question_limit: Option<usize>,
    pub split: Option<Split>,
    pub out_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
}

impl EvalOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        if let Some(v) = &self.name {
            e.name = v.clone();
        }
        if let Some(v) = self.context_mode {
            e.context_mode = v;
        }
        if let Some(v) = self.rerank {
            e.rerank = v;
        }
        if let Some(v) = self.concurrency {
            e.concurrency = v;
        }
        if self.question_limit.is_some() {
            e.question_limit = self.question_limit;
        }
        if let Some(v) = self.split {
            e.split = v;
        }
        if let Some(v) = &self.out_dir {
            e.out_dir = Some(v.clone());
        }
        if let Some(url) = &self.endpoint {
            let mut m = cfg.model.take().filter(|m| m.kind == ModelKind::Http).unwrap_or_default();
            m.endpoint = Some(url.clone());
            cfg.model = Some(m);
        }
    }
}

fn default_out_dir(config_path: &Path) -> PathBuf {
    config_path.parent().unwrap_or(Path::new("")).join("out")
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub paths: ReportPaths,
}

impl EvalOutcome {
    pub fn render(&self) -> String {
        let mut out = render_report(&self.report);
        out.push_str(&format!(
            "\nwrote {}\n      {}\n      {}\n",
            self.paths.json.display(),
            self.paths.text.display(),
            self.paths.traces.display()
        ));
        out
    }
}

fn check_eval_offline(cfg: &RunConfig, ecfg: &EvalConfig) -> Result<()> {
    cfg.check_offline(ecfg.context_mode.needs_retrieval(), ecfg.rerank, true)?;
    if ecfg.model.is_remote() {
        return Err(offline_violation("the http model endpoint"));
    }
    Ok(())
}

/// Runs one evaluation from a config file and writes report, text
/// rendering and traces into the output directory (`out/` next to the
/// config unless set). Low accuracy is never an error.
pub fn cmd_eval(config_path: &Path, overrides: &EvalOverrides, offline: bool) -> Result<EvalOutcome> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let ecfg = cfg.eval_config();
    ecfg.validate()?;
    if offline {
        check_eval_offline(&cfg, &ecfg)?;
    }
    let res = Resources::load(&cfg, ecfg.context_mode.needs_retrieval(), ecfg.rerank)?;
    let out_dir = cfg.eval.out_dir.clone().unwrap_or_else(|| default_out_dir(config_path));
    let paths = ReportPaths::for_config(&out_dir, &ecfg.name);
    let report = run_eval(&res.ds, &ecfg, &res.env(), Some(&paths.traces))?;
    write_report(&report, &paths)?;
    Ok(EvalOutcome { report, paths })
}

// -------------------------------------------------------------- ablation

#[derive(Debug)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub table: String,
    pub csv_path: PathBuf,
    pub text_path: PathBuf,
}

impl AblationOutcome {
    /// The first failed row, classified, if any row failed.
    pub fn failure(&self) -> Option<CommandError> {
        self.rows.iter().find_map(|r| match &r.outcome {
            Err(e) => Some(match CommandError::from(clone_eval_error(e)) {
                CommandError::Config(m) => CommandError::Config(format!("{}: {m}", r.name)),
                CommandError::Data(m) => CommandError::Data(format!("{}: {m}", r.name)),
                CommandError::Io(m) => CommandError::Io(format!("{}: {m}", r.name)),
                CommandError::Provider(m) => CommandError::Provider(format!("{}: {m}", r.name)),
            }),
            Ok(_) => None,
        })
    }
}

// Errors are not Clone; rebuild a classification-preserving copy.
fn clone_eval_error(e: &EvalError) -> EvalError {
    let text = e.to_string();
    if e.is_provider() {
        return EvalError::Model(GenerationError::ProviderUnavailable(text));
    }
    match e {
        EvalError::Config(_) => EvalError::Config(text),
        EvalError::Io { path, source } => EvalError::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        EvalError::Trace { path, message } => EvalError::Trace {
            path: path.clone(),
            message: message.clone(),
        },
        _ => EvalError::UnknownId(text),
    }
}

/// Runs every row of a matrix file in order and writes the per-row
/// reports plus `comparison.csv` and `comparison.txt`.
pub fn cmd_ablation(matrix_path: &Path, out_dir: Option<&Path>, offline: bool) -> Result<AblationOutcome> {
    let mc = MatrixConfig::load(matrix_path)?;
    if offline {
        mc.base.check_offline(mc.uses_retrieval(), mc.uses_rerank(), true)?;
        if let Some(c) = mc.matrix.configs.iter().find(|c| c.model.is_remote()) {
            return Err(offline_violation(&format!("the http model endpoint of `{}`", c.name)));
        }
    }
    let res = Resources::load(&mc.base, mc.uses_retrieval(), mc.uses_rerank())?;
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| mc.base.eval.out_dir.clone())
        .unwrap_or_else(|| default_out_dir(matrix_path));
    let rows = run_ablation(&res.ds, &mc.matrix, &res.env(), Some(&out_dir))?;
    let table = comparison_text(&rows);
    let csv_path = out_dir.join("comparison.csv");
    let text_path = out_dir.join("comparison.txt");
    write_file(&csv_path, &comparison_csv(&rows))?;
    write_file(&text_path, &table)?;
    Ok(AblationOutcome {
        rows,
        table,
        csv_path,
        text_path,
    })
}

// ----------------------------------------------------------------- stats

#[derive(Debug)]
pub struct StatsOutcome {
    pub files: Vec<PathBuf>,
    pub stats: TraceStats,
}

impl StatsOutcome {
    pub fn render(&self) -> String {
        let mut out = format!("trace files: {}\n", self.files.len());
        out.push_str(&self.stats.render());
        out
    }
}

/// In-lesson rate and parse-status histogram over every trace file in `dir`.
pub fn cmd_stats(dir: &Path) -> Result<StatsOutcome> {
    if !dir.is_dir() {
        return Err(CommandError::io(dir, "not a directory"));
    }
    let found = read_trace_dir(dir)?;
    if found.is_empty() {
        return Err(CommandError::Data(format!("{}: no *.jsonl trace files", dir.display())));
    }
    let mut files = Vec::new();
    let mut traces = Vec::new();
    for (path, _, t) in found {
        files.push(path);
        traces.extend(t);
    }
    Ok(StatsOutcome {
        files,
        stats: trace_stats(&traces),
    })
}

// ---------------------------------------------------------------- export

/// Writes one `{"prompt", "answer"}` JSON line per question of `split`,
/// with the lesson as context in `full-lesson` mode. Returns the count.
pub fn cmd_export(ds: &Dataset, split: Split, mode: ContextMode, budget: &TokenBudget, out: &Path) -> Result<usize> {
    if mode.needs_retrieval() {
        return Err(CommandError::Config(format!(
            "export supports no-context and full-lesson, not {}",
            mode.as_str()
        )));
    }
    let questions: Vec<&Question> = ds.questions().iter().filter(|q| q.split == split).collect();
    if questions.is_empty() {
        return Err(CommandError::Data(format!("split {} has no questions", split.as_str())));
    }
    let mut body = Vec::new();
    for q in &questions {
        let lesson = if mode.needs_lesson() {
            Some(lesson_text(ds, &q.lesson_id)?)
        } else {
            None
        };
        let ctx = assemble_context(mode, q, lesson.as_deref(), None, ds, budget)
            .map_err(|e| CommandError::Data(e.to_string()))?;
        serde_json::to_writer(&mut body, &training_record(q, &ctx.context)).expect("serializable");
        body.push(b'\n');
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CommandError::io(dir, e))?;
    }
    let mut f = fs::File::create(out).map_err(|e| CommandError::io(out, e))?;
    f.write_all(&body).map_err(|e| CommandError::io(out, e))?;
    Ok(questions.len())
}

// ----------------------------------------------------------------- synth

pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let corpus = synthetic::generate(spec);
    synthetic::write_corpus(&corpus, out).map_err(|e| CommandError::io(out, e))
}

/// The stub model configs usable offline, for `--model` style flags.
pub fn stub_model(kind: &str, script: Option<&Path>) -> Result<ModelClientConfig> {
    match kind {
        "overlap" => Ok(ModelClientConfig::overlap()),
        "scripted" => script
            .map(ModelClientConfig::scripted)
            .ok_or_else(|| CommandError::Config("the scripted model needs a script file".into())),
        other => Err(CommandError::Config(format!("unknown stub model `{other}`"))),
    }
}
