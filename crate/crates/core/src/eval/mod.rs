//! Evaluation runs: retrieve, prompt, generate, parse and score every
//! non-diagram question of a split, with resumable JSON-lines traces,
//! ablation matrices and per-question case-study rendering.

mod ablation;
mod report;
mod traces;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{filter_questions, lesson_text, CorpusError, Dataset, Question, QuestionKind, Split};
use crate::embedder::Embedder;
use crate::generation::{build_model, parse_answer, ChatModel, GenerationError, ModelClientConfig, ParseStatus};
use crate::manifest::{self, RunManifest};
use crate::promptgen::{prepare_prompt, AssembledPrompt, ContextMode, PromptError, TokenBudget};
use crate::retrieval::{Reranker, RetrievalConfig, RetrievalError, Retriever};
use crate::vectorstore::VectorIndex;

pub use ablation::{
    canonical_matrix, comparison_csv, comparison_text, run_ablation, AblationMatrix, AblationRow,
    CANONICAL_ROWS,
};
pub use report::{render_report, render_trace, write_report, ReportPaths};
pub use traces::{read_trace_dir, read_trace_file, trace_stats, TraceHeader, TraceStats, TraceWriter};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("no questions to evaluate")]
    EmptyInput,
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("question {question_id}: {source}")]
    Retrieval {
        question_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error(transparent)]
    Setup(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("question {question_id}: {source}")]
    Generation {
        question_id: String,
        #[source]
        source: GenerationError,
    },
    #[error(transparent)]
    Model(#[from] GenerationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace file {path}: {message}")]
    Trace { path: PathBuf, message: String },
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors raised by a remote provider after retries were exhausted.
    pub fn is_provider(&self) -> bool {
        match self {
            EvalError::Generation { source, .. } => source.is_provider(),
            EvalError::Retrieval { source, .. } => matches!(
                source,
                RetrievalError::ProviderUnavailable(_)
                    | RetrievalError::Auth(_)
                    | RetrievalError::MalformedServiceResponse(_)
                    | RetrievalError::Embed(_)
            ),
            _ => false,
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub name: String,
    #[serde(default = "default_split")]
    pub split: Split,
    pub context_mode: ContextMode,
    #[serde(default)]
    pub retrieval: Option<RetrievalConfig>,
    #[serde(default)]
    pub rerank: bool,
    pub model: ModelClientConfig,
    #[serde(default)]
    pub budget: TokenBudget,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Reserved; every component is deterministic today.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub question_limit: Option<usize>,
}

fn default_split() -> Split {
    Split::Validation
}

impl EvalConfig {
    pub fn new(name: impl Into<String>, context_mode: ContextMode, model: ModelClientConfig) -> Self {
        EvalConfig {
            name: name.into(),
            split: Split::Validation,
            context_mode,
            retrieval: context_mode.needs_retrieval().then(RetrievalConfig::default),
            rerank: false,
            model,
            budget: TokenBudget::default(),
            concurrency: 1,
            seed: 0,
            question_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::Config(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(EvalError::Config("config name must not be empty".into()));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.context_mode.needs_retrieval() && self.retrieval.is_none() {
            return bad(format!("context mode {} needs a retrieval section", self.context_mode.as_str()));
        }
        if self.rerank && !self.context_mode.needs_retrieval() {
            return bad(format!("rerank needs a retrieval context mode, not {}", self.context_mode.as_str()));
        }
        if let Some(r) = &self.retrieval {
            if let Err(e) = r.validate() {
                return bad(e.to_string());
            }
        }
        if let Err(e) = self.budget.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.model.validate() {
            return bad(e.to_string());
        }
        Ok(())
    }

    /// Retrieval settings in force for this run, if retrieval participates.
    pub fn effective_retrieval(&self) -> Option<RetrievalConfig> {
        if !self.context_mode.needs_retrieval() {
            return None;
        }
        self.retrieval.clone().map(|mut r| {
            r.rerank |= self.rerank;
            r
        })
    }

    /// Hash of everything that can change the output. Concurrency is left
    /// out because it never does.
    pub fn output_hash(&self) -> String {
        let mut c = self.clone();
        c.concurrency = 0;
        c.model.max_in_flight = 0;
        manifest::json_hash(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedTopic {
    pub topic_id: String,
    pub lesson_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub config_name: String,
    pub question_id: String,
    pub lesson_id: String,
    pub kind: QuestionKind,
    pub context_mode: ContextMode,
    pub retrieved: Vec<RetrievedTopic>,
    pub rerank_applied: bool,
    pub prompt_hash: String,
    pub truncated: bool,
    pub raw_text: String,
    pub parsed_label: Option<char>,
    pub parse_status: ParseStatus,
    pub gold_label: char,
    pub correct: bool,
    pub in_lesson: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindScore {
    pub total: usize,
    pub correct: usize,
    /// Absent when no question of the kind was evaluated.
    pub accuracy: Option<f64>,
}

impl KindScore {
    fn from_counts(total: usize, correct: usize) -> Self {
        KindScore {
            total,
            correct,
            accuracy: (total > 0).then(|| correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub tf: Option<f64>,
    pub mc: Option<f64>,
    pub all: f64,
}

fn scores(traces: &[QuestionTrace]) -> (KindScore, KindScore, KindScore) {
    let count = |kind: Option<QuestionKind>| {
        let selected = traces.iter().filter(|t| kind.is_none_or(|k| t.kind == k));
        let (mut total, mut correct) = (0, 0);
        for t in selected {
            total += 1;
            correct += usize::from(t.correct);
        }
        KindScore::from_counts(total, correct)
    };
    (
        count(Some(QuestionKind::TrueFalse)),
        count(Some(QuestionKind::MultipleChoice)),
        count(None),
    )
}

pub fn accuracy(traces: &[QuestionTrace]) -> Result<Accuracy> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (tf, mc, all) = scores(traces);
    Ok(Accuracy {
        tf: tf.accuracy,
        mc: mc.accuracy,
        all: all.accuracy.expect("non-empty"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_name: String,
    pub split: Split,
    pub context_mode: ContextMode,
    pub rerank: bool,
    pub model_id: String,
    pub manifest: RunManifest,
    pub tf: KindScore,
    pub mc: KindScore,
    pub all: KindScore,
    pub unparsable: usize,
    pub parse_status: BTreeMap<ParseStatus, usize>,
    pub truncated_prompts: usize,
    /// Present only when retrieval fed the prompts.
    pub in_lesson_rate: Option<f64>,
    /// Kept out of the serialized report; see the timing sidecar.
    #[serde(skip)]
    pub wall_time: Duration,
    pub traces: Vec<QuestionTrace>,
}

impl EvalReport {
    /// Aggregates `traces` (sorted by question id) into a report.
    pub fn from_traces(cfg: &EvalConfig, model_id: &str, manifest: RunManifest, mut traces: Vec<QuestionTrace>) -> Self {
        traces.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        let (tf, mc, all) = scores(&traces);
        let mut parse_status: BTreeMap<ParseStatus, usize> = ParseStatus::ALL.iter().map(|s| (*s, 0)).collect();
        for t in &traces {
            *parse_status.entry(t.parse_status).or_default() += 1;
        }
        let in_lesson: Vec<bool> = traces.iter().filter_map(|t| t.in_lesson).collect();
        let in_lesson_rate = (cfg.context_mode.needs_retrieval() && !in_lesson.is_empty())
            .then(|| in_lesson.iter().filter(|b| **b).count() as f64 / in_lesson.len() as f64);
        EvalReport {
            config_name: cfg.name.clone(),
            split: cfg.split,
            context_mode: cfg.context_mode,
            rerank: cfg.rerank,
            model_id: model_id.to_string(),
            manifest,
            tf,
            mc,
            all,
            unparsable: parse_status[&ParseStatus::Unparsable],
            parse_status,
            truncated_prompts: traces.iter().filter(|t| t.truncated).count(),
            in_lesson_rate,
            wall_time: Duration::ZERO,
            traces,
        }
    }
}

/// Shared, read-only resources a run draws on. `model` overrides the model
/// built from the config.
#[derive(Default, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub index: Option<&'a VectorIndex>,
    pub embedder: Option<&'a Embedder>,
    pub reranker: Option<&'a dyn Reranker>,
    pub model: Option<&'a dyn ChatModel>,
}

/// Questions a config evaluates, in id order.
pub fn select_questions<'a>(ds: &'a Dataset, cfg: &EvalConfig) -> Vec<&'a Question> {
    let mut qs = filter_questions(ds, cfg.split, &QuestionKind::ALL);
    if let Some(limit) = cfg.question_limit {
        qs.truncate(limit);
    }
    qs
}

pub fn run_manifest(ds: &Dataset, cfg: &EvalConfig, env: &EvalEnv) -> RunManifest {
    RunManifest::new(
        cfg.output_hash(),
        manifest::corpus_hash(ds),
        env.index.map(|i| i.model_id().to_string()),
    )
}

/// Evaluates one config. With `trace_path`, each finished question is
/// appended to the trace file as it completes; questions already present
/// in a trace file written under the same manifest are not asked again.
/// When every question is done the file is rewritten in question-id order.
pub fn run_eval(ds: &Dataset, cfg: &EvalConfig, env: &EvalEnv, trace_path: Option<&Path>) -> Result<EvalReport> {
    let started = Instant::now();
    cfg.validate()?;
    let questions = select_questions(ds, cfg);
    if questions.is_empty() {
        return Err(EvalError::EmptyInput);
    }

    let owned_model;
    let model: &dyn ChatModel = match env.model {
        Some(m) => m,
        None => {
            owned_model = build_model(&cfg.model)?;
            owned_model.as_ref()
        }
    };
    let retriever = retriever_for(ds, cfg, env)?;

    let manifest = run_manifest(ds, cfg, env);
    let header = TraceHeader {
        config_name: cfg.name.clone(),
        manifest: manifest.clone(),
    };
    let wanted: HashSet<&str> = questions.iter().map(|q| q.question_id.as_str()).collect();
    let (writer, mut done) = match trace_path {
        Some(p) => {
            let (w, prior) = TraceWriter::open(p, &header)?;
            if let Some(stray) = prior.iter().find(|t| !wanted.contains(t.question_id.as_str())) {
                return Err(EvalError::Trace {
                    path: p.to_path_buf(),
                    message: format!("holds question {} outside this run", stray.question_id),
                });
            }
            (Some(Mutex::new(w)), prior)
        }
        None => (None, Vec::new()),
    };
    let finished: HashSet<String> = done.iter().map(|t| t.question_id.clone()).collect();
    let todo: Vec<&Question> = questions
        .iter()
        .copied()
        .filter(|q| !finished.contains(&q.question_id))
        .collect();
    if !finished.is_empty() {
        log::info!("{}: resuming, {} of {} questions already traced", cfg.name, finished.len(), questions.len());
    }

    let fresh = Mutex::new(Vec::with_capacity(todo.len()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let outcome = pool.install(|| {
        todo.par_iter().try_for_each(|q| {
            let (trace, _) = evaluate_question(ds, cfg, q, retriever.as_ref(), model)?;
            if let Some(w) = &writer {
                w.lock().expect("trace writer poisoned").append(&trace)?;
            }
            fresh.lock().expect("trace buffer poisoned").push(trace);
            Ok::<_, EvalError>(())
        })
    });
    outcome?;

    done.extend(fresh.into_inner().expect("trace buffer poisoned"));
    let mut report = EvalReport::from_traces(cfg, model.model_id(), manifest, done);
    if let Some(w) = writer {
        w.into_inner().expect("trace writer poisoned").finish(&report.traces)?;
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

fn retriever_for<'a>(ds: &'a Dataset, cfg: &EvalConfig, env: &EvalEnv<'a>) -> Result<Option<Retriever<'a>>> {
    let Some(rc) = cfg.effective_retrieval() else {
        return Ok(None);
    };
    let index = env
        .index
        .ok_or_else(|| EvalError::Config(format!("{}: retrieval needs an index", cfg.name)))?;
    let embedder = env
        .embedder
        .ok_or_else(|| EvalError::Config(format!("{}: retrieval needs an embedder", cfg.name)))?;
    Ok(Some(Retriever::new(ds, index, embedder, env.reranker, rc)?))
}

/// Runs a single question end to end and returns the prompt that was sent
/// along with the trace. `q` need not belong to `ds` unless the context
/// mode reads its lesson.
pub fn answer_question(
    ds: &Dataset,
    cfg: &EvalConfig,
    env: &EvalEnv,
    q: &Question,
) -> Result<(QuestionTrace, AssembledPrompt)> {
    cfg.validate()?;
    let owned_model;
    let model: &dyn ChatModel = match env.model {
        Some(m) => m,
        None => {
            owned_model = build_model(&cfg.model)?;
            owned_model.as_ref()
        }
    };
    let retriever = retriever_for(ds, cfg, env)?;
    evaluate_question(ds, cfg, q, retriever.as_ref(), model)
}

fn evaluate_question(
    ds: &Dataset,
    cfg: &EvalConfig,
    q: &Question,
    retriever: Option<&Retriever>,
    model: &dyn ChatModel,
) -> Result<(QuestionTrace, AssembledPrompt)> {
    let retrieved = match retriever {
        Some(r) => Some(r.retrieve(q).map_err(|source| EvalError::Retrieval {
            question_id: q.question_id.clone(),
            source,
        })?),
        None => None,
    };
    let lesson = if cfg.context_mode.needs_lesson() {
        Some(lesson_text(ds, &q.lesson_id)?)
    } else {
        None
    };
    let prompt = prepare_prompt(cfg.context_mode, q, lesson.as_deref(), retrieved.as_ref(), ds, &cfg.budget)?;
    let response = model.generate(&prompt).map_err(|source| EvalError::Generation {
        question_id: q.question_id.clone(),
        source,
    })?;
    let parsed = parse_answer(&response, q);
    let trace = QuestionTrace {
        config_name: cfg.name.clone(),
        question_id: q.question_id.clone(),
        lesson_id: q.lesson_id.clone(),
        kind: q.kind,
        context_mode: cfg.context_mode,
        retrieved: retrieved
            .as_ref()
            .map(|r| {
                r.hits
                    .iter()
                    .map(|h| RetrievedTopic {
                        topic_id: h.topic_id.clone(),
                        lesson_id: h.lesson_id.clone(),
                        score: h.score,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        rerank_applied: retrieved.as_ref().is_some_and(|r| r.rerank_applied),
        prompt_hash: prompt.hash(),
        truncated: prompt.truncated,
        correct: parsed.predicted_label == Some(q.gold_label),
        raw_text: parsed.raw_text,
        parsed_label: parsed.predicted_label,
        parse_status: parsed.parse_status,
        gold_label: q.gold_label,
        in_lesson: retrieved.as_ref().map(|r| r.in_lesson),
    };
    Ok((trace, prompt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: &str, kind: QuestionKind, correct: bool) -> QuestionTrace {
        QuestionTrace {
            config_name: "c".into(),
            question_id: id.into(),
            lesson_id: "L".into(),
            kind,
            context_mode: ContextMode::NoContext,
            retrieved: vec![],
            rerank_applied: false,
            prompt_hash: String::new(),
            truncated: false,
            raw_text: String::new(),
            parsed_label: Some('A'),
            parse_status: ParseStatus::ExactLabel,
            gold_label: if correct { 'A' } else { 'B' },
            correct,
            in_lesson: None,
        }
    }

    #[test]
    fn accuracy_arithmetic() {
        use QuestionKind::*;
        let t = vec![
            trace("1", TrueFalse, true),
            trace("2", TrueFalse, true),
            trace("3", TrueFalse, false),
            trace("4", MultipleChoice, false),
        ];
        let a = accuracy(&t).unwrap();
        assert!((a.tf.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.mc, Some(0.0));
        assert_eq!(a.all, 0.5);
        let only_tf = accuracy(&t[..2]).unwrap();
        assert_eq!((only_tf.tf, only_tf.mc, only_tf.all), (Some(1.0), None, 1.0));
        assert!(matches!(accuracy(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn config_invariants() {
        let m = ModelClientConfig::overlap();
        assert!(EvalConfig::new("a", ContextMode::RagOnly, m.clone()).validate().is_ok());
        let mut c = EvalConfig::new("a", ContextMode::RagOnly, m.clone());
        c.retrieval = None;
        assert!(c.validate().is_err());
        let mut c = EvalConfig::new("a", ContextMode::FullLesson, m.clone());
        c.rerank = true;
        assert!(c.validate().is_err());
        let mut c = EvalConfig::new("a", ContextMode::NoContext, m);
        c.concurrency = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn output_hash_ignores_concurrency() {
        let a = EvalConfig::new("a", ContextMode::NoContext, ModelClientConfig::overlap());
        let mut b = a.clone();
        b.concurrency = 8;
        assert_eq!(a.output_hash(), b.output_hash());
        b.question_limit = Some(3);
        assert_ne!(a.output_hash(), b.output_hash());
    }
}
