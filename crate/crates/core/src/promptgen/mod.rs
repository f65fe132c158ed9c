//! Context assembly under a token budget and rendering of the instruction
//! prompt.
//!
//! True/false questions use the same template as multiple choice, with their
//! two options rendered `(A) true (B) false`. Options are separated by a
//! single space; retrieved chunks and lesson text by one blank line.

mod template;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{AnswerOption, Dataset, Question, TOPIC_SEPARATOR};
use crate::retrieval::RetrievedContext;

pub use template::{PromptTemplate, TEMPLATE_V1};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("question {question_id}: template and question alone need {needed} tokens, budget allows {allowed}")]
    BudgetUnsatisfiable {
        question_id: String,
        needed: usize,
        allowed: usize,
    },
    #[error("context mode {0:?} needs retrieved hits")]
    MissingRetrieval(ContextMode),
    #[error("context mode {0:?} needs the lesson text")]
    MissingLesson(ContextMode),
    #[error("retrieved topic {0} is not in the corpus")]
    UnknownTopic(String),
    #[error("invalid token budget: {0}")]
    InvalidBudget(String),
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    NoContext,
    FullLesson,
    RagOnly,
    RagPlusLesson,
}

impl ContextMode {
    pub fn needs_retrieval(self) -> bool {
        matches!(self, ContextMode::RagOnly | ContextMode::RagPlusLesson)
    }

    pub fn needs_lesson(self) -> bool {
        matches!(self, ContextMode::FullLesson | ContextMode::RagPlusLesson)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::NoContext => "no-context",
            ContextMode::FullLesson => "full-lesson",
            ContextMode::RagOnly => "rag-only",
            ContextMode::RagPlusLesson => "rag-plus-lesson",
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "no-context" | "none" => Ok(ContextMode::NoContext),
            "full-lesson" | "lesson" => Ok(ContextMode::FullLesson),
            "rag-only" | "rag" => Ok(ContextMode::RagOnly),
            "rag-plus-lesson" | "rag-lesson" => Ok(ContextMode::RagPlusLesson),
            other => Err(format!("unknown context mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenBudget {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_reserved")]
    pub reserved_for_answer: usize,
    /// Characters counted as one token by the estimator.
    #[serde(default = "default_ratio")]
    pub chars_per_token: usize,
}

fn default_max_tokens() -> usize {
    4096
}
fn default_reserved() -> usize {
    64
}
fn default_ratio() -> usize {
    3
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_tokens: default_max_tokens(),
            reserved_for_answer: default_reserved(),
            chars_per_token: default_ratio(),
        }
    }
}

impl TokenBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 || self.reserved_for_answer == 0 {
            return Err(PromptError::InvalidBudget("token counts must be positive".into()));
        }
        if self.reserved_for_answer >= self.max_tokens {
            return Err(PromptError::InvalidBudget(
                "reserved_for_answer must be below max_tokens".into(),
            ));
        }
        if self.chars_per_token == 0 {
            return Err(PromptError::InvalidBudget("chars_per_token must be positive".into()));
        }
        Ok(())
    }

    /// Tokens available to the prompt itself.
    pub fn prompt_tokens(&self) -> usize {
        self.max_tokens - self.reserved_for_answer
    }

    pub fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.chars_per_token)
    }
}

/// Conservative token estimate: one token per three characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(3)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAssembly {
    pub context: String,
    pub truncated: bool,
    /// Retrieved topics that made it into the context, in rank order.
    pub chunks_used: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub question_id: String,
    /// Raw prompt, ending at the instruction close (plus the answer when
    /// rendered for training export).
    pub text: String,
    /// System instruction, for chat-style endpoints.
    pub system: String,
    /// User turn, for chat-style endpoints.
    pub user: String,
    /// The text that filled the context slot.
    pub context: String,
    pub options: Vec<AnswerOption>,
    pub context_chars: usize,
    pub chunks_used: Vec<String>,
    pub truncated: bool,
    pub est_tokens: usize,
}

impl AssembledPrompt {
    /// Hex SHA-256 of the raw prompt text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

pub fn format_options(q: &Question) -> String {
    q.options
        .iter()
        .map(|o| format!("({}) {}", o.label, o.text))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the prompt for `q` with the given context. With `include_answer`
/// the formatted gold option and the end-of-sequence marker follow the
/// instruction close.
pub fn build_prompt(q: &Question, context: &str, include_answer: Option<char>) -> AssembledPrompt {
    let t = PromptTemplate::v1();
    let options = format_options(q);
    let mut text = t.render(context, &q.stem, &options);
    let est_tokens = estimate_tokens(&text);
    if let Some(answer) = include_answer.and_then(|l| q.format_option(l)) {
        text = t.with_answer(&text, &answer);
    }
    AssembledPrompt {
        question_id: q.question_id.clone(),
        system: t.system().to_string(),
        user: t.render_user(context, &q.stem, &options),
        text,
        context: context.to_string(),
        options: q.options.clone(),
        context_chars: context.chars().count(),
        chunks_used: Vec::new(),
        truncated: false,
        est_tokens,
    }
}

/// One line of the supervised training export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub prompt: String,
    pub answer: String,
}

pub fn training_record(q: &Question, context: &str) -> TrainingRecord {
    TrainingRecord {
        prompt: build_prompt(q, context, None).text,
        answer: q.format_option(q.gold_label).expect("validated gold label"),
    }
}

fn take_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((byte, _)) => &s[..byte],
        None => s,
    }
}

/// Builds the context slot for `mode` so that the final prompt fits the
/// budget. Retrieved chunks come first in rank order. When space runs out
/// the lesson tail is cut first, then the lowest-ranked chunks are dropped,
/// and as a last resort the top chunk itself is cut.
pub fn assemble_context(
    mode: ContextMode,
    q: &Question,
    lesson_text: Option<&str>,
    retrieved: Option<&RetrievedContext>,
    ds: &Dataset,
    budget: &TokenBudget,
) -> Result<ContextAssembly> {
    budget.validate()?;
    let overhead = PromptTemplate::v1()
        .render("", &q.stem, &format_options(q))
        .chars()
        .count();
    let capacity = budget.prompt_tokens() * budget.chars_per_token;
    if overhead > capacity {
        return Err(PromptError::BudgetUnsatisfiable {
            question_id: q.question_id.clone(),
            needed: overhead.div_ceil(budget.chars_per_token),
            allowed: budget.prompt_tokens(),
        });
    }
    let mut room = capacity - overhead;

    let chunks: Vec<(&str, &str)> = if mode.needs_retrieval() {
        let r = retrieved.ok_or(PromptError::MissingRetrieval(mode))?;
        r.hits
            .iter()
            .map(|h| {
                ds.topic(&h.topic_id)
                    .map(|t| (h.topic_id.as_str(), t.text.as_str()))
                    .ok_or_else(|| PromptError::UnknownTopic(h.topic_id.clone()))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let lesson = if mode.needs_lesson() {
        Some(lesson_text.ok_or(PromptError::MissingLesson(mode))?)
    } else {
        None
    };

    let sep = TOPIC_SEPARATOR.chars().count();
    let mut parts: Vec<&str> = Vec::new();
    let mut chunks_used = Vec::new();
    let mut truncated = false;
    for (i, (id, text)) in chunks.iter().enumerate() {
        let need = text.chars().count() + if parts.is_empty() { 0 } else { sep };
        if need <= room {
            parts.push(text);
            chunks_used.push(id.to_string());
            room -= need;
        } else {
            truncated = true;
            if i == 0 && room > 0 {
                parts.push(take_chars(text, room));
                chunks_used.push(id.to_string());
                room = 0;
            }
            break;
        }
    }
    if let Some(lesson) = lesson {
        let lead = if parts.is_empty() { 0 } else { sep };
        let len = lesson.chars().count();
        if len + lead <= room {
            parts.push(lesson);
        } else {
            truncated = true;
            if room > lead {
                parts.push(take_chars(lesson, room - lead));
            }
        }
    }
    Ok(ContextAssembly {
        context: parts.join(TOPIC_SEPARATOR),
        truncated,
        chunks_used,
    })
}

/// Assembles the context for `mode` and renders the prompt around it.
pub fn prepare_prompt(
    mode: ContextMode,
    q: &Question,
    lesson_text: Option<&str>,
    retrieved: Option<&RetrievedContext>,
    ds: &Dataset,
    budget: &TokenBudget,
) -> Result<AssembledPrompt> {
    let assembly = assemble_context(mode, q, lesson_text, retrieved, ds, budget)?;
    let mut prompt = build_prompt(q, &assembly.context, None);
    prompt.est_tokens = budget.estimate(&prompt.text);
    prompt.chunks_used = assembly.chunks_used;
    prompt.truncated = assembly.truncated;
    Ok(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Lesson, QuestionKind, Split, Topic};
    use crate::vectorstore::SearchHit;

    fn question() -> Question {
        Question {
            question_id: "NDQ_000201".into(),
            lesson_id: "L_0001".into(),
            kind: QuestionKind::MultipleChoice,
            stem: "Gravity causes erosion by all of the following except".into(),
            options: ["glaciers", "moving air", "flowing water", "Mass movement"]
                .iter()
                .enumerate()
                .map(|(i, t)| AnswerOption {
                    label: (b'A' + i as u8) as char,
                    text: t.to_string(),
                })
                .collect(),
            gold_label: 'B',
            split: Split::Validation,
        }
    }

    fn corpus(lesson_len: usize) -> Dataset {
        let topic = |id: &str, text: String| Topic {
            topic_id: id.into(),
            lesson_id: "L_0001".into(),
            title: None,
            text,
            adjunct: false,
        };
        Dataset::new(
            vec![Lesson {
                lesson_id: "L_0001".into(),
                title: "erosion".into(),
                topic_ids: vec!["T_0874".into(), "T_0875".into(), "T_0876".into()],
            }],
            vec![
                topic("T_0874", "Abrasion is mechanical weathering.".into()),
                topic("T_0875", "Wind moves sand.".into()),
                topic("T_0876", "x".repeat(lesson_len)),
            ],
            vec![question()],
        )
        .unwrap()
    }

    fn hits(ids: &[&str]) -> RetrievedContext {
        RetrievedContext {
            question_id: "NDQ_000201".into(),
            hits: ids
                .iter()
                .enumerate()
                .map(|(i, id)| SearchHit {
                    topic_id: id.to_string(),
                    lesson_id: "L_0001".into(),
                    score: 1.0 - i as f64 / 10.0,
                    rank: i + 1,
                })
                .collect(),
            rerank_applied: false,
            in_lesson: true,
        }
    }

    #[test]
    fn estimator() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens(&"a".repeat(300)), 100);
        assert_eq!(estimate_tokens(&"a".repeat(301)), 101);
        assert_eq!(estimate_tokens("ééé"), 1);
        // 13,000 characters need 4,334 tokens, over a 4,096 window
        assert_eq!(estimate_tokens(&"a".repeat(13_000)), 4334);
    }

    #[test]
    fn options_segment() {
        assert_eq!(
            format_options(&question()),
            "(A) glaciers (B) moving air (C) flowing water (D) Mass movement"
        );
    }

    #[test]
    fn empty_context_keeps_blank_line() {
        let p = build_prompt(&question(), "", None);
        assert!(p.text.contains("Context:\n\nQuestion: Gravity causes"));
        assert_eq!(p, build_prompt(&question(), "", None));
    }

    #[test]
    fn answer_follows_instruction_close() {
        let p = build_prompt(&question(), "ctx", Some('B'));
        assert!(p.text.ends_with("Answer: [/INST](B) moving air</s>"));
        let r = training_record(&question(), "ctx");
        assert_eq!(r.answer, "(B) moving air");
        assert!(r.prompt.ends_with("Answer: [/INST]"));
    }

    #[test]
    fn modes_without_truncation() {
        let ds = corpus(10);
        let b = TokenBudget::default();
        let q = question();
        let none = assemble_context(ContextMode::NoContext, &q, None, None, &ds, &b).unwrap();
        assert_eq!(none.context, "");
        let rag = assemble_context(ContextMode::RagOnly, &q, None, Some(&hits(&["T_0874"])), &ds, &b).unwrap();
        assert_eq!(rag.context, "Abrasion is mechanical weathering.");
        assert_eq!(rag.chunks_used, ["T_0874"]);
        let lesson = "whole lesson";
        let both = assemble_context(
            ContextMode::RagPlusLesson,
            &q,
            Some(lesson),
            Some(&hits(&["T_0875", "T_0874"])),
            &ds,
            &b,
        )
        .unwrap();
        assert_eq!(both.context, "Wind moves sand.\n\nAbrasion is mechanical weathering.\n\nwhole lesson");
        assert!(!both.truncated);
        let full = assemble_context(ContextMode::FullLesson, &q, Some(lesson), None, &ds, &b).unwrap();
        assert_eq!(full.context, lesson);
        assert!(matches!(
            assemble_context(ContextMode::RagOnly, &q, None, None, &ds, &b),
            Err(PromptError::MissingRetrieval(_))
        ));
    }

    #[test]
    fn oversize_lesson_is_cut_and_chunks_kept() {
        let ds = corpus(10);
        let b = TokenBudget::default();
        let q = question();
        let lesson = "y".repeat(13_000);
        let r = hits(&["T_0874", "T_0875"]);
        let p = prepare_prompt(ContextMode::RagPlusLesson, &q, Some(&lesson), Some(&r), &ds, &b).unwrap();
        assert!(p.truncated);
        assert_eq!(p.chunks_used, ["T_0874", "T_0875"]);
        assert!(p.text.contains("Abrasion is mechanical weathering.\n\nWind moves sand.\n\nyyy"));
        // the prompt fills the budget exactly: ceil(chars / 3) == 4096 - 64
        assert_eq!(p.est_tokens, b.prompt_tokens());
        assert_eq!(estimate_tokens(&p.text), p.est_tokens);
    }

    #[test]
    fn chunks_dropped_from_the_bottom() {
        let ds = corpus(1000);
        let b = TokenBudget {
            max_tokens: 300,
            reserved_for_answer: 10,
            chars_per_token: 3,
        };
        let q = question();
        let r = hits(&["T_0874", "T_0876", "T_0875"]);
        let a = assemble_context(ContextMode::RagOnly, &q, None, Some(&r), &ds, &b).unwrap();
        assert!(a.truncated);
        assert_eq!(a.chunks_used, ["T_0874"]);
    }

    #[test]
    fn top_chunk_cut_when_nothing_fits() {
        let ds = corpus(5000);
        let b = TokenBudget {
            max_tokens: 300,
            reserved_for_answer: 10,
            chars_per_token: 3,
        };
        let q = question();
        let p = prepare_prompt(ContextMode::RagOnly, &q, None, Some(&hits(&["T_0876"])), &ds, &b).unwrap();
        assert!(p.truncated);
        assert_eq!(p.chunks_used, ["T_0876"]);
        assert_eq!(p.est_tokens, b.prompt_tokens());
    }

    #[test]
    fn budget_unsatisfiable() {
        let ds = corpus(1);
        let b = TokenBudget {
            max_tokens: 50,
            reserved_for_answer: 10,
            chars_per_token: 3,
        };
        let err = assemble_context(ContextMode::NoContext, &question(), None, None, &ds, &b).unwrap_err();
        assert!(matches!(err, PromptError::BudgetUnsatisfiable { .. }));
        assert!(TokenBudget { reserved_for_answer: 4096, ..Default::default() }.validate().is_err());
    }
}
