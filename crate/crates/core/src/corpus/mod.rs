//! Textbook corpus model: lessons made of topic chunks, plus the non-diagram
//! true/false and multiple-choice questions bound to them.
//!
//! Two on-disk layouts are understood. The normalized layout is this crate's
//! own JSON schema (one document per split with `lessons`, `topics` and
//! `questions` arrays). The native layout is the per-lesson JSON of the public
//! CK12 textbook QA release; see [`native`] for the conversion rules.

mod native;
mod stats;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use native::parse_native_lessons;
pub use stats::{KindCounts, KindExpectation, SplitStats, StatMismatch, StatsExpectation, StatsReport};

/// Highest option label accepted; questions carry at most eight options.
pub const MAX_LABEL: char = 'H';

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("dangling reference: {0}")]
    Referential(String),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("unknown lesson: {0}")]
    UnknownLesson(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    TrueFalse,
    MultipleChoice,
}

impl QuestionKind {
    pub const ALL: [QuestionKind; 2] = [QuestionKind::TrueFalse, QuestionKind::MultipleChoice];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub lesson_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    /// Set for lesson-level adjunct blocks (summary, vocabulary, ...) that
    /// were promoted to topics during conversion.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub adjunct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesson {
    pub lesson_id: String,
    pub title: String,
    pub topic_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: char,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub lesson_id: String,
    pub kind: QuestionKind,
    pub stem: String,
    pub options: Vec<AnswerOption>,
    pub gold_label: char,
    pub split: Split,
}

impl Question {
    pub fn option(&self, label: char) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.label == label)
    }

    /// `(B) moving air` style rendering of one option.
    pub fn format_option(&self, label: char) -> Option<String> {
        self.option(label).map(|o| format!("({}) {}", o.label, o.text))
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.stem.trim().is_empty() {
            return Err("empty stem".into());
        }
        let n = self.options.len();
        match self.kind {
            QuestionKind::TrueFalse if n != 2 => {
                return Err(format!("true/false question carries {n} options, expected 2"))
            }
            QuestionKind::MultipleChoice if !(2..=8).contains(&n) => {
                return Err(format!("multiple-choice question carries {n} options, expected 2-8"))
            }
            _ => {}
        }
        for (i, opt) in self.options.iter().enumerate() {
            let expected = (b'A' + i as u8) as char;
            if opt.label > MAX_LABEL {
                return Err(format!("option label {} beyond {MAX_LABEL}", opt.label));
            }
            if opt.label != expected {
                return Err(format!(
                    "option labels must run consecutively from A; found {} at position {}",
                    opt.label,
                    i + 1
                ));
            }
        }
        if self.option(self.gold_label).is_none() {
            return Err(format!("gold label {} is not among the options", self.gold_label));
        }
        Ok(())
    }
}

/// Immutable, validated corpus.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    lessons: Vec<Lesson>,
    topics: Vec<Topic>,
    questions: Vec<Question>,
    lesson_index: HashMap<String, usize>,
    topic_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset, enforcing every structural invariant of the corpus.
    pub fn new(lessons: Vec<Lesson>, topics: Vec<Topic>, questions: Vec<Question>) -> Result<Self> {
        let mut lesson_index = HashMap::with_capacity(lessons.len());
        for (i, lesson) in lessons.iter().enumerate() {
            if lesson_index.insert(lesson.lesson_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(lesson.lesson_id.clone()));
            }
        }
        let mut topic_index = HashMap::with_capacity(topics.len());
        for (i, topic) in topics.iter().enumerate() {
            if topic_index.insert(topic.topic_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(topic.topic_id.clone()));
            }
            if topic.text.trim().is_empty() {
                return Err(CorpusError::parse(&topic.topic_id, "topic text is empty"));
            }
            if !lesson_index.contains_key(&topic.lesson_id) {
                return Err(CorpusError::Referential(format!(
                    "topic {} names lesson {}",
                    topic.topic_id, topic.lesson_id
                )));
            }
        }
        for lesson in &lessons {
            if lesson.topic_ids.is_empty() {
                return Err(CorpusError::parse(&lesson.lesson_id, "lesson has no topics"));
            }
            for tid in &lesson.topic_ids {
                let Some(&ti) = topic_index.get(tid) else {
                    return Err(CorpusError::Referential(format!(
                        "lesson {} lists topic {tid}",
                        lesson.lesson_id
                    )));
                };
                if topics[ti].lesson_id != lesson.lesson_id {
                    return Err(CorpusError::Referential(format!(
                        "lesson {} lists topic {tid} owned by lesson {}",
                        lesson.lesson_id, topics[ti].lesson_id
                    )));
                }
            }
        }
        let mut question_index = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if question_index.insert(q.question_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(q.question_id.clone()));
            }
            q.check().map_err(|m| CorpusError::parse(&q.question_id, m))?;
            if !lesson_index.contains_key(&q.lesson_id) {
                return Err(CorpusError::Referential(format!(
                    "question {} names lesson {}",
                    q.question_id, q.lesson_id
                )));
            }
        }
        Ok(Dataset {
            lessons,
            topics,
            questions,
            lesson_index,
            topic_index,
            question_index,
        })
    }

    pub fn lessons(&self) -> &[Lesson] {
        &self.lessons
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn lesson(&self, id: &str) -> Option<&Lesson> {
        self.lesson_index.get(id).map(|&i| &self.lessons[i])
    }

    pub fn topic(&self, id: &str) -> Option<&Topic> {
        self.topic_index.get(id).map(|&i| &self.topics[i])
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.question_index.get(id).map(|&i| &self.questions[i])
    }

    pub fn is_empty(&self) -> bool {
        self.lessons.is_empty() && self.topics.is_empty() && self.questions.is_empty()
    }

    /// Splits the dataset into one normalized document per split.
    ///
    /// A lesson is written to the earliest split that has a question bound to
    /// it; lessons without questions go to the train document. Topics follow
    /// their lesson.
    pub fn to_normalized(&self) -> BTreeMap<Split, NormalizedCorpus> {
        let mut lesson_split: HashMap<&str, Split> = HashMap::new();
        for q in &self.questions {
            lesson_split
                .entry(q.lesson_id.as_str())
                .and_modify(|s| *s = (*s).min(q.split))
                .or_insert(q.split);
        }
        let mut docs: BTreeMap<Split, NormalizedCorpus> = BTreeMap::new();
        for lesson in &self.lessons {
            let split = lesson_split
                .get(lesson.lesson_id.as_str())
                .copied()
                .unwrap_or(Split::Train);
            let doc = docs.entry(split).or_default();
            doc.lessons.push(lesson.clone());
            for tid in &lesson.topic_ids {
                doc.topics.push(self.topic(tid).expect("validated").clone());
            }
        }
        for q in &self.questions {
            docs.entry(q.split).or_default().questions.push(q.clone());
        }
        docs
    }
}

/// The normalized on-disk document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedCorpus {
    pub lessons: Vec<Lesson>,
    pub topics: Vec<Topic>,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    #[serde(alias = "native", alias = "native_ck12")]
    NativeCk12,
    Normalized,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "native" | "native-ck12" | "ck12" => Ok(CorpusFormat::NativeCk12),
            "normalized" => Ok(CorpusFormat::Normalized),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

/// Counts of records that were intentionally left out during loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub dropped_diagram: usize,
    /// Non-diagram questions of a type other than true/false or multiple choice.
    pub dropped_other: usize,
    /// Adjunct blocks with no text.
    pub skipped_empty_blocks: usize,
    pub adjunct_topics: usize,
}

impl LoadSummary {
    fn absorb(&mut self, other: LoadSummary) {
        self.dropped_diagram += other.dropped_diagram;
        self.dropped_other += other.dropped_other;
        self.skipped_empty_blocks += other.skipped_empty_blocks;
        self.adjunct_topics += other.adjunct_topics;
    }
}

/// File names of the normalized split documents inside a corpus directory.
pub fn normalized_file_name(split: Split) -> String {
    format!("{}.json", split.as_str())
}

/// Loads a corpus from a file or a directory of split files.
pub fn load_dataset(path: &Path, format: CorpusFormat) -> Result<(Dataset, LoadSummary)> {
    if !path.exists() {
        return Err(CorpusError::parse(path.display().to_string(), "path does not exist"));
    }
    let mut lessons = Vec::new();
    let mut topics = Vec::new();
    let mut questions = Vec::new();
    let mut summary = LoadSummary::default();
    match format {
        CorpusFormat::Normalized => {
            for file in normalized_files(path)? {
                let doc: NormalizedCorpus = read_json(&file)?;
                lessons.extend(doc.lessons);
                topics.extend(doc.topics);
                questions.extend(doc.questions);
            }
        }
        CorpusFormat::NativeCk12 => {
            for (file, split) in native_files(path)? {
                let value: serde_json::Value = read_json(&file)?;
                let (doc, s) = parse_native_lessons(&value, split)
                    .map_err(|e| relocate(e, &file))?;
                lessons.extend(doc.lessons);
                topics.extend(doc.topics);
                questions.extend(doc.questions);
                summary.absorb(s);
            }
        }
    }
    let ds = Dataset::new(lessons, topics, questions)?;
    Ok((ds, summary))
}

/// Writes one normalized document per split into `dir`.
pub fn write_normalized(ds: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (split, doc) in ds.to_normalized() {
        let path = dir.join(normalized_file_name(split));
        let mut body = serde_json::to_string_pretty(&doc).expect("corpus serializes");
        body.push('\n');
        fs::write(&path, body).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn relocate(err: CorpusError, file: &Path) -> CorpusError {
    match err {
        CorpusError::Parse { location, message } => CorpusError::Parse {
            location: format!("{}: {location}", file.display()),
            message,
        },
        other => other,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(file: &Path) -> Result<T> {
    let bytes = fs::read(file).map_err(|source| CorpusError::Io {
        path: file.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CorpusError::parse(
            format!("{}:{}:{}", file.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}

fn normalized_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let files: Vec<PathBuf> = Split::ALL
        .iter()
        .map(|s| path.join(normalized_file_name(*s)))
        .filter(|p| p.is_file())
        .collect();
    if files.is_empty() {
        return Err(CorpusError::parse(
            path.display().to_string(),
            "directory holds none of train.json, validation.json, test.json",
        ));
    }
    Ok(files)
}

/// Infers the split of a native release file from its name
/// (`tqa_v1_train.json`, `tqa_v1_val.json`, `tqa_v2_test.json`).
pub fn split_from_file_name(path: &Path) -> Option<Split> {
    let name = path.file_name()?.to_str()?.to_ascii_lowercase();
    if name.contains("train") {
        Some(Split::Train)
    } else if name.contains("val") || name.contains("dev") {
        Some(Split::Validation)
    } else if name.contains("test") {
        Some(Split::Test)
    } else {
        None
    }
}

fn native_files(path: &Path) -> Result<Vec<(PathBuf, Split)>> {
    if path.is_file() {
        let split = split_from_file_name(path).ok_or_else(|| {
            CorpusError::parse(
                path.display().to_string(),
                "cannot infer split from file name (expected train/val/test)",
            )
        })?;
        return Ok(vec![(path.to_path_buf(), split)]);
    }
    let entries = fs::read_dir(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry
            .map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .path();
        if p.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Some(split) = split_from_file_name(&p) {
            files.push((p, split));
        }
    }
    files.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    if files.is_empty() {
        return Err(CorpusError::parse(
            path.display().to_string(),
            "no native split files (names containing train/val/test) found",
        ));
    }
    Ok(files)
}

/// Computes split statistics and, when an expectation is supplied, lists every
/// field that disagrees. Mismatches never abort.
pub fn validate_dataset(ds: &Dataset, expected: Option<&StatsExpectation>) -> StatsReport {
    let stats = SplitStats::compute(ds);
    let mismatches = expected.map(|e| e.compare(&stats)).unwrap_or_default();
    StatsReport { stats, mismatches }
}

/// Questions of one split whose kind is in `kinds`, ordered by question id.
pub fn filter_questions<'a>(ds: &'a Dataset, split: Split, kinds: &[QuestionKind]) -> Vec<&'a Question> {
    let kinds: HashSet<QuestionKind> = kinds.iter().copied().collect();
    let mut out: Vec<&Question> = ds
        .questions()
        .iter()
        .filter(|q| q.split == split && kinds.contains(&q.kind))
        .collect();
    out.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    out
}

/// Separator placed between consecutive topic texts.
pub const TOPIC_SEPARATOR: &str = "\n\n";

/// Full lesson text: topic texts in textbook order joined by a blank line.
pub fn lesson_text(ds: &Dataset, lesson_id: &str) -> Result<String> {
    let lesson = ds
        .lesson(lesson_id)
        .ok_or_else(|| CorpusError::UnknownLesson(lesson_id.to_string()))?;
    let parts: Vec<&str> = lesson
        .topic_ids
        .iter()
        .map(|t| ds.topic(t).expect("validated").text.as_str())
        .collect();
    Ok(parts.join(TOPIC_SEPARATOR))
}
