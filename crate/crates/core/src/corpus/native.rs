//! Conversion from the public CK12 textbook QA release layout.
//!
//! Each release file is a JSON array of lessons:
//!
//! ```text
//! { "globalID": "L_0002", "lessonName": "...",
//!   "topics": { "T_0001": { "globalID", "topicName", "orderID": "t_0",
//!                           "content": { "text": "..." } } },
//!   "adjunctTopics": { "Summary": { "content": { "text": "..." } }, ... },
//!   "questions": {
//!     "nonDiagramQuestions": { "NDQ_000000": {
//!         "beingAsked": { "processedText": "..." },
//!         "answerChoices": { "a": { "processedText": "...", "idStructural": "a." } },
//!         "correctAnswer": { "processedText": "a" },
//!         "questionType": "...", "questionSubType": "True or False" } },
//!     "diagramQuestions": { ... } } }
//! ```
//!
//! Topics keep their release ids and are ordered by `orderID`. Every
//! non-empty adjunct block becomes a topic with id `<lesson>_ADJ_<name>` and
//! the `adjunct` flag, placed after the regular topics. Diagram questions
//! are counted and dropped. Answer choices are ordered by their key and
//! relabelled `A`, `B`, ... so labels are always consecutive.

use serde_json::{Map, Value};

use super::{
    AnswerOption, CorpusError, Lesson, LoadSummary, NormalizedCorpus, Question, QuestionKind,
    Result, Split, Topic, MAX_LABEL,
};

pub fn parse_native_lessons(root: &Value, split: Split) -> Result<(NormalizedCorpus, LoadSummary)> {
    let lessons = root
        .as_array()
        .ok_or_else(|| CorpusError::parse("$", "expected a JSON array of lessons"))?;
    let mut doc = NormalizedCorpus::default();
    let mut summary = LoadSummary::default();
    for (i, lesson) in lessons.iter().enumerate() {
        let loc = format!("$[{i}]");
        let obj = lesson
            .as_object()
            .ok_or_else(|| CorpusError::parse(&loc, "lesson is not an object"))?;
        convert_lesson(obj, split, &loc, &mut doc, &mut summary)?;
    }
    Ok((doc, summary))
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str)
}

/// `content.text` of a topic or adjunct block. Vocabulary blocks sometimes
/// carry a term-to-definition map instead of a string.
fn block_text(block: &Value) -> String {
    let content = block.get("content").unwrap_or(block);
    match content.get("text") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Object(map)) => map
            .iter()
            .filter_map(|(k, v)| v.as_str().map(|v| format!("{k}: {}", v.trim())))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => match content {
            Value::Object(map) if !map.contains_key("text") => map
                .iter()
                .filter_map(|(k, v)| v.as_str().map(|v| format!("{k}: {}", v.trim())))
                .collect::<Vec<_>>()
                .join("\n"),
            _ => String::new(),
        },
    }
}

fn order_key(key: &str, topic: &Value) -> (u64, String) {
    let order = topic
        .get("orderID")
        .and_then(Value::as_str)
        .and_then(|s| s.trim_start_matches(|c: char| !c.is_ascii_digit()).parse::<u64>().ok())
        .unwrap_or(u64::MAX);
    (order, key.to_string())
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_alphanumeric() {
            s.extend(c.to_lowercase());
        } else if !s.ends_with('_') && !s.is_empty() {
            s.push('_');
        }
    }
    s.trim_end_matches('_').to_string()
}

fn convert_lesson(
    obj: &Map<String, Value>,
    split: Split,
    loc: &str,
    doc: &mut NormalizedCorpus,
    summary: &mut LoadSummary,
) -> Result<()> {
    let lesson_id = str_field(obj, "globalID")
        .ok_or_else(|| CorpusError::parse(loc, "lesson without globalID"))?
        .to_string();
    let loc = format!("{loc} ({lesson_id})");
    let title = str_field(obj, "lessonName").unwrap_or_default().to_string();

    let mut topic_ids = Vec::new();
    if let Some(topics) = obj.get("topics").and_then(Value::as_object) {
        let mut ordered: Vec<(&String, &Value)> = topics.iter().collect();
        ordered.sort_by_key(|(k, v)| order_key(k, v));
        for (key, topic) in ordered {
            let text = block_text(topic);
            if text.is_empty() {
                summary.skipped_empty_blocks += 1;
                continue;
            }
            let topic_id = topic
                .get("globalID")
                .and_then(Value::as_str)
                .unwrap_or(key)
                .to_string();
            topic_ids.push(topic_id.clone());
            doc.topics.push(Topic {
                topic_id,
                lesson_id: lesson_id.clone(),
                title: topic.get("topicName").and_then(Value::as_str).map(str::to_string),
                text,
                adjunct: false,
            });
        }
    }
    if let Some(adjuncts) = obj.get("adjunctTopics").and_then(Value::as_object) {
        for (name, block) in adjuncts {
            let text = block_text(block);
            if text.is_empty() {
                summary.skipped_empty_blocks += 1;
                continue;
            }
            let topic_id = format!("{lesson_id}_ADJ_{}", slug(name));
            topic_ids.push(topic_id.clone());
            summary.adjunct_topics += 1;
            doc.topics.push(Topic {
                topic_id,
                lesson_id: lesson_id.clone(),
                title: Some(name.clone()),
                text,
                adjunct: true,
            });
        }
    }
    doc.lessons.push(Lesson {
        lesson_id: lesson_id.clone(),
        title,
        topic_ids,
    });

    let questions = obj.get("questions");
    if let Some(diagram) = questions
        .and_then(|q| q.get("diagramQuestions"))
        .and_then(Value::as_object)
    {
        summary.dropped_diagram += diagram.len();
    }
    if let Some(nd) = questions
        .and_then(|q| q.get("nonDiagramQuestions"))
        .and_then(Value::as_object)
    {
        for (key, q) in nd {
            let qloc = format!("{loc} question {key}");
            match convert_question(key, q, &lesson_id, split, &qloc)? {
                Some(question) => doc.questions.push(question),
                None => summary.dropped_other += 1,
            }
        }
    }
    Ok(())
}

fn question_kind(q: &Value) -> Option<QuestionKind> {
    let label = q
        .get("questionSubType")
        .and_then(Value::as_str)
        .or_else(|| q.get("questionType").and_then(Value::as_str))?
        .to_ascii_lowercase();
    if label.contains("true") && label.contains("false") {
        Some(QuestionKind::TrueFalse)
    } else if label.contains("multiple choice") || label.contains("matching") {
        Some(QuestionKind::MultipleChoice)
    } else {
        None
    }
}

fn processed(v: &Value) -> Option<&str> {
    v.get("processedText")
        .and_then(Value::as_str)
        .or_else(|| v.get("rawText").and_then(Value::as_str))
        .or_else(|| v.as_str())
}

fn convert_question(
    key: &str,
    q: &Value,
    lesson_id: &str,
    split: Split,
    loc: &str,
) -> Result<Option<Question>> {
    let Some(kind) = question_kind(q) else {
        return Ok(None);
    };
    let question_id = q
        .get("globalID")
        .and_then(Value::as_str)
        .unwrap_or(key)
        .to_string();
    let stem = q
        .get("beingAsked")
        .and_then(processed)
        .ok_or_else(|| CorpusError::parse(loc, "missing beingAsked"))?
        .trim()
        .to_string();
    let choices = q
        .get("answerChoices")
        .and_then(Value::as_object)
        .ok_or_else(|| CorpusError::parse(loc, "missing answerChoices"))?;
    let mut keys: Vec<&String> = choices.keys().collect();
    keys.sort();
    if keys.len() > (MAX_LABEL as u8 - b'A' + 1) as usize {
        return Err(CorpusError::parse(
            loc,
            format!("{} answer choices exceed label {MAX_LABEL}", keys.len()),
        ));
    }
    let mut options = Vec::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        let text = processed(&choices[k.as_str()])
            .ok_or_else(|| CorpusError::parse(loc, format!("answer choice {k} has no text")))?;
        options.push(AnswerOption {
            label: (b'A' + i as u8) as char,
            text: text.trim().to_string(),
        });
    }
    let gold_raw = q
        .get("correctAnswer")
        .and_then(processed)
        .ok_or_else(|| CorpusError::parse(loc, "missing correctAnswer"))?;
    let gold = normalize_key(gold_raw);
    let position = keys
        .iter()
        .position(|k| normalize_key(k) == gold)
        .or_else(|| {
            keys.iter().position(|k| {
                choices[k.as_str()]
                    .get("idStructural")
                    .and_then(Value::as_str)
                    .is_some_and(|id| normalize_key(id) == gold)
            })
        })
        .or_else(|| {
            options
                .iter()
                .position(|o| o.text.eq_ignore_ascii_case(gold_raw.trim()))
        })
        .ok_or_else(|| {
            CorpusError::parse(loc, format!("correct answer `{gold_raw}` matches no choice"))
        })?;
    Ok(Some(Question {
        question_id,
        lesson_id: lesson_id.to_string(),
        kind,
        stem,
        gold_label: options[position].label,
        options,
        split,
    }))
}

fn normalize_key(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '.' || c == ')' || c == '(')
        .to_ascii_lowercase()
}
