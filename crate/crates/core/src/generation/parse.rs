//! Mapping free-text model output onto an option label.
//!
//! The cascade, first hit wins:
//!
//! 1. `ExactLabel`: after optional whitespace and an `Answer:` prefix the
//!    response opens with `(X)`, `X)`, or a bare `X` that is followed by the
//!    end of text, punctuation, or the text of option `X` itself.
//! 2. `LabelInText`: exactly one distinct `(X)` occurs anywhere. Two or more
//!    distinct labels make the response ambiguous and it is `Unparsable`.
//! 3. `TextMatch`: exactly one option's normalized text occurs in the
//!    normalized response on word boundaries. When several match, options
//!    whose text is contained in another matching option's text are
//!    discarded first, so "flowing water" beats "water".
//!
//! Only labels that exist on the question are ever returned.

use serde::{Deserialize, Serialize};

use super::ModelResponse;
use crate::corpus::Question;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    ExactLabel,
    LabelInText,
    TextMatch,
    Unparsable,
}

impl ParseStatus {
    pub const ALL: [ParseStatus; 4] = [
        ParseStatus::ExactLabel,
        ParseStatus::LabelInText,
        ParseStatus::TextMatch,
        ParseStatus::Unparsable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParseStatus::ExactLabel => "exact_label",
            ParseStatus::LabelInText => "label_in_text",
            ParseStatus::TextMatch => "text_match",
            ParseStatus::Unparsable => "unparsable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub question_id: String,
    pub predicted_label: Option<char>,
    pub parse_status: ParseStatus,
    pub raw_text: String,
}

pub fn parse_answer(resp: &ModelResponse, q: &Question) -> ParsedAnswer {
    let (predicted_label, parse_status) = parse_text(&resp.text, q);
    ParsedAnswer {
        question_id: q.question_id.clone(),
        predicted_label,
        parse_status,
        raw_text: resp.text.clone(),
    }
}

const LABEL_TERMINATORS: &[char] = &['.', ':', ',', ';', ')', ']', '-', '!'];

pub fn parse_text(raw: &str, q: &Question) -> (Option<char>, ParseStatus) {
    let valid = |c: char| q.option(c).is_some();
    let mut s = raw.trim_start();
    if s.get(..7).is_some_and(|p| p.eq_ignore_ascii_case("answer:")) {
        s = s[7..].trim_start();
    }

    if let Some(label) = leading_label(s, q, &valid) {
        return (Some(label), ParseStatus::ExactLabel);
    }

    let mut labels: Vec<char> = Vec::new();
    let chars: Vec<char> = raw.chars().collect();
    for w in chars.windows(3) {
        if w[0] == '(' && w[2] == ')' && w[1].is_ascii_uppercase() && valid(w[1]) && !labels.contains(&w[1]) {
            labels.push(w[1]);
        }
    }
    match labels.len() {
        1 => return (Some(labels[0]), ParseStatus::LabelInText),
        0 => {}
        _ => return (None, ParseStatus::Unparsable),
    }

    match text_match(raw, q) {
        Some(label) => (Some(label), ParseStatus::TextMatch),
        None => (None, ParseStatus::Unparsable),
    }
}

fn leading_label(s: &str, q: &Question, valid: &impl Fn(char) -> bool) -> Option<char> {
    let mut it = s.chars();
    let first = it.next()?;
    if first == '(' {
        let label = it.next()?.to_ascii_uppercase();
        return (it.next()? == ')' && valid(label)).then_some(label);
    }
    if !first.is_ascii_alphabetic() {
        return None;
    }
    let rest = it.as_str();
    let upper = first.to_ascii_uppercase();
    if rest.starts_with(')') {
        return valid(upper).then_some(upper);
    }
    if !first.is_ascii_uppercase() || !valid(first) {
        return None;
    }
    match rest.chars().next() {
        None => Some(first),
        Some(c) if LABEL_TERMINATORS.contains(&c) => Some(first),
        Some(c) if c.is_whitespace() => {
            let tail = normalize(rest);
            if tail.is_empty() {
                return Some(first);
            }
            let own = q.option(first).map(|o| normalize(&o.text))?;
            (tail == own).then_some(first)
        }
        _ => None,
    }
}

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
pub(crate) fn normalize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap_or(c) } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {needle} "))
}

fn text_match(raw: &str, q: &Question) -> Option<char> {
    let response = normalize(raw);
    if response.is_empty() {
        return None;
    }
    let matched: Vec<(char, String)> = q
        .options
        .iter()
        .map(|o| (o.label, normalize(&o.text)))
        .filter(|(_, t)| !t.is_empty() && contains_words(&response, t))
        .collect();
    let maximal: Vec<&(char, String)> = matched
        .iter()
        .filter(|(l, t)| {
            !matched
                .iter()
                .any(|(l2, t2)| l2 != l && t2 != t && contains_words(t2, t))
        })
        .collect();
    match maximal.as_slice() {
        [(label, _)] => Some(*label),
        _ => None,
    }
}
