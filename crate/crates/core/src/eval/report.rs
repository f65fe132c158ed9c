//! Human-readable renderings and report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{EvalError, EvalReport, KindScore, QuestionTrace, Result};
use crate::corpus::Dataset;
use crate::manifest::{timing_path, Timing};
use crate::promptgen::format_options;

fn pct(a: Option<f64>) -> String {
    a.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into())
}

fn counts(s: &KindScore) -> String {
    format!("{}/{}", s.correct, s.total)
}

pub fn render_report(r: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("config: {}\n", r.config_name));
    out.push_str(&format!(
        "split: {}  context: {}  rerank: {}  model: {}\n\n",
        r.split,
        r.context_mode.as_str(),
        if r.rerank { "yes" } else { "no" },
        r.model_id
    ));
    out.push_str(&format!("{:<10}{:>10}{:>10}{:>10}\n", "", "T/F", "MC", "All"));
    out.push_str(&format!(
        "{:<10}{:>10}{:>10}{:>10}\n",
        "correct",
        counts(&r.tf),
        counts(&r.mc),
        counts(&r.all)
    ));
    out.push_str(&format!(
        "{:<10}{:>10}{:>10}{:>10}\n\n",
        "accuracy",
        pct(r.tf.accuracy),
        pct(r.mc.accuracy),
        pct(r.all.accuracy)
    ));
    out.push_str(&format!("unparsable: {}\n", r.unparsable));
    out.push_str(&format!("truncated prompts: {}\n", r.truncated_prompts));
    if let Some(rate) = r.in_lesson_rate {
        out.push_str(&format!("in-lesson rate: {:.2}%\n", rate * 100.0));
    }
    out
}

/// File-system friendly form of a config name.
pub(crate) fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.is_empty() && !s.ends_with('-') {
            s.push('-');
        }
    }
    let s = s.trim_end_matches('-').to_string();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub text: PathBuf,
    pub traces: PathBuf,
}

impl ReportPaths {
    pub fn for_config(dir: &Path, config_name: &str) -> Self {
        let stem = slug(config_name);
        ReportPaths {
            json: dir.join(format!("{stem}.report.json")),
            text: dir.join(format!("{stem}.report.txt")),
            traces: dir.join(format!("{stem}.traces.jsonl")),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e| EvalError::io(path, e);
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes the JSON report, its text rendering and the timing sidecar.
pub fn write_report(r: &EvalReport, paths: &ReportPaths) -> Result<()> {
    let mut json = serde_json::to_string_pretty(r).expect("serializable");
    json.push('\n');
    write_atomic(&paths.json, json.as_bytes())?;
    write_atomic(&paths.text, render_report(r).as_bytes())?;
    let timing = serde_json::to_string_pretty(&Timing::ending_now(r.wall_time)).expect("serializable");
    write_atomic(&timing_path(&paths.json), timing.as_bytes())
}

/// Case-study block for one question: stem, options, gold and predicted
/// answers, and the retrieved topics with their ids when retrieval ran.
pub fn render_trace(trace: &QuestionTrace, ds: &Dataset) -> Result<String> {
    let q = ds
        .question(&trace.question_id)
        .ok_or_else(|| EvalError::UnknownId(trace.question_id.clone()))?;
    let mut out = String::new();
    out.push_str(&format!("Question ({}, lesson {}): {}\n", q.question_id, q.lesson_id, q.stem));
    out.push_str(&format!("Options: {}\n", format_options(q)));
    out.push_str(&format!(
        "Correct Answer: {}\n",
        q.format_option(trace.gold_label)
            .ok_or_else(|| EvalError::UnknownId(format!("{}:{}", q.question_id, trace.gold_label)))?
    ));
    let predicted = match trace.parsed_label.and_then(|l| q.format_option(l)) {
        Some(p) => p,
        None => format!("unparsable: {:?}", trace.raw_text),
    };
    out.push_str(&format!(
        "Predicted Answer: {predicted} ({})\n",
        if trace.correct { "correct" } else { "incorrect" }
    ));
    if !trace.retrieved.is_empty() {
        out.push_str("\nRetrieved Context with RAG:\n");
        for (i, hit) in trace.retrieved.iter().enumerate() {
            let topic = ds
                .topic(&hit.topic_id)
                .ok_or_else(|| EvalError::UnknownId(hit.topic_id.clone()))?;
            let marker = if hit.lesson_id == q.lesson_id { "same lesson" } else { "other lesson" };
            out.push_str(&format!(
                "[{}] {} (lesson {}, {marker}, score {:.4})\n",
                i + 1,
                hit.topic_id,
                hit.lesson_id,
                hit.score
            ));
            if let Some(title) = &topic.title {
                out.push_str(&format!("{title}\n"));
            }
            out.push_str(&topic.text);
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("RAG (No Re-ranker)"), "rag-no-re-ranker");
        assert_eq!(slug("RAG + Re-ranker"), "rag-re-ranker");
        assert_eq!(slug("full lesson context (No RAG)"), "full-lesson-context-no-rag");
        assert_eq!(slug("!!"), "run");
    }
}
