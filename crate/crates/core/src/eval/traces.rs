//! Trace log: JSON lines. The first line is a header naming the config and
//! its manifest; every following line is one `QuestionTrace`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, QuestionTrace, Result};
use crate::generation::ParseStatus;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config_name: String,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

pub struct TraceWriter {
    path: PathBuf,
    file: File,
    header: TraceHeader,
}

fn header_line(header: &TraceHeader) -> String {
    serde_json::to_string(&HeaderLine { header: header.clone() }).expect("serializable")
}

impl TraceWriter {
    /// Opens `path` for appending. An existing file must carry the same
    /// header; its traces are returned so the caller can skip them. A torn
    /// final line from an interrupted write is discarded.
    pub fn open(path: &Path, header: &TraceHeader) -> Result<(Self, Vec<QuestionTrace>)> {
        let io = |e| EvalError::io(path, e);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut prior = Vec::new();
        if path.exists() && fs::metadata(path).map_err(io)?.len() > 0 {
            let (found, traces) = read_lenient(path)?;
            if &found != header {
                return Err(EvalError::Trace {
                    path: path.to_path_buf(),
                    message: format!(
                        "was written by a different run (config `{}`, config hash {}); remove it or pick another output",
                        found.config_name, found.manifest.config_hash
                    ),
                });
            }
            prior = traces;
            // drop any torn tail by rewriting what was read back
            rewrite(path, header, &prior)?;
        } else {
            rewrite(path, header, &[])?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        Ok((
            TraceWriter {
                path: path.to_path_buf(),
                file,
                header: header.clone(),
            },
            prior,
        ))
    }

    pub fn append(&mut self, trace: &QuestionTrace) -> Result<()> {
        let mut line = serde_json::to_string(trace).expect("serializable");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| EvalError::io(&self.path, e))
    }

    /// Replaces the file with the complete, id-ordered trace set.
    pub fn finish(self, traces: &[QuestionTrace]) -> Result<()> {
        drop(self.file);
        rewrite(&self.path, &self.header, traces)
    }
}

fn rewrite(path: &Path, header: &TraceHeader, traces: &[QuestionTrace]) -> Result<()> {
    let io = |e| EvalError::io(path, e);
    let mut out = header_line(header);
    out.push('\n');
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("serializable"));
        out.push('\n');
    }
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(out.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read_lenient(path: &Path) -> Result<(TraceHeader, Vec<QuestionTrace>)> {
    let bad = |message: String| EvalError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| EvalError::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| EvalError::io(path, e))?;
    let first = lines.first().ok_or_else(|| bad("empty file".into()))?;
    let header: HeaderLine = serde_json::from_str(first).map_err(|e| bad(format!("bad header line: {e}")))?;
    let mut traces = Vec::new();
    let body = &lines[1..];
    for (i, line) in body.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<QuestionTrace>(line) {
            Ok(t) => traces.push(t),
            Err(_) if i + 1 == body.len() => log::warn!("{}: ignoring torn final line", path.display()),
            Err(e) => return Err(bad(format!("line {}: {e}", i + 2))),
        }
    }
    let mut seen = std::collections::HashSet::new();
    traces.retain(|t| seen.insert(t.question_id.clone()));
    Ok((header.header, traces))
}

pub fn read_trace_file(path: &Path) -> Result<(TraceHeader, Vec<QuestionTrace>)> {
    read_lenient(path)
}

/// Every `*.jsonl` trace file directly inside `dir`, in file-name order.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<(PathBuf, TraceHeader, Vec<QuestionTrace>)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| EvalError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| read_trace_file(&p).map(|(h, t)| (p, h, t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub traces: usize,
    /// Traces that carry an in-lesson flag (retrieval participated).
    pub with_retrieval: usize,
    pub in_lesson: usize,
    pub in_lesson_rate: Option<f64>,
    pub parse_status: BTreeMap<ParseStatus, usize>,
}

pub fn trace_stats(traces: &[QuestionTrace]) -> TraceStats {
    let flags: Vec<bool> = traces.iter().filter_map(|t| t.in_lesson).collect();
    let in_lesson = flags.iter().filter(|b| **b).count();
    let mut parse_status: BTreeMap<ParseStatus, usize> = ParseStatus::ALL.iter().map(|s| (*s, 0)).collect();
    for t in traces {
        *parse_status.entry(t.parse_status).or_default() += 1;
    }
    TraceStats {
        traces: traces.len(),
        with_retrieval: flags.len(),
        in_lesson,
        in_lesson_rate: (!flags.is_empty()).then(|| in_lesson as f64 / flags.len() as f64),
        parse_status,
    }
}

impl TraceStats {
    pub fn render(&self) -> String {
        let mut out = format!("traces: {}\n", self.traces);
        match self.in_lesson_rate {
            Some(r) => out.push_str(&format!(
                "in-lesson rate: {}/{} = {:.4}\n",
                self.in_lesson, self.with_retrieval, r
            )),
            None => out.push_str("in-lesson rate: n/a (no retrieval)\n"),
        }
        out.push_str("parse status:\n");
        for (status, n) in &self.parse_status {
            out.push_str(&format!("  {:<14}{n}\n", status.as_str()));
        }
        out
    }
}
