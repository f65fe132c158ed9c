//! Sequential runs over a matrix of configs and the comparison table.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::slug;
use super::{run_eval, write_report, EvalConfig, EvalEnv, EvalError, EvalReport, ReportPaths, Result};
use crate::corpus::Dataset;
use crate::promptgen::ContextMode;

/// The five standard rows: name, context mode, rerank.
pub const CANONICAL_ROWS: [(&str, ContextMode, bool); 5] = [
    ("without fine-tuning", ContextMode::NoContext, false),
    ("full lesson context (No RAG)", ContextMode::FullLesson, false),
    ("RAG (No Re-ranker)", ContextMode::RagOnly, false),
    ("RAG and full lesson context", ContextMode::RagPlusLesson, false),
    ("RAG + Re-ranker", ContextMode::RagPlusLesson, true),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub configs: Vec<EvalConfig>,
}

impl AblationMatrix {
    /// Rejects empty matrices and duplicate names (including names that
    /// collide once turned into file names), then validates each config.
    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() {
            return Err(EvalError::Config("ablation matrix has no configs".into()));
        }
        let mut names = HashSet::new();
        let mut slugs = HashSet::new();
        for c in &self.configs {
            if !names.insert(c.name.as_str()) {
                return Err(EvalError::Config(format!("duplicate config name `{}`", c.name)));
            }
            if !slugs.insert(slug(&c.name)) {
                return Err(EvalError::Config(format!(
                    "config name `{}` collides with another after conversion to a file name",
                    c.name
                )));
            }
            c.validate()?;
        }
        Ok(())
    }

    /// Canonical rows with no config of matching context mode and rerank.
    pub fn missing_canonical(&self) -> Vec<&'static str> {
        CANONICAL_ROWS
            .iter()
            .filter(|(_, mode, rerank)| {
                !self
                    .configs
                    .iter()
                    .any(|c| c.context_mode == *mode && c.rerank == *rerank)
            })
            .map(|(name, _, _)| *name)
            .collect()
    }
}

/// The five canonical rows derived from `base`, which supplies model,
/// retrieval, budget and split settings.
pub fn canonical_matrix(base: &EvalConfig) -> AblationMatrix {
    let configs = CANONICAL_ROWS
        .iter()
        .map(|(name, mode, rerank)| {
            let mut c = base.clone();
            c.name = name.to_string();
            c.context_mode = *mode;
            c.rerank = *rerank;
            if mode.needs_retrieval() && c.retrieval.is_none() {
                c.retrieval = Some(Default::default());
            }
            c
        })
        .collect();
    AblationMatrix { configs }
}

#[derive(Debug)]
pub struct AblationRow {
    pub name: String,
    pub context_mode: ContextMode,
    pub rerank: bool,
    pub outcome: Result<EvalReport>,
}

/// Runs every config in order. A failing config is recorded in its row and
/// the remaining configs still run. With `out_dir`, each config's report
/// and traces are written there.
pub fn run_ablation(
    ds: &Dataset,
    matrix: &AblationMatrix,
    env: &EvalEnv,
    out_dir: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    matrix.validate()?;
    let missing = matrix.missing_canonical();
    if !missing.is_empty() {
        log::warn!("ablation matrix lacks canonical rows: {}", missing.join(", "));
    }
    let mut rows = Vec::with_capacity(matrix.configs.len());
    for cfg in &matrix.configs {
        log::info!("running config `{}`", cfg.name);
        let paths = out_dir.map(|d| ReportPaths::for_config(d, &cfg.name));
        let outcome = run_eval(ds, cfg, env, paths.as_ref().map(|p| p.traces.as_path())).and_then(|r| {
            if let Some(p) = &paths {
                write_report(&r, p)?;
            }
            Ok(r)
        });
        if let Err(e) = &outcome {
            log::error!("config `{}` failed: {e}", cfg.name);
        }
        rows.push(AblationRow {
            name: cfg.name.clone(),
            context_mode: cfg.context_mode,
            rerank: cfg.rerank,
            outcome,
        });
    }
    Ok(rows)
}

fn full(a: Option<f64>) -> String {
    a.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Machine-readable comparison table, accuracies at full precision.
pub fn comparison_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "config,context_mode,rerank,tf_total,tf_accuracy,mc_total,mc_accuracy,all_total,all_accuracy,unparsable,in_lesson_rate,error\n",
    );
    for row in rows {
        let mut fields = vec![
            csv_field(&row.name),
            row.context_mode.as_str().to_string(),
            row.rerank.to_string(),
        ];
        match &row.outcome {
            Ok(r) => fields.extend([
                r.tf.total.to_string(),
                full(r.tf.accuracy),
                r.mc.total.to_string(),
                full(r.mc.accuracy),
                r.all.total.to_string(),
                full(r.all.accuracy),
                r.unparsable.to_string(),
                full(r.in_lesson_rate),
                String::new(),
            ]),
            Err(e) => {
                fields.extend(std::iter::repeat_n(String::new(), 8));
                fields.push(csv_field(&e.to_string()));
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn pct(a: Option<f64>) -> String {
    a.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into())
}

/// Rendered comparison table, accuracies as percentages with 2 decimals.
pub fn comparison_text(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>10}  {:>9}\n",
        "Config", "T/F", "MC", "All", "Unparsable", "In-lesson"
    );
    for row in rows {
        match &row.outcome {
            Ok(r) => out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8}  {:>8}  {:>10}  {:>9}\n",
                row.name,
                pct(r.tf.accuracy),
                pct(r.mc.accuracy),
                pct(r.all.accuracy),
                r.unparsable,
                pct(r.in_lesson_rate)
            )),
            Err(e) => out.push_str(&format!("{:<width$}  failed: {e}\n", row.name)),
        }
    }
    out
}
