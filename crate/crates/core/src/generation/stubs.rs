//! Offline models. Both are deterministic and never touch the network.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Duration;

use super::{ChatModel, GenerationError, ModelResponse, Result};
use crate::embedder::tokenize;
use crate::promptgen::AssembledPrompt;

fn response(text: String) -> ModelResponse {
    ModelResponse {
        text,
        latency: Duration::ZERO,
        usage: None,
        raw_id: None,
    }
}

/// Replies with a fixed text per question id, read from a JSON object
/// `{"NDQ_000201": "(B) moving air", ...}`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedModel {
    script: BTreeMap<String, String>,
}

impl ScriptedModel {
    pub fn new(script: BTreeMap<String, String>) -> Self {
        ScriptedModel { script }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| GenerationError::Script {
            path: path.to_path_buf(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let script = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        Ok(ScriptedModel { script })
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl ChatModel for ScriptedModel {
    fn generate(&self, prompt: &AssembledPrompt) -> Result<ModelResponse> {
        self.script
            .get(&prompt.question_id)
            .map(|t| response(t.clone()))
            .ok_or_else(|| GenerationError::ScriptMissing(prompt.question_id.clone()))
    }

    fn model_id(&self) -> &str {
        "scripted-stub"
    }
}

/// Answers with the option whose words (three or more characters) appear
/// most often in the context, as a fraction of the option's words. Ties go
/// to the earlier label; with no overlap at all the first option is chosen.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapModel;

impl OverlapModel {
    pub fn choose(context: &str, options: &[crate::corpus::AnswerOption]) -> Option<char> {
        let vocab: HashSet<String> = tokenize(context).into_iter().collect();
        let mut best: Option<(f64, char)> = None;
        for opt in options {
            let words: HashSet<String> = tokenize(&opt.text)
                .into_iter()
                .filter(|w| w.chars().count() >= 3)
                .collect();
            let score = if words.is_empty() {
                0.0
            } else {
                words.iter().filter(|w| vocab.contains(*w)).count() as f64 / words.len() as f64
            };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, opt.label));
            }
        }
        best.map(|(_, label)| label)
    }
}

impl ChatModel for OverlapModel {
    fn generate(&self, prompt: &AssembledPrompt) -> Result<ModelResponse> {
        let label = Self::choose(&prompt.context, &prompt.options)
            .ok_or_else(|| GenerationError::MalformedResponse("prompt carries no options".into()))?;
        let text = prompt
            .options
            .iter()
            .find(|o| o.label == label)
            .map(|o| format!("({}) {}", o.label, o.text))
            .expect("chosen label exists");
        Ok(response(text))
    }

    fn model_id(&self) -> &str {
        "overlap-stub"
    }
}
