//! Model endpoint clients and answer parsing.
//!
//! A [`ChatModel`] turns one assembled prompt into one free-text response.
//! The HTTP client speaks the OpenAI-compatible chat-completions and
//! legacy completions formats; two offline models (a scripted one and a
//! lexical-overlap one) stand in for an endpoint in tests and `--offline`
//! runs.

mod client;
mod parse;
mod stubs;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::AssembledPrompt;

pub use client::{request_body, HttpChatModel};
pub use parse::{parse_answer, parse_text, ParseStatus, ParsedAnswer};
pub use stubs::{OverlapModel, ScriptedModel};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("model endpoint unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("model endpoint timed out: {0}")]
    Timeout(String),
    #[error("model endpoint rejected credentials: {0}")]
    Auth(String),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("script has no response for question {0}")]
    ScriptMissing(String),
    #[error("cannot read script {path}: {message}")]
    Script { path: PathBuf, message: String },
}

impl GenerationError {
    /// Failures caused by the remote side rather than by local setup.
    pub fn is_provider(&self) -> bool {
        matches!(
            self,
            GenerationError::ProviderUnavailable(_)
                | GenerationError::Timeout(_)
                | GenerationError::Auth(_)
                | GenerationError::MalformedResponse(_)
        )
    }
}

pub type Result<T, E = GenerationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApiStyle {
    /// `POST .../chat/completions` with system and user messages.
    #[default]
    ChatCompletions,
    /// `POST .../completions` with the raw prompt string.
    RawCompletion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Http,
    /// Answers from a question-id keyed script file.
    Scripted,
    /// Picks the option sharing the most words with the context.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelClientConfig {
    #[serde(default)]
    pub kind: ModelKind,
    /// Full URL, or a base URL to which `/chat/completions` or
    /// `/completions` is appended according to `api_style`.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Script file for the scripted model.
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Append every request/response pair to this JSON-lines file.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

fn default_model_id() -> String {
    "llama-2-13b-chat".into()
}
fn default_max_new_tokens() -> u32 {
    32
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    8
}

impl Default for ModelClientConfig {
    fn default() -> Self {
        ModelClientConfig {
            kind: ModelKind::Http,
            endpoint: None,
            model_id: default_model_id(),
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            api_style: ApiStyle::ChatCompletions,
            api_key_env: None,
            max_in_flight: default_in_flight(),
            script: None,
            audit_log: None,
        }
    }
}

impl ModelClientConfig {
    pub fn overlap() -> Self {
        ModelClientConfig {
            kind: ModelKind::Overlap,
            model_id: "overlap-stub".into(),
            ..Default::default()
        }
    }

    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        ModelClientConfig {
            kind: ModelKind::Scripted,
            model_id: "scripted-stub".into(),
            script: Some(path.into()),
            ..Default::default()
        }
    }

    pub fn is_remote(&self) -> bool {
        self.kind == ModelKind::Http
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GenerationError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(GenerationError::Config("max_new_tokens must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GenerationError::Config("max_in_flight must be at least 1".into()));
        }
        match self.kind {
            ModelKind::Http if self.endpoint.is_none() => {
                Err(GenerationError::Config("http model needs an endpoint".into()))
            }
            ModelKind::Scripted if self.script.is_none() => {
                Err(GenerationError::Config("scripted model needs a script file".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    /// Exactly what the model returned; never trimmed here.
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub usage: Option<Usage>,
    pub raw_id: Option<String>,
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub trait ChatModel: Send + Sync {
    fn generate(&self, prompt: &AssembledPrompt) -> Result<ModelResponse>;

    fn model_id(&self) -> &str;
}

pub fn build_model(cfg: &ModelClientConfig) -> Result<Box<dyn ChatModel>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ModelKind::Http => Box::new(HttpChatModel::from_config(cfg)?),
        ModelKind::Scripted => Box::new(ScriptedModel::load(cfg.script.as_deref().expect("validated"))?),
        ModelKind::Overlap => Box::new(OverlapModel),
    })
}
