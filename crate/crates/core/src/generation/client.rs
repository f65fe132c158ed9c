//! OpenAI-compatible completion client.
//!
//! Chat style sends the instruction block as the system message and the
//! context/question/options block as the user message; the serving stack
//! adds its own instruction wrapper. Raw style sends the full prompt string,
//! wrapper tokens included.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ApiStyle, ChatModel, GenerationError, ModelClientConfig, ModelResponse, Result, Usage};
use crate::http::{self, CallError, InFlightLimit, RetryPolicy};
use crate::promptgen::AssembledPrompt;

pub struct HttpChatModel {
    client: Client,
    url: String,
    model_id: String,
    style: ApiStyle,
    temperature: f64,
    max_new_tokens: u32,
    api_key_env: Option<String>,
    retry: RetryPolicy,
    limit: InFlightLimit,
    audit: Option<Mutex<PathBuf>>,
}

fn map_err(e: CallError) -> GenerationError {
    match e {
        CallError::Auth(m) => GenerationError::Auth(m),
        CallError::Timeout(m) => GenerationError::Timeout(m),
        CallError::Fatal(m) if m.starts_with("undecodable") => GenerationError::MalformedResponse(m),
        CallError::Transient(m) | CallError::Fatal(m) => GenerationError::ProviderUnavailable(m),
    }
}

pub(super) fn resolve_url(endpoint: &str, style: ApiStyle) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/completions") {
        return base.to_string();
    }
    match style {
        ApiStyle::ChatCompletions => format!("{base}/chat/completions"),
        ApiStyle::RawCompletion => format!("{base}/completions"),
    }
}

/// Request body for one prompt.
pub fn request_body(
    prompt: &AssembledPrompt,
    style: ApiStyle,
    model_id: &str,
    temperature: f64,
    max_new_tokens: u32,
) -> Value {
    match style {
        ApiStyle::ChatCompletions => json!({
            "model": model_id,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": temperature,
            "max_tokens": max_new_tokens,
        }),
        ApiStyle::RawCompletion => json!({
            "model": model_id,
            "prompt": prompt.text,
            "temperature": temperature,
            "max_tokens": max_new_tokens,
        }),
    }
}

#[derive(Deserialize)]
struct Completion {
    #[serde(default)]
    id: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<Message>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatModel {
    pub fn from_config(cfg: &ModelClientConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| GenerationError::Config("http model needs an endpoint".into()))?;
        Ok(HttpChatModel {
            client: http::client(Duration::from_secs(cfg.timeout_secs)).map_err(map_err)?,
            url: resolve_url(endpoint, cfg.api_style),
            model_id: cfg.model_id.clone(),
            style: cfg.api_style,
            temperature: cfg.temperature,
            max_new_tokens: cfg.max_new_tokens,
            api_key_env: cfg.api_key_env.clone(),
            retry: RetryPolicy::with_retries(cfg.max_retries),
            limit: InFlightLimit::new(cfg.max_in_flight),
            audit: cfg.audit_log.clone().map(Mutex::new),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn audit(&self, question_id: &str, request: &Value, response: &str) {
        let Some(path) = &self.audit else { return };
        let path = path.lock().expect("audit lock poisoned");
        let line = json!({"question_id": question_id, "request": request, "response": response});
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&*path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("cannot append to audit log {}: {e}", path.display());
        }
    }
}

impl ChatModel for HttpChatModel {
    fn generate(&self, prompt: &AssembledPrompt) -> Result<ModelResponse> {
        let token = http::bearer_token(self.api_key_env.as_deref()).map_err(map_err)?;
        let body = request_body(prompt, self.style, &self.model_id, self.temperature, self.max_new_tokens);
        let _permit = self.limit.acquire();
        let started = Instant::now();
        let raw = self
            .retry
            .run(|_| {
                let mut req = self.client.post(&self.url).json(&body);
                if let Some(t) = &token {
                    req = req.bearer_auth(t);
                }
                let resp = req.send()?;
                if !resp.status().is_success() {
                    return Err(http::status_error(resp));
                }
                Ok(resp.text()?)
            })
            .map_err(map_err)?;
        let latency = started.elapsed();
        self.audit(&prompt.question_id, &body, &raw);
        let parsed: Completion = serde_json::from_str(&raw)
            .map_err(|e| GenerationError::MalformedResponse(format!("{e}: {}", truncate(&raw))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GenerationError::MalformedResponse("no choices in response".into()))?;
        let text = match self.style {
            ApiStyle::ChatCompletions => choice.message.and_then(|m| m.content).or(choice.text),
            ApiStyle::RawCompletion => choice.text.or_else(|| choice.message.and_then(|m| m.content)),
        }
        .ok_or_else(|| GenerationError::MalformedResponse("choice carries no text".into()))?;
        Ok(ModelResponse {
            text,
            latency,
            usage: parsed.usage,
            raw_id: parsed.id,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}
