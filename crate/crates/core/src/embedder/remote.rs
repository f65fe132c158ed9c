//! OpenAI-compatible embeddings client (`POST {model, input: [..]}`,
//! response `{data: [{index, embedding}]}`).

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedderConfig, EmbeddingProvider, Result};
use crate::http::{self, CallError, RetryPolicy};

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Datum>,
}

#[derive(Deserialize)]
struct Datum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

pub struct OpenAiEmbeddings {
    client: Client,
    endpoint: String,
    model_id: String,
    api_key_env: Option<String>,
    retry: RetryPolicy,
}

impl OpenAiEmbeddings {
    pub fn from_config(cfg: &EmbedderConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| EmbedError::Config("remote provider needs an endpoint".into()))?;
        let client = http::client(Duration::from_secs(cfg.timeout_secs)).map_err(map_err)?;
        Ok(OpenAiEmbeddings {
            client,
            endpoint,
            model_id: cfg.model_id.clone(),
            api_key_env: cfg.api_key_env.clone(),
            retry: RetryPolicy::with_retries(cfg.max_retries),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

fn map_err(e: CallError) -> EmbedError {
    match e {
        CallError::Auth(m) => EmbedError::Auth(m),
        CallError::Fatal(m) if m.starts_with("undecodable") => EmbedError::MalformedResponse(m),
        other => EmbedError::ProviderUnavailable(other.message().to_string()),
    }
}

impl EmbeddingProvider for OpenAiEmbeddings {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let token = http::bearer_token(self.api_key_env.as_deref()).map_err(map_err)?;
        let body = Request {
            model: &self.model_id,
            input: texts,
        };
        let parsed: Response = self
            .retry
            .run(|_| {
                let mut req = self.client.post(&self.endpoint).json(&body);
                if let Some(t) = &token {
                    req = req.bearer_auth(t);
                }
                let resp = req.send()?;
                if !resp.status().is_success() {
                    return Err(http::status_error(resp));
                }
                Ok(resp.json::<Response>()?)
            })
            .map_err(map_err)?;
        let mut data = parsed.data;
        if data.len() != texts.len() {
            return Err(EmbedError::MalformedResponse(format!(
                "{} embeddings for {} inputs",
                data.len(),
                texts.len()
            )));
        }
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
            if data.iter().enumerate().any(|(i, d)| d.index != Some(i)) {
                return Err(EmbedError::MalformedResponse("embedding indices are not 0..n".into()));
            }
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
