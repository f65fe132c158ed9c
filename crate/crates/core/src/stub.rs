//! Loopback HTTP servers imitating the model, embedding and rerank
//! services, for tests and offline smoke runs.
//!
//! Each server can be told to fail its first requests with given status
//! codes (`vec![500, 500]` then success) and records every request it saw.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

use crate::corpus::AnswerOption;
use crate::embedder::deterministic_embed;
use crate::generation::OverlapModel;
use crate::retrieval::{LexicalReranker, Reranker};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

type Handler = dyn Fn(&RecordedRequest) -> (u16, String) + Send + Sync;

pub struct StubServer {
    url: String,
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
}

impl StubServer {
    /// Serves `handler` on an ephemeral loopback port. The first requests
    /// are answered with the statuses in `failures`, in order.
    pub fn start(
        failures: Vec<u16>,
        handler: impl Fn(&RecordedRequest) -> (u16, String) + Send + Sync + 'static,
    ) -> std::io::Result<Self> {
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(std::io::Error::other)?);
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("stub server has no IP address"))?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let failures = Mutex::new(VecDeque::from(failures));
        let handler: Box<Handler> = Box::new(handler);
        let thread = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let recorded = RecordedRequest {
                        path: req.url().to_string(),
                        body,
                        authorization: req
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.to_string()),
                    };
                    requests.lock().expect("stub lock").push(recorded.clone());
                    let (status, body) = match failures.lock().expect("stub lock").pop_front() {
                        Some(code) => (code, json!({"error": "scripted failure"}).to_string()),
                        None => handler(&recorded),
                    };
                    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let _ = req.respond(Response::from_string(body).with_status_code(status).with_header(header));
                }
            })
        };
        Ok(StubServer {
            url: format!("http://127.0.0.1:{port}"),
            server,
            thread: Some(thread),
            requests,
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:40123`.
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("stub lock").clone()
    }

    /// Chat-completions and completions endpoint answering with `answer`
    /// applied to the prompt text (user message, or the raw prompt).
    pub fn chat(failures: Vec<u16>, answer: impl Fn(&str) -> String + Send + Sync + 'static) -> std::io::Result<Self> {
        Self::start(failures, move |req| {
            let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
                return (400, json!({"error": "body is not JSON"}).to_string());
            };
            if req.path.ends_with("/chat/completions") {
                let user = body["messages"]
                    .as_array()
                    .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
                    .and_then(|m| m["content"].as_str())
                    .unwrap_or_default();
                let text = answer(user);
                let reply = json!({
                    "id": "stub-chat",
                    "object": "chat.completion",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                    "usage": {"prompt_tokens": user.len() / 3, "completion_tokens": text.len() / 3},
                });
                (200, reply.to_string())
            } else if req.path.ends_with("/completions") {
                let prompt = body["prompt"].as_str().unwrap_or_default();
                let text = answer(prompt);
                let reply = json!({
                    "id": "stub-completion",
                    "object": "text_completion",
                    "choices": [{"index": 0, "text": text, "finish_reason": "stop"}],
                });
                (200, reply.to_string())
            } else {
                (404, json!({"error": "unknown path"}).to_string())
            }
        })
    }

    /// Chat endpoint that always replies with `text`.
    pub fn fixed_chat(failures: Vec<u16>, text: &str) -> std::io::Result<Self> {
        let text = text.to_string();
        Self::chat(failures, move |_| text.clone())
    }

    /// Chat endpoint that answers like [`OverlapModel`], reading context
    /// and options back out of the prompt.
    pub fn overlap_chat(failures: Vec<u16>) -> std::io::Result<Self> {
        Self::chat(failures, answer_by_overlap)
    }

    /// Embeddings endpoint returning the deterministic local embedding of
    /// each input.
    pub fn embeddings(failures: Vec<u16>, dim: usize) -> std::io::Result<Self> {
        Self::start(failures, move |req| {
            let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
                return (400, json!({"error": "body is not JSON"}).to_string());
            };
            let inputs: Vec<&str> = body["input"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            let data: Vec<Value> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"index": i, "embedding": deterministic_embed(t, dim).values()}))
                .collect();
            (200, json!({"data": data}).to_string())
        })
    }

    /// Rerank endpoint scoring with the lexical reranker.
    pub fn rerank(failures: Vec<u16>) -> std::io::Result<Self> {
        Self::start(failures, |req| {
            let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
                return (400, json!({"error": "body is not JSON"}).to_string());
            };
            let query = body["query"].as_str().unwrap_or_default();
            let docs: Vec<String> = body["documents"]
                .as_array()
                .map(|a| a.iter().filter_map(|d| d.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            let scores = LexicalReranker.score(query, &docs).unwrap_or_default();
            (200, json!({"results": scores}).to_string())
        })
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Splits `(A) x (B) y` back into options.
fn parse_options(s: &str) -> Vec<AnswerOption> {
    let mut marks = Vec::new();
    let mut expected = 'A';
    let bytes = s.as_bytes();
    let mut i = 0;
    while i + 3 <= bytes.len() {
        if bytes[i] == b'(' && bytes[i + 1] == expected as u8 && bytes[i + 2] == b')' {
            marks.push(i);
            expected = (expected as u8 + 1) as char;
            i += 3;
        } else {
            i += 1;
        }
    }
    marks
        .iter()
        .enumerate()
        .map(|(n, &start)| {
            let end = marks.get(n + 1).copied().unwrap_or(s.len());
            AnswerOption {
                label: s.as_bytes()[start + 1] as char,
                text: s[start + 3..end].trim().to_string(),
            }
        })
        .collect()
}

fn answer_by_overlap(prompt: &str) -> String {
    let context = prompt
        .find("Context:\n")
        .and_then(|start| {
            let from = start + "Context:\n".len();
            prompt[from..].rfind("\nQuestion: ").map(|end| &prompt[from..from + end])
        })
        .unwrap_or("");
    let options = prompt
        .rfind("\nOptions: ")
        .map(|start| {
            let rest = &prompt[start + "\nOptions: ".len()..];
            &rest[..rest.find("\nAnswer:").unwrap_or(rest.len())]
        })
        .map(parse_options)
        .unwrap_or_default();
    match OverlapModel::choose(context, &options) {
        Some(label) => {
            let opt = options.iter().find(|o| o.label == label).expect("chosen");
            format!("({}) {}", opt.label, opt.text)
        }
        None => "I cannot tell.".to_string(),
    }
}
