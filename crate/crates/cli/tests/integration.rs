use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use serde_json::Value;
use tqa_rag::corpus::{load_dataset, CorpusFormat, Dataset};
use tqa_rag::embedder::{Embedder, EmbedderConfig};
use tqa_rag::eval::{answer_question, render_trace, EvalConfig, EvalEnv};
use tqa_rag::generation::{
    request_body, ApiStyle, ChatModel, GenerationError, HttpChatModel, ModelClientConfig,
};
use tqa_rag::http::RetryPolicy;
use tqa_rag::promptgen::{build_prompt, training_record, ContextMode};
use tqa_rag::retrieval::index_corpus;
use tqa_rag::stub::StubServer;
use tqa_rag::synthetic::{generate, write_corpus, SyntheticSpec};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn synthetic() -> PathBuf {
    root().join("data/synthetic-ck12").canonicalize().unwrap()
}

fn golden_ds() -> Dataset {
    load_dataset(&golden("corpus"), CorpusFormat::Normalized).unwrap().0
}

fn tqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tqa-rag")).args(args).output().unwrap()
}

fn stdout_ok(args: &[&str]) -> String {
    let out = tqa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fast_retry(n: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries: n,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
    }
}

fn http_config(endpoint: &str, style: ApiStyle) -> ModelClientConfig {
    ModelClientConfig {
        endpoint: Some(endpoint.to_string()),
        api_style: style,
        timeout_secs: 5,
        ..Default::default()
    }
}

#[test]
fn request_bodies_match_golden() {
    let ds = golden_ds();
    let q = ds.question("NDQ_000201").unwrap();
    let ctx = &ds.topic("T_0874").unwrap().text;
    let prompt = build_prompt(q, ctx, None);
    for (style, file) in [
        (ApiStyle::ChatCompletions, "chat_body_NDQ_000201.json"),
        (ApiStyle::RawCompletion, "raw_body_NDQ_000201.json"),
    ] {
        let want: Value = serde_json::from_str(&fs::read_to_string(golden(file)).unwrap()).unwrap();
        assert_eq!(request_body(&prompt, style, "llama-2-13b-chat", 0.0, 32), want, "{file}");
    }
    let rec = training_record(q, ctx);
    let want = fs::read_to_string(golden("train_NDQ_000201.txt")).unwrap();
    assert_eq!(build_prompt(q, ctx, Some(q.gold_label)).text, want);
    assert_eq!(format!("{}{}</s>", rec.prompt, rec.answer), want);
}

#[test]
fn stub_sees_golden_bodies_on_the_wire() {
    let ds = golden_ds();
    let q = ds.question("NDQ_000201").unwrap();
    let prompt = build_prompt(q, &ds.topic("T_0874").unwrap().text, None);
    let stub = StubServer::fixed_chat(vec![], "(B) moving air").unwrap();
    for (style, file, path) in [
        (ApiStyle::ChatCompletions, "chat_body_NDQ_000201.json", "/chat/completions"),
        (ApiStyle::RawCompletion, "raw_body_NDQ_000201.json", "/completions"),
    ] {
        let model = HttpChatModel::from_config(&http_config(stub.url(), style)).unwrap();
        assert_eq!(model.generate(&prompt).unwrap().text, "(B) moving air");
        let sent = stub.requests().pop().unwrap();
        assert!(sent.path.ends_with(path), "{}", sent.path);
        let want: Value = serde_json::from_str(&fs::read_to_string(golden(file)).unwrap()).unwrap();
        assert_eq!(serde_json::from_str::<Value>(&sent.body).unwrap(), want);
    }
}

#[test]
fn retries_then_succeeds() {
    let ds = golden_ds();
    let prompt = build_prompt(ds.question("NDQ_000203").unwrap(), "", None);
    let stub = StubServer::fixed_chat(vec![500, 500], "(C) earthquakes").unwrap();
    let model = HttpChatModel::from_config(&http_config(stub.url(), ApiStyle::ChatCompletions))
        .unwrap()
        .with_retry(fast_retry(3));
    assert_eq!(model.generate(&prompt).unwrap().text, "(C) earthquakes");
    assert_eq!(stub.requests().len(), 3);

    let stub = StubServer::fixed_chat(vec![503, 503, 503, 503], "x").unwrap();
    let model = HttpChatModel::from_config(&http_config(stub.url(), ApiStyle::ChatCompletions))
        .unwrap()
        .with_retry(fast_retry(3));
    assert!(matches!(model.generate(&prompt), Err(GenerationError::ProviderUnavailable(_))));
    assert_eq!(stub.requests().len(), 4);
}

#[test]
fn unreachable_endpoint_is_provider_unavailable() {
    let ds = golden_ds();
    let prompt = build_prompt(ds.question("NDQ_000203").unwrap(), "", None);
    // Bind then drop a listener so the port is known to be closed.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let model = HttpChatModel::from_config(&http_config(&format!("http://127.0.0.1:{port}"), ApiStyle::ChatCompletions))
        .unwrap()
        .with_retry(fast_retry(1));
    let err = model.generate(&prompt).unwrap_err();
    assert!(matches!(err, GenerationError::ProviderUnavailable(_)), "{err:?}");
    assert!(err.is_provider());
}

fn golden_config(dir: &Path, model: &str) -> PathBuf {
    let body = format!(
        "[corpus]\npath = \"{}\"\nformat = \"normalized\"\n\n[embedder]\nprovider = \"deterministic-local\"\nmodel_id = \"deterministic-local-64\"\ndim = 64\n\n[model]\n{model}\n",
        golden("corpus").canonicalize().unwrap().display()
    );
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn ask_show_prompt_prints_golden_template() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden_config(dir.path(), "kind = \"overlap\"");
    let out = stdout_ok(&[
        "--offline",
        "ask",
        "--config",
        cfg.to_str().unwrap(),
        "--id",
        "NDQ_000203",
        "--show-prompt",
    ]);
    let want = fs::read_to_string(golden("prompt_NDQ_000203.txt")).unwrap();
    assert!(out.starts_with(&format!("{want}\n\n")), "{out}");
    assert!(out.contains("Correct Answer: (C) earthquakes\n"));
}

#[test]
fn ask_by_id_matches_render_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden_config(dir.path(), "kind = \"overlap\"");
    let out = stdout_ok(&[
        "--offline",
        "ask",
        "--config",
        cfg.to_str().unwrap(),
        "--id",
        "NDQ_018937",
        "--mode",
        "rag-only",
    ]);

    let ds = golden_ds();
    let embedder = Embedder::new(EmbedderConfig {
        model_id: "deterministic-local-64".into(),
        ..EmbedderConfig::deterministic(64)
    })
    .unwrap();
    let index = index_corpus(&ds, &embedder).unwrap();
    let mut ecfg = EvalConfig::new("ask", ContextMode::RagOnly, ModelClientConfig::overlap());
    ecfg.retrieval = Some(Default::default());
    let env = EvalEnv {
        index: Some(&index),
        embedder: Some(&embedder),
        ..Default::default()
    };
    let q = ds.question("NDQ_018937").unwrap();
    let (trace, _) = answer_question(&ds, &ecfg, &env, q).unwrap();
    assert_eq!(out, render_trace(&trace, &ds).unwrap());
    assert!(out.starts_with("Question (NDQ_018937, lesson L_1076): work is done when force is applied\n"));
    assert!(out.contains("Retrieved Context with RAG:\n[1] T_"), "{out}");
}

#[test]
fn ask_free_text_against_stub_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden_config(dir.path(), "kind = \"overlap\"");
    let stub = StubServer::fixed_chat(vec![], "(A) wind").unwrap();
    let args = [
        "ask",
        "--config",
        cfg.to_str().unwrap(),
        "--text",
        "What moves sand dunes?",
        "--option",
        "wind",
        "--option",
        "rock",
        "--endpoint",
        stub.url(),
    ];
    let out = stdout_ok(&args);
    assert_eq!(out, "Raw Answer: (A) wind\nPredicted Answer: (A) wind [exact_label]\n");
    let offline: Vec<&str> = std::iter::once("--offline").chain(args).collect();
    assert_eq!(tqa(&offline).status.code(), Some(2));
}

#[test]
fn bundled_corpus_regenerates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let written = write_corpus(&generate(&SyntheticSpec::default()), dir.path()).unwrap();
    assert_eq!(written.len(), 6);
    for p in written {
        let name = p.file_name().unwrap();
        assert_eq!(
            fs::read(&p).unwrap(),
            fs::read(synthetic().join(name)).unwrap(),
            "{name:?} differs from the bundled copy"
        );
    }
}

#[test]
fn index_with_warm_cache_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |out: &str| {
        stdout_ok(&[
            "--offline",
            "index",
            synthetic().to_str().unwrap(),
            "--out",
            dir.path().join(out).to_str().unwrap(),
            "--dim",
            "64",
            "--cache-dir",
            cache.to_str().unwrap(),
        ])
    };
    let cold = run("a.tqvi");
    let warm = run("b.tqvi");
    let topics = load_dataset(&synthetic(), CorpusFormat::NativeCk12).unwrap().0.topics().len();
    assert!(cold.starts_with(&format!("indexed {topics} topics")), "{cold}");
    assert!(warm.contains("(0 provider calls)"), "{warm}");
    assert_eq!(fs::read(dir.path().join("a.tqvi")).unwrap(), fs::read(dir.path().join("b.tqvi")).unwrap());
}

fn eval_config(dir: &Path) -> PathBuf {
    let corpus = synthetic();
    let body = format!(
        "[corpus]\npath = \"{}\"\n\n[model]\nkind = \"scripted\"\nscript = \"{}\"\n\n[eval]\nname = \"lesson\"\ncontext_mode = \"full-lesson\"\nout_dir = \"out\"\n",
        corpus.display(),
        corpus.join("script.json").display()
    );
    let p = dir.join("eval.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn interrupted_eval_resumes_to_the_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eval_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    stdout_ok(&["--offline", "eval", cfg]);
    let traces = dir.path().join("out/lesson.traces.jsonl");
    let report = dir.path().join("out/lesson.report.json");
    let (full_traces, full_report) = (fs::read(&traces).unwrap(), fs::read(&report).unwrap());

    // Keep the header and 15 traces, then a torn line.
    let text = String::from_utf8(full_traces.clone()).unwrap();
    let mut partial: String = text.lines().take(16).map(|l| format!("{l}\n")).collect();
    partial.push_str("{\"config_name\": \"les");
    fs::write(&traces, partial).unwrap();
    fs::remove_file(&report).unwrap();

    let out = tqa(&["--offline", "-v", "eval", cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("15 of 40 questions already traced"));
    assert_eq!(fs::read(&traces).unwrap(), full_traces);
    assert_eq!(fs::read(&report).unwrap(), full_report);
}

#[test]
fn eval_stats_and_export_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eval_config(dir.path());
    let out = stdout_ok(&["--offline", "eval", cfg.to_str().unwrap(), "--mode", "rag-only", "--name", "rag"]);
    assert!(out.contains("in-lesson rate:"), "{out}");
    let stats = stdout_ok(&["stats", dir.path().join("out").to_str().unwrap()]);
    assert!(stats.contains("traces: 40\n"), "{stats}");
    assert!(stats.contains("in-lesson rate: "), "{stats}");

    let jsonl = dir.path().join("train.jsonl");
    let out = stdout_ok(&["export", synthetic().to_str().unwrap(), "--out", jsonl.to_str().unwrap()]);
    assert_eq!(out, format!("wrote 120 records to {}\n", jsonl.display()));
    assert_eq!(fs::read_to_string(&jsonl).unwrap().lines().count(), 120);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| tqa(args).status.code();

    let missing = dir.path().join("missing");
    assert_eq!(code(&["ingest", missing.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["stats", missing.to_str().unwrap()]), Some(3));
    assert_eq!(code(&["eval", missing.to_str().unwrap()]), Some(3));

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&["ablation", empty.to_str().unwrap()]), Some(2));

    let cfg = eval_config(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&["--offline", "eval", cfg, "--endpoint", &url]), Some(2));
    assert_eq!(code(&["eval", cfg, "--endpoint", &url, "--question-limit", "1"]), Some(4));

    // Low accuracy is not an error: a stub that always answers wrong.
    let stub = StubServer::fixed_chat(vec![], "I am not sure.").unwrap();
    let out = tqa(&["eval", cfg, "--endpoint", stub.url(), "--question-limit", "5", "--name", "bad"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("unparsable: 5"));
}
