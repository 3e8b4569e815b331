mod support;

use agentloom::backend::{
    generate_with_retry, Backend, BackendError, GenerationConfig, OpenAiCompatibleBackend,
    RetryPolicy, Usage,
};
use serde_json::{json, Value as Json};
use support::{closed_port, FixtureServer, Reply};

fn completion(text: &str, usage: Option<(u64, u64)>) -> Reply {
    let mut body = json!({
        "id": "cmpl-1",
        "model": "served-model",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
    });
    if let Some((p, c)) = usage {
        body["usage"] = json!({"prompt_tokens": p, "completion_tokens": c, "total_tokens": p + c});
    }
    Reply::ok("application/json", body.to_string())
}

fn backend(server: &FixtureServer, key: Option<&str>) -> OpenAiCompatibleBackend {
    OpenAiCompatibleBackend::new(&server.base_url(), "test-model", key.map(str::to_string))
        .unwrap()
}

#[test]
fn request_shape_and_response_mapping() {
    let server = FixtureServer::routes(vec![(
        "/v1/chat/completions",
        completion("hello back", Some((7, 3))),
    )]);
    let llm = backend(&server, Some("sk-test"));
    let config = GenerationConfig::new(0.2, 64, 0.9).unwrap();
    let resp = llm.generate("hello", &config).unwrap();
    assert_eq!(resp.text, "hello back");
    assert_eq!(resp.usage, Usage::new(7, 3));
    assert_eq!(resp.usage.total_tokens, 10);
    assert_eq!(resp.model, "served-model");

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    let req = &requests[0];
    assert_eq!(req.method, "POST");
    assert_eq!(req.path, "/v1/chat/completions");
    assert_eq!(req.headers.get("authorization").map(String::as_str), Some("Bearer sk-test"));
    assert!(req.headers["content-type"].starts_with("application/json"));
    let body: Json = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"], json!([{"role": "user", "content": "hello"}]));
    assert_eq!(body["temperature"], json!(0.2));
    assert_eq!(body["max_tokens"], json!(64));
    assert_eq!(body["top_p"], json!(0.9));
}

#[test]
fn no_key_means_no_authorization_header() {
    let server = FixtureServer::routes(vec![("/v1/chat/completions", completion("x", None))]);
    backend(&server, None)
        .generate("p", &GenerationConfig::default())
        .unwrap();
    assert!(!server.requests()[0].headers.contains_key("authorization"));
}

#[test]
fn missing_usage_is_zero() {
    let server = FixtureServer::routes(vec![("/v1/chat/completions", completion("x", None))]);
    let resp = backend(&server, None)
        .generate("p", &GenerationConfig::default())
        .unwrap();
    assert_eq!(resp.usage, Usage::default());
}

#[test]
fn status_codes_map_to_error_classes() {
    type Classifier = fn(&BackendError) -> bool;
    let cases: Vec<(u16, Classifier)> = vec![
        (401, |e| matches!(e, BackendError::Auth { status: 401, .. })),
        (403, |e| matches!(e, BackendError::Auth { status: 403, .. })),
        (429, |e| matches!(e, BackendError::RateLimited(_))),
        (500, |e| matches!(e, BackendError::Provider { status: Some(500), .. })),
        (503, |e| matches!(e, BackendError::Provider { status: Some(503), .. })),
        (400, |e| matches!(e, BackendError::Provider { status: Some(400), .. })),
    ];
    for (status, check) in cases {
        let server = FixtureServer::routes(vec![(
            "/v1/chat/completions",
            Reply::status(status, r#"{"error":{"message":"nope"}}"#),
        )]);
        let err = backend(&server, Some("k"))
            .generate("p", &GenerationConfig::default())
            .unwrap_err();
        assert!(check(&err), "status {status} gave {err:?}");
        assert_eq!(err.is_retryable(), status == 429 || status >= 500, "{status}");
    }
}

#[test]
fn malformed_body_is_provider_error() {
    let server = FixtureServer::routes(vec![(
        "/v1/chat/completions",
        Reply::ok("application/json", "{\"choices\": []}"),
    )]);
    let err = backend(&server, None)
        .generate("p", &GenerationConfig::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::Provider { status: None, .. }));
}

#[test]
fn closed_port_is_network_error() {
    let base = format!("http://127.0.0.1:{}", closed_port());
    let llm = OpenAiCompatibleBackend::new(&base, "m", None).unwrap();
    let err = llm.generate("p", &GenerationConfig::default()).unwrap_err();
    assert!(matches!(err, BackendError::Network { .. }), "{err:?}");
    assert!(err.is_retryable());
}

#[test]
fn empty_prompt_rejected_before_sending() {
    let server = FixtureServer::routes(vec![("/v1/chat/completions", completion("x", None))]);
    let err = backend(&server, None)
        .generate("", &GenerationConfig::default())
        .unwrap_err();
    assert_eq!(err, BackendError::EmptyPrompt);
    assert!(server.requests().is_empty());
}

#[test]
fn retry_recovers_from_rate_limit_over_the_wire() {
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let server = FixtureServer::start(move |_| {
        if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
            Reply::status(429, "slow down")
        } else {
            completion("finally", Some((1, 1)))
        }
    });
    let policy = RetryPolicy {
        base_delay: std::time::Duration::from_millis(20),
        ..RetryPolicy::default()
    };
    let outcome =
        generate_with_retry(&backend(&server, None), "p", &GenerationConfig::default(), &policy)
            .unwrap();
    assert_eq!(outcome.response.text, "finally");
    assert_eq!(outcome.log.attempt_count(), 2);
    assert_eq!(server.requests().len(), 2);
}
