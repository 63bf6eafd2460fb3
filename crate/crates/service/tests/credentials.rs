//! The API key must reach the endpoint and nowhere else: not the logs, not
//! the audit log, not error messages.

mod common;

use std::io::Write;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tower::ServiceExt;

use regrag_service::config::BackendKind;
use regrag_service::engine::{Engine, QueryFlags};
use regrag_service::http::{router, AppState};

const SENTINEL: &str = "sk-SENTINEL-7f3a9c01-do-not-log";
const KEY_VAR: &str = "REGRAG_SENTINEL_TEST_KEY";

#[derive(Clone)]
struct Capture(Arc<Mutex<Vec<u8>>>);

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

async fn completions(headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("");
    if auth != format!("Bearer {SENTINEL}") {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    assert!(!body.to_string().contains(SENTINEL));
    let reply = json!({"choices": [{"message": {"content": "The buffer is at least as wide as the flight height.", "reasoning_content": "checked context"}}]});
    (StatusCode::OK, Json(reply))
}

async fn reject() -> (StatusCode, Json<Value>) {
    (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})))
}

/// Fake endpoint on its own runtime thread; returns its base address.
fn fake_endpoint() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/ok/v1/chat/completions", post(completions))
                .route("/denied/v1/chat/completions", post(reject));
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{addr}")
}

fn engine(dir: &std::path::Path, endpoint: String) -> Engine {
    let mut cfg = common::built(dir);
    cfg.backend.kind = BackendKind::OpenaiCompatible;
    cfg.backend.name = "remote".into();
    cfg.backend.endpoint = endpoint;
    cfg.backend.api_key_env = KEY_VAR.into();
    cfg.backend.timeout_secs = 10;
    Engine::load(cfg).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn sentinel_never_leaks() {
    let logs = Arc::new(Mutex::new(Vec::new()));
    let sink = Capture(Arc::clone(&logs));
    tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_ansi(false)
        .with_writer(move || sink.clone())
        .init();
    std::env::set_var(KEY_VAR, SENTINEL);

    let base = fake_endpoint();
    let dir = tempfile::tempdir().unwrap();
    let ok = Arc::new(engine(dir.path(), format!("{base}/ok/v1")));
    tracing::info!(engine = ?ok, "engine under test");

    let st = AppState::new(Arc::clone(&ok));
    let req = Request::builder()
        .method("POST")
        .uri("/query")
        .header("content-type", "application/json")
        .body(Body::from(json!({"question": "Ground risk buffer", "session_id": "s"}).to_string()))
        .unwrap();
    let resp = router(st).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let body = String::from_utf8(body.to_vec()).unwrap();
    assert!(body.contains("flight height"));
    assert!(!body.contains(SENTINEL));

    let denied_dir = tempfile::tempdir().unwrap();
    let denied = engine(denied_dir.path(), format!("{base}/denied/v1"));
    let err = tokio::task::spawn_blocking(move || {
        denied
            .answer("Ground risk buffer", &QueryFlags::default(), &[], None)
            .unwrap_err()
    })
    .await
    .unwrap();
    assert_eq!(err.exit_code(), 3);
    assert!(!err.to_string().contains(SENTINEL));
    assert!(!format!("{err:?}").contains(SENTINEL));
    tracing::error!(error = %err, "denied request");

    let audit = std::fs::read_to_string(ok.audit().path()).unwrap();
    assert!(audit.contains("checked context"), "reasoning trace is audited");
    assert!(!audit.contains(SENTINEL));

    let logs = String::from_utf8(logs.lock().unwrap().clone()).unwrap();
    assert!(logs.contains("query answered"), "capture works: {logs}");
    assert!(logs.contains("denied request"));
    assert!(!logs.contains(SENTINEL));
}
