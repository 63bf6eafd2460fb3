mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

use regrag_core::generation::mock::ScriptedBackend;
use regrag_core::generation::Role;
use regrag_service::cli::cmd_query;
use regrag_service::engine::{Engine, QueryFlags};
use regrag_service::http::{router, AppState};

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn state(engine: Engine) -> AppState {
    AppState::new(Arc::new(engine))
}

fn operation() -> Value {
    serde_json::from_str(&std::fs::read_to_string(common::fixture("operation.json")).unwrap()).unwrap()
}

#[tokio::test]
async fn health_is_ok() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let (status, body) = call(&st, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["chunks"], 16);
}

#[tokio::test]
async fn query_round_trips_through_audit_and_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let (status, body) = call(&st, "POST", "/query", Some(json!({"question": "Ground risk buffer"}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let audit_id = body["audit_id"].as_str().unwrap();
    let source_ids: Vec<&str> = body["sources"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["chunk_id"].as_str().unwrap())
        .collect();
    assert_eq!(source_ids[0], "amc-sora-03");
    assert!(body["answer"].as_str().unwrap().contains('['));
    assert!(!body["citations"].as_array().unwrap().is_empty());

    let (status, record) = call(&st, "GET", &format!("/audit/{audit_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let included: Vec<&str> = record["included_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(included, source_ids);
    assert_eq!(record["answer"], body["answer"]);

    for src in body["sources"].as_array().unwrap() {
        let (status, chunk) = call(&st, "GET", &format!("/chunks/{}", src["chunk_id"].as_str().unwrap()), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(chunk["page"], src["page"]);
        assert_eq!(chunk["section_title"], src["section_title"]);
        assert_eq!(chunk["source_file"], src["source_file"]);
    }
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let (status, body) = call(&st, "GET", "/chunks/no-such-chunk", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["kind"], "not_found");
    let (status, _) = call(&st, "GET", "/audit/000001-000000000000", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_and_empty_requests_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let (status, body) = call(&st, "POST", "/query", Some(json!({"q": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "validation");
    let (status, _) = call(&st, "POST", "/query", Some(json!({"question": "   "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&st, "POST", "/query", Some(json!({"question": "x", "flags": {"top_k": 0}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_operation_gets_field_level_detail() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let mut op = operation();
    op["flight_mode"] = json!("hover");
    op.as_object_mut().unwrap().remove("airspace_type");
    let (status, body) = call(&st, "POST", "/indicators", Some(json!({"op": op}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let fields = body["error"]["fields"].as_array().unwrap();
    assert!(fields
        .iter()
        .any(|f| f["kind"] == "invalid_value" && f["field"] == "flight_mode" && f["value"] == "hover"));
    assert!(fields.iter().any(|f| f["kind"] == "missing_field" && f["field"] == "airspace_type"));

    let (status, _) = call(
        &st,
        "POST",
        "/indicators",
        Some(json!({"op": operation(), "indicators": ["not_an_indicator"]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn indicators_report_resolves_in_audit() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(common::engine(dir.path()));
    let (status, body) = call(&st, "POST", "/indicators", Some(json!({"op": operation(), "runs": 3}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let indicators = body["indicators"].as_object().unwrap();
    assert_eq!(indicators.len(), 4);
    let (status, parent) = call(&st, "GET", &format!("/audit/{}", body["audit_id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parent["kind"], "indicator");
    for (name, r) in indicators {
        assert_eq!(r["runs"].as_array().unwrap().len(), 3, "{name}");
        let (status, child) = call(&st, "GET", &format!("/audit/{}", r["audit_id"].as_str().unwrap()), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(child["parent_id"], body["audit_id"]);
        assert_eq!(child["included_ids"], r["included_ids"]);
    }
}

#[tokio::test]
async fn backend_failure_is_503() {
    let dir = tempfile::tempdir().unwrap();
    let engine = common::engine_with(dir.path(), Arc::new(ScriptedBackend::new("down", vec![])));
    let st = state(engine);
    let (status, body) = call(&st, "POST", "/query", Some(json!({"question": "Ground risk buffer"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["kind"], "backend_unavailable");
}

#[tokio::test]
async fn session_history_is_passed_to_followups() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(ScriptedBackend::from_texts("script", &["first answer", "second answer", "third"]));
    let st = state(common::engine_with(dir.path(), backend.clone()));
    let q = |question: &str, session: Option<&str>| json!({"question": question, "session_id": session});
    call(&st, "POST", "/query", Some(q("Ground risk buffer", Some("s1")))).await;
    call(&st, "POST", "/query", Some(q("And its width?", Some("s1")))).await;
    call(&st, "POST", "/query", Some(q("Unrelated", Some("s2")))).await;
    let calls = backend.calls();
    assert_eq!(calls.len(), 3);
    assert_eq!(calls[0].roles().len(), 5);
    let second: Vec<(Role, &str)> = calls[1].0[2..5].iter().map(|m| (m.role, m.content.as_str())).collect();
    assert_eq!(
        second,
        vec![
            (Role::User, "Ground risk buffer"),
            (Role::Assistant, "first answer"),
            (Role::User, "And its width?")
        ]
    );
    assert_eq!(calls[2].roles().len(), 5);
    assert_eq!(st.sessions.len(), 2);
}

#[tokio::test]
async fn cli_and_http_retrieve_identically() {
    let dir = tempfile::tempdir().unwrap();
    let engine = Arc::new(common::engine(dir.path()));
    let st = AppState::new(Arc::clone(&engine));
    for question in ["Ground risk buffer", "night operations over crowds", "xylophone zeppelin"] {
        let mut out = Vec::new();
        cmd_query(&engine, question, &QueryFlags::default(), false, true, &mut out).unwrap();
        let cli: Value = serde_json::from_slice(&out).unwrap();
        let (_, http) = call(&st, "POST", "/query", Some(json!({"question": question}))).await;
        assert_eq!(cli["included_ids"], http["included_ids"], "{question}");
        assert_eq!(cli["sources"], http["sources"]);
        assert_eq!(cli["answer"], http["answer"]);
        let a = engine.audit().get(cli["audit_id"].as_str().unwrap()).unwrap().unwrap();
        let b = engine.audit().get(http["audit_id"].as_str().unwrap()).unwrap().unwrap();
        assert_eq!(a.retrieval, b.retrieval);
        assert_eq!(a.context_text, b.context_text);
    }
}
