//! End-to-end tests of the HTTP surface through the router.

use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use semem_core::engine::{Engine, EngineConfig};
use semem_core::nlparse::Parser;
use semem_core::world::seed_world;
use semem_service::{router, spawn, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn obj(shape: &str, color: &str, size: [f64; 3], descriptor: Option<usize>, position: [f64; 3]) -> Value {
    let mut v = json!({"shape": shape, "color": color, "size": size, "position": position, "orientation": [0, 0, 0]});
    if let Some(k) = descriptor {
        let mut d = vec![0.0; 16];
        d[k] = 1.0;
        v["descriptor"] = json!(d);
    }
    v
}

fn robot() -> Value {
    obj("robot", "white", [500.0, 400.0, 600.0], None, [0.0, 0.0, 0.0])
}

fn exp1_scene() -> Value {
    json!([
        robot(),
        obj("hexagonal", "green", [10.0, 10.0, 6.0], Some(0), [300.0, 100.0, 0.0]),
        obj("cylindrical", "blue", [6.0, 6.0, 30.0], Some(1), [350.0, -50.0, 0.0]),
        obj("square", "gray", [200.0, 150.0, 100.0], Some(2), [450.0, 200.0, 0.0]),
    ])
}

fn exp3_scene() -> Value {
    json!([
        robot(),
        obj("square", "gray", [200.0, 150.0, 100.0], Some(2), [450.0, 200.0, 0.0]),
        obj("square", "gray", [20.0, 20.0, 20.0], Some(9), [300.0, -150.0, 0.0]),
    ])
}

fn closest_scene() -> Value {
    json!([robot(), obj("hexagonal", "blue", [10.0, 10.0, 6.0], Some(0), [300.0, 100.0, 0.0])])
}

fn app_with(config: ServiceConfig) -> Router {
    let engine = Engine::new(seed_world().unwrap(), Parser::default(), EngineConfig::default());
    router(spawn(engine, config))
}

fn app() -> Router {
    app_with(ServiceConfig::default())
}

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    body: Value,
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply { status, headers, body }
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, "POST", uri, Some(body.to_string())).await
}

async fn instruct(app: &Router, text: &str) -> Reply {
    post(app, "/instruction", json!({"text": text})).await
}

/// `(seq, kind)` pairs from a finished SSE body.
async fn events(app: &Router, from: u64) -> Vec<(u64, String)> {
    let req = Request::get(format!("/events?from={from}&follow=false")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let text = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    parse_sse(&text)
}

fn parse_sse(text: &str) -> Vec<(u64, String)> {
    let mut out = Vec::new();
    let mut id = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("id:") {
            id = Some(v.trim().parse().unwrap());
        } else if let Some(v) = line.strip_prefix("event:") {
            out.push((id.take().expect("id precedes event"), v.trim().to_string()));
        }
    }
    out
}

#[tokio::test]
async fn exp1_scene_instantiates_four_objects() {
    let app = app();
    let r = post(&app, "/scene", exp1_scene()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["ok"], true);
    let labels: Vec<&str> = r.body["data"]["report"]["instantiated"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["yumi_1", "nut_1", "screw_1", "box_1"]);
    assert!(r.body["data"]["prompt"].is_null());
}

#[tokio::test]
async fn exp3_scene_opens_a_label_prompt() {
    let app = app();
    let r = post(&app, "/scene", exp3_scene()).await;
    assert_eq!(r.status, StatusCode::OK);
    let data = &r.body["data"];
    assert_eq!(data["report"]["instantiated"].as_array().unwrap().len(), 2);
    assert_eq!(data["report"]["unknowns"].as_array().unwrap().len(), 1);
    assert_eq!(data["prompt"]["payload"]["kind"], "label_unknown_object");
    let kinds: Vec<String> = events(&app, 0).await.into_iter().map(|(_, k)| k).collect();
    assert!(kinds.contains(&"prompt_opened".to_string()), "{kinds:?}");

    let prompts = send(&app, "GET", "/prompts", None).await;
    assert_eq!(prompts.body["data"]["open"], data["prompt"]["id"]);
}

#[tokio::test]
async fn malformed_scene_is_a_400_with_position() {
    let app = app();
    let r = send(&app, "POST", "/scene", Some("[{\"shape\": \"robot\",".into())).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["ok"], false);
    assert_eq!(r.body["error"]["code"], "MalformedDocument");
    assert!(r.body["error"]["details"]["line"].as_u64().is_some());
}

#[tokio::test]
async fn second_unknown_scene_while_asking_is_busy() {
    let app = app();
    assert_eq!(post(&app, "/scene", exp3_scene()).await.status, StatusCode::OK);
    let r = post(&app, "/scene", exp3_scene()).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["error"]["code"], "DialogueBusy");
}

#[tokio::test]
async fn instruction_executes_and_logs() {
    let app = app();
    post(&app, "/scene", exp1_scene()).await;
    let r = instruct(&app, "YuMi, pick the screw!").await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["data"]["resolution"]["outcome"], "resolved");
    assert_eq!(r.body["data"]["execution"]["result"]["status"], "success");

    let log = send(&app, "GET", "/log", None).await;
    assert_eq!(log.body["data"]["total"], 1);
    let graph = send(&app, "GET", "/graph", None).await;
    let nodes = graph.body["data"]["graph"]["nodes"].as_array().unwrap();
    assert!(!nodes.iter().any(|n| n["label"] == "screw_1"));
    assert!(nodes.iter().any(|n| n["label"] == "nut_1"));
    assert_eq!(graph.body["data"]["invariant_violations"], 0);
}

#[tokio::test]
async fn parse_errors_are_422_with_their_code() {
    let app = app();
    let r = instruct(&app, "YuMi, pick!").await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["error"]["code"], "NoPatientFound");
    let r = instruct(&app, "YuMi, pick the nut and the screw!").await;
    assert_eq!(r.body["error"]["code"], "UnsupportedConjunction");
}

#[tokio::test]
async fn closest_match_confirm_then_execute() {
    let app = app();
    post(&app, "/scene", closest_scene()).await;
    let r = instruct(&app, "YuMi, pick the green nut!").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["data"]["resolution"]["outcome"], "needs_object_confirmation");
    let id = r.body["data"]["prompt"]["id"].as_u64().unwrap();
    assert_eq!(r.body["data"]["prompt"]["payload"]["kind"], "confirm_object");

    let a = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "confirm", "accept": true})).await;
    assert_eq!(a.status, StatusCode::OK, "{}", a.body);
    assert_eq!(a.body["data"]["grounding"]["execution"]["result"]["status"], "success");
    let kinds: Vec<String> = events(&app, 0).await.into_iter().map(|(_, k)| k).collect();
    assert!(kinds.contains(&"execution_recorded".to_string()));
    assert!(kinds.contains(&"prompt_closed".to_string()));

    let again = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "confirm", "accept": true})).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.body["error"]["code"], "PromptClosed");
}

#[tokio::test]
async fn closest_match_reject_leaves_the_scene() {
    let app = app();
    post(&app, "/scene", closest_scene()).await;
    let r = instruct(&app, "YuMi, pick the green nut!").await;
    let id = r.body["data"]["prompt"]["id"].as_u64().unwrap();
    let a = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "confirm", "accept": false})).await;
    assert_eq!(a.status, StatusCode::OK);
    assert!(a.body["data"]["grounding"]["execution"].is_null());
    let log = send(&app, "GET", "/log", None).await;
    assert_eq!(log.body["data"]["total"], 0);
}

#[tokio::test]
async fn answer_errors_map_to_statuses() {
    let app = app();
    let r = post(&app, "/prompt/99/answer", json!({"choice": "discard"})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["error"]["code"], "UnknownPrompt");

    let scene = post(&app, "/scene", exp3_scene()).await;
    let id = scene.body["data"]["prompt"]["id"].as_u64().unwrap();
    let r = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "confirm", "accept": true})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["error"]["code"], "ShapeMismatch");

    let r = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "new_type", "label": "Box"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = send(&app, "POST", &format!("/prompt/{id}/answer"), Some("{\"choice\":".into())).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["error"]["code"], "malformed_body");

    let r = post(&app, &format!("/prompt/{id}/answer"), json!({"choice": "new_type", "label": "new_obj"})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let graph = send(&app, "GET", "/graph", None).await;
    assert!(graph.body["data"]["graph"]["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n["label"] == "new_obj_1"));
}

#[tokio::test]
async fn events_are_gapless_and_cursors_are_checked() {
    let app = app_with(ServiceConfig {
        event_history: 4,
        ..Default::default()
    });
    post(&app, "/scene", exp1_scene()).await;
    for text in ["YuMi, pick the screw!", "YuMi, pick the nut!"] {
        instruct(&app, text).await;
    }
    let graph = send(&app, "GET", "/graph", None).await;
    let next = graph.body["data"]["event_seq"].as_u64().unwrap();
    assert!(next > 4);

    let tail = events(&app, next - 4).await;
    let seqs: Vec<u64> = tail.iter().map(|(s, _)| *s).collect();
    assert_eq!(seqs, (next - 4..next).collect::<Vec<_>>());

    let gone = send(&app, "GET", "/events?from=0&follow=false", None).await;
    assert_eq!(gone.status, StatusCode::GONE);
    assert_eq!(gone.body["error"]["code"], "CursorExpired");

    let ahead = send(&app, "GET", &format!("/events?from={}&follow=false", next + 1), None).await;
    assert_eq!(ahead.status, StatusCode::NOT_FOUND);
    assert_eq!(ahead.body["error"]["code"], "UnknownCursor");
}

#[tokio::test]
async fn full_history_starts_at_zero_in_order() {
    let app = app();
    post(&app, "/scene", exp1_scene()).await;
    instruct(&app, "YuMi, pick the screw!").await;
    let all = events(&app, 0).await;
    let seqs: Vec<u64> = all.iter().map(|(s, _)| *s).collect();
    assert_eq!(seqs, (0..all.len() as u64).collect::<Vec<_>>());
    assert_eq!(all[0].1, "scene_ingested");
    assert_eq!(all.last().unwrap().1, "graph_changed");
}

#[tokio::test]
async fn last_event_id_resumes_after_it() {
    let app = app();
    post(&app, "/scene", exp1_scene()).await;
    let all = events(&app, 0).await;
    let req = Request::get("/events?follow=false")
        .header("last-event-id", "0")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let text = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert_eq!(parse_sse(&text), all[1..].to_vec());
}

#[tokio::test]
async fn follow_stream_delivers_live_events() {
    let app = app();
    let req = Request::get("/events?from=0").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let mut body = resp.into_body();
    post(&app, "/scene", exp1_scene()).await;
    instruct(&app, "YuMi, pick the box!").await;
    let mut text = String::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    while !text.contains("event: execution_recorded") {
        let frame = tokio::time::timeout_at(deadline, body.frame())
            .await
            .expect("live event within 5 s")
            .expect("stream open")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
    let seqs: Vec<u64> = parse_sse(&text).into_iter().map(|(s, _)| s).collect();
    assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
}

#[tokio::test]
async fn request_id_is_echoed() {
    let app = app();
    let req = Request::get("/graph").header("x-request-id", "abc-123").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["x-request-id"], "abc-123");
    let body: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["request_id"], "abc-123");

    let r = send(&app, "GET", "/graph", None).await;
    let generated = r.headers["x-request-id"].to_str().unwrap();
    assert_eq!(r.body["request_id"], generated);
}

#[tokio::test]
async fn unknown_route_uses_the_envelope() {
    let r = send(&app(), "GET", "/nope", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["ok"], false);
    assert_eq!(r.body["error"]["code"], "NotFound");
}

#[tokio::test]
async fn reset_drops_the_scene() {
    let app = app();
    post(&app, "/scene", exp1_scene()).await;
    let r = send(&app, "POST", "/scene/reset", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.body["data"]["removed_nodes"].as_u64().unwrap() > 0);
    let graph = send(&app, "GET", "/graph", None).await;
    assert!(!graph.body["data"]["graph"]["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n["subgraph"] == "scene"));
    let r = instruct(&app, "YuMi, pick the nut!").await;
    assert_eq!(r.body["data"]["resolution"]["outcome"], "no_actor_in_scene");
}

#[tokio::test]
async fn instruction_body_is_validated() {
    let app = app();
    let r = post(&app, "/instruction", json!({"txt": "hi"})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post(&app, "/instruction", json!({"text": "YuMi, pick the nut!", "strategy": "triplet"})).await;
    assert_eq!(r.status, StatusCode::OK);
}
