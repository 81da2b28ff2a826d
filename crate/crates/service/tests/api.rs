use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use aura_agents::ScriptedMock;
use aura_core::orchestrator::{run_pipeline, Phase, Pipeline, PipelineConfig, Snapshot};
use aura_core::scenarios::{for_use_case, nominal, UseCase};
use aura_core::telemetry::fit_default_model;
use aura_core::{ScriptedOperator, SessionLog};
use aura_knowledge::CorpusIndex;
use aura_memory::{MemoryStore, MockEmbedder};
use aura_service::*;

fn pipeline() -> Pipeline {
    Pipeline {
        model: Arc::new(fit_default_model(0.99).unwrap()),
        memory: Arc::new(MemoryStore::new(Arc::new(MockEmbedder::new()))),
        corpus: Some(Arc::new(CorpusIndex::bundled())),
        backend: Arc::new(ScriptedMock::new()),
        config: PipelineConfig::default(),
        sessions_dir: None,
    }
}

async fn start(p: Pipeline, scenario: aura_twin::Scenario, pause_ms: u64) -> String {
    let svc = Service::start(
        p,
        ServiceConfig {
            scenario,
            tick_interval: Duration::from_millis(pause_ms),
        },
    )
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, svc.router()).await.unwrap() });
    format!("{addr}")
}

async fn get_state(addr: &str) -> Snapshot {
    reqwest::get(format!("http://{addr}/state")).await.unwrap().json().await.unwrap()
}

async fn wait_for_phase(addr: &str, phase: Phase) -> Snapshot {
    for _ in 0..500 {
        let s = get_state(addr).await;
        if s.phase == phase {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("never reached {phase:?}");
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next_json(ws: &mut Ws) -> serde_json::Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads frames until one has the given type.
async fn until(ws: &mut Ws, ty: &str) -> serde_json::Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == ty {
            return v;
        }
    }
}

async fn send(ws: &mut Ws, v: serde_json::Value) {
    ws.send(Message::Text(v.to_string())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn dialog_session_end_to_end() {
    let addr = start(pipeline(), for_use_case(UseCase::CompassHeading, 1, 0), 0).await;
    let snap = wait_for_phase(&addr, Phase::AwaitingOperator).await;
    let view = snap.session.unwrap();
    assert_eq!(view.characterisation.cited_channels[0].channel, "heading");

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/dialog")).await.unwrap();
    let hello = next_json(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["phase"], "awaiting_operator");
    assert_eq!(hello["session"]["session_id"], view.session_id);

    send(&mut ws, serde_json::json!({"type": "say", "text": "the compass offset is steady near steel"})).await;
    let m = until(&mut ws, "message").await;
    assert_eq!(m["message"]["role"], "operator");
    let m = until(&mut ws, "message").await;
    assert_eq!(m["message"]["role"], "agent");
    let h = until(&mut ws, "hypotheses").await;
    assert_eq!(h["hypotheses"][0]["cause"], "magnetic interference");

    send(&mut ws, serde_json::json!({"type": "confirm", "cause": "magnetic interference", "confidence": 0.95})).await;
    let c = until(&mut ws, "concluded").await;
    assert_eq!(c["validated"], true);
    assert_eq!(c["cause"], "magnetic interference");

    send(&mut ws, serde_json::json!({"type": "css", "value": 2})).await;
    send(&mut ws, serde_json::json!({"type": "finish"})).await;
    let l = until(&mut ws, "lesson").await;
    assert!(l["lesson_id"].as_str().unwrap().starts_with("lesson-compass_heading"));

    let lessons: Vec<LessonView> = reqwest::get(format!("http://{addr}/lessons")).await.unwrap().json().await.unwrap();
    assert_eq!(lessons.len(), 1);
    assert_eq!(lessons[0].root_cause, "magnetic interference");
    assert_eq!(get_state(&addr).await.lessons, 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_frames_get_error_replies() {
    let addr = start(pipeline(), nominal(3), 0).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/dialog")).await.unwrap();
    until(&mut ws, "hello").await;
    send(&mut ws, serde_json::json!({"type": "shout"})).await;
    assert_eq!(until(&mut ws, "error").await["code"], "bad_frame");
    send(&mut ws, serde_json::json!({"type": "abandon"})).await;
    assert_eq!(until(&mut ws, "error").await["code"], "no_session");
}

#[tokio::test(flavor = "multi_thread")]
async fn telemetry_streams_every_channel() {
    let addr = start(pipeline(), nominal(4), 2).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/telemetry")).await.unwrap();
    let mut last_t = f64::NEG_INFINITY;
    for _ in 0..5 {
        let f: TelemetryFrame = serde_json::from_value(next_json(&mut ws).await).unwrap();
        assert!(f.t > last_t);
        last_t = f.t;
        assert_eq!(f.residuals.len(), 6);
        assert_eq!(f.phase, Phase::Monitoring);
        assert!(f.md2.unwrap() >= 0.0);
    }
    let s = get_state(&addr).await;
    assert!(s.threshold > 0.0);
}

fn validated_log() -> SessionLog {
    let p = pipeline();
    let mut op = ScriptedOperator::for_use_case(UseCase::ThrusterDisturbance);
    let run = run_pipeline(&p, &for_use_case(UseCase::ThrusterDisturbance, 5, 0), &mut op).unwrap();
    run.sessions[0].log.clone()
}

#[tokio::test(flavor = "multi_thread")]
async fn premission_injection_over_http() {
    let addr = start(pipeline(), nominal(6), 0).await;
    let client = reqwest::Client::new();
    let url = format!("http://{addr}/premission");
    let log = validated_log();

    let r = client.post(&url).body(log.to_json()).send().await.unwrap();
    assert_eq!(r.status(), 201);
    let lesson: LessonView = r.json().await.unwrap();
    assert_eq!(lesson.root_cause, "tether entanglement");
    assert_eq!(lesson.origin, aura_memory::Origin::Premission);

    let r = client.post(&url).body(log.to_json()).send().await.unwrap();
    assert_eq!(r.status(), 409);

    let mut unsure = log.clone();
    unsure.session_id.push_str("-x");
    unsure.operator_confidence = 0.85;
    let r = client.post(&url).body(unsure.to_json()).send().await.unwrap();
    assert_eq!(r.status(), 422);
    let body: ErrorBody = r.json().await.unwrap();
    assert_eq!(body.code, "gate");

    let r = client.post(&url).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), 400);

    let lessons: Vec<LessonView> = reqwest::get(format!("http://{addr}/lessons")).await.unwrap().json().await.unwrap();
    assert_eq!(lessons.len(), 1);
}
