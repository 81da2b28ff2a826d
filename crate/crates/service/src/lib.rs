//! Service API over a live coordinator.
//!
//! * `GET /state` — current [`Snapshot`]
//! * `WS /telemetry` — one [`TelemetryFrame`] per tick
//! * `WS /dialog` — coordinator [`Event`]s out, [`ClientFrame`]s in
//! * `GET /lessons` — stored lessons, without embeddings
//! * `POST /premission` — a [`SessionLog`] to distill and store
//!
//! The coordinator lives on its own thread (agent backends block) and is
//! the only owner of session state. The simulation feeds it ticks through a
//! channel; readers get snapshots through a watch channel.

pub mod protocol;

use std::net::SocketAddr;
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, oneshot, watch};

use aura_core::distill::{inject_premission, DistillError};
use aura_core::orchestrator::{Coordinator, Event, Pipeline, PipelineError, Snapshot};
use aura_core::{OperatorAction, SessionLog};
use aura_memory::MemoryError;
use aura_twin::{LockstepRun, Scenario, SimError, TelemetryRecord};

pub use protocol::{ClientFrame, ErrorBody, LessonView, ServerFrame, TelemetryFrame};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub scenario: Scenario,
    /// Wall-clock pause between ticks; zero runs as fast as possible.
    pub tick_interval: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

enum Input {
    Tick(Box<TelemetryRecord>),
    Frame(ClientFrame, oneshot::Sender<Result<(), PipelineError>>),
}

#[derive(Clone)]
struct AppState {
    pipeline: Pipeline,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    telemetry: broadcast::Sender<Arc<TelemetryFrame>>,
    events: broadcast::Sender<Arc<Event>>,
    inputs: std_mpsc::Sender<Input>,
}

/// A running service.
pub struct Service {
    state: AppState,
}

impl Service {
    /// Starts the coordinator thread and the tick feeder.
    pub fn start(pipeline: Pipeline, config: ServiceConfig) -> Result<Self, ServiceError> {
        let run = LockstepRun::new(config.scenario.clone())?;
        let coordinator = Coordinator::new(pipeline.clone(), config.scenario.id.clone())?;
        let (snap_tx, snapshots) = watch::channel(Arc::new(coordinator.snapshot()));
        let (telemetry, _) = broadcast::channel(1024);
        let (events, _) = broadcast::channel(1024);
        let (inputs, rx) = std_mpsc::channel();

        let (tel, ev) = (telemetry.clone(), events.clone());
        thread::Builder::new()
            .name("coordinator".into())
            .spawn(move || coordinate(coordinator, rx, snap_tx, tel, ev))?;

        let feed = inputs.clone();
        let pause = config.tick_interval;
        thread::Builder::new().name("telemetry".into()).spawn(move || {
            for record in run {
                if feed.send(Input::Tick(Box::new(record))).is_err() {
                    return;
                }
                if !pause.is_zero() {
                    thread::sleep(pause);
                }
            }
        })?;

        Ok(Self {
            state: AppState {
                pipeline,
                snapshots,
                telemetry,
                events,
                inputs,
            },
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/state", get(state))
            .route("/telemetry", get(telemetry_ws))
            .route("/dialog", get(dialog_ws))
            .route("/lessons", get(lessons))
            .route("/premission", post(premission))
            .with_state(self.state.clone())
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.state.snapshots.borrow().clone()
    }

    /// Serves until the process ends.
    pub async fn serve(self, addr: SocketAddr) -> Result<(), ServiceError> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        axum::serve(listener, self.router()).await?;
        Ok(())
    }
}

fn apply(c: &mut Coordinator, frame: &ClientFrame) -> Result<Vec<Event>, PipelineError> {
    match frame {
        ClientFrame::Say { text } => c.act(&OperatorAction::Say { text: text.clone() }),
        ClientFrame::Confirm { cause, confidence } => c.act(&OperatorAction::Confirm {
            cause: cause.clone(),
            confidence: *confidence,
        }),
        ClientFrame::Abandon => c.act(&OperatorAction::Abandon),
        ClientFrame::Css { value } => c.rate(*value).map(|_| Vec::new()),
        ClientFrame::Finish => c.finish(),
    }
}

fn coordinate(
    mut c: Coordinator,
    rx: std_mpsc::Receiver<Input>,
    snapshots: watch::Sender<Arc<Snapshot>>,
    telemetry: broadcast::Sender<Arc<TelemetryFrame>>,
    events: broadcast::Sender<Arc<Event>>,
) {
    for input in rx {
        let produced = match input {
            Input::Tick(record) => match c.ingest(&record) {
                Ok(evs) => {
                    if let Some(tick) = c.last_tick() {
                        let _ = telemetry.send(Arc::new(TelemetryFrame::new(tick, c.phase())));
                    }
                    evs
                }
                Err(e) => {
                    tracing::error!(error = %e, "telemetry tick failed");
                    Vec::new()
                }
            },
            Input::Frame(frame, reply) => match apply(&mut c, &frame) {
                Ok(evs) => {
                    let _ = reply.send(Ok(()));
                    evs
                }
                Err(e) => {
                    let _ = reply.send(Err(e));
                    Vec::new()
                }
            },
        };
        for e in produced {
            let _ = events.send(Arc::new(e));
        }
        snapshots.send_replace(Arc::new(c.snapshot()));
    }
}

fn error_response(status: StatusCode, code: &str, message: impl ToString) -> Response {
    (
        status,
        Json(ErrorBody {
            code: code.into(),
            message: message.to_string(),
        }),
    )
        .into_response()
}

async fn state(State(s): State<AppState>) -> Json<Snapshot> {
    Json(s.snapshots.borrow().as_ref().clone())
}

async fn lessons(State(s): State<AppState>) -> Json<Vec<LessonView>> {
    Json(s.pipeline.memory.lessons().into_iter().map(LessonView::from).collect())
}

async fn premission(State(s): State<AppState>, body: axum::body::Bytes) -> Response {
    let log = match std::str::from_utf8(&body)
        .map_err(|e| e.to_string())
        .and_then(|t| SessionLog::from_json(t).map_err(|e| e.to_string()))
    {
        Ok(l) => l,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_log", e),
    };
    let p = s.pipeline.clone();
    let res = tokio::task::spawn_blocking(move || inject_premission(&log, &p.memory, p.corpus.as_deref())).await;
    match res {
        Ok(Ok(lesson)) => (StatusCode::CREATED, Json(LessonView::from(lesson))).into_response(),
        Ok(Err(DistillError::Memory(MemoryError::Duplicate(id)))) => {
            error_response(StatusCode::CONFLICT, "duplicate", format!("lesson {id} already stored"))
        }
        Ok(Err(e @ DistillError::Memory(_))) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "memory", e),
        Ok(Err(e)) => error_response(StatusCode::UNPROCESSABLE_ENTITY, "gate", e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e),
    }
}

async fn telemetry_ws(State(s): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_telemetry(socket, s.telemetry.subscribe()))
}

async fn stream_telemetry(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<TelemetryFrame>>) {
    loop {
        match rx.recv().await {
            Ok(frame) => {
                let text = serde_json::to_string(frame.as_ref()).expect("frame serializes");
                if socket.send(Message::Text(text)).await.is_err() {
                    return;
                }
            }
            // A slow client skips ticks rather than stalling the feed.
            Err(broadcast::error::RecvError::Lagged(_)) => continue,
            Err(broadcast::error::RecvError::Closed) => return,
        }
    }
}

async fn dialog_ws(State(s): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| dialog(socket, s))
}

async fn dialog(socket: WebSocket, s: AppState) {
    let (mut tx, mut rx) = socket.split();
    let mut events = s.events.subscribe();
    let hello = {
        let snap = s.snapshots.borrow();
        ServerFrame::Hello {
            phase: snap.phase,
            session: snap.session.clone(),
        }
    };
    if tx.send(frame(&hello)).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(e) => {
                    if tx.send(frame(e.as_ref())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = rx.next() => {
                let Some(Ok(msg)) = msg else { return };
                let body = match msg {
                    Message::Text(t) => t,
                    Message::Close(_) => return,
                    _ => continue,
                };
                let reply = match serde_json::from_str::<ClientFrame>(&body) {
                    Err(e) => Some(ServerFrame::Error { code: "bad_frame".into(), message: e.to_string() }),
                    Ok(frame) => {
                        let (done, wait) = oneshot::channel();
                        if s.inputs.send(Input::Frame(frame, done)).is_err() {
                            return;
                        }
                        match wait.await {
                            Ok(Ok(())) => None,
                            Ok(Err(e)) => Some(ServerFrame::Error { code: e.code().into(), message: e.to_string() }),
                            Err(_) => return,
                        }
                    }
                };
                if let Some(r) = reply {
                    if tx.send(frame(&r)).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}

fn frame<T: serde::Serialize>(v: &T) -> Message {
    Message::Text(serde_json::to_string(v).expect("frame serializes"))
}
