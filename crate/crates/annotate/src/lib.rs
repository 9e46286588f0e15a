//! HTTP front end for the annotation task queue.
//!
//! | route | result |
//! |---|---|
//! | `GET /api/tasks/next?annotator=<id>` | task JSON, or 204 when nothing is left |
//! | `POST /api/labels` | `{pair_id, annotator, label}`; 404 unknown pair, 400 bad label, 409 no lease |
//! | `GET /api/progress` | `{open, leased, done}` |
//! | `GET /api/agreement` | agreement statistics |
//! | `GET /api/adjudication` | finished pairs with tied votes |
//! | `GET /api/export` | pairs as JSONL with the resolved `gold_stance` |
//!
//! Everything else is served from the console bundle directory when one is
//! configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use stancemine_core::annotation::{AnnotationError, QueueConfig, SubmitOutcome, SystemClock, TaskQueue};
use stancemine_core::model::{read_jsonl, ModelError, StancePair};
use stancemine_core::StanceLabel;
use thiserror::Error;
use tower_http::services::ServeDir;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Tasks(#[from] ModelError),
    #[error(transparent)]
    Queue(#[from] AnnotationError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub tasks: Option<PathBuf>,
    pub log: PathBuf,
    pub queue: QueueConfig,
    pub static_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    queue: Arc<TaskQueue>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn queue_error(e: AnnotationError) -> Response {
    let status = match &e {
        AnnotationError::EmptyAnnotator | AnnotationError::EmptyVote | AnnotationError::MinLabels => StatusCode::BAD_REQUEST,
        AnnotationError::NotFound(_) => StatusCode::NOT_FOUND,
        AnnotationError::NoLease { .. } => StatusCode::CONFLICT,
        AnnotationError::Io { .. } | AnnotationError::CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

/// Runs a queue call off the async executor; the call may sync to disk.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    #[serde(default)]
    annotator: String,
}

async fn next_task(State(app): State<AppState>, Query(q): Query<NextQuery>) -> Response {
    match blocking(move || app.queue.lease_next(&q.annotator)).await {
        Ok(Ok(Some(task))) => Json(task).into_response(),
        Ok(Ok(None)) => StatusCode::NO_CONTENT.into_response(),
        Ok(Err(e)) => queue_error(e),
        Err(r) => r,
    }
}

/// The label arrives as a string so a bad value is a 400 with a message
/// rather than a generic body rejection.
#[derive(Debug, Deserialize)]
struct LabelSubmission {
    pair_id: String,
    annotator: String,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelAck {
    pub status: SubmitOutcome,
    pub pair_id: String,
    pub annotator: String,
    pub label: StanceLabel,
}

async fn submit_label(State(app): State<AppState>, body: Result<Json<LabelSubmission>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(sub) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let label: StanceLabel = match sub.label.parse() {
        Ok(l) => l,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("{e}")),
    };
    let (pair_id, annotator) = (sub.pair_id.clone(), sub.annotator.clone());
    match blocking(move || app.queue.submit(&sub.pair_id, &sub.annotator, label)).await {
        Ok(Ok(status)) => Json(LabelAck { status, pair_id, annotator, label }).into_response(),
        Ok(Err(e)) => queue_error(e),
        Err(r) => r,
    }
}

async fn progress(State(app): State<AppState>) -> Response {
    Json(app.queue.progress()).into_response()
}

async fn agreement(State(app): State<AppState>) -> Response {
    Json(app.queue.agreement()).into_response()
}

async fn adjudication(State(app): State<AppState>) -> Response {
    Json(app.queue.adjudication()).into_response()
}

async fn export(State(app): State<AppState>) -> Response {
    let mut body = String::new();
    for pair in app.queue.export() {
        body.push_str(&serde_json::to_string(&pair).expect("pairs serialize"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

const PLACEHOLDER: &str = "<!doctype html><title>annotation</title><p>No console bundle configured. The JSON API is under <code>/api</code>.</p>";

pub fn router(queue: Arc<TaskQueue>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/labels", post(submit_label))
        .route("/api/progress", get(progress))
        .route("/api/agreement", get(agreement))
        .route("/api/adjudication", get(adjudication))
        .route("/api/export", get(export))
        .with_state(AppState { queue });
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub fn open_queue(options: &ServeOptions) -> Result<TaskQueue, ServeError> {
    let pairs: Vec<StancePair> = match &options.tasks {
        Some(path) => read_jsonl(path)?,
        None => Vec::new(),
    };
    Ok(TaskQueue::open(&options.log, &pairs, options.queue, Arc::new(SystemClock))?)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    queue: Arc<TaskQueue>,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(queue, static_dir)).with_graceful_shutdown(shutdown).await
}

/// Opens the queue and serves until Ctrl-C.
pub fn run_blocking(options: ServeOptions) -> Result<(), ServeError> {
    let queue = Arc::new(open_queue(&options)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(options.addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
        serve(listener, queue, options.static_dir, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

/// A server running on its own runtime thread.
pub struct Running {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl Running {
    /// Stops accepting connections and waits for in-flight requests.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

pub fn spawn(queue: Arc<TaskQueue>, static_dir: Option<PathBuf>, addr: SocketAddr) -> std::io::Result<Running> {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(serve(listener, queue, static_dir, async {
            let _ = rx.await;
        }))
    });
    Ok(Running { addr, stop: Some(tx), thread: Some(thread) })
}
