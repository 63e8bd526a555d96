//! HTTP search service: `POST /v1/search` and `GET /healthz`.

use crate::retrieval::{Backend, RetrievalError, Retriever, ToolQuery};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexrag_core::{DefaultOperator, Hit};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

/// Retrievers the service can route to; a missing one answers 503.
#[derive(Clone, Default)]
pub struct ServiceState {
    pub logical: Option<Arc<dyn Retriever>>,
    pub hybrid: Option<Arc<dyn Retriever>>,
}

fn default_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBody {
    pub query: String,
    #[serde(default = "default_k")]
    pub max_results: usize,
    #[serde(default)]
    pub default_operator: DefaultOperator,
    #[serde(default)]
    pub backend: Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<Hit>,
    pub total_candidates: usize,
    pub took_ms: f64,
}

fn error(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

fn retrieval_error(e: RetrievalError) -> Response {
    match e {
        RetrievalError::Parse(p) => {
            error(StatusCode::BAD_REQUEST, json!({"error": p.kind.to_string(), "position": p.position}))
        }
        RetrievalError::BooleanSyntax | RetrievalError::Request(_) => {
            error(StatusCode::BAD_REQUEST, json!({"error": e.to_string()}))
        }
        RetrievalError::Embedding(_) => error(StatusCode::BAD_GATEWAY, json!({"error": e.to_string()})),
        RetrievalError::Dense(_) | RetrievalError::Fusion(_) => {
            error(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": e.to_string()}))
        }
    }
}

async fn search(State(state): State<ServiceState>, body: Result<Json<SearchBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(rejection) => return error(StatusCode::BAD_REQUEST, json!({"error": rejection.body_text()})),
    };
    let retriever = match body.backend {
        Backend::Logical => state.logical.clone(),
        Backend::Hybrid => state.hybrid.clone(),
    };
    let Some(retriever) = retriever else {
        return error(StatusCode::SERVICE_UNAVAILABLE, json!({"error": format!("{} index not loaded", body.backend)}));
    };
    let query = ToolQuery::new(body.query, body.max_results).with_operator(body.default_operator);
    let start = Instant::now();
    // searches are CPU-bound and the hybrid path makes blocking HTTP calls
    let outcome = tokio::task::spawn_blocking(move || retriever.search(&query)).await;
    let took_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(Ok(found)) => Json(SearchResponse { hits: found.result.hits, total_candidates: found.result.total_candidates, took_ms })
            .into_response(),
        Ok(Err(e)) => retrieval_error(e),
        Err(join) => error(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": format!("search task failed: {join}")})),
    }
}

async fn health(State(state): State<ServiceState>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "logical": state.logical.is_some(), "hybrid": state.hybrid.is_some()}))
}

pub fn router(state: ServiceState) -> Router {
    Router::new().route("/v1/search", post(search)).route("/healthz", get(health)).with_state(state)
}

/// Serves until Ctrl-C.
pub fn serve_blocking(addr: &str, state: ServiceState) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

/// A service running on a background thread; stops when dropped.
pub struct BackgroundService {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundService {
    /// Binds `127.0.0.1` on an ephemeral port.
    pub fn start(state: ServiceState) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Runtime::new()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener registers with runtime");
                let _ = axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(BackgroundService { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
