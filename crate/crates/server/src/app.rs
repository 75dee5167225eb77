//! HTTP front end: webhook intake, health and metrics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use funnelbot_core::forge::{verify_signature, DELIVERY_HEADER, EVENT_HEADER, SIGNATURE_HEADER};
use funnelbot_core::mediator::{LaneKey, Outcome};
use funnelbot_core::{ForgeEventEnvelope, Mediator};

pub const DRAIN_TIMEOUT: Duration = Duration::from_secs(30);

/// Request headers carrying the delivery metadata.
#[derive(Debug, Clone)]
pub struct HeaderNames {
    pub signature: String,
    pub delivery: String,
    pub event: String,
}

impl Default for HeaderNames {
    fn default() -> Self {
        Self {
            signature: SIGNATURE_HEADER.to_ascii_lowercase(),
            delivery: DELIVERY_HEADER.to_ascii_lowercase(),
            event: EVENT_HEADER.to_ascii_lowercase(),
        }
    }
}

struct Lane {
    tx: mpsc::UnboundedSender<ForgeEventEnvelope>,
    worker: JoinHandle<()>,
}

pub struct AppState {
    mediator: Arc<Mediator>,
    headers: HeaderNames,
    // None for envelopes that do not belong to a pull request
    lanes: Mutex<HashMap<Option<LaneKey>, Lane>>,
}

impl AppState {
    pub fn new(mediator: Mediator, headers: HeaderNames) -> Arc<Self> {
        Arc::new(Self {
            mediator: Arc::new(mediator),
            headers,
            lanes: Mutex::new(HashMap::new()),
        })
    }

    pub fn mediator(&self) -> &Mediator {
        &self.mediator
    }

    fn enqueue(&self, envelope: ForgeEventEnvelope) {
        let key = Mediator::lane_key(&envelope);
        let mut lanes = self.lanes.lock().unwrap_or_else(|e| e.into_inner());
        let lane = lanes
            .entry(key)
            .or_insert_with(|| spawn_worker(self.mediator.clone()));
        if let Err(mpsc::error::SendError(envelope)) = lane.tx.send(envelope) {
            // worker gone (it panicked); start a fresh one
            let fresh = spawn_worker(self.mediator.clone());
            let _ = fresh.tx.send(envelope);
            *lane = fresh;
        }
    }

    /// Stops accepting work and waits for queued deliveries to finish.
    /// Returns false if `timeout` elapsed first.
    pub async fn drain(&self, timeout: Duration) -> bool {
        let lanes: Vec<Lane> = {
            let mut lanes = self.lanes.lock().unwrap_or_else(|e| e.into_inner());
            lanes.drain().map(|(_, lane)| lane).collect()
        };
        let workers: Vec<_> = lanes
            .into_iter()
            .map(|Lane { tx, worker }| {
                drop(tx);
                worker
            })
            .collect();
        tokio::time::timeout(timeout, async {
            for w in workers {
                let _ = w.await;
            }
        })
        .await
        .is_ok()
    }
}

fn spawn_worker(mediator: Arc<Mediator>) -> Lane {
    let (tx, mut rx) = mpsc::unbounded_channel::<ForgeEventEnvelope>();
    let worker = tokio::spawn(async move {
        while let Some(envelope) = rx.recv().await {
            let m = mediator.clone();
            let delivery = envelope.delivery_id.clone();
            match tokio::task::spawn_blocking(move || m.handle_envelope(&envelope)).await {
                Ok(Outcome::Failed(e)) => tracing::warn!(%delivery, error = %e, "delivery failed"),
                Ok(outcome) => tracing::debug!(%delivery, ?outcome, "delivery handled"),
                Err(e) => tracing::error!(%delivery, error = %e, "mediator panicked"),
            }
        }
    });
    Lane { tx, worker }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/webhook", post(webhook))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .with_state(state)
}

async fn webhook(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> StatusCode {
    let header = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    };
    let envelope = ForgeEventEnvelope {
        delivery_id: header(&state.headers.delivery).unwrap_or_default(),
        event_name: header(&state.headers.event).unwrap_or_default(),
        signature_header: header(&state.headers.signature),
        raw_body: body.to_vec(),
    };
    if !verify_signature(&state.mediator.settings().secret, &envelope) {
        tracing::info!(delivery = %envelope.delivery_id, "rejected unsigned delivery");
        return StatusCode::UNAUTHORIZED;
    }
    state.enqueue(envelope);
    StatusCode::ACCEPTED
}

async fn healthz() -> String {
    format!("funnelbot {}", env!("CARGO_PKG_VERSION"))
}

async fn metrics(State(state): State<Arc<AppState>>) -> String {
    state.mediator.metrics().to_text()
}
