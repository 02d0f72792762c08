//! HTTP front end for the body buffer controller.
//!
//! Decisions run one at a time behind a single lock, in arrival order. Every
//! request/response pair is appended to the decision log (and flushed)
//! before the response goes out, so the log is a complete, replayable
//! record of the session. `GET /status` reads a snapshot taken after the
//! last decision and never waits for one in progress.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use mmal_core::controller::StatusSnapshot;
use mmal_core::harness::{load_scenario, EventRecord, HarnessError, LogEntry, Session};
use mmal_core::{BodyType, Timestamp};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
}

pub const LOCALHOST: IpAddr = IpAddr::V4(Ipv4Addr::LOCALHOST);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub scenario_dir: PathBuf,
    /// Decision log (JSON Lines); truncated on start.
    pub decision_log: Option<PathBuf>,
    pub host: IpAddr,
    pub port: u16,
}

impl ServiceConfig {
    /// `SCENARIO_DIR`, `PORT` (default 8080), `HOST` (default 127.0.0.1) and
    /// optionally `DECISION_LOG`.
    pub fn from_env() -> Result<ServiceConfig, ServiceError> {
        let scenario_dir = std::env::var_os("SCENARIO_DIR")
            .map(PathBuf::from)
            .ok_or_else(|| ServiceError::Config("SCENARIO_DIR is not set".into()))?;
        let port = match std::env::var("PORT") {
            Ok(p) => p.parse().map_err(|_| ServiceError::Config(format!("bad PORT {p:?}")))?,
            Err(_) => 8080,
        };
        let host = match std::env::var("HOST") {
            Ok(h) => h.parse().map_err(|_| ServiceError::Config(format!("bad HOST {h:?}")))?,
            Err(_) => LOCALHOST,
        };
        Ok(ServiceConfig {
            scenario_dir,
            decision_log: std::env::var_os("DECISION_LOG").map(PathBuf::from),
            host,
            port,
        })
    }
}

enum Phase {
    Loading,
    Failed(String),
    Ready { session: Box<Session>, log: Option<File> },
}

pub struct Service {
    phase: Mutex<Phase>,
    status: RwLock<Option<StatusSnapshot>>,
}

impl Service {
    /// A service that answers 503 until [`Service::install`] is called.
    pub fn loading() -> Arc<Service> {
        Arc::new(Service {
            phase: Mutex::new(Phase::Loading),
            status: RwLock::new(None),
        })
    }

    pub fn ready(session: Session, log: Option<File>) -> Arc<Service> {
        let svc = Service::loading();
        svc.set_phase(Phase::Ready {
            session: Box::new(session),
            log,
        });
        svc
    }

    fn set_phase(&self, phase: Phase) {
        if let Phase::Ready { session, .. } = &phase {
            *self.status.write().expect("status lock") = Some(session.state().status());
        }
        *self.phase.lock().expect("phase lock") = phase;
    }

    /// Loads the scenario and opens the decision log; on failure the service
    /// keeps answering 503 with the reason.
    pub fn install(&self, config: &ServiceConfig) -> Result<(), ServiceError> {
        match open_session(config) {
            Ok((session, log)) => {
                self.set_phase(Phase::Ready {
                    session: Box::new(session),
                    log,
                });
                Ok(())
            }
            Err(e) => {
                self.set_phase(Phase::Failed(e.to_string()));
                Err(e)
            }
        }
    }

    /// Runs one decision. The critical section never awaits, so a plain
    /// mutex serializes requests.
    fn decide(&self, event: EventRecord) -> HttpResponse {
        let mut phase = self.phase.lock().expect("phase lock");
        let (session, log) = match &mut *phase {
            Phase::Ready { session, log } => (session, log),
            Phase::Loading => return unavailable("scenario is loading"),
            Phase::Failed(e) => return unavailable(e),
        };
        let response = session.apply(event);
        if let Some(file) = log {
            let entry: &LogEntry = session.log().last().expect("just appended");
            let mut line = serde_json::to_vec(entry).expect("serializable");
            line.push(b'\n');
            if let Err(e) = file.write_all(&line).and_then(|_| file.flush()) {
                tracing::error!(error = %e, "decision log write failed");
                return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"status": "error", "error": e.to_string()})))
                    .into_response();
            }
        }
        *self.status.write().expect("status lock") = Some(session.state().status());
        let code = if response.is_rejected() {
            StatusCode::CONFLICT
        } else {
            StatusCode::OK
        };
        (code, Json(response)).into_response()
    }

    fn status(&self) -> HttpResponse {
        match self.status.read().expect("status lock").clone() {
            Some(s) => Json(s).into_response(),
            None => unavailable("scenario is loading"),
        }
    }
}

fn open_session(config: &ServiceConfig) -> Result<(Session, Option<File>), ServiceError> {
    let scenario = load_scenario(&config.scenario_dir)?;
    let session = Session::new(scenario.compile()?, scenario.config.buffer, scenario.config.controller()?)?;
    let log = match &config.decision_log {
        Some(path) => Some(
            OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(path)?,
        ),
        None => None,
    };
    Ok((session, log))
}

fn unavailable(reason: &str) -> HttpResponse {
    (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"status": "unavailable", "error": reason}))).into_response()
}

fn bad_request(error: impl ToString) -> HttpResponse {
    (StatusCode::BAD_REQUEST, Json(json!({"status": "bad_request", "error": error.to_string()}))).into_response()
}

#[allow(clippy::result_large_err)]
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, HttpResponse> {
    serde_json::from_slice(body).map_err(bad_request)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnqueueBody {
    car_id: String,
    body_type: BodyType,
    timestamp: Timestamp,
    #[serde(default)]
    available_lanes: Option<Vec<usize>>,
    #[serde(default)]
    order_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DequeueBody {
    timestamp: Timestamp,
    #[serde(default)]
    eligible_heads: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubstituteBody {
    car_id: String,
    timestamp: Timestamp,
}

async fn enqueue(State(svc): State<Arc<Service>>, body: Bytes) -> HttpResponse {
    match parse::<EnqueueBody>(&body) {
        Ok(b) => {
            svc.decide(EventRecord::EnqueueRequest {
                car_id: b.car_id,
                body_type: b.body_type,
                timestamp: b.timestamp,
                available_lanes: b.available_lanes,
                order_id: b.order_id,
            })
        }
        Err(r) => r,
    }
}

async fn dequeue(State(svc): State<Arc<Service>>, body: Bytes) -> HttpResponse {
    match parse::<DequeueBody>(&body) {
        Ok(b) => {
            svc.decide(EventRecord::DequeueRequest {
                timestamp: b.timestamp,
                eligible_heads: b.eligible_heads,
            })
        }
        Err(r) => r,
    }
}

async fn substitute(State(svc): State<Arc<Service>>, body: Bytes) -> HttpResponse {
    match parse::<SubstituteBody>(&body) {
        Ok(b) => {
            svc.decide(EventRecord::SubstitutionRequest {
                car_id: b.car_id,
                timestamp: b.timestamp,
            })
        }
        Err(r) => r,
    }
}

/// Observations from the plant: emissions and lane lock changes.
async fn event(State(svc): State<Arc<Service>>, body: Bytes) -> HttpResponse {
    match parse::<EventRecord>(&body) {
        Ok(e @ (EventRecord::EmissionObserved { .. } | EventRecord::LaneLockChanged { .. })) => svc.decide(e),
        Ok(_) => bad_request("decision requests go to /enqueue, /dequeue or /substitute"),
        Err(r) => r,
    }
}

async fn status(State(svc): State<Arc<Service>>) -> HttpResponse {
    svc.status()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/enqueue", post(enqueue))
        .route("/dequeue", post(dequeue))
        .route("/substitute", post(substitute))
        .route("/event", post(event))
        .route("/status", get(status))
        .with_state(service)
}

/// Binds, then loads the scenario in the background while already answering
/// (503 until loaded). Returns the bound address and the server future.
pub async fn bind(
    config: ServiceConfig,
) -> Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>), ServiceError> {
    let listener = TcpListener::bind((config.host, config.port)).await?;
    let addr = listener.local_addr()?;
    let service = Service::loading();
    let loader = Arc::clone(&service);
    tokio::task::spawn_blocking(move || {
        if let Err(e) = loader.install(&config) {
            tracing::error!(error = %e, "failed to load scenario");
        }
    });
    let server = axum::serve(listener, router(service)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    Ok((addr, async move { server.await }))
}
