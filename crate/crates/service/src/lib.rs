//! HTTP facade over the design engine.
//!
//! Simulations run as asynchronous jobs that clients poll; analysis,
//! calibration, scenarios and curves are synchronous. All routes live under
//! `/api/v1`. There is no authentication: the service is meant for a trusted
//! local deployment.

pub mod error;
pub mod jobs;
pub mod schema;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use mats_core::calibration::{calibrate_tau2_table, CurvePoint};
use mats_core::{analyze, builtin_scenarios, AnalysisReport, CalibrationResult, Scenario};
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use jobs::{JobQueue, JobStore};
pub use schema::*;

pub const DEFAULT_PORT: u16 = 8716;

/// Process settings read from `MATS_*` environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub host: String,
    pub port: u16,
    /// Job-store directory; `None` keeps jobs in memory only.
    pub job_dir: Option<PathBuf>,
    pub max_parallel_jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            job_dir: Some(PathBuf::from("mats-jobs")),
            max_parallel_jobs: 1,
        }
    }
}

impl Settings {
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// `MATS_HOST`, `MATS_PORT`, `MATS_JOB_DIR` and `MATS_MAX_PARALLEL_JOBS`
    /// via `lookup`; an empty `MATS_JOB_DIR` disables persistence.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut s = Self::default();
        if let Some(h) = lookup("MATS_HOST") {
            s.host = h;
        }
        if let Some(p) = lookup("MATS_PORT") {
            s.port = p.parse().map_err(|_| format!("MATS_PORT: not a port number: `{p}`"))?;
        }
        if let Some(d) = lookup("MATS_JOB_DIR") {
            s.job_dir = (!d.is_empty()).then(|| PathBuf::from(d));
        }
        if let Some(n) = lookup("MATS_MAX_PARALLEL_JOBS") {
            s.max_parallel_jobs = match n.parse::<usize>() {
                Ok(v) if v >= 1 => v,
                _ => return Err(format!("MATS_MAX_PARALLEL_JOBS: need an integer ≥ 1, got `{n}`")),
            };
        }
        Ok(s)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub queue: JobQueue,
}

impl AppState {
    pub fn new(store: JobStore, max_parallel_jobs: usize) -> Self {
        Self {
            queue: JobQueue::new(Arc::new(store), max_parallel_jobs),
        }
    }
}

/// JSON body whose parse failures become [`ApiError`]s.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Body<T>(pub T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct Query<T>(pub T);

type ApiResult<T> = Result<T, ApiError>;

async fn submit_simulation(
    State(state): State<AppState>,
    Body(req): Body<SimulationRequest>,
) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    req.validate()?;
    let id = state.queue.submit(req)?;
    Ok((StatusCode::ACCEPTED, Json(JobCreated { id })))
}

async fn list_simulations(State(state): State<AppState>) -> Json<Vec<SimulationJob>> {
    Json(state.queue.store.list())
}

async fn get_simulation(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SimulationJob>> {
    state
        .queue
        .store
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown simulation job `{id}`")))
}

async fn run_analysis(Body(req): Body<AnalyzeRequest>) -> ApiResult<Json<AnalysisReport>> {
    let report =
        tokio::task::spawn_blocking(move || analyze(&req.data, &req.config, &req.effective_settings(), req.stage))
            .await
            .map_err(|e| ApiError::internal(format!("analysis worker failed: {e}")))??;
    Ok(Json(report))
}

async fn calibrate(Body(req): Body<CalibrateRequest>) -> ApiResult<Json<CalibrationResult>> {
    Ok(Json(calibrate_tau2_table(&req.to_core()?)?))
}

async fn scenarios() -> Json<Vec<Scenario>> {
    Json(builtin_scenarios())
}

async fn curves(Query(q): Query<CurvesQuery>) -> ApiResult<Json<Vec<CurvePoint>>> {
    Ok(Json(q.points()?))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/simulations", post(submit_simulation).get(list_simulations))
        .route("/simulations/{id}", get(get_simulation))
        .route("/analyze", post(run_analysis))
        .route("/calibrate-tau2", post(calibrate))
        .route("/scenarios", get(scenarios))
        .route("/curves", get(curves));
    Router::new()
        .nest("/api/v1", api)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Opens the job store, binds and serves until Ctrl-C.
pub async fn serve(settings: Settings) -> std::io::Result<()> {
    let store = match &settings.job_dir {
        Some(dir) => JobStore::open(dir).map_err(std::io::Error::other)?,
        None => JobStore::in_memory(),
    };
    let app = router(AppState::new(store, settings.max_parallel_jobs));
    let addr: SocketAddr = format!("{}:{}", settings.host, settings.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "listening on http://{} (jobs: {}, parallel: {})",
        listener.local_addr()?,
        settings
            .job_dir
            .as_ref()
            .map_or("in memory".into(), |d| d.display().to_string()),
        settings.max_parallel_jobs
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
