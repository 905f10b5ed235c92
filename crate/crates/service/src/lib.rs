//! Loopback HTTP service over a probe journal. Every response is derived from
//! the journal, so a restarted service answers identically.

pub mod error;
pub mod views;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, RawQuery, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use ecoprobe_core::store::Clock;
use ecoprobe_core::trace_io::parse_trace_bytes;
use ecoprobe_core::{
    detect_trips, serialize_interaction_log, InteractionEvent, Metric, PathDistance, ProbeStore,
    TransportMode, TripId, VehicleKey,
};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorCode};
pub use views::{EngineConfig, SummaryView, TabsView, TotalsView, TripView, VehicleView, WindowSel};

pub const DEFAULT_PORT: u16 = 4815;
const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

/// Shared service state: one writer, many readers over the store.
pub struct App {
    store: RwLock<ProbeStore>,
    cfg: EngineConfig,
    clock: Clock,
}

impl App {
    pub fn new(store: ProbeStore, cfg: EngineConfig, clock: Clock) -> Arc<Self> {
        Arc::new(Self {
            store: RwLock::new(store),
            cfg,
            clock,
        })
    }

    fn read<T>(&self, f: impl FnOnce(&ProbeStore) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let guard = self
            .store
            .read()
            .map_err(|_| ApiError::internal("store lock poisoned"))?;
        f(&guard)
    }

    fn write<T>(&self, f: impl FnOnce(&mut ProbeStore) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut guard = self
            .store
            .write()
            .map_err(|_| ApiError::internal("store lock poisoned"))?;
        f(&mut guard)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub trips_added: usize,
    pub skipped_lines: usize,
    pub trip_ids: Vec<String>,
}

/// Parses a trace, runs the detector and journals the automotive trips.
/// Identical traces ingested twice produce duplicate trips.
pub fn ingest_trace(store: &mut ProbeStore, cfg: &EngineConfig, body: &[u8]) -> Result<IngestReport, ApiError> {
    let parsed = parse_trace_bytes(body).map_err(|e| ApiError::invalid(e.to_string()))?;
    cfg.detector
        .validate()
        .map_err(|e| ApiError::invalid(e.to_string()))?;
    let dist = PathDistance {
        winding_factor: cfg.detector.winding_factor,
    };
    let trips: Vec<_> = detect_trips(&parsed.trace, &cfg.detector, &dist)
        .into_iter()
        .filter(|t| t.mode == TransportMode::Automotive)
        .collect();
    let ids = store.ingest_trips(trips)?;
    Ok(IngestReport {
        trips_added: ids.len(),
        skipped_lines: parsed.skipped,
        trip_ids: ids.into_iter().map(|id| id.0).collect(),
    })
}

/// Parses a JSON array of events, naming the first offending index.
pub fn parse_events(body: &[u8]) -> Result<Vec<InteractionEvent>, ApiError> {
    let items: Vec<serde_json::Value> = serde_json::from_slice(body)
        .map_err(|e| ApiError::invalid(format!("expected a JSON array of events: {e}")))?;
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let e: InteractionEvent =
                serde_json::from_value(v).map_err(|e| ApiError::invalid(format!("event {i}: {e}")))?;
            if e.ts <= 0 {
                return Err(ApiError::invalid(format!("event {i}: timestamp must be positive")));
            }
            Ok(e)
        })
        .collect()
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/trips", get(list_trips))
        .route("/trips/{id}", delete(delete_trip))
        .route("/vehicle", get(get_vehicle).put(put_vehicle))
        .route("/catalog", get(get_catalog))
        .route("/tabs", get(get_tabs))
        .route("/summary/{metric}", get(get_summary))
        .route("/events", post(post_events))
        .route("/log/export", get(export_log))
        .route("/traces", post(post_traces))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(app)
}

type AppState = State<Arc<App>>;

async fn list_trips(State(app): AppState) -> Result<Json<Vec<TripView>>, ApiError> {
    app.read(|s| views::trip_list(s.state(), &app.cfg)).map(Json)
}

#[derive(Serialize)]
struct Deleted {
    deleted: String,
}

async fn delete_trip(State(app): AppState, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let id = TripId(id);
    app.write(|s| Ok(s.delete_trip(&id)?))?;
    Ok(Json(Deleted { deleted: id.0 }))
}

async fn get_vehicle(State(app): AppState) -> Result<Json<VehicleView>, ApiError> {
    app.read(|s| views::current_vehicle(s.state(), &app.cfg)).map(Json)
}

async fn put_vehicle(State(app): AppState, body: Bytes) -> Result<Json<VehicleView>, ApiError> {
    let key: VehicleKey = serde_json::from_slice(&body)
        .map_err(|e| ApiError::invalid(format!("expected {{category, powertrain}}: {e}")))?;
    let profile = app.cfg.catalog.lookup(key)?;
    let view = VehicleView::from(profile);
    app.write(|s| {
        s.append(ecoprobe_core::store::Mutation::SetVehicle(key))?;
        Ok(())
    })?;
    Ok(Json(view))
}

async fn get_catalog(State(app): AppState) -> Json<Vec<VehicleView>> {
    Json(views::catalog(&app.cfg))
}

async fn get_tabs(State(app): AppState) -> Result<Json<TabsView>, ApiError> {
    app.read(|s| views::tabs(s.state())).map(Json)
}

fn query_param<'a>(query: &'a Option<String>, key: &str) -> Option<&'a str> {
    query
        .as_deref()?
        .split('&')
        .filter_map(|kv| kv.split_once('=').or(Some((kv, ""))))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

async fn get_summary(
    State(app): AppState,
    Path(metric): Path<String>,
    RawQuery(query): RawQuery,
) -> Result<Json<SummaryView>, ApiError> {
    let metric = match metric.as_str() {
        "cost" => Metric::Cost,
        "carbon" => Metric::Carbon,
        other => return Err(ApiError::invalid(format!("unknown metric `{other}` (expected cost or carbon)"))),
    };
    let window: WindowSel = query_param(&query, "window")
        .unwrap_or("all")
        .parse()
        .map_err(ApiError::invalid)?;
    let now = (app.clock)();
    app.read(|s| views::summary(s.state(), &app.cfg, metric, window, now))
        .map(Json)
}

#[derive(Serialize)]
struct Recorded {
    recorded: usize,
}

async fn post_events(State(app): AppState, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let events = parse_events(&body)?;
    let n = app.write(|s| Ok(s.record_events(&events)?))?;
    Ok(Json(Recorded { recorded: n }))
}

async fn export_log(State(app): AppState) -> Result<impl IntoResponse, ApiError> {
    let csv = app.read(|s| Ok(serialize_interaction_log(&s.state().events)))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn post_traces(State(app): AppState, body: Bytes) -> Result<Json<IngestReport>, ApiError> {
    app.write(|s| ingest_trace(s, &app.cfg, &body)).map(Json)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("refusing to bind non-loopback address {0} without allow_remote")]
    NonLoopback(SocketAddr),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds and serves until the future is dropped. Non-loopback addresses are
/// refused unless `allow_remote` is set.
pub async fn serve(app: Arc<App>, addr: SocketAddr, allow_remote: bool) -> Result<(), ServeError> {
    if !addr.ip().is_loopback() && !allow_remote {
        return Err(ServeError::NonLoopback(addr));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    Ok(axum::serve(listener, router(app)).await?)
}
