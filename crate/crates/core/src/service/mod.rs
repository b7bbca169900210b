//! HTTP/JSON facade over live sessions.
//!
//! Every session sits behind a writer lock and an immutable snapshot. Reads
//! clone the snapshot and never wait for training; a label submission takes
//! the writer lock without waiting (a second concurrent submit gets 409),
//! retrains on a blocking thread, persists, and only then publishes the new
//! snapshot.

mod store;

pub use store::{valid_id, DatasetRef, SessionRecord, SessionStore};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use crate::alloop::{self, IterationRecord, MetricsHistory, Phase, Session, SessionConfig};
use crate::dataio::{synth_generate, Dataset, Label, PatchGeometry, SynthConfig};
use crate::error::Error;

/// Maps library errors onto HTTP statuses with a JSON body.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            Error::Phase(_) => (StatusCode::CONFLICT, "phase"),
            Error::LabelMismatch(_) => (StatusCode::BAD_REQUEST, "label-mismatch"),
            Error::InsufficientPool { .. } => (StatusCode::BAD_REQUEST, "insufficient-pool"),
            Error::InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid-config"),
            Error::Json(_) => (StatusCode::BAD_REQUEST, "malformed-request"),
            Error::InvalidArgument(_)
            | Error::InvalidDimension(_)
            | Error::Shape(_)
            | Error::InvalidPair(_)
            | Error::Parse { .. } => (StatusCode::BAD_REQUEST, "invalid-argument"),
            Error::Singular { .. } | Error::TrainingDiverged { .. } | Error::UndefinedMetric(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "numerical")
            }
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = ErrorBody {
            error: code,
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

struct Conflict(&'static str);

impl IntoResponse for Conflict {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: "busy",
            message: self.0.to_string(),
        };
        (StatusCode::CONFLICT, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Bodies are parsed by hand so that every malformed request is a 400.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    Ok(serde_json::from_slice(body).map_err(Error::from)?)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e))))?
}

/// Published, fully persisted state of one session.
#[derive(Clone)]
struct Snapshot {
    id: String,
    dataset_ref: DatasetRef,
    created_ms: u64,
    updated_ms: u64,
    session: Session,
}

impl Snapshot {
    fn record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            dataset: self.dataset_ref.clone(),
            state: self.session.state().clone(),
            created_ms: self.created_ms,
            updated_ms: self.updated_ms,
        }
    }
}

struct Entry {
    writer: Arc<tokio::sync::Mutex<()>>,
    current: RwLock<Arc<Snapshot>>,
}

impl Entry {
    fn new(snapshot: Snapshot) -> Self {
        Entry {
            writer: Arc::new(tokio::sync::Mutex::new(())),
            current: RwLock::new(Arc::new(snapshot)),
        }
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }
}

/// Shared server state: named datasets, the session store and the sessions
/// touched since start-up.
pub struct AppState {
    datasets: HashMap<String, Arc<Dataset>>,
    synthetic: Mutex<HashMap<String, Arc<Dataset>>>,
    store: SessionStore,
    sessions: Mutex<HashMap<String, Arc<Entry>>>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        AppState {
            datasets: HashMap::new(),
            synthetic: Mutex::new(HashMap::new()),
            store,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_dataset(mut self, name: impl Into<String>, dataset: Arc<Dataset>) -> Self {
        self.datasets.insert(name.into(), dataset);
        self
    }

    pub fn dataset_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.datasets.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    fn resolve(&self, source: &DatasetRef) -> crate::Result<Arc<Dataset>> {
        match source {
            DatasetRef::Named { name } => self
                .datasets
                .get(name)
                .cloned()
                .ok_or_else(|| Error::NotFound(format!("dataset {name:?} is not loaded"))),
            DatasetRef::Synthetic { config } => {
                let key = serde_json::to_string(config)?;
                if let Some(ds) = self.synthetic.lock().expect("cache lock poisoned").get(&key) {
                    return Ok(ds.clone());
                }
                let ds = Arc::new(synth_generate(config)?);
                Ok(self
                    .synthetic
                    .lock()
                    .expect("cache lock poisoned")
                    .entry(key)
                    .or_insert(ds)
                    .clone())
            }
        }
    }

    fn cached(&self, id: &str) -> Option<Arc<Entry>> {
        self.sessions.lock().expect("session map poisoned").get(id).cloned()
    }

    fn insert(&self, id: String, entry: Entry) -> Arc<Entry> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .entry(id)
            .or_insert_with(|| Arc::new(entry))
            .clone()
    }

    /// Finds a session, reloading it from disk after a restart.
    async fn entry(self: &Arc<Self>, id: &str) -> ApiResult<Arc<Entry>> {
        if let Some(e) = self.cached(id) {
            return Ok(e);
        }
        if !valid_id(id) {
            return Err(Error::NotFound(format!("session {id}")).into());
        }
        let app = self.clone();
        let id = id.to_string();
        blocking(move || {
            let record = app.store.load(&id)?;
            let dataset = app.resolve(&record.dataset)?;
            let session = Session::resume(record.state, dataset)?;
            log::info!("reloaded session {id}");
            let snapshot = Snapshot {
                id: record.id,
                dataset_ref: record.dataset,
                created_ms: record.created_ms,
                updated_ms: record.updated_ms,
                session,
            };
            Ok(app.insert(id, Entry::new(snapshot)))
        })
        .await
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    /// Name of a dataset loaded at start-up.
    dataset: Option<String>,
    /// Inline generator config; the dataset is generated on the server.
    synth: Option<SynthConfig>,
    #[serde(default)]
    config: SessionConfig,
}

#[derive(Debug, Serialize)]
struct SessionView {
    id: String,
    dataset: DatasetRef,
    config: SessionConfig,
    phase: Phase,
    iteration: usize,
    samp_pct: f64,
    labeled: usize,
    dim: usize,
    has_patches: bool,
    history: MetricsHistory,
    auc: Option<f64>,
    created_ms: u64,
    updated_ms: u64,
}

impl From<&Snapshot> for SessionView {
    fn from(s: &Snapshot) -> Self {
        let state = s.session.state();
        SessionView {
            id: s.id.clone(),
            dataset: s.dataset_ref.clone(),
            config: state.config.clone(),
            phase: state.phase,
            iteration: state.iteration(),
            samp_pct: s.session.sampling_rate(),
            labeled: state.labeled_count(),
            dim: s.session.dataset().dim(),
            has_patches: s.session.dataset().has_patches(),
            history: state.history.clone(),
            auc: state.history.auc().ok(),
            created_ms: s.created_ms,
            updated_ms: s.updated_ms,
        }
    }
}

#[derive(Debug, Serialize)]
struct DisplayItem {
    id: u32,
    /// Current model's change probability.
    probability: f64,
    features: Vec<f64>,
    before: Option<String>,
    after: Option<String>,
}

#[derive(Debug, Serialize)]
struct DisplayView {
    iteration: usize,
    samp_pct: f64,
    items: Vec<DisplayItem>,
}

fn display_view(s: &Snapshot) -> ApiResult<DisplayView> {
    let state = s.session.state();
    let ids = state.current_display().ok_or_else(|| {
        Error::Phase(format!("session {} has no pending display ({:?})", s.id, state.phase))
    })?;
    let ds = s.session.dataset();
    let net = s.session.net();
    let mut items = Vec::with_capacity(ids.len());
    for &sid in ids {
        let sample = ds
            .get(sid)
            .ok_or_else(|| Error::NotFound(format!("sample {sid}")))?;
        let link = |which: &str| {
            sample
                .patches
                .as_ref()
                .map(|_| format!("/api/sessions/{}/samples/{sid}/patch?which={which}", s.id))
        };
        items.push(DisplayItem {
            id: sid,
            probability: net.classify(&sample.features)?,
            features: sample.features.clone(),
            before: link("before"),
            after: link("after"),
        });
    }
    Ok(DisplayView {
        iteration: state.iteration(),
        samp_pct: s.session.sampling_rate(),
        items,
    })
}

#[derive(Debug, Deserialize)]
struct Answer {
    id: u32,
    label: Label,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsRequest {
    answers: Vec<Answer>,
}

#[derive(Debug, Serialize)]
struct ProgressView {
    /// Iteration of the pending display, or of the last one once finished.
    iteration: usize,
    samp_pct: f64,
    phase: Phase,
    record: IterationRecord,
    history: MetricsHistory,
    auc: Option<f64>,
    display: Option<DisplayView>,
}

#[derive(Debug, Serialize)]
struct MetricsView {
    records: Vec<IterationRecord>,
    auc: Option<f64>,
    final_eer: Option<f64>,
    samp_pct: f64,
}

#[derive(Debug, Deserialize)]
struct PatchQuery {
    which: String,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateRequest = parse_body(&body)?;
    let source = match (req.dataset, req.synth) {
        (Some(name), None) => DatasetRef::Named { name },
        (None, Some(config)) => DatasetRef::Synthetic { config },
        _ => {
            return Err(Error::InvalidArgument("give exactly one of \"dataset\" or \"synth\"".into()).into())
        }
    };
    let config = req.config;
    let app2 = app.clone();
    let snapshot = blocking(move || {
        // An unknown dataset is a bad request, not a missing resource.
        let dataset = app2.resolve(&source).map_err(|e| match e {
            Error::NotFound(m) => Error::InvalidArgument(m),
            other => other,
        })?;
        let session = alloop::init_session(dataset, config)?;
        let now = store::now_ms();
        let snapshot = Snapshot {
            id: uuid::Uuid::new_v4().to_string(),
            dataset_ref: source,
            created_ms: now,
            updated_ms: now,
            session,
        };
        app2.store.save(&snapshot.record())?;
        Ok(snapshot)
    })
    .await?;
    log::info!("created session {}", snapshot.id);
    let view = SessionView::from(&snapshot);
    app.insert(snapshot.id.clone(), Entry::new(snapshot));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = app.entry(&id).await?;
    Ok(Json(SessionView::from(entry.snapshot().as_ref())))
}

async fn get_display(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<DisplayView>> {
    let entry = app.entry(&id).await?;
    let snapshot = entry.snapshot();
    Ok(Json(display_view(&snapshot)?))
}

async fn post_labels(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let req: LabelsRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let entry = match app.entry(&id).await {
        Ok(e) => e,
        Err(e) => return e.into_response(),
    };
    let Ok(guard) = entry.writer.clone().try_lock_owned() else {
        return Conflict("another label submission for this session is in progress").into_response();
    };
    let store = app.store.clone();
    let result = blocking(move || {
        let _guard = guard;
        let current = entry.snapshot();
        let mut next = (*current).clone();
        let answers: Vec<(u32, Label)> = req.answers.iter().map(|a| (a.id, a.label)).collect();
        let record = next.session.submit_labels(&answers)?.clone();
        next.updated_ms = store::now_ms();
        store.save(&next.record())?;
        let state = next.session.state();
        let view = ProgressView {
            iteration: state.iteration(),
            samp_pct: next.session.sampling_rate(),
            phase: state.phase,
            record,
            history: state.history.clone(),
            auc: state.history.auc().ok(),
            display: match state.phase {
                Phase::AwaitingLabels => Some(display_view(&next)?),
                _ => None,
            },
        };
        *entry.current.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(view)
    })
    .await;
    match result {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_metrics(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<MetricsView>> {
    let entry = app.entry(&id).await?;
    let s = entry.snapshot();
    let history = s.session.history();
    Ok(Json(MetricsView {
        records: history.records.clone(),
        auc: history.auc().ok(),
        final_eer: history.final_eer(),
        samp_pct: s.session.sampling_rate(),
    }))
}

async fn get_patch(
    State(app): State<Arc<AppState>>,
    Path((id, sid)): Path<(String, u32)>,
    Query(q): Query<PatchQuery>,
) -> ApiResult<impl IntoResponse> {
    let entry = app.entry(&id).await?;
    let s = entry.snapshot();
    let ds = s.session.dataset();
    let geom = ds
        .patch_geometry()
        .ok_or_else(|| Error::NotFound("dataset has no patches".into()))?;
    let sample = ds
        .get(sid)
        .ok_or_else(|| Error::NotFound(format!("sample {sid}")))?;
    let pair = sample
        .patches
        .as_ref()
        .ok_or_else(|| Error::NotFound(format!("sample {sid} has no patches")))?;
    let pixels = match q.which.as_str() {
        "before" => &pair.before,
        "after" => &pair.after,
        other => return Err(Error::InvalidArgument(format!("which must be before or after, got {other:?}")).into()),
    };
    let png = encode_png(geom, pixels)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

/// Lossless 8-bit PNG of an interleaved `w × h × c` patch.
pub fn encode_png(geom: PatchGeometry, pixels: &[u8]) -> crate::Result<Vec<u8>> {
    if pixels.len() != geom.byte_len() {
        return Err(Error::Shape(format!("{} bytes for a {geom:?} patch", pixels.len())));
    }
    let color = match geom.channels {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::InvalidArgument(format!("{c} channels cannot be encoded as PNG"))),
    };
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, geom.width as u32, geom.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Io(std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/display", get(get_display))
        .route("/api/sessions/{id}/labels", post(post_labels))
        .route("/api/sessions/{id}/metrics", get(get_metrics))
        .route("/api/sessions/{id}/samples/{sid}/patch", get(get_patch))
        .with_state(state)
}

/// Serves until Ctrl-C (or SIGTERM on Unix).
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
