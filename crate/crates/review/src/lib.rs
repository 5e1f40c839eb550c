//! HTTP service for human verification of affordance annotations.
//!
//! The service reads a dataset directory (and, when present, the pipeline's
//! `annotations.jsonl` inside it), serves records and rendered overlays, and
//! records accept/reject/adjust decisions in an append-only JSONL log. Review
//! state is always the fold of that log over the dataset's records.

pub mod log;
pub mod overlay;
pub mod state;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use affordkit::annotation::{read_annotations, AnnotationRecord, AnnotationResult};
use affordkit::dataset::{load_dataset, DatasetError, LoadedDataset};
use affordkit::heatmap::DEFAULT_SIGMA;
use affordkit::record::DatasetRecord;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

pub use log::{DecisionBody, DecisionLog, LogError, Replay, ReviewDecision, Verdict};
pub use state::{Progress, ReviewState, ReviewStatus};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Annotations(String),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared service state: immutable dataset view, review state guarded by a
/// reader-writer lock, and the single log writer.
pub struct ReviewService {
    dataset: LoadedDataset,
    /// Record indices sorted by id.
    order: Vec<usize>,
    annotations: HashMap<String, AnnotationResult>,
    state: RwLock<ReviewState>,
    log: Mutex<DecisionLog>,
}

impl ReviewService {
    pub fn open(dataset_dir: &Path, log_path: &Path) -> Result<Self, ServiceError> {
        let dataset = load_dataset(dataset_dir)?;
        for e in &dataset.line_errors {
            tracing::warn!(line = e.line, "skipping record: {}", e.message);
        }
        let annotations_path = dataset_dir.join(ANNOTATIONS_FILE);
        let annotations = if annotations_path.exists() {
            read_annotations(&annotations_path)
                .map_err(|e| ServiceError::Annotations(e.to_string()))?
                .into_iter()
                .map(|AnnotationRecord { id, result }| (id, result))
                .collect()
        } else {
            HashMap::new()
        };
        let mut order: Vec<usize> = (0..dataset.records.len()).collect();
        order.sort_by(|&a, &b| dataset.records[a].id.cmp(&dataset.records[b].id));

        let (log, replay) = DecisionLog::open(log_path)?;
        for line in &replay.skipped_lines {
            tracing::warn!(line, "ignoring unreadable decision log line");
        }
        let ids = dataset.records.iter().map(|r| r.id.clone());
        let state = ReviewState::replay(ids, replay.decisions);
        Ok(Self {
            dataset,
            order,
            annotations,
            state: RwLock::new(state),
            log: Mutex::new(log),
        })
    }

    pub fn progress(&self) -> Progress {
        self.state.read().expect("state lock").progress()
    }

    fn record(&self, id: &str) -> Result<(usize, &DatasetRecord), ApiError> {
        self.dataset
            .find(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown record {id}")))
    }

    /// Validates and durably records a decision, then folds it into the
    /// state. Appends are serialized, so state order equals log order.
    pub fn decide(&self, id: &str, body: DecisionBody) -> Result<ReviewDecision, ApiError> {
        let (index, _) = self.record(id)?;
        validate_body(&body, self.dataset.image_sizes[index])?;
        let mut log = self.log.lock().expect("log lock");
        let decision = log
            .append(id, body)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        self.state
            .write()
            .expect("state lock")
            .apply(decision.clone());
        Ok(decision)
    }
}

fn validate_body(body: &DecisionBody, (width, height): (usize, usize)) -> Result<(), ApiError> {
    let invalid = |m: String| Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m));
    if body.reviewer.trim().is_empty() {
        return invalid("reviewer must not be empty".into());
    }
    match body.verdict {
        Verdict::Adjust => {
            if body.adjusted_points.is_empty() {
                return invalid("adjust requires at least one point".into());
            }
            if let Some(p) = body
                .adjusted_points
                .iter()
                .find(|p| !p.in_bounds(width, height))
            {
                return invalid(format!(
                    "point ({}, {}) outside {width}x{height} image",
                    p.u, p.v
                ));
            }
        }
        _ if !body.adjusted_points.is_empty() => {
            return invalid("adjusted_points are only allowed with verdict adjust".into());
        }
        _ => {}
    }
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

#[derive(Serialize)]
struct RecordSummary<'a> {
    id: &'a str,
    object_category: &'a str,
    action: &'a str,
    split: affordkit::record::Split,
    points: usize,
    status: ReviewStatus,
}

#[derive(Serialize)]
struct RecordPage<'a> {
    total: usize,
    offset: usize,
    limit: usize,
    items: Vec<RecordSummary<'a>>,
}

#[derive(Serialize)]
struct RecordDetail<'a> {
    record: &'a DatasetRecord,
    image_size: [usize; 2],
    status: ReviewStatus,
    points: &'a [affordkit::Point2D],
    latest: Option<&'a ReviewDecision>,
    history: &'a [ReviewDecision],
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<&'a AnnotationResult>,
}

type Shared = Arc<ReviewService>;

fn parse_param<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("bad {key}: {raw:?}"))),
    }
}

async fn list_records(
    State(svc): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let offset: usize = parse_param(&params, "offset", 0)?;
    let limit: usize = parse_param(&params, "limit", DEFAULT_PAGE_LIMIT)?;
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("limit must lie in 1..={MAX_PAGE_LIMIT}"),
        ));
    }
    let filter = match params.get("status").map(String::as_str) {
        None | Some("") | Some("all") => None,
        Some(s) => Some(ReviewStatus::parse(s).ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, format!("bad status: {s:?}"))
        })?),
    };
    let state = svc.state.read().expect("state lock");
    let matching: Vec<RecordSummary> = svc
        .order
        .iter()
        .map(|&i| &svc.dataset.records[i])
        .map(|r| RecordSummary {
            id: &r.id,
            object_category: &r.object_category,
            action: &r.action,
            split: r.split,
            points: r.points.len(),
            status: state.status(&r.id),
        })
        .filter(|s| filter.is_none_or(|f| s.status == f))
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip(offset).take(limit).collect();
    Ok(Json(RecordPage {
        total,
        offset,
        limit,
        items,
    })
    .into_response())
}

async fn get_record(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let (index, record) = svc.record(&id)?;
    let state = svc.state.read().expect("state lock");
    let (w, h) = svc.dataset.image_sizes[index];
    Ok(Json(RecordDetail {
        record,
        image_size: [w, h],
        status: state.status(&id),
        points: &record.points,
        latest: state.latest(&id),
        history: state.history(&id),
        pipeline: svc.annotations.get(&id),
    })
    .into_response())
}

fn load_photo(svc: &ReviewService, record: &DatasetRecord) -> Result<image::RgbImage, ApiError> {
    image::open(svc.dataset.resolve(&record.image_ref))
        .map(|i| i.to_rgb8())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_image(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let (_, record) = svc.record(&id)?;
    let photo = load_photo(&svc, record)?;
    Ok(png(overlay::encode_png(&photo)))
}

async fn get_overlay(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let (_, record) = svc.record(&id)?;
    let sigma: f64 = parse_param(&params, "sigma", DEFAULT_SIGMA)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "sigma must be > 0"));
    }
    let photo = load_photo(&svc, record)?;
    let bytes = overlay::render_overlay_png(&photo, &record.points, sigma)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(png(bytes))
}

async fn post_decision(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    svc.record(&id)?;
    let Json(body) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let svc2 = svc.clone();
    let decision = tokio::task::spawn_blocking(move || svc2.decide(&id, body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(decision).into_response())
}

async fn get_progress(State(svc): State<Shared>) -> Json<Progress> {
    Json(svc.progress())
}

/// API routes, plus the UI bundle from `static_dir` for everything else.
pub fn router(service: Arc<ReviewService>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/records", get(list_records))
        .route("/api/records/{id}", get(get_record))
        .route("/api/records/{id}/image", get(get_image))
        .route("/api/records/{id}/overlay", get(get_overlay))
        .route("/api/records/{id}/decision", post(post_decision))
        .route("/api/progress", get(get_progress))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub dataset: PathBuf,
    pub log: PathBuf,
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
}

/// Opens the service and serves until the process is stopped.
pub async fn serve(cfg: ServeConfig) -> Result<(), ServiceError> {
    let service = Arc::new(ReviewService::open(&cfg.dataset, &cfg.log)?);
    let p = service.progress();
    let app = router(service, cfg.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    tracing::info!(
        addr = %listener.local_addr()?,
        total = p.total,
        pending = p.pending,
        "review service listening"
    );
    axum::serve(listener, app).await?;
    Ok(())
}
