//! Local HTTP/JSON service for the review UI. Binds to 127.0.0.1 only and
//! has no authentication.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use eegart_core::attention::AttentionMap;
use eegart_core::dataset::corpus::{labels_path, list_subjects, recording_path};
use eegart_core::dataset::LabelRecord;
use eegart_core::evaluation::{localize, Interval};
use eegart_core::signal::io::read_recording;
use eegart_core::signal::{prepare, raw_epochs, Label, Recording, EPOCH_S, WINDOWS_PER_EPOCH};
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationRecord, AnnotationStore, InsertError, Source, WindowVerdict};
use crate::display::{envelope, MAX_DISPLAY_POINTS};
use crate::files::{attention_path_for, read_jsonl, report_path, DetectionRow, ANNOTATIONS_FILE, DEFAULT_LOCALIZATION_THRESHOLD};

pub const DEFAULT_PORT: u16 = 8750;

pub struct AppState {
    data: PathBuf,
    /// Single writer for the annotation file.
    store: tokio::sync::Mutex<AnnotationStore>,
    prepared: Mutex<HashMap<String, Arc<Recording>>>,
}

impl AppState {
    pub fn open(data: &Path) -> anyhow::Result<Arc<Self>> {
        anyhow::ensure!(data.is_dir(), "{} is not a directory", data.display());
        Ok(Arc::new(Self {
            data: data.to_path_buf(),
            store: tokio::sync::Mutex::new(AnnotationStore::open(&data.join(ANNOTATIONS_FILE))?),
            prepared: Mutex::new(HashMap::new()),
        }))
    }

    fn known(&self, id: &str) -> bool {
        !id.contains(['/', '\\']) && !id.starts_with('.') && recording_path(&self.data, id).exists()
    }

    fn recording(&self, id: &str) -> Result<Arc<Recording>, ApiError> {
        if !self.known(id) {
            return Err(ApiError::not_found(format!("unknown recording `{id}`")));
        }
        if let Some(r) = self.prepared.lock().expect("cache lock").get(id) {
            return Ok(r.clone());
        }
        let rec = read_recording(&recording_path(&self.data, id))
            .and_then(|r| prepare(&r))
            .map_err(|e| ApiError::internal(format!("loading `{id}`: {e}")))?;
        let rec = Arc::new(rec);
        self.prepared.lock().expect("cache lock").insert(id.to_string(), rec.clone());
        Ok(rec)
    }

    fn report(&self, id: &str) -> Result<Option<Vec<DetectionRow>>, ApiError> {
        let p = report_path(&self.data, id);
        if !p.exists() {
            return Ok(None);
        }
        read_jsonl(&p).map(Some).map_err(|e| ApiError::internal(format!("{e:#}")))
    }

    fn attention(&self, id: &str, epoch: usize) -> Result<Option<AttentionMap>, ApiError> {
        let p = attention_path_for(&report_path(&self.data, id));
        if !p.exists() {
            return Ok(None);
        }
        let maps: Vec<AttentionMap> = read_jsonl(&p).map_err(|e| ApiError::internal(format!("{e:#}")))?;
        Ok(maps.into_iter().find(|m| m.epoch_index == epoch))
    }

    fn labels(&self, id: &str) -> Result<Option<BTreeMap<usize, LabelRecord>>, ApiError> {
        let p = labels_path(&self.data, id);
        if !p.exists() {
            return Ok(None);
        }
        let rows: Vec<LabelRecord> = read_jsonl(&p).map_err(|e| ApiError::internal(format!("{e:#}")))?;
        Ok(Some(rows.into_iter().map(|r| (r.epoch_index, r)).collect()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(m: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: m.into() }
    }
    fn not_found(m: impl Into<String>) -> Self {
        Self { status: StatusCode::NOT_FOUND, message: m.into() }
    }
    fn conflict(m: impl Into<String>) -> Self {
        Self { status: StatusCode::CONFLICT, message: m.into() }
    }
    fn internal(m: impl Into<String>) -> Self {
        Self { status: StatusCode::INTERNAL_SERVER_ERROR, message: m.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub id: String,
    pub epochs: usize,
    pub duration_s: f64,
    pub has_report: bool,
    pub has_attention: bool,
    pub flagged: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rate_hz: f64,
    pub samples: usize,
    /// `[t_s, uV]` pairs, epoch-local time.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Request,
    Model,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochView {
    pub recording_id: String,
    pub epoch_index: usize,
    pub start_s: f64,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub trace: Trace,
    pub artifact_prob: Option<f64>,
    pub flagged: Option<bool>,
    pub attention: Option<AttentionMap>,
    pub intervals: Vec<Interval>,
    pub window_labels: Option<[Label; WINDOWS_PER_EPOCH]>,
    pub annotations: Vec<AnnotationRecord>,
}

/// Body of `POST /annotations`; a missing timestamp is filled in by the
/// server.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub recording_id: String,
    pub epoch_index: usize,
    pub window_index: usize,
    pub source: Source,
    pub verdict: WindowVerdict,
    pub threshold_at_decision: f64,
    #[serde(default)]
    pub timestamp: Option<String>,
}

type Shared = Arc<AppState>;

async fn recordings(State(st): State<Shared>) -> Result<Json<Vec<RecordingSummary>>, ApiError> {
    let ids = list_subjects(&st.data).map_err(|e| ApiError::internal(e.to_string()))?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let rec = st.recording(&id)?;
        let report = st.report(&id)?;
        out.push(RecordingSummary {
            epochs: raw_epochs(&rec, EPOCH_S).len(),
            duration_s: rec.duration_s(),
            has_report: report.is_some(),
            has_attention: attention_path_for(&report_path(&st.data, &id)).exists(),
            flagged: report.map(|r| r.iter().filter(|x| x.flagged).count()),
            id,
        });
    }
    Ok(Json(out))
}

fn parse_threshold(q: &HashMap<String, String>) -> Result<Option<f64>, ApiError> {
    match q.get("threshold") {
        None => Ok(None),
        Some(s) => match s.parse::<f64>() {
            Ok(t) if (0.0..=1.0).contains(&t) => Ok(Some(t)),
            _ => Err(ApiError::bad_request(format!("threshold `{s}` must be a number in [0, 1]"))),
        },
    }
}

async fn epoch(
    State(st): State<Shared>,
    UrlPath((id, idx)): UrlPath<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<EpochView>, ApiError> {
    let idx: usize = idx.parse().map_err(|_| ApiError::bad_request(format!("epoch index `{idx}` is not a non-negative integer")))?;
    let requested = parse_threshold(&q)?;
    let rec = st.recording(&id)?;
    let epochs = raw_epochs(&rec, EPOCH_S);
    let values = epochs
        .get(idx)
        .ok_or_else(|| ApiError::not_found(format!("recording `{id}` has {} epochs, no epoch {idx}", epochs.len())))?;
    let row = st.report(&id)?.and_then(|rows| rows.into_iter().find(|r| r.epoch_index == idx));
    let (threshold, threshold_source) = match (requested, row.as_ref().and_then(|r| r.localization_threshold)) {
        (Some(t), _) => (t, ThresholdSource::Request),
        (None, Some(t)) => (t, ThresholdSource::Model),
        (None, None) => (DEFAULT_LOCALIZATION_THRESHOLD, ThresholdSource::Default),
    };
    let attention = st.attention(&id, idx)?;
    let intervals = attention.as_ref().map(|m| localize(m, threshold)).unwrap_or_default();
    let dt = 1.0 / rec.rate_hz;
    let annotations = st.store.lock().await.for_recording(&id).into_iter().filter(|a| a.epoch_index == idx).collect();
    Ok(Json(EpochView {
        start_s: rec.start_offset_s + idx as f64 * EPOCH_S,
        threshold,
        threshold_source,
        trace: Trace {
            rate_hz: rec.rate_hz,
            samples: values.len(),
            points: envelope(values, MAX_DISPLAY_POINTS).into_iter().map(|(i, v)| (i as f64 * dt, v)).collect(),
        },
        artifact_prob: row.as_ref().map(|r| r.artifact_prob),
        flagged: row.as_ref().map(|r| r.flagged),
        attention,
        intervals,
        window_labels: st.labels(&id)?.and_then(|l| l.get(&idx).map(|r| r.window_labels)),
        annotations,
        recording_id: id,
        epoch_index: idx,
    }))
}

async fn report(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<Vec<DetectionRow>>, ApiError> {
    if !st.known(&id) {
        return Err(ApiError::not_found(format!("unknown recording `{id}`")));
    }
    st.report(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no report for `{id}`")))
}

async fn list_annotations(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<Vec<AnnotationRecord>>, ApiError> {
    if !st.known(&id) {
        return Err(ApiError::not_found(format!("unknown recording `{id}`")));
    }
    Ok(Json(st.store.lock().await.for_recording(&id)))
}

async fn post_annotation(State(st): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<AnnotationRecord>), ApiError> {
    let req: AnnotationRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid annotation: {e}")))?;
    if req.window_index >= WINDOWS_PER_EPOCH {
        return Err(ApiError::bad_request(format!("window_index {} must be below {WINDOWS_PER_EPOCH}", req.window_index)));
    }
    if !(0.0..=1.0).contains(&req.threshold_at_decision) {
        return Err(ApiError::bad_request("threshold_at_decision must lie in [0, 1]"));
    }
    let timestamp = match req.timestamp {
        Some(t) => {
            chrono::DateTime::parse_from_rfc3339(&t)
                .map_err(|e| ApiError::bad_request(format!("timestamp `{t}` is not ISO-8601/RFC 3339: {e}")))?;
            t
        }
        None => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    let rec = st.recording(&req.recording_id)?;
    let n = raw_epochs(&rec, EPOCH_S).len();
    if req.epoch_index >= n {
        return Err(ApiError::bad_request(format!("recording `{}` has {n} epochs", req.recording_id)));
    }
    let record = AnnotationRecord {
        recording_id: req.recording_id,
        epoch_index: req.epoch_index,
        window_index: req.window_index,
        source: req.source,
        verdict: req.verdict,
        threshold_at_decision: req.threshold_at_decision,
        timestamp,
    };
    match st.store.lock().await.insert(record.clone()) {
        Ok(()) => Ok((StatusCode::CREATED, Json(record))),
        Err(InsertError::Duplicate) => Err(ApiError::conflict(format!(
            "{:?} verdict for {} epoch {} window {} already recorded",
            record.source, record.recording_id, record.epoch_index, record.window_index
        ))),
        Err(InsertError::Io(e)) => Err(ApiError::internal(format!("{e:#}"))),
    }
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/recordings", get(recordings))
        .route("/epochs/{rec}/{idx}", get(epoch))
        .route("/report/{rec}", get(report))
        .route("/annotations", axum::routing::post(post_annotation))
        .route("/annotations/{rec}", get(list_annotations))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until interrupted. Fails when the port is taken.
pub fn serve(port: u16, data: &Path) -> anyhow::Result<()> {
    let state = AppState::open(data)?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .with_context(|| format!("cannot listen on 127.0.0.1:{port}"))?;
        eprintln!("serving {} on http://127.0.0.1:{port}", data.display());
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
