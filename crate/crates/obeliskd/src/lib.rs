//! Stand-in orchestration service for the encrypted-analytics pipeline.
//!
//! One stateless HTTP API fronts three stores (encrypted samples and
//! results, key-share envelopes with expiry, analysis metadata), a
//! dispatcher for ad hoc jobs and a micro-batcher for streaming
//! registrations, and the 2-of-3 result agreement rule. All state lives in
//! the stores; the handlers keep nothing in memory, so the service can be
//! killed and restarted between any two calls.

pub mod api;
pub mod store;

use api::*;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use moz_core::aesgcm::{NONCE_BYTES, SAMPLE_RECORD_BYTES, TAG_BYTES};
use moz_core::consent::ENVELOPE_BYTES;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use store::Store;
use tokio::sync::{mpsc, oneshot};

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap()
        .as_millis() as u64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Principal {
    User { user: String },
    Party { party: u8 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObeliskConfig {
    pub bind: String,
    /// Persistence root; in-memory when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Bearer token -> principal.
    pub tokens: HashMap<String, Principal>,
    /// Token this service presents when dispatching to parties.
    pub dispatch_token: String,
    /// Party base URLs in index order (1, 2, 3).
    pub parties: Vec<String>,
    /// Micro-batch flush timeout: a partial batch older than this is
    /// dispatched even below the batch size.
    #[serde(default = "default_flush_ms")]
    pub flush_interval_ms: u64,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    /// Platform cap on requested batch sizes.
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default = "default_keyshare_ttl")]
    pub keyshare_ttl_ms: u64,
}

fn default_flush_ms() -> u64 {
    2000
}
fn default_tick_ms() -> u64 {
    100
}
fn default_max_batch() -> usize {
    512
}
fn default_keyshare_ttl() -> u64 {
    3_600_000
}

#[derive(Clone, Serialize, Deserialize)]
pub struct StoredSample {
    pub user_id: String,
    pub timestamp_ms: u64,
    pub nonce: Vec<u8>,
    pub ct: Vec<u8>,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct KeyShareEnvelopes {
    pub envelopes: [Vec<u8>; 3],
    pub expires_ms: u64,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub analysis_id: String,
    pub user_id: String,
    pub analysis_type: String,
    pub parties: Vec<u8>,
    pub scope: AnalysisScope,
    /// Set on stream-batch children: the registration holding the
    /// envelopes.
    pub parent_stream: Option<String>,
    pub state: AnalysisState,
    pub submitted_ms: u64,
    pub dispatched_ms: Option<u64>,
    pub stored_ms: Option<u64>,
    pub result: Option<Vec<u8>>,
    pub failure_reason: Option<String>,
    pub submissions: Vec<ResultSubmission>,
    pub audit: Vec<String>,
    /// Children of a stream registration.
    pub batches: Vec<String>,
    /// Stream bookkeeping: claimed data ids and the accumulating batch.
    pub claimed: Vec<u64>,
    pub pending: Vec<u64>,
    pub pending_since_ms: Option<u64>,
}

impl AnalysisRecord {
    fn view(&self) -> AnalysisView {
        AnalysisView {
            analysis_id: self.analysis_id.clone(),
            user_id: self.user_id.clone(),
            analysis_type: self.analysis_type.clone(),
            state: self.state,
            submitted_ms: self.submitted_ms,
            dispatched_ms: self.dispatched_ms,
            stored_ms: self.stored_ms,
            failure_reason: self.failure_reason.clone(),
            batches: self.batches.clone(),
            data_ids: match &self.scope {
                AnalysisScope::Adhoc { data_ids } => data_ids.clone(),
                AnalysisScope::Stream { .. } => Vec::new(),
            },
            audit: self.audit.clone(),
        }
    }
}

pub struct AppState {
    pub cfg: ObeliskConfig,
    samples: Store<StoredSample>,
    pending: Store<StoredSample>,
    analyses: Store<AnalysisRecord>,
    keyshares: Store<KeyShareEnvelopes>,
    commit_tx: mpsc::UnboundedSender<String>,
    dispatch_tx: mpsc::UnboundedSender<Vec<JobSpec>>,
    http: reqwest::Client,
}

fn sample_key(user: &str, ts: u64) -> String {
    format!("{user}\u{1f}{ts:020}")
}

pub fn random_id(prefix: &str) -> String {
    let mut bytes = [0u8; 12];
    rand::thread_rng().fill_bytes(&mut bytes);
    format!("{prefix}-{}", hex::encode(bytes))
}

// ---------------------------------------------------------------------------
// Error plumbing

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}
fn denied() -> ApiError {
    ApiError(StatusCode::FORBIDDEN, "not authorized".into())
}
fn not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "not found".into())
}

type ApiResult<T> = Result<T, ApiError>;

fn principal(state: &AppState, headers: &HeaderMap) -> ApiResult<Principal> {
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError(StatusCode::UNAUTHORIZED, "missing bearer token".into()))?;
    state
        .cfg
        .tokens
        .get(token)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::UNAUTHORIZED, "unknown token".into()))
}

fn require_user(state: &AppState, headers: &HeaderMap) -> ApiResult<String> {
    match principal(state, headers)? {
        Principal::User { user } => Ok(user),
        _ => Err(denied()),
    }
}

fn require_party(state: &AppState, headers: &HeaderMap) -> ApiResult<u8> {
    match principal(state, headers)? {
        Principal::Party { party } => Ok(party),
        _ => Err(denied()),
    }
}

// ---------------------------------------------------------------------------
// Handlers

async fn ingest(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<IngestRequest>,
) -> ApiResult<StatusCode> {
    let user = require_user(&state, &headers)?;
    if user != req.user_id {
        return Err(denied());
    }
    let nonce = from_b64(&req.nonce_b64).map_err(|_| bad("nonce not base64"))?;
    let ct = from_b64(&req.ct_b64).map_err(|_| bad("ct not base64"))?;
    if nonce.len() != NONCE_BYTES {
        return Err(bad(format!("nonce must be {NONCE_BYTES} bytes")));
    }
    if nonce.len() + ct.len() != SAMPLE_RECORD_BYTES {
        return Err(bad(format!(
            "record must total {SAMPLE_RECORD_BYTES} bytes, got {}",
            nonce.len() + ct.len()
        )));
    }
    if ct.len() <= TAG_BYTES {
        return Err(bad("ciphertext too short"));
    }
    let key = sample_key(&req.user_id, req.timestamp_ms);
    if state.samples.contains(&key) || state.pending.contains(&key) {
        return Err(ApiError(
            StatusCode::CONFLICT,
            format!("timestamp {} already ingested", req.timestamp_ms),
        ));
    }
    // Durable before queryable: the pending store is written synchronously,
    // the commit stage moves it into the queryable store asynchronously.
    state.pending.put(
        &key,
        StoredSample {
            user_id: req.user_id,
            timestamp_ms: req.timestamp_ms,
            nonce,
            ct,
        },
    );
    let _ = state.commit_tx.send(key);
    Ok(StatusCode::NO_CONTENT)
}

async fn request_analysis(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<AnalysisRequest>,
) -> ApiResult<Json<AnalysisCreated>> {
    let user = require_user(&state, &headers)?;
    if user != req.user_id {
        return Err(denied());
    }
    if req.parties != vec![1, 2, 3] {
        return Err(bad("party set must be [1, 2, 3]"));
    }
    let mut envelopes: [Vec<u8>; 3] = Default::default();
    for (i, env) in req.envelopes_b64.iter().enumerate() {
        let bytes = from_b64(env).map_err(|_| bad("envelope not base64"))?;
        if bytes.len() != ENVELOPE_BYTES {
            return Err(bad(format!("envelope {i} must be {ENVELOPE_BYTES} bytes")));
        }
        envelopes[i] = bytes;
    }
    let now = now_ms();
    let (analysis_id, expires_ms) = match &req.scope {
        AnalysisScope::Adhoc { data_ids } => {
            if data_ids.is_empty() {
                return Err(bad("no data ids"));
            }
            if data_ids.len() > state.cfg.max_batch {
                return Err(bad(format!("batch exceeds platform cap {}", state.cfg.max_batch)));
            }
            for id in data_ids {
                if !state.samples.contains(&sample_key(&req.user_id, *id)) {
                    return Err(ApiError(
                        StatusCode::NOT_FOUND,
                        format!("data id {id} unknown"),
                    ));
                }
            }
            (random_id("an"), now + state.cfg.keyshare_ttl_ms)
        }
        AnalysisScope::Stream {
            t_begin_ms,
            t_end_ms,
            batch_size,
        } => {
            if t_end_ms < t_begin_ms {
                return Err(bad("stream window ends before it begins"));
            }
            if *batch_size == 0 {
                return Err(bad("batch size must be positive"));
            }
            (random_id("st"), *t_end_ms + state.cfg.keyshare_ttl_ms)
        }
    };
    state
        .keyshares
        .put(&analysis_id, KeyShareEnvelopes { envelopes, expires_ms });
    let record = AnalysisRecord {
        analysis_id: analysis_id.clone(),
        user_id: req.user_id.clone(),
        analysis_type: req.analysis_type.clone(),
        parties: req.parties.clone(),
        scope: req.scope.clone(),
        parent_stream: None,
        state: AnalysisState::Queued,
        submitted_ms: now,
        dispatched_ms: None,
        stored_ms: None,
        result: None,
        failure_reason: None,
        submissions: Vec::new(),
        audit: Vec::new(),
        batches: Vec::new(),
        claimed: Vec::new(),
        pending: Vec::new(),
        pending_since_ms: None,
    };
    state.analyses.put(&analysis_id, record);

    if let AnalysisScope::Adhoc { data_ids } = &req.scope {
        let job = JobSpec {
            analysis_id: analysis_id.clone(),
            user_id: req.user_id,
            data_ids: data_ids.clone(),
            analysis_type: req.analysis_type,
            mode: JobMode::Adhoc,
            window_ms: None,
        };
        let _ = state.dispatch_tx.send(vec![job]);
    }
    Ok(Json(AnalysisCreated { analysis_id }))
}

async fn analysis_view(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<AnalysisView>> {
    let record = state.analyses.get(&id).ok_or_else(not_found)?;
    match principal(&state, &headers)? {
        Principal::User { user } if user == record.user_id => {}
        Principal::Party { .. } => {}
        _ => return Err(denied()),
    }
    Ok(Json(record.view()))
}

async fn get_result(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<ResultResponse>> {
    let user = require_user(&state, &headers)?;
    let record = state.analyses.get(&id).ok_or_else(not_found)?;
    if record.user_id != user {
        return Err(denied());
    }
    match (record.state, record.result, record.stored_ms) {
        (AnalysisState::Done, Some(ct), Some(stored_ms)) => Ok(Json(ResultResponse {
            analysis_id: id,
            ct_b64: b64(&ct),
            stored_ms,
        })),
        _ => Err(ApiError(
            StatusCode::CONFLICT,
            format!("analysis is {:?}", record.state),
        )),
    }
}

#[derive(Deserialize)]
struct DataQuery {
    user_id: String,
    /// Comma-separated timestamps.
    ids: String,
}

async fn get_data(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<DataQuery>,
) -> ApiResult<Json<Vec<DataRecord>>> {
    require_party(&state, &headers)?;
    let mut out = Vec::new();
    for id in q.ids.split(',').filter(|s| !s.is_empty()) {
        let ts: u64 = id.parse().map_err(|_| bad(format!("bad id {id}")))?;
        let sample = state
            .samples
            .get(&sample_key(&q.user_id, ts))
            .ok_or_else(not_found)?;
        out.push(DataRecord {
            timestamp_ms: ts,
            nonce_b64: b64(&sample.nonce),
            ct_b64: b64(&sample.ct),
        });
    }
    Ok(Json(out))
}

async fn get_keyshare(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path((id, party)): Path<(String, u8)>,
) -> ApiResult<Json<KeyShareResponse>> {
    let caller = require_party(&state, &headers)?;
    if caller != party {
        return Err(denied());
    }
    if !(1..=3).contains(&party) {
        return Err(bad("party index out of range"));
    }
    let record = state.analyses.get(&id).ok_or_else(not_found)?;
    let owner = record.parent_stream.clone().unwrap_or_else(|| id.clone());
    let shares = state.keyshares.get(&owner).ok_or_else(|| {
        ApiError(StatusCode::GONE, "key shares deleted or expired".into())
    })?;
    if now_ms() > shares.expires_ms {
        state.keyshares.remove(&owner);
        return Err(ApiError(StatusCode::GONE, "key shares expired".into()));
    }
    Ok(Json(KeyShareResponse {
        envelope_b64: b64(&shares.envelopes[party as usize - 1]),
    }))
}

async fn accept_result(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(submission): Json<ResultSubmission>,
) -> ApiResult<StatusCode> {
    let caller = require_party(&state, &headers)?;
    if caller != submission.party {
        return Err(denied());
    }
    let ct = match (&submission.status, &submission.ct_b64) {
        (SubmissionStatus::Ok, Some(b)) => {
            Some(from_b64(b).map_err(|_| bad("result not base64"))?)
        }
        (SubmissionStatus::Ok, None) => return Err(bad("ok submission without ciphertext")),
        (SubmissionStatus::Failed, _) => None,
    };
    let mut finished: Option<(String, Option<String>)> = None;
    let updated = state.analyses.update(&id, |record| {
        if !record.parties.contains(&submission.party) {
            return Err(denied());
        }
        if record.state == AnalysisState::Done || record.state == AnalysisState::Failed {
            // The 2-of-3 rule already decided. A matching third submission
            // is the expected happy path; anything else is audited.
            let matches_final = match (&submission.status, &submission.ct_b64, &record.result) {
                (SubmissionStatus::Ok, Some(b), Some(result)) => {
                    from_b64(b).ok().as_deref() == Some(result.as_slice())
                }
                _ => false,
            };
            if !matches_final {
                record.audit.push(format!(
                    "late divergent submission from party {} after {:?}",
                    submission.party, record.state
                ));
            }
            return Ok(StatusCode::ACCEPTED);
        }
        if record
            .submissions
            .iter()
            .any(|s| s.party == submission.party)
        {
            record
                .audit
                .push(format!("duplicate submission from party {}", submission.party));
            return Ok(StatusCode::ACCEPTED);
        }
        record.submissions.push(submission.clone());

        // 2-of-3 agreement on the ciphertext bytes.
        let ok_bodies: Vec<Vec<u8>> = record
            .submissions
            .iter()
            .filter(|s| s.status == SubmissionStatus::Ok)
            .filter_map(|s| s.ct_b64.as_ref().and_then(|b| from_b64(b).ok()))
            .collect();
        let agreed = ok_bodies
            .iter()
            .find(|candidate| ok_bodies.iter().filter(|other| other == &*candidate).count() >= 2)
            .cloned();
        if let Some(result) = agreed {
            record.state = AnalysisState::Done;
            record.stored_ms = Some(now_ms());
            record.result = Some(result.clone());
            for s in &record.submissions {
                let divergent = match (&s.status, &s.ct_b64) {
                    (SubmissionStatus::Ok, Some(b)) => {
                        from_b64(b).ok().as_deref() != Some(result.as_slice())
                    }
                    _ => true,
                };
                if divergent {
                    record
                        .audit
                        .push(format!("party {} diverged from the agreed result", s.party));
                }
            }
            finished = Some((record.parent_stream.clone().unwrap_or_else(|| id.clone()), None));
            return Ok(StatusCode::OK);
        }
        let failures = record
            .submissions
            .iter()
            .filter(|s| s.status == SubmissionStatus::Failed)
            .count();
        if record.submissions.len() == 3 || failures >= 2 {
            let reason = record
                .submissions
                .iter()
                .find_map(|s| s.reason.clone())
                .unwrap_or_else(|| "no-agreement".into());
            record.state = AnalysisState::Failed;
            record.failure_reason = Some(reason.clone());
            finished = Some((
                record.parent_stream.clone().unwrap_or_else(|| id.clone()),
                Some(reason),
            ));
        }
        Ok(StatusCode::ACCEPTED)
    });
    let code = updated.ok_or_else(not_found)??;
    if let Some((owner, _)) = finished {
        // Key shares are deleted on completion; stream registrations keep
        // theirs until the window closes.
        if owner == id {
            state.keyshares.remove(&owner);
        }
        let _ = ct;
    }
    Ok(code)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

// ---------------------------------------------------------------------------
// Dispatch and micro-batching

/// Posts one dispatch to all three parties. Runs only on the single
/// dispatcher task so every party observes the same job order; the parties
/// process their queues sequentially, which keeps the protocol sessions
/// aligned.
async fn dispatch_jobs(state: &Arc<AppState>, jobs: Vec<JobSpec>) {
    if jobs.is_empty() {
        return;
    }
    let body = DispatchRequest { jobs: jobs.clone() };
    let mut failure: Option<String> = None;
    for url in &state.cfg.parties {
        let res = state
            .http
            .post(format!("{url}/analyse"))
            .bearer_auth(&state.cfg.dispatch_token)
            .json(&body)
            .send()
            .await;
        match res {
            Ok(resp) if resp.status().is_success() => {}
            Ok(resp) => {
                failure = Some(format!("party {url} rejected dispatch: {}", resp.status()));
                break;
            }
            Err(e) => {
                failure = Some(format!("party {url} unreachable: {e}"));
                break;
            }
        }
    }
    let now = now_ms();
    for job in &jobs {
        state.analyses.update(&job.analysis_id, |record| {
            if let Some(reason) = &failure {
                if record.state == AnalysisState::Queued {
                    record.state = AnalysisState::Failed;
                    record.failure_reason = Some(reason.clone());
                }
            } else {
                record.dispatched_ms = Some(now);
                // a submission may already have decided the outcome
                if record.state == AnalysisState::Queued {
                    record.state = AnalysisState::Running;
                }
            }
        });
    }
}

/// One micro-batcher pass: claims freshly committed records for active
/// streams, then dispatches full batches (or stale partial ones) from all
/// streams as one aggregated multi-user job.
async fn batcher_tick(state: &Arc<AppState>) {
    let now = now_ms();
    let streams = state
        .analyses
        .filter(|r| matches!(r.scope, AnalysisScope::Stream { .. }) && r.parent_stream.is_none());
    let mut jobs: Vec<JobSpec> = Vec::new();
    for (stream_id, stream) in streams {
        let AnalysisScope::Stream {
            t_begin_ms,
            t_end_ms,
            batch_size,
        } = stream.scope
        else {
            continue;
        };
        if stream.state == AnalysisState::Failed || stream.state == AnalysisState::Done {
            continue;
        }
        let cap = batch_size.min(state.cfg.max_batch).max(1);
        // collect committed, unclaimed records inside the window
        let fresh: Vec<u64> = {
            let user = stream.user_id.clone();
            let claimed = stream.claimed.clone();
            let mut ids: Vec<u64> = state
                .samples
                .filter(|s| {
                    s.user_id == user
                        && s.timestamp_ms >= t_begin_ms
                        && s.timestamp_ms <= t_end_ms
                        && !claimed.contains(&s.timestamp_ms)
                })
                .into_iter()
                .map(|(_, s)| s.timestamp_ms)
                .collect();
            ids.sort_unstable();
            ids
        };
        let mut batches: Vec<Vec<u64>> = Vec::new();
        state.analyses.update(&stream_id, |record| {
            record.claimed.extend(&fresh);
            if record.pending.is_empty() && !fresh.is_empty() {
                record.pending_since_ms = Some(now);
            }
            record.pending.extend(&fresh);
            while record.pending.len() >= cap {
                let batch: Vec<u64> = record.pending.drain(..cap).collect();
                batches.push(batch);
                record.pending_since_ms = (!record.pending.is_empty()).then_some(now);
            }
            let stale = record
                .pending_since_ms
                .is_some_and(|t| now.saturating_sub(t) >= state.cfg.flush_interval_ms);
            let window_over = now > t_end_ms;
            if !record.pending.is_empty() && (stale || window_over) {
                batches.push(std::mem::take(&mut record.pending));
                record.pending_since_ms = None;
            }
            if window_over && record.pending.is_empty() && record.state == AnalysisState::Queued {
                record.state = AnalysisState::Done;
                record.stored_ms = Some(now);
            }
        });
        if now > t_end_ms {
            // the consent window closed: drop the stored envelopes
            if state
                .analyses
                .get(&stream_id)
                .is_some_and(|r| r.pending.is_empty())
            {
                state.keyshares.remove(&stream_id);
            }
        }
        for batch in batches {
            let child_id = random_id("an");
            let child = AnalysisRecord {
                analysis_id: child_id.clone(),
                user_id: stream.user_id.clone(),
                analysis_type: stream.analysis_type.clone(),
                parties: stream.parties.clone(),
                scope: AnalysisScope::Adhoc {
                    data_ids: batch.clone(),
                },
                parent_stream: Some(stream_id.clone()),
                state: AnalysisState::Queued,
                submitted_ms: now,
                dispatched_ms: None,
                stored_ms: None,
                result: None,
                failure_reason: None,
                submissions: Vec::new(),
                audit: Vec::new(),
                batches: Vec::new(),
                claimed: Vec::new(),
                pending: Vec::new(),
                pending_since_ms: None,
            };
            state.analyses.put(&child_id, child);
            state.analyses.update(&stream_id, |record| {
                record.batches.push(child_id.clone());
                record.state = AnalysisState::Running;
            });
            jobs.push(JobSpec {
                analysis_id: child_id,
                user_id: stream.user_id.clone(),
                data_ids: batch,
                analysis_type: stream.analysis_type.clone(),
                mode: JobMode::Stream,
                window_ms: Some((t_begin_ms, t_end_ms)),
            });
        }
    }
    let _ = state.dispatch_tx.send(jobs);
}

// ---------------------------------------------------------------------------
// Server lifecycle

type StateChannels = (
    Arc<AppState>,
    mpsc::UnboundedReceiver<String>,
    mpsc::UnboundedReceiver<Vec<JobSpec>>,
);

pub fn build_state(cfg: ObeliskConfig) -> anyhow::Result<StateChannels> {
    let dir = cfg.data_dir.clone();
    let root = dir.as_deref();
    let (commit_tx, commit_rx) = mpsc::unbounded_channel();
    let (dispatch_tx, dispatch_rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState {
        samples: Store::open(root, "samples")?,
        pending: Store::open(root, "pending")?,
        analyses: Store::open(root, "analyses")?,
        keyshares: Store::open(root, "keyshares")?,
        commit_tx,
        dispatch_tx,
        http: reqwest::Client::new(),
        cfg,
    });
    Ok((state, commit_rx, dispatch_rx))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/analysis", post(request_analysis))
        .route("/analysis/{id}", get(analysis_view))
        .route("/result/{id}", get(get_result))
        .route("/result/{id}", post(accept_result))
        .route("/data", get(get_data))
        .route("/keyshare/{id}/{party}", get(get_keyshare))
        .route("/health", get(health))
        .with_state(state)
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

/// Binds, spawns the commit stage and the micro-batcher, and serves until
/// stopped.
pub async fn serve(cfg: ObeliskConfig) -> anyhow::Result<ServerHandle> {
    let (state, mut commit_rx, mut dispatch_rx) = build_state(cfg)?;

    let dispatcher_state = Arc::clone(&state);
    tokio::spawn(async move {
        while let Some(jobs) = dispatch_rx.recv().await {
            dispatch_jobs(&dispatcher_state, jobs).await;
        }
    });

    // Commit stage: anything acked lands in the queryable store slightly
    // later; leftovers from a previous run are committed at startup.
    for key in state.pending.keys() {
        if let Some(sample) = state.pending.get(&key) {
            state.samples.put(&key, sample);
            state.pending.remove(&key);
        }
    }
    let committer_state = Arc::clone(&state);
    tokio::spawn(async move {
        while let Some(key) = commit_rx.recv().await {
            if let Some(sample) = committer_state.pending.get(&key) {
                committer_state.samples.put(&key, sample);
                committer_state.pending.remove(&key);
            }
        }
    });

    let batcher_state = Arc::clone(&state);
    let tick = batcher_state.cfg.tick_ms.max(10);
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(std::time::Duration::from_millis(tick));
        loop {
            interval.tick().await;
            batcher_tick(&batcher_state).await;
        }
    });

    let listener = tokio::net::TcpListener::bind(&state.cfg.bind).await?;
    let addr = listener.local_addr()?;
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let app = router(state);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await;
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        task,
    })
}
