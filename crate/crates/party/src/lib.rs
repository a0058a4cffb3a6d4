//! The MPC party daemon.
//!
//! HTTP intake accepts dispatched jobs and queues them; a single worker
//! thread processes the queue strictly in order, one protocol session per
//! batch: fetch the encrypted data and the key-share envelope, derive the
//! consent context and unwrap the share, run distributed decryption,
//! batched inference and distributed encryption, and submit the result
//! ciphertext. Any protocol abort is reported to the orchestrator with its
//! reason code; no partial results are stored.

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use moz_core::aesgcm::{
    dist_dec_batch, dist_enc, GcmCiphertext, ResultContext, SharedKeySchedule, TAG_BYTES,
};
use moz_core::consent::{self, ConsentContext, ConsentScope, ALG_TOKEN};
use moz_core::infer::{flatten_batch, infer, unflatten_batch, Matrix, SharedModel};
use moz_core::net::TcpMesh;
use moz_core::session::{PairSeeds, PartyId, SecurityMode, Session};
use moz_core::{MpcError, MpcResult};
use obeliskd::api::{
    b64, from_b64, DataRecord, DispatchRequest, JobMode, JobSpec, KeyShareResponse,
    ResultSubmission, SubmissionStatus,
};
use rsa::pkcs8::DecodePrivateKey;
use rsa::RsaPrivateKey;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartyConfig {
    /// Party index in {1, 2, 3}.
    pub party: u8,
    /// HTTP intake bind address.
    pub bind: String,
    /// MPC peer listener bind address.
    pub peer_bind: String,
    /// Peer MPC addresses keyed by party index ("2" -> "host:port").
    pub peers: std::collections::HashMap<String, String>,
    pub orchestrator: String,
    /// Token presented to the orchestrator.
    pub orchestrator_token: String,
    /// Token the orchestrator must present on /analyse.
    pub intake_token: String,
    pub mode: SecurityMode,
    /// Path to this party's model share file.
    pub model_share: PathBuf,
    /// PKCS#8 PEM file with this party's RSA private key.
    pub sk_pem: PathBuf,
    /// 256-byte public-key encodings (hex) of parties 1..3.
    pub pk_hex: [String; 3],
    /// Pairwise PRF seeds, hex-encoded 32 bytes each.
    pub seed_prev_hex: String,
    pub seed_next_hex: String,
}

impl PartyConfig {
    pub fn party_id(&self) -> PartyId {
        PartyId::new(self.party).expect("party index in 1..=3")
    }

    fn seeds(&self) -> anyhow::Result<PairSeeds> {
        let prev: [u8; 32] = hex::decode(&self.seed_prev_hex)?
            .try_into()
            .map_err(|_| anyhow::anyhow!("seed_prev must be 32 bytes"))?;
        let next: [u8; 32] = hex::decode(&self.seed_next_hex)?
            .try_into()
            .map_err(|_| anyhow::anyhow!("seed_next must be 32 bytes"))?;
        Ok(PairSeeds { prev, next })
    }

    fn pk_bytes(&self) -> anyhow::Result<[Vec<u8>; 3]> {
        let mut out: [Vec<u8>; 3] = Default::default();
        for (i, hexpk) in self.pk_hex.iter().enumerate() {
            out[i] = hex::decode(hexpk)?;
        }
        Ok(out)
    }
}

/// Builds the associated-data consent context a job implies for this party
/// set.
pub fn derive_context(job: &JobSpec, party_pks: &[Vec<u8>; 3]) -> ConsentContext {
    let scope = match job.mode {
        JobMode::Adhoc => ConsentScope::AdHoc {
            data_ids: job.data_ids.clone(),
        },
        JobMode::Stream => {
            let (t_begin_ms, t_end_ms) = job.window_ms.unwrap_or((0, 0));
            ConsentScope::Stream {
                t_begin_ms,
                t_end_ms,
            }
        }
    };
    ConsentContext {
        user_id: job.user_id.clone(),
        party_pks: party_pks.clone(),
        scope,
        analysis_type: job.analysis_type.clone(),
        cipher_alg: ALG_TOKEN.into(),
    }
}

/// Streaming jobs may only run while the consented window is open.
pub fn check_stream_window(job: &JobSpec, now_ms: u64) -> bool {
    match (job.mode, job.window_ms) {
        (JobMode::Stream, Some((begin, end))) => begin <= now_ms && now_ms <= end,
        (JobMode::Stream, None) => false,
        (JobMode::Adhoc, _) => true,
    }
}

struct Orchestrator {
    base: String,
    token: String,
    http: reqwest::blocking::Client,
}

impl Orchestrator {
    fn get_data(&self, user_id: &str, ids: &[u64]) -> MpcResult<Vec<GcmCiphertext>> {
        let ids_csv = ids
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let records: Vec<DataRecord> = self
            .http
            .get(format!("{}/data", self.base))
            .bearer_auth(&self.token)
            .query(&[("user_id", user_id), ("ids", &ids_csv)])
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| MpcError::Net(format!("get data: {e}")))?
            .json()
            .map_err(|e| MpcError::Net(format!("get data body: {e}")))?;
        records
            .into_iter()
            .map(|r| {
                let nonce = from_b64(&r.nonce_b64)
                    .map_err(|_| MpcError::Format("nonce not base64".into()))?;
                let ct =
                    from_b64(&r.ct_b64).map_err(|_| MpcError::Format("ct not base64".into()))?;
                if ct.len() < TAG_BYTES {
                    return Err(MpcError::Format("ciphertext shorter than a tag".into()));
                }
                let mut record_bytes = nonce;
                record_bytes.extend_from_slice(&ct);
                GcmCiphertext::from_bytes(&record_bytes)
            })
            .collect()
    }

    fn get_keyshare(&self, analysis_id: &str, party: PartyId) -> MpcResult<Vec<u8>> {
        let resp: KeyShareResponse = self
            .http
            .get(format!(
                "{}/keyshare/{}/{}",
                self.base,
                analysis_id,
                party.number()
            ))
            .bearer_auth(&self.token)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| MpcError::Net(format!("get keyshare: {e}")))?
            .json()
            .map_err(|e| MpcError::Net(format!("keyshare body: {e}")))?;
        from_b64(&resp.envelope_b64).map_err(|_| MpcError::Format("envelope not base64".into()))
    }

    fn submit(&self, analysis_id: &str, submission: &ResultSubmission) {
        let res = self
            .http
            .post(format!("{}/result/{}", self.base, analysis_id))
            .bearer_auth(&self.token)
            .json(submission)
            .send();
        if let Err(e) = res {
            tracing::warn!(analysis_id, "result submission failed: {e}");
        }
    }
}

struct Worker {
    party: PartyId,
    mode: SecurityMode,
    seeds: PairSeeds,
    mesh: Arc<TcpMesh>,
    model: SharedModel,
    sk: RsaPrivateKey,
    pks: [Vec<u8>; 3],
    orchestrator: Orchestrator,
}

fn session_id_for(jobs: &[JobSpec]) -> [u8; 16] {
    let mut hasher = Sha256::new();
    for job in jobs {
        hasher.update(job.analysis_id.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    digest[..16].try_into().unwrap()
}

impl Worker {
    /// Runs one dispatched batch as a single protocol session and submits
    /// per-analysis results (or failure reports).
    fn run_batch(&self, jobs: &[JobSpec]) {
        let session_id = session_id_for(jobs);
        let mut session = Session::new(
            self.party,
            self.mode,
            self.seeds.clone(),
            session_id,
            Box::new(self.mesh.session(session_id)),
        );
        let mut submitted: HashSet<String> = HashSet::new();
        let outcome = self.run_batch_inner(&mut session, jobs, &mut submitted);
        let failure = match outcome {
            Ok(()) => match session.finish() {
                Ok(_) => None,
                Err(e) => Some(e),
            },
            Err(e) => Some(e),
        };
        if let Some(err) = failure {
            let reason = err.reason_code().to_string();
            tracing::warn!(party = %self.party, reason, "batch aborted: {err}");
            for job in jobs {
                if !submitted.contains(&job.analysis_id) {
                    self.orchestrator.submit(
                        &job.analysis_id,
                        &ResultSubmission {
                            party: self.party.number(),
                            status: SubmissionStatus::Failed,
                            ct_b64: None,
                            reason: Some(reason.clone()),
                        },
                    );
                }
            }
        }
    }

    fn run_batch_inner(
        &self,
        session: &mut Session,
        jobs: &[JobSpec],
        submitted: &mut HashSet<String>,
    ) -> MpcResult<()> {
        let now = obeliskd::now_ms();
        for job in jobs {
            if !check_stream_window(job, now) {
                return Err(MpcError::Format("stream-window-refused".into()));
            }
        }
        // Fetch, unwrap and decrypt per analysis.
        let mut schedules = Vec::with_capacity(jobs.len());
        let mut matrices = Vec::with_capacity(jobs.len());
        for job in jobs {
            let records = self.orchestrator.get_data(&job.user_id, &job.data_ids)?;
            let envelope = self.orchestrator.get_keyshare(&job.analysis_id, self.party)?;
            let ctx = derive_context(job, &self.pks);
            let ad_i = ctx.ad_for_party(self.party);
            let share = consent::unwrap_key_share(&self.sk, &ad_i, &envelope)?;
            let ks = SharedKeySchedule::from_local_share(session, &share)?;
            let rows = dist_dec_batch(session, &records, &job.user_id, &ks)?;
            let cols = rows.first().map(|r| r.len()).unwrap_or(0);
            let data: Vec<_> = rows.into_iter().flatten().collect();
            matrices.push(Matrix::new(data.len() / cols.max(1), cols, data));
            schedules.push(ks);
        }
        // One flattened inference over every row of every analysis.
        let (flat, layout) = flatten_batch(&matrices)?;
        let scores = infer(session, &flat, &self.model)?;
        let per_analysis = unflatten_batch(&scores, &layout)?;
        // Re-encrypt each analysis under its own key and submit.
        for ((job, matrix), ks) in jobs.iter().zip(per_analysis).zip(&schedules) {
            let ctx = ResultContext {
                user_id: job.user_id.clone(),
                party_pks: self.pks.clone(),
                analysis_id: job.analysis_id.clone(),
                analysis_type: job.analysis_type.clone(),
            };
            let ct = dist_enc(session, &matrix.data, ks, &ctx)?;
            self.orchestrator.submit(
                &job.analysis_id,
                &ResultSubmission {
                    party: self.party.number(),
                    status: SubmissionStatus::Ok,
                    ct_b64: Some(b64(&ct)),
                    reason: None,
                },
            );
            submitted.insert(job.analysis_id.clone());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Intake service

struct Intake {
    party: PartyId,
    token: String,
    queue: crossbeam_channel::Sender<Vec<JobSpec>>,
    queued: Arc<AtomicUsize>,
    seen: Mutex<HashSet<String>>,
}

async fn analyse(
    State(state): State<Arc<Intake>>,
    headers: HeaderMap,
    Json(req): Json<DispatchRequest>,
) -> Result<Json<serde_json::Value>, StatusCode> {
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if token != Some(state.token.as_str()) {
        return Err(StatusCode::UNAUTHORIZED);
    }
    if req.jobs.is_empty() {
        return Err(StatusCode::BAD_REQUEST);
    }
    for job in &req.jobs {
        if job.analysis_id.is_empty() || job.user_id.is_empty() {
            return Err(StatusCode::BAD_REQUEST);
        }
        if job.data_ids.is_empty() {
            return Err(StatusCode::BAD_REQUEST);
        }
        if job.mode == JobMode::Stream && job.window_ms.is_none() {
            return Err(StatusCode::BAD_REQUEST);
        }
    }
    // Replays of an already-seen analysis are acknowledged without queueing.
    let fresh: Vec<JobSpec> = {
        let mut seen = state.seen.lock().unwrap();
        req.jobs
            .iter()
            .filter(|j| seen.insert(j.analysis_id.clone()))
            .cloned()
            .collect()
    };
    let duplicates = req.jobs.len() - fresh.len();
    if !fresh.is_empty() {
        state.queued.fetch_add(1, Ordering::SeqCst);
        state
            .queue
            .send(fresh)
            .map_err(|_| StatusCode::SERVICE_UNAVAILABLE)?;
    }
    Ok(Json(serde_json::json!({
        "party": state.party.number(),
        "queued": duplicates == 0,
        "duplicates": duplicates,
    })))
}

async fn health(State(state): State<Arc<Intake>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "party": state.party.number(),
        "queue_len": state.queued.load(Ordering::SeqCst),
    }))
}

pub struct PartyHandle {
    pub party: PartyId,
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl PartyHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

/// Starts the party: establishes the MPC mesh (retrying while peers come
/// up), loads the model share and keys, spawns the worker thread and the
/// HTTP intake.
pub async fn serve(cfg: PartyConfig) -> anyhow::Result<PartyHandle> {
    let party = cfg.party_id();
    let (model, model_party) = SharedModel::read_file(&cfg.model_share)
        .map_err(|e| anyhow::anyhow!("model share: {e}"))?;
    anyhow::ensure!(
        model_party == party,
        "model share file belongs to {model_party}, this is {party}"
    );
    let sk_pem = std::fs::read_to_string(&cfg.sk_pem)?;
    let sk = RsaPrivateKey::from_pkcs8_pem(&sk_pem)?;
    let seeds = cfg.seeds()?;
    let pks = cfg.pk_bytes()?;

    let mut peer_addrs = std::collections::HashMap::new();
    for (idx, addr) in &cfg.peers {
        let n: u8 = idx.parse()?;
        let peer = PartyId::new(n).ok_or_else(|| anyhow::anyhow!("bad peer index {n}"))?;
        peer_addrs.insert(peer, addr.clone());
    }
    let peer_bind = cfg.peer_bind.clone();
    let mesh = tokio::task::spawn_blocking(move || {
        TcpMesh::establish(party, &peer_bind, &peer_addrs, Duration::from_secs(60))
    })
    .await??;

    let (job_tx, job_rx) = crossbeam_channel::unbounded::<Vec<JobSpec>>();
    let queued = Arc::new(AtomicUsize::new(0));
    let queued_worker = Arc::clone(&queued);
    let orchestrator_base = cfg.orchestrator.clone();
    let orchestrator_token = cfg.orchestrator_token.clone();
    let worker_mode = cfg.mode;
    std::thread::Builder::new()
        .name(format!("party-{}-worker", party.number()))
        .spawn(move || {
            // the blocking HTTP client must be born outside any async runtime
            let worker = Worker {
                party,
                mode: worker_mode,
                seeds,
                mesh,
                model,
                sk,
                pks,
                orchestrator: Orchestrator {
                    base: orchestrator_base,
                    token: orchestrator_token,
                    http: reqwest::blocking::Client::new(),
                },
            };
            while let Ok(jobs) = job_rx.recv() {
                worker.run_batch(&jobs);
                queued_worker.fetch_sub(1, Ordering::SeqCst);
            }
        })?;

    let intake = Arc::new(Intake {
        party,
        token: cfg.intake_token.clone(),
        queue: job_tx,
        queued,
        seen: Mutex::new(HashSet::new()),
    });
    let app = Router::new()
        .route("/analyse", post(analyse))
        .route("/health", get(health))
        .with_state(intake);
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
    let addr = listener.local_addr()?;
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await;
    });
    tracing::info!(%party, %addr, "party intake listening");
    Ok(PartyHandle {
        party,
        addr,
        shutdown: Some(shutdown_tx),
        task,
    })
}
