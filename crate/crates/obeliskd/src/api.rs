//! Wire types of the orchestration API. Binary payloads travel as base64
//! inside JSON.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestRequest {
    pub user_id: String,
    pub timestamp_ms: u64,
    pub nonce_b64: String,
    /// Ciphertext body and tag, 1512 bytes for the sample format.
    pub ct_b64: String,
}

/// Data selection of an analysis request.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AnalysisScope {
    Adhoc {
        data_ids: Vec<u64>,
    },
    Stream {
        t_begin_ms: u64,
        t_end_ms: u64,
        /// Requested micro-batch size; the platform caps it.
        batch_size: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub user_id: String,
    #[serde(flatten)]
    pub scope: AnalysisScope,
    pub analysis_type: String,
    /// Party indices, expected [1, 2, 3].
    pub parties: Vec<u8>,
    /// One 256-byte key-share envelope per party, in party order.
    pub envelopes_b64: [String; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisCreated {
    pub analysis_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisState {
    Queued,
    Running,
    Done,
    Failed,
}

/// Public view of an analysis record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisView {
    pub analysis_id: String,
    pub user_id: String,
    pub analysis_type: String,
    pub state: AnalysisState,
    pub submitted_ms: u64,
    pub dispatched_ms: Option<u64>,
    pub stored_ms: Option<u64>,
    pub failure_reason: Option<String>,
    /// Batch analyses spawned by a stream registration.
    pub batches: Vec<String>,
    /// Data-point ids of an ad hoc analysis (or a stream batch).
    pub data_ids: Vec<u64>,
    /// Misbehavior audit trail (divergent or late submissions).
    pub audit: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultResponse {
    pub analysis_id: String,
    pub ct_b64: String,
    pub stored_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataRecord {
    pub timestamp_ms: u64,
    pub nonce_b64: String,
    pub ct_b64: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyShareResponse {
    pub envelope_b64: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultSubmission {
    pub party: u8,
    pub status: SubmissionStatus,
    pub ct_b64: Option<String>,
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmissionStatus {
    Ok,
    Failed,
}

/// One unit of work dispatched to every party. Batched dispatches carry
/// several jobs that the parties process in one protocol session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobSpec {
    pub analysis_id: String,
    pub user_id: String,
    pub data_ids: Vec<u64>,
    pub analysis_type: String,
    pub mode: JobMode,
    /// Streaming window, present iff mode is stream.
    pub window_ms: Option<(u64, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobMode {
    Adhoc,
    Stream,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DispatchRequest {
    pub jobs: Vec<JobSpec>,
}

pub fn b64(data: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(data)
}

pub fn from_b64(s: &str) -> Result<Vec<u8>, base64::DecodeError> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(s)
}
