//! Error and abort conditions shared across the protocol stack.

use crate::session::PartyId;

pub type MpcResult<T> = Result<T, MpcError>;

/// Protocol failures. The abort variants carry the reason codes reported
/// to the orchestrator when a job dies.
#[derive(Debug, thiserror::Error)]
pub enum MpcError {
    /// A redundant component received during an opening disagrees with the
    /// locally known value: a party misbehaved.
    #[error("open-inconsistent: redundant component mismatch reported by {0}")]
    OpenInconsistent(PartyId),

    /// A Beaver-triple sacrifice check failed during preprocessing.
    #[error("preprocessing-corrupt: triple sacrifice check failed")]
    PreprocessingCorrupt,

    /// The batched GF(2^128) product verification failed.
    #[error("mul-verify-failed: GF(2^128) product batch did not verify")]
    MulVerifyFailed,

    /// AES-GCM tag mismatch during distributed decryption.
    #[error("auth-failed: ciphertext did not authenticate")]
    AuthFailed,

    /// The masked value opened by truncation fell outside the plausible
    /// envelope for in-contract inputs.
    #[error("trunc-overflow: truncation range check tripped")]
    TruncOverflow,

    /// Key-share envelope did not decrypt under the derived context.
    #[error("consent-context-mismatch: key share refused for this context")]
    ConsentContextMismatch,

    /// End-of-session transcript hashes disagree.
    #[error("transcript-mismatch: opened-value transcripts diverge")]
    TranscriptMismatch,

    /// Malformed message, wrong length, or an out-of-protocol frame.
    #[error("format error: {0}")]
    Format(String),

    /// Value outside the representable/encodable range.
    #[error("range error: {0}")]
    Range(String),

    /// Tower isomorphism construction failed; indicates an implementation
    /// bug since the defining polynomial is irreducible.
    #[error("tower construction failed: {0}")]
    TowerConstruction(String),

    #[error("network: {0}")]
    Net(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpcError {
    /// Short machine-readable reason code for failure reporting.
    pub fn reason_code(&self) -> &'static str {
        match self {
            MpcError::OpenInconsistent(_) => "open-inconsistent",
            MpcError::PreprocessingCorrupt => "preprocessing-corrupt",
            MpcError::MulVerifyFailed => "mul-verify-failed",
            MpcError::AuthFailed => "auth-failed",
            MpcError::TruncOverflow => "trunc-overflow",
            MpcError::ConsentContextMismatch => "consent-context-mismatch",
            MpcError::TranscriptMismatch => "transcript-mismatch",
            MpcError::Format(_) => "format",
            MpcError::Range(_) => "range",
            MpcError::TowerConstruction(_) => "tower-construction",
            MpcError::Net(_) => "network",
            MpcError::Io(_) => "io",
        }
    }
}
