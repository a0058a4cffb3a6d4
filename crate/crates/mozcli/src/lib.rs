//! Edge entry points for the encrypted-analytics pipeline.
//!
//! Everything a human runs lives here: the IoT device simulator, the
//! user-side key/consent tooling and result decryption, the model
//! provider's share tool, the benchmark harness, and a single-process
//! demo stack that wires an orchestrator and three parties together.

pub mod bench;
pub mod device;
pub mod modeltool;
pub mod stack;
pub mod user;

use serde::{Deserialize, Serialize};
use std::path::Path;

/// The user-side environment file written by `stack` and consumed by the
/// other subcommands. The orchestrator URL and token can be overridden via
/// `MOZ_ORCHESTRATOR` / `MOZ_TOKEN`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UserEnv {
    pub orchestrator: String,
    pub user_id: String,
    pub token: String,
    /// AES-128 device key, hex.
    pub device_key_hex: String,
    /// Monotone nonce counter; rotated keys reset it.
    pub nonce_counter: u64,
    /// 256-byte public-key encodings (hex) of parties 1..3.
    pub party_pks_hex: [String; 3],
    pub analysis_type: String,
    /// Timestamps of samples this environment ingested (for `--latest`).
    #[serde(default)]
    pub ingested: Vec<u64>,
}

impl UserEnv {
    pub fn load(path: &Path) -> anyhow::Result<UserEnv> {
        let mut env: UserEnv = serde_json::from_slice(&std::fs::read(path)?)?;
        if let Ok(url) = std::env::var("MOZ_ORCHESTRATOR") {
            env.orchestrator = url;
        }
        if let Ok(token) = std::env::var("MOZ_TOKEN") {
            env.token = token;
        }
        Ok(env)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn device_key(&self) -> anyhow::Result<[u8; 16]> {
        let bytes = hex::decode(&self.device_key_hex)?;
        bytes
            .try_into()
            .map_err(|_| anyhow::anyhow!("device key must be 16 bytes"))
    }

    pub fn party_pks(&self) -> anyhow::Result<[Vec<u8>; 3]> {
        let mut out: [Vec<u8>; 3] = Default::default();
        for (i, pk) in self.party_pks_hex.iter().enumerate() {
            out[i] = hex::decode(pk)?;
        }
        Ok(out)
    }
}

/// AAMI EC57 class labels in output order.
pub const CLASS_LABELS: [&str; 5] = ["N", "S", "V", "F", "Q"];
