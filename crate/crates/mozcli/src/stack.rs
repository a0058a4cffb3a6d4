//! Single-process demo stack: generates keys, seeds, model shares and
//! configuration files, then runs the orchestrator and all three parties
//! inside one process. Tests and the benchmark harness reuse it; manual
//! deployments can start from the emitted config files instead.

use crate::UserEnv;
use moz_core::consent::{pk_bytes, RSA_BITS};
use moz_core::infer::plain::PlainModel;
use moz_core::session::{PairSeeds, SecurityMode};
use obeliskd::{ObeliskConfig, Principal, ServerHandle};
use rsa::pkcs8::EncodePrivateKey;
use rsa::{RsaPrivateKey, RsaPublicKey};
use std::collections::HashMap;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

pub struct StackOptions {
    pub dir: PathBuf,
    pub mode: SecurityMode,
    pub flush_interval_ms: u64,
    pub tick_ms: u64,
    pub user_id: String,
    /// Plaintext model; a random demo model when absent.
    pub model: Option<PlainModel>,
    /// Persist orchestrator stores under `dir` instead of memory.
    pub persist: bool,
}

impl StackOptions {
    pub fn new(dir: impl Into<PathBuf>) -> StackOptions {
        StackOptions {
            dir: dir.into(),
            mode: SecurityMode::MalLite,
            flush_interval_ms: 2000,
            tick_ms: 100,
            user_id: "alice".into(),
            model: None,
            persist: false,
        }
    }
}

pub struct StackHandle {
    pub orchestrator_url: String,
    pub user_env_path: PathBuf,
    pub user_env: UserEnv,
    pub dir: PathBuf,
    obelisk: ServerHandle,
    parties: Vec<moz_party::PartyHandle>,
}

impl StackHandle {
    pub async fn stop(self) {
        for party in self.parties {
            party.stop().await;
        }
        self.obelisk.stop().await;
    }
}

fn free_port() -> anyhow::Result<u16> {
    Ok(TcpListener::bind("127.0.0.1:0")?.local_addr()?.port())
}

fn write_toml<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, toml::to_string_pretty(value)?)?;
    Ok(())
}

/// Generates all key material and configuration under `opts.dir` and
/// starts the four processes' worth of services in this process.
pub async fn spawn(opts: StackOptions) -> anyhow::Result<StackHandle> {
    std::fs::create_dir_all(&opts.dir)?;
    let mut rng = rand::thread_rng();

    // RSA keypairs for the parties.
    let mut sks: Vec<RsaPrivateKey> = Vec::new();
    let mut pks_hex: [String; 3] = Default::default();
    for i in 0..3 {
        let sk = RsaPrivateKey::new(&mut rng, RSA_BITS)?;
        let pk = RsaPublicKey::from(&sk);
        pks_hex[i] = hex::encode(pk_bytes(&pk));
        let pem = sk.to_pkcs8_pem(rsa::pkcs8::LineEnding::LF)?;
        std::fs::write(opts.dir.join(format!("party{}.sk.pem", i + 1)), pem.as_bytes())?;
        sks.push(sk);
    }

    // Pairwise PRF seeds.
    let seeds = PairSeeds::deal(&mut rng);

    // Model shares.
    let model = opts.model.clone().unwrap_or_else(|| crate::modeltool::demo_model(1));
    crate::modeltool::save_model(&model, &opts.dir.join("model.json"))?;
    let share_paths = crate::modeltool::write_share_files(&model, &opts.dir)?;

    // Ports for the orchestrator, party intakes and the MPC mesh.
    let obelisk_port = free_port()?;
    let intake_ports = [free_port()?, free_port()?, free_port()?];
    let peer_ports = [free_port()?, free_port()?, free_port()?];

    let user_token = format!("tok-{}", opts.user_id);
    let dispatch_token = "tok-dispatch".to_string();
    let mut tokens = HashMap::new();
    tokens.insert(
        user_token.clone(),
        Principal::User {
            user: opts.user_id.clone(),
        },
    );
    for i in 1..=3u8 {
        tokens.insert(format!("tok-party{i}"), Principal::Party { party: i });
    }

    let obelisk_cfg = ObeliskConfig {
        bind: format!("127.0.0.1:{obelisk_port}"),
        data_dir: opts.persist.then(|| opts.dir.join("stores")),
        tokens,
        dispatch_token: dispatch_token.clone(),
        parties: intake_ports
            .iter()
            .map(|p| format!("http://127.0.0.1:{p}"))
            .collect(),
        flush_interval_ms: opts.flush_interval_ms,
        tick_ms: opts.tick_ms,
        max_batch: 512,
        keyshare_ttl_ms: 3_600_000,
    };
    write_toml(&opts.dir.join("obelisk.toml"), &obelisk_cfg)?;
    let orchestrator_url = format!("http://127.0.0.1:{obelisk_port}");

    let mut party_cfgs = Vec::new();
    for i in 0..3usize {
        let mut peers = HashMap::new();
        for j in 0..3usize {
            if j != i {
                peers.insert(
                    (j + 1).to_string(),
                    format!("127.0.0.1:{}", peer_ports[j]),
                );
            }
        }
        let cfg = moz_party::PartyConfig {
            party: (i + 1) as u8,
            bind: format!("127.0.0.1:{}", intake_ports[i]),
            peer_bind: format!("127.0.0.1:{}", peer_ports[i]),
            peers,
            orchestrator: orchestrator_url.clone(),
            orchestrator_token: format!("tok-party{}", i + 1),
            intake_token: dispatch_token.clone(),
            mode: opts.mode,
            model_share: share_paths[i].clone(),
            sk_pem: opts.dir.join(format!("party{}.sk.pem", i + 1)),
            pk_hex: pks_hex.clone(),
            seed_prev_hex: hex::encode(seeds[i].prev),
            seed_next_hex: hex::encode(seeds[i].next),
        };
        write_toml(&opts.dir.join(format!("party{}.toml", i + 1)), &cfg)?;
        party_cfgs.push(cfg);
    }

    let obelisk = obeliskd::serve(obelisk_cfg).await?;

    // Parties establish their mesh among themselves; start all three
    // concurrently.
    let mut joins = Vec::new();
    for cfg in party_cfgs {
        joins.push(tokio::spawn(moz_party::serve(cfg)));
    }
    let mut parties = Vec::new();
    for join in joins {
        parties.push(join.await??);
    }

    // Device/user environment.
    let mut device_key = [0u8; 16];
    rand::Rng::fill(&mut rng, &mut device_key);
    let user_env = UserEnv {
        orchestrator: orchestrator_url.clone(),
        user_id: opts.user_id.clone(),
        token: user_token,
        device_key_hex: hex::encode(device_key),
        nonce_counter: 0,
        party_pks_hex: pks_hex,
        analysis_type: "heartbeat-5".into(),
        ingested: Vec::new(),
    };
    let user_env_path = opts.dir.join("user.json");
    user_env.save(&user_env_path)?;

    Ok(StackHandle {
        orchestrator_url,
        user_env_path,
        user_env,
        dir: opts.dir,
        obelisk,
        parties,
    })
}
