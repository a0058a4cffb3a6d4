//! IoT sensor device simulator: fixed-point encoding, counter-derived
//! nonces, authenticated encryption and ingest.

use crate::UserEnv;
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use moz_core::aesgcm::{device_ad, encode_sample, NONCE_BYTES, SAMPLE_VALUES};
use moz_core::algebra::FRACTION_BITS;
use obeliskd::api::{b64, IngestRequest};

/// 96-bit big-endian nonce from the device counter.
pub fn nonce_from_counter(counter: u64) -> [u8; NONCE_BYTES] {
    let mut nonce = [0u8; NONCE_BYTES];
    nonce[4..].copy_from_slice(&counter.to_be_bytes());
    nonce
}

/// Encrypts one 187-value sample under the device key with the
/// user-binding associated data. Returns `(nonce, body || tag)`.
pub fn encrypt_sample(
    key: &[u8; 16],
    counter: u64,
    user_id: &str,
    values: &[f64],
) -> anyhow::Result<([u8; NONCE_BYTES], Vec<u8>)> {
    let plaintext = encode_sample(values, FRACTION_BITS)?;
    let nonce = nonce_from_counter(counter);
    let ad = device_ad(user_id, &nonce);
    let cipher = Aes128Gcm::new(key.into());
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &plaintext,
                aad: &ad,
            },
        )
        .map_err(|e| anyhow::anyhow!("encryption failed: {e}"))?;
    Ok((nonce, ct))
}

/// A synthetic heartbeat-like sample, normalized to [0, 1].
pub fn synthetic_sample(seed: u64) -> Vec<f64> {
    (0..SAMPLE_VALUES)
        .map(|i| {
            let t = i as f64 / SAMPLE_VALUES as f64;
            let spike = (-((t - 0.3) * 40.0).powi(2)).exp();
            let wave = 0.15 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
            let jitter = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64))
                % 1000) as f64
                / 20000.0;
            (0.2 + 0.7 * spike + wave + jitter).clamp(0.0, 1.0)
        })
        .collect()
}

/// Reads 187-value rows from a CSV file (a trailing label column is
/// accepted and dropped).
pub fn read_csv_samples(path: &std::path::Path) -> anyhow::Result<Vec<(Vec<f64>, Option<usize>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let values: Vec<f64> = row
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()?;
        match values.len() {
            n if n == SAMPLE_VALUES => out.push((values, None)),
            n if n == SAMPLE_VALUES + 1 => {
                let label = values[SAMPLE_VALUES] as usize;
                out.push((values[..SAMPLE_VALUES].to_vec(), Some(label)));
            }
            n => anyhow::bail!("row has {n} columns, expected {SAMPLE_VALUES} (+1 label)"),
        }
    }
    Ok(out)
}

/// Encrypts and ingests one sample; returns the data-point timestamp.
/// Advances (and persists via the caller) the nonce counter.
pub fn send_sample(
    env: &mut UserEnv,
    client: &reqwest::blocking::Client,
    values: &[f64],
) -> anyhow::Result<u64> {
    if env.nonce_counter == u64::MAX {
        anyhow::bail!("nonce counter exhausted; rotate the device key");
    }
    let key = env.device_key()?;
    let counter = env.nonce_counter;
    env.nonce_counter += 1;
    let (nonce, ct) = encrypt_sample(&key, counter, &env.user_id, values)?;

    let mut ts = obeliskd::now_ms();
    if let Some(&last) = env.ingested.last() {
        if ts <= last {
            ts = last + 1;
        }
    }
    let resp = client
        .post(format!("{}/ingest", env.orchestrator))
        .bearer_auth(&env.token)
        .json(&IngestRequest {
            user_id: env.user_id.clone(),
            timestamp_ms: ts,
            nonce_b64: b64(&nonce),
            ct_b64: b64(&ct),
        })
        .send()?;
    anyhow::ensure!(
        resp.status().is_success(),
        "ingest rejected: {}",
        resp.status()
    );
    env.ingested.push(ts);
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonces_are_unique_and_monotone() {
        let mut seen = std::collections::HashSet::new();
        for counter in 0..100_000u64 {
            assert!(seen.insert(nonce_from_counter(counter)), "collision at {counter}");
        }
    }

    #[test]
    fn synthetic_samples_are_in_range() {
        let sample = synthetic_sample(7);
        assert_eq!(sample.len(), SAMPLE_VALUES);
        assert!(sample.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn encrypted_sample_has_record_size() {
        let (nonce, ct) = encrypt_sample(&[3u8; 16], 9, "alice", &synthetic_sample(1)).unwrap();
        assert_eq!(nonce.len() + ct.len(), moz_core::aesgcm::SAMPLE_RECORD_BYTES);
    }
}
