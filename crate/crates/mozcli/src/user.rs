//! User-side consent tooling and result decryption.

use crate::{UserEnv, CLASS_LABELS};
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use moz_core::aesgcm::{decode_sample, expand_key, ResultContext, RESULT_VALUES, TAG_BYTES};
use moz_core::algebra::FRACTION_BITS;
use moz_core::consent::{seal_key_share, split_key_schedule, ConsentContext, ConsentScope, ALG_TOKEN};
use moz_core::infer::plain::argmax;
use moz_core::session::PartyId;
use obeliskd::api::{b64, from_b64, AnalysisCreated, AnalysisRequest, AnalysisScope, ResultResponse};
use rsa::{BigUint, RsaPublicKey};

/// Rebuilds a party public key from its 256-byte modulus encoding
/// (exponent fixed at 65537).
pub fn pk_from_bytes(bytes: &[u8]) -> anyhow::Result<RsaPublicKey> {
    Ok(RsaPublicKey::new(
        BigUint::from_bytes_be(bytes),
        BigUint::from(65537u32),
    )?)
}

/// Expands the key schedule, XOR-splits it and seals one envelope per
/// party, each bound to that party's consent context.
pub fn make_keyshares(
    key: &[u8; 16],
    ctx: &ConsentContext,
) -> anyhow::Result<[Vec<u8>; 3]> {
    let mut rng = rand::thread_rng();
    let schedule = expand_key(key);
    let shares = split_key_schedule(&schedule, &mut rng);
    let mut envelopes: [Vec<u8>; 3] = Default::default();
    for party in PartyId::ALL {
        let pk = pk_from_bytes(&ctx.party_pks[party.index()])?;
        let ad = ctx.ad_for_party(party);
        envelopes[party.index()] =
            seal_key_share(&mut rng, &pk, &ad, &shares[party.index()])?;
    }
    Ok(envelopes)
}

/// The consent context for an environment and data selection.
pub fn consent_context(env: &UserEnv, scope: ConsentScope) -> anyhow::Result<ConsentContext> {
    Ok(ConsentContext {
        user_id: env.user_id.clone(),
        party_pks: env.party_pks()?,
        scope,
        analysis_type: env.analysis_type.clone(),
        cipher_alg: ALG_TOKEN.into(),
    })
}

/// Submits an ad hoc analysis over the given data points.
pub fn request_adhoc(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    data_ids: Vec<u64>,
) -> anyhow::Result<String> {
    let ctx = consent_context(env, ConsentScope::AdHoc { data_ids: data_ids.clone() })?;
    let envelopes = make_keyshares(&env.device_key()?, &ctx)?;
    let req = AnalysisRequest {
        user_id: env.user_id.clone(),
        scope: AnalysisScope::Adhoc { data_ids },
        analysis_type: env.analysis_type.clone(),
        parties: vec![1, 2, 3],
        envelopes_b64: [
            b64(&envelopes[0]),
            b64(&envelopes[1]),
            b64(&envelopes[2]),
        ],
    };
    let resp: AnalysisCreated = client
        .post(format!("{}/analysis", env.orchestrator))
        .bearer_auth(&env.token)
        .json(&req)
        .send()?
        .error_for_status()?
        .json()?;
    Ok(resp.analysis_id)
}

/// Registers a streaming consent window.
pub fn request_stream(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    t_begin_ms: u64,
    t_end_ms: u64,
    batch_size: usize,
) -> anyhow::Result<String> {
    let ctx = consent_context(env, ConsentScope::Stream { t_begin_ms, t_end_ms })?;
    let envelopes = make_keyshares(&env.device_key()?, &ctx)?;
    let req = AnalysisRequest {
        user_id: env.user_id.clone(),
        scope: AnalysisScope::Stream {
            t_begin_ms,
            t_end_ms,
            batch_size,
        },
        analysis_type: env.analysis_type.clone(),
        parties: vec![1, 2, 3],
        envelopes_b64: [
            b64(&envelopes[0]),
            b64(&envelopes[1]),
            b64(&envelopes[2]),
        ],
    };
    let resp: AnalysisCreated = client
        .post(format!("{}/analysis", env.orchestrator))
        .bearer_auth(&env.token)
        .json(&req)
        .send()?
        .error_for_status()?
        .json()?;
    Ok(resp.analysis_id)
}

/// A decrypted analysis result: per-row scores and class labels.
#[derive(Debug, Clone)]
pub struct DecryptedResult {
    pub rows: Vec<Vec<f64>>,
    pub classes: Vec<&'static str>,
}

/// Decrypts a result ciphertext (`ct || tag`) with the recomputed context
/// nonce. A tag failure signals possible tampering.
pub fn decrypt_result(
    env: &UserEnv,
    analysis_id: &str,
    ct_and_tag: &[u8],
) -> anyhow::Result<DecryptedResult> {
    let ctx = ResultContext {
        user_id: env.user_id.clone(),
        party_pks: env.party_pks()?,
        analysis_id: analysis_id.to_string(),
        analysis_type: env.analysis_type.clone(),
    };
    if ct_and_tag.len() <= TAG_BYTES {
        anyhow::bail!("result ciphertext too short");
    }
    let cipher = Aes128Gcm::new(&env.device_key()?.into());
    let nonce = ctx.nonce();
    let plain = cipher
        .decrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: ct_and_tag,
                aad: &ctx.ad(),
            },
        )
        .map_err(|_| anyhow::anyhow!("authentication failed: result may have been tampered with"))?;
    let values = decode_sample(&plain, FRACTION_BITS)?;
    anyhow::ensure!(
        !values.is_empty() && values.len() % RESULT_VALUES == 0,
        "result must hold rows of {RESULT_VALUES} scores"
    );
    let rows: Vec<Vec<f64>> = values.chunks(RESULT_VALUES).map(<[f64]>::to_vec).collect();
    let classes = rows.iter().map(|r| CLASS_LABELS[argmax(r)]).collect();
    Ok(DecryptedResult { rows, classes })
}

/// Fetches and decrypts a finalized result.
pub fn fetch_result(
    env: &UserEnv,
    client: &reqwest::blocking::Client,
    analysis_id: &str,
) -> anyhow::Result<DecryptedResult> {
    let resp: ResultResponse = client
        .get(format!("{}/result/{}", env.orchestrator, analysis_id))
        .bearer_auth(&env.token)
        .send()?
        .error_for_status()?
        .json()?;
    let ct = from_b64(&resp.ct_b64)?;
    decrypt_result(env, analysis_id, &ct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use moz_core::aesgcm::KEY_SCHEDULE_BYTES;
    use moz_core::consent::unwrap_key_share;
    use rand::{rngs::StdRng, SeedableRng};
    use rsa::RsaPrivateKey;

    #[test]
    fn keyshares_reconstruct_the_schedule_and_bind_to_party() {
        // 10^2 random keys and job contexts: seal, unwrap per party, and
        // XOR-reconstruct the reference key schedule.
        let mut rng = StdRng::seed_from_u64(500);
        let keys: Vec<(RsaPrivateKey, RsaPublicKey)> = (0..3)
            .map(|_| {
                let sk = RsaPrivateKey::new(&mut rng, 2048).unwrap();
                let pk = RsaPublicKey::from(&sk);
                (sk, pk)
            })
            .collect();
        for trial in 0..100u64 {
            let ctx = ConsentContext {
                user_id: format!("user-{trial}"),
                party_pks: [
                    moz_core::consent::pk_bytes(&keys[0].1),
                    moz_core::consent::pk_bytes(&keys[1].1),
                    moz_core::consent::pk_bytes(&keys[2].1),
                ],
                scope: if trial % 2 == 0 {
                    ConsentScope::AdHoc {
                        data_ids: vec![trial, trial + 7, rng.gen()],
                    }
                } else {
                    ConsentScope::Stream {
                        t_begin_ms: trial,
                        t_end_ms: trial + rng.gen_range(1..100_000),
                    }
                },
                analysis_type: format!("type-{}", trial % 5),
                cipher_alg: ALG_TOKEN.into(),
            };
            let key: [u8; 16] = rng.gen();
            let envelopes = make_keyshares(&key, &ctx).unwrap();
            let mut schedule = [0u8; KEY_SCHEDULE_BYTES];
            for party in PartyId::ALL {
                assert_eq!(envelopes[party.index()].len(), 256);
                let ad = ctx.ad_for_party(party);
                let share =
                    unwrap_key_share(&keys[party.index()].0, &ad, &envelopes[party.index()])
                        .unwrap();
                for (dst, src) in schedule.iter_mut().zip(&share) {
                    *dst ^= src;
                }
            }
            assert_eq!(schedule, expand_key(&key), "trial {trial}");

            // party j cannot decrypt envelope i != j
            let ad1 = ctx.ad_for_party(PartyId::ALL[0]);
            assert!(unwrap_key_share(&keys[1].0, &ad1, &envelopes[0]).is_err());
        }
    }
}
