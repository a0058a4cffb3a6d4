//! Key-share envelopes bound to an analysis context.
//!
//! The user XOR-splits the expanded AES key schedule into three shares and
//! seals each under the corresponding party's RSA-2048 public key with
//! RSA-OAEP. The OAEP label is the SHA-256 hash of the party-specific
//! associated-data context `ad_i`, so a share only opens for the exact
//! analysis the user consented to: any change to the user, data selection,
//! party set, analysis type, mode or time window makes decryption fail.

use crate::aesgcm::{push_field, KEY_SCHEDULE_BYTES};
use crate::error::{MpcError, MpcResult};
use crate::session::PartyId;
use rand::Rng;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};

/// Identifier of the symmetric scheme inside consent contexts.
pub const ALG_TOKEN: &str = "AES-128-GCM";
/// RSA-2048: 256-byte moduli, envelopes and public-key fields.
pub const RSA_BITS: usize = 2048;
pub const ENVELOPE_BYTES: usize = RSA_BITS / 8;

const MODE_ADHOC: u8 = 0x01;
const MODE_STREAM: u8 = 0x02;

/// What the user consented to: either explicit data points or a streaming
/// window (milliseconds since the epoch).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsentScope {
    AdHoc { data_ids: Vec<u64> },
    Stream { t_begin_ms: u64, t_end_ms: u64 },
}

/// The associated-data tuple that scopes a key share to one analysis.
#[derive(Clone, Debug)]
pub struct ConsentContext {
    pub user_id: String,
    /// 256-byte public-key encodings of parties 1..3, in order.
    pub party_pks: [Vec<u8>; 3],
    pub scope: ConsentScope,
    pub analysis_type: String,
    pub cipher_alg: String,
}

impl ConsentContext {
    /// Byte-exact `ad_i`:
    /// `0x01 || ID_user || PK_1 || PK_2 || PK_3 || ID_data || type || alg || PK_i`
    /// for ad hoc scopes, `0x02 || ... || t_begin || t_end || ... || PK_i`
    /// for streaming; every field length-prefixed.
    pub fn ad_for_party(&self, party: PartyId) -> Vec<u8> {
        let mut ad = Vec::new();
        match &self.scope {
            ConsentScope::AdHoc { .. } => ad.push(MODE_ADHOC),
            ConsentScope::Stream { .. } => ad.push(MODE_STREAM),
        }
        push_field(&mut ad, self.user_id.as_bytes());
        for pk in &self.party_pks {
            push_field(&mut ad, pk);
        }
        match &self.scope {
            ConsentScope::AdHoc { data_ids } => {
                let mut blob = Vec::with_capacity(8 * data_ids.len());
                for id in data_ids {
                    blob.extend_from_slice(&id.to_be_bytes());
                }
                push_field(&mut ad, &blob);
            }
            ConsentScope::Stream {
                t_begin_ms,
                t_end_ms,
            } => {
                push_field(&mut ad, &t_begin_ms.to_be_bytes());
                push_field(&mut ad, &t_end_ms.to_be_bytes());
            }
        }
        push_field(&mut ad, self.analysis_type.as_bytes());
        push_field(&mut ad, self.cipher_alg.as_bytes());
        push_field(&mut ad, &self.party_pks[party.index()]);
        ad
    }
}

/// The fixed-width public-key encoding used inside contexts: the 2048-bit
/// modulus, big-endian (exponent fixed at 65537).
pub fn pk_bytes(pk: &RsaPublicKey) -> Vec<u8> {
    use rsa::traits::PublicKeyParts;
    let mut bytes = pk.n().to_bytes_be();
    while bytes.len() < ENVELOPE_BYTES {
        bytes.insert(0, 0);
    }
    bytes
}

/// XOR-splits a key schedule into three shares.
pub fn split_key_schedule<R: Rng + ?Sized>(
    schedule: &[u8; KEY_SCHEDULE_BYTES],
    rng: &mut R,
) -> [[u8; KEY_SCHEDULE_BYTES]; 3] {
    let mut k1 = [0u8; KEY_SCHEDULE_BYTES];
    let mut k2 = [0u8; KEY_SCHEDULE_BYTES];
    let mut k3 = [0u8; KEY_SCHEDULE_BYTES];
    rng.fill(&mut k1[..]);
    rng.fill(&mut k2[..]);
    for i in 0..KEY_SCHEDULE_BYTES {
        k3[i] = schedule[i] ^ k1[i] ^ k2[i];
    }
    [k1, k2, k3]
}

fn oaep_for(ad: &[u8]) -> Oaep {
    // The context binds through the OAEP label: SHA-256(ad_i), hex.
    let label = hex::encode(Sha256::digest(ad));
    Oaep::new_with_label::<Sha256, _>(label)
}

/// Seals one key-schedule share for a party under its public key, bound to
/// `ad_i`. The envelope is always 256 bytes.
pub fn seal_key_share<R: rand::CryptoRng + rand::RngCore>(
    rng: &mut R,
    pk: &RsaPublicKey,
    ad_i: &[u8],
    share: &[u8; KEY_SCHEDULE_BYTES],
) -> MpcResult<Vec<u8>> {
    let envelope = pk
        .encrypt(rng, oaep_for(ad_i), share)
        .map_err(|e| MpcError::Format(format!("envelope encryption: {e}")))?;
    debug_assert_eq!(envelope.len(), ENVELOPE_BYTES);
    Ok(envelope)
}

/// Opens a key-share envelope against the locally derived context. Any
/// mismatch between sealing and derived context yields
/// `consent-context-mismatch`.
pub fn unwrap_key_share(
    sk: &RsaPrivateKey,
    ad_i: &[u8],
    envelope: &[u8],
) -> MpcResult<[u8; KEY_SCHEDULE_BYTES]> {
    let plain = sk
        .decrypt(oaep_for(ad_i), envelope)
        .map_err(|_| MpcError::ConsentContextMismatch)?;
    plain
        .as_slice()
        .try_into()
        .map_err(|_| MpcError::ConsentContextMismatch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aesgcm::expand_key;
    use rand::{rngs::StdRng, SeedableRng};
    use std::sync::OnceLock;

    fn test_keys() -> &'static [(RsaPrivateKey, RsaPublicKey); 3] {
        static KEYS: OnceLock<[(RsaPrivateKey, RsaPublicKey); 3]> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = StdRng::seed_from_u64(4242);
            [(); 3].map(|_| {
                let sk = RsaPrivateKey::new(&mut rng, RSA_BITS).unwrap();
                let pk = RsaPublicKey::from(&sk);
                (sk, pk)
            })
        })
    }

    fn context(keys: &[(RsaPrivateKey, RsaPublicKey); 3]) -> ConsentContext {
        ConsentContext {
            user_id: "alice".into(),
            party_pks: [
                pk_bytes(&keys[0].1),
                pk_bytes(&keys[1].1),
                pk_bytes(&keys[2].1),
            ],
            scope: ConsentScope::AdHoc {
                data_ids: vec![1_700_000_000_000, 1_700_000_010_000],
            },
            analysis_type: "heartbeat-5".into(),
            cipher_alg: ALG_TOKEN.into(),
        }
    }

    #[test]
    fn ad_prefix_and_party_suffix() {
        let keys = test_keys();
        let ctx = context(keys);
        let [p1, p2, _] = PartyId::ALL;
        let ad1 = ctx.ad_for_party(p1);
        let ad2 = ctx.ad_for_party(p2);
        assert_eq!(ad1[0], 0x01);
        // the two contexts differ only in the trailing PK_i field
        let tail = 2 + ENVELOPE_BYTES;
        assert_eq!(ad1[..ad1.len() - tail], ad2[..ad2.len() - tail]);
        assert_ne!(ad1, ad2);

        let stream = ConsentContext {
            scope: ConsentScope::Stream {
                t_begin_ms: 0,
                t_end_ms: 1000,
            },
            ..ctx
        };
        assert_eq!(stream.ad_for_party(p1)[0], 0x02);
    }

    #[test]
    fn envelope_round_trip_and_size() {
        let keys = test_keys();
        let ctx = context(keys);
        let mut rng = StdRng::seed_from_u64(7);
        let schedule = expand_key(&[9u8; 16]);
        let shares = split_key_schedule(&schedule, &mut rng);
        let mut back = [0u8; KEY_SCHEDULE_BYTES];
        for i in 0..KEY_SCHEDULE_BYTES {
            back[i] = shares[0][i] ^ shares[1][i] ^ shares[2][i];
        }
        assert_eq!(back, schedule);

        for party in PartyId::ALL {
            let ad = ctx.ad_for_party(party);
            let env =
                seal_key_share(&mut rng, &keys[party.index()].1, &ad, &shares[party.index()])
                    .unwrap();
            assert_eq!(env.len(), ENVELOPE_BYTES);
            let opened = unwrap_key_share(&keys[party.index()].0, &ad, &env).unwrap();
            assert_eq!(opened, shares[party.index()]);
        }
    }

    #[test]
    fn context_mutations_refuse() {
        let keys = test_keys();
        let ctx = context(keys);
        let mut rng = StdRng::seed_from_u64(8);
        let schedule = expand_key(&[1u8; 16]);
        let shares = split_key_schedule(&schedule, &mut rng);
        let p1 = PartyId::ALL[0];
        let env = seal_key_share(&mut rng, &keys[0].1, &ctx.ad_for_party(p1), &shares[0]).unwrap();

        // extra data id
        let mut mutated = ctx.clone();
        if let ConsentScope::AdHoc { data_ids } = &mut mutated.scope {
            data_ids.push(42);
        }
        assert!(matches!(
            unwrap_key_share(&keys[0].0, &mutated.ad_for_party(p1), &env),
            Err(MpcError::ConsentContextMismatch)
        ));

        // wrong recipient: party 2 presenting party 1's envelope
        let p2 = PartyId::ALL[1];
        assert!(matches!(
            unwrap_key_share(&keys[1].0, &ctx.ad_for_party(p2), &env),
            Err(MpcError::ConsentContextMismatch)
        ));

        // ad hoc flipped to stream
        let streamed = ConsentContext {
            scope: ConsentScope::Stream {
                t_begin_ms: 0,
                t_end_ms: 10,
            },
            ..ctx.clone()
        };
        assert!(matches!(
            unwrap_key_share(&keys[0].0, &streamed.ad_for_party(p1), &env),
            Err(MpcError::ConsentContextMismatch)
        ));
    }
}
