//! Oblivious AES-128-GCM over boolean-shared key schedules.
//!
//! The parties hold XOR shares of the expanded 176-byte key schedule, so
//! no in-circuit key expansion is needed. AddRoundKey, ShiftRows and
//! MixColumns are GF(2)-linear and run locally; SubBytes costs four
//! shared GF(2^8) multiplications per byte via the `x^254` inversion
//! chain. GHASH runs with a shared hash key over public ciphertext
//! blocks, one shared GF(2^128) multiplication per block; in detection
//! mode every such product is queued and verified before any tag is
//! opened.

use crate::algebra::{fp_decode, fp_encode, Gf128, Gf8, Ring, RingEl64};
use crate::convert::{a2b, b2a, BitVecShare};
use crate::error::{MpcError, MpcResult};
use crate::net::MsgTag;
use crate::rss::{self, add_public, mul_vec, ProductWitness, RssShare};
use crate::session::Session;

pub const NONCE_BYTES: usize = 12;
pub const TAG_BYTES: usize = 16;
pub const KEY_SCHEDULE_BYTES: usize = 176;
/// Values per sensor sample and their 64-bit little-endian encoding.
pub const SAMPLE_VALUES: usize = 187;
pub const SAMPLE_BYTES: usize = SAMPLE_VALUES * 8; // 1496
/// nonce || ciphertext || tag.
pub const SAMPLE_RECORD_BYTES: usize = NONCE_BYTES + SAMPLE_BYTES + TAG_BYTES; // 1524
/// Class scores per analysis result row.
pub const RESULT_VALUES: usize = 5;
pub const RESULT_ROW_BYTES: usize = RESULT_VALUES * 8; // 40
/// Single-row result ciphertext: 40-byte body plus tag.
pub const RESULT_CT_BYTES: usize = RESULT_ROW_BYTES + TAG_BYTES; // 56

const SBOX_CONSTANT: u8 = 0x63;

// ---------------------------------------------------------------------------
// Plaintext key schedule (device / user side; parties never run this)

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36];

const SBOX: [u8; 256] = build_sbox();

const fn build_sbox() -> [u8; 256] {
    const fn mul(a: u8, b: u8) -> u8 {
        let mut a = a as u16;
        let mut b = b;
        let mut acc: u16 = 0;
        let mut i = 0;
        while i < 8 {
            if b & 1 != 0 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & 0x100 != 0 {
                a ^= 0x11B;
            }
            i += 1;
        }
        acc as u8
    }
    let mut table = [0u8; 256];
    let mut x = 0usize;
    while x < 256 {
        let b = x as u8;
        // x^254 by the same addition chain the shared S-box uses.
        let b2 = mul(b, b);
        let b3 = mul(b2, b);
        let b12 = mul(mul(b3, b3), mul(b3, b3));
        let b15 = mul(b12, b3);
        let b240 = {
            let t = mul(b15, b15);
            let t = mul(t, t);
            let t = mul(t, t);
            mul(t, t)
        };
        let b252 = mul(b240, b12);
        let inv = mul(b252, b2); // b^254
        let mut r = 0u8;
        let mut i = 0;
        while i < 8 {
            let bit = (inv >> i)
                ^ (inv >> ((i + 4) % 8))
                ^ (inv >> ((i + 5) % 8))
                ^ (inv >> ((i + 6) % 8))
                ^ (inv >> ((i + 7) % 8))
                ^ (SBOX_CONSTANT >> i);
            r |= (bit & 1) << i;
            i += 1;
        }
        table[x] = r;
        x += 1;
    }
    table
}

/// Expands an AES-128 key into the 176-byte round-key schedule.
pub fn expand_key(key: &[u8; 16]) -> [u8; KEY_SCHEDULE_BYTES] {
    let mut w = [0u8; KEY_SCHEDULE_BYTES];
    w[..16].copy_from_slice(key);
    for i in 4..44 {
        let mut t = [
            w[4 * (i - 1)],
            w[4 * (i - 1) + 1],
            w[4 * (i - 1) + 2],
            w[4 * (i - 1) + 3],
        ];
        if i % 4 == 0 {
            t.rotate_left(1);
            for b in &mut t {
                *b = SBOX[*b as usize];
            }
            t[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            w[4 * i + j] = w[4 * (i - 4) + j] ^ t[j];
        }
    }
    w
}

// ---------------------------------------------------------------------------
// Wire/record shapes

/// A nonce-prefixed AES-GCM ciphertext with detached tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GcmCiphertext {
    pub nonce: [u8; NONCE_BYTES],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_BYTES],
}

impl GcmCiphertext {
    /// `nonce || body || tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_BYTES + self.body.len() + TAG_BYTES);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> MpcResult<GcmCiphertext> {
        if bytes.len() < NONCE_BYTES + TAG_BYTES {
            return Err(MpcError::Format(format!(
                "ciphertext record too short: {}",
                bytes.len()
            )));
        }
        let mut nonce = [0u8; NONCE_BYTES];
        nonce.copy_from_slice(&bytes[..NONCE_BYTES]);
        let mut tag = [0u8; TAG_BYTES];
        tag.copy_from_slice(&bytes[bytes.len() - TAG_BYTES..]);
        Ok(GcmCiphertext {
            nonce,
            body: bytes[NONCE_BYTES..bytes.len() - TAG_BYTES].to_vec(),
            tag,
        })
    }
}

/// Appends a 2-byte big-endian length prefix and the field itself; every
/// associated-data context uses this encoding to stay injective.
pub fn push_field(out: &mut Vec<u8>, field: &[u8]) {
    assert!(field.len() <= u16::MAX as usize);
    out.extend_from_slice(&(field.len() as u16).to_be_bytes());
    out.extend_from_slice(field);
}

/// Associated data of a sensor sample: `ID_user || N`, length-prefixed.
pub fn device_ad(user_id: &str, nonce: &[u8; NONCE_BYTES]) -> Vec<u8> {
    let mut ad = Vec::new();
    push_field(&mut ad, user_id.as_bytes());
    push_field(&mut ad, nonce);
    ad
}

/// Binding context of an analysis result:
/// `ID_user || PK_1 || PK_2 || PK_3 || ID_analysis || type`.
#[derive(Clone, Debug)]
pub struct ResultContext {
    pub user_id: String,
    pub party_pks: [Vec<u8>; 3],
    pub analysis_id: String,
    pub analysis_type: String,
}

impl ResultContext {
    pub fn ad(&self) -> Vec<u8> {
        let mut ad = Vec::new();
        push_field(&mut ad, self.user_id.as_bytes());
        for pk in &self.party_pks {
            push_field(&mut ad, pk);
        }
        push_field(&mut ad, self.analysis_id.as_bytes());
        push_field(&mut ad, self.analysis_type.as_bytes());
        ad
    }

    /// The deterministic result nonce `N := ⌊H(ad)⌋` (first 12 bytes of
    /// SHA-256).
    pub fn nonce(&self) -> [u8; NONCE_BYTES] {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.ad());
        let mut n = [0u8; NONCE_BYTES];
        n.copy_from_slice(&digest[..NONCE_BYTES]);
        n
    }
}

/// Fixed-point-encodes one sensor sample into its 1496-byte wire form.
pub fn encode_sample(values: &[f64], fraction_bits: u32) -> MpcResult<Vec<u8>> {
    if values.len() != SAMPLE_VALUES {
        return Err(MpcError::Format(format!(
            "sample must have {SAMPLE_VALUES} values, got {}",
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(SAMPLE_BYTES);
    for &v in values {
        out.extend_from_slice(&fp_encode(v, fraction_bits)?.0.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_sample(bytes: &[u8], fraction_bits: u32) -> MpcResult<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(MpcError::Format("sample bytes not word-aligned".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            fp_decode(
                RingEl64(u64::from_le_bytes(c.try_into().unwrap())),
                fraction_bits,
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Shared key schedule

/// 11 round keys of 16 bytes, each byte an XOR-shared GF(2^8) element.
pub struct SharedKeySchedule {
    bytes: Vec<RssShare<Gf8>>,
}

impl SharedKeySchedule {
    /// Forms the replicated sharing `[k] = [k_1] + [k_2] + [k_3]` from this
    /// party's local schedule share: each party passes its share to the
    /// previous party so the replication invariant holds.
    pub fn from_local_share(
        s: &mut Session,
        share: &[u8; KEY_SCHEDULE_BYTES],
    ) -> MpcResult<SharedKeySchedule> {
        let me = s.party();
        s.send(me.prev(), MsgTag::KeyShare, share)?;
        let next = s.recv(me.next(), MsgTag::KeyShare)?;
        if next.len() != KEY_SCHEDULE_BYTES {
            return Err(MpcError::Format(format!(
                "key-schedule share has {} bytes",
                next.len()
            )));
        }
        Ok(SharedKeySchedule {
            bytes: share
                .iter()
                .zip(&next)
                .map(|(&own, &nx)| RssShare::new(Gf8(own), Gf8(nx)))
                .collect(),
        })
    }

    /// Test/dealer constructor from explicit share pairs.
    pub fn from_share_pairs(bytes: Vec<RssShare<Gf8>>) -> SharedKeySchedule {
        assert_eq!(bytes.len(), KEY_SCHEDULE_BYTES);
        SharedKeySchedule { bytes }
    }

    fn round_key(&self, round: usize) -> &[RssShare<Gf8>] {
        &self.bytes[16 * round..16 * (round + 1)]
    }
}

// ---------------------------------------------------------------------------
// Shared S-box and the AES round function

fn square_share(x: RssShare<Gf8>) -> RssShare<Gf8> {
    RssShare::new(x.own.square(), x.next.square())
}

fn affine_linear(b: Gf8) -> Gf8 {
    let x = b.0;
    let mut r = 0u8;
    for i in 0..8 {
        let bit = (x >> i)
            ^ (x >> ((i + 4) % 8))
            ^ (x >> ((i + 5) % 8))
            ^ (x >> ((i + 6) % 8))
            ^ (x >> ((i + 7) % 8));
        r |= (bit & 1) << i;
    }
    Gf8(r)
}

/// SubBytes on a share vector: inversion as `x^254` (squarings local, four
/// shared multiplications) followed by the public affine map.
pub fn sbox_shared_vec(s: &mut Session, xs: &[RssShare<Gf8>]) -> MpcResult<Vec<RssShare<Gf8>>> {
    let x2: Vec<_> = xs.iter().map(|&x| square_share(x)).collect();
    let x3 = mul_vec::<Gf8>(s, &x2, xs)?;
    let x12: Vec<_> = x3.iter().map(|&x| square_share(square_share(x))).collect();
    let x15 = mul_vec::<Gf8>(s, &x12, &x3)?;
    let x240: Vec<_> = x15
        .iter()
        .map(|&x| square_share(square_share(square_share(square_share(x)))))
        .collect();
    let x252 = mul_vec::<Gf8>(s, &x240, &x12)?;
    let x254 = mul_vec::<Gf8>(s, &x252, &x2)?;
    let party = s.party();
    Ok(x254
        .into_iter()
        .map(|x| {
            let lin = RssShare::new(affine_linear(x.own), affine_linear(x.next));
            add_public(party, lin, Gf8(SBOX_CONSTANT))
        })
        .collect())
}

/// Single-byte S-box evaluation.
pub fn sbox_shared(s: &mut Session, x: RssShare<Gf8>) -> MpcResult<RssShare<Gf8>> {
    Ok(sbox_shared_vec(s, &[x])?[0])
}

fn shift_rows(state: &mut [RssShare<Gf8>]) {
    for block in state.chunks_exact_mut(16) {
        let old: [RssShare<Gf8>; 16] = block.try_into().unwrap();
        for col in 0..4 {
            for row in 0..4 {
                block[row + 4 * col] = old[row + 4 * ((col + row) % 4)];
            }
        }
    }
}

fn mix_columns(state: &mut [RssShare<Gf8>]) {
    fn mix(a: [Gf8; 4]) -> [Gf8; 4] {
        let [a0, a1, a2, a3] = a;
        [
            a0.xtime().add(a1.xtime()).add(a1).add(a2).add(a3),
            a1.xtime().add(a2.xtime()).add(a2).add(a3).add(a0),
            a2.xtime().add(a3.xtime()).add(a3).add(a0).add(a1),
            a3.xtime().add(a0.xtime()).add(a0).add(a1).add(a2),
        ]
    }
    for block in state.chunks_exact_mut(16) {
        for col in 0..4 {
            let own = mix([0, 1, 2, 3].map(|r| block[4 * col + r].own));
            let next = mix([0, 1, 2, 3].map(|r| block[4 * col + r].next));
            for r in 0..4 {
                block[4 * col + r] = RssShare::new(own[r], next[r]);
            }
        }
    }
}

fn add_round_key(state: &mut [RssShare<Gf8>], rk: &[RssShare<Gf8>]) {
    for (i, byte) in state.iter_mut().enumerate() {
        *byte = byte.add(rk[i % 16]);
    }
}

/// Encrypts public 16-byte blocks under the shared schedule; returns the
/// shared cipher blocks, concatenated. All blocks move through the rounds
/// together, so the protocol costs 40 multiplication rounds regardless of
/// the batch size.
pub fn aes_encrypt_shared(
    s: &mut Session,
    ks: &SharedKeySchedule,
    blocks: &[[u8; 16]],
) -> MpcResult<Vec<RssShare<Gf8>>> {
    let party = s.party();
    s.ensure_triples::<Gf8>(blocks.len() * 16 * 10 * 4)?;
    let mut state: Vec<RssShare<Gf8>> = Vec::with_capacity(blocks.len() * 16);
    for block in blocks {
        let rk0 = ks.round_key(0);
        for (j, &byte) in block.iter().enumerate() {
            state.push(add_public(party, rk0[j], Gf8(byte)));
        }
    }
    for round in 1..=9 {
        state = sbox_shared_vec(s, &state)?;
        shift_rows(&mut state);
        mix_columns(&mut state);
        add_round_key(&mut state, ks.round_key(round));
    }
    state = sbox_shared_vec(s, &state)?;
    shift_rows(&mut state);
    add_round_key(&mut state, ks.round_key(10));
    Ok(state)
}

/// The GCM counter block `N || counter` (32-bit big-endian counter).
fn counter_block(nonce: &[u8; NONCE_BYTES], counter: u32) -> [u8; 16] {
    let mut block = [0u8; 16];
    block[..12].copy_from_slice(nonce);
    block[12..].copy_from_slice(&counter.to_be_bytes());
    block
}

/// Shared AES-CTR keystream blocks: block `j` encrypts
/// `N || (counter_start + j)`. GCM data blocks start at counter 2.
pub fn keystream_shared(
    s: &mut Session,
    ks: &SharedKeySchedule,
    nonce: &[u8; NONCE_BYTES],
    counter_start: u32,
    nblocks: usize,
) -> MpcResult<Vec<RssShare<Gf8>>> {
    let blocks: Vec<[u8; 16]> = (0..nblocks)
        .map(|j| counter_block(nonce, counter_start.wrapping_add(j as u32)))
        .collect();
    aes_encrypt_shared(s, ks, &blocks)
}

/// Repacks 16 shared bytes into one shared GCM field element (big-endian).
fn pack_block(bytes: &[RssShare<Gf8>]) -> RssShare<Gf128> {
    let mut own = [0u8; 16];
    let mut next = [0u8; 16];
    for (i, sh) in bytes.iter().enumerate() {
        own[i] = sh.own.0;
        next[i] = sh.next.0;
    }
    RssShare::new(Gf128::from_be_bytes(own), Gf128::from_be_bytes(next))
}

fn public_blocks(data: &[u8]) -> Vec<Gf128> {
    data.chunks(16)
        .map(|chunk| {
            let mut block = [0u8; 16];
            block[..chunk.len()].copy_from_slice(chunk);
            Gf128::from_be_bytes(block)
        })
        .collect()
}

/// GHASH over public `ad` and `ct` with a shared hash key: Horner
/// evaluation, one shared GF(2^128) multiplication per block including
/// the final length block. In detection mode every product is queued for
/// batched verification.
pub fn ghash_shared(
    s: &mut Session,
    hkey: RssShare<Gf128>,
    ad: &[u8],
    ct: &[u8],
) -> MpcResult<RssShare<Gf128>> {
    let mut blocks = public_blocks(ad);
    blocks.extend(public_blocks(ct));
    let mut length_block = [0u8; 16];
    length_block[..8].copy_from_slice(&(8 * ad.len() as u64).to_be_bytes());
    length_block[8..].copy_from_slice(&(8 * ct.len() as u64).to_be_bytes());
    blocks.push(Gf128::from_be_bytes(length_block));

    s.ensure_triples::<Gf128>(blocks.len())?;
    let party = s.party();
    let mut acc = RssShare::<Gf128>::ZERO;
    for block in blocks {
        let u = add_public(party, acc, block);
        let product = mul_vec::<Gf128>(s, &[u], &[hkey])?[0];
        if s.malicious_checks() {
            rss::queue_gf128_product(
                s,
                ProductWitness {
                    u,
                    v: hkey,
                    w: product,
                },
            );
        }
        acc = product;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Distributed GCM

/// Decrypts a public AES-GCM ciphertext into shared plaintext bytes.
/// Fails with `auth-failed` when the recomputed tag (opened after all
/// queued products verify) differs from the public tag.
pub fn gcm_decrypt_shared(
    s: &mut Session,
    ks: &SharedKeySchedule,
    record: &GcmCiphertext,
    ad: &[u8],
) -> MpcResult<Vec<RssShare<Gf8>>> {
    let nblocks = record.body.len().div_ceil(16);
    // One AES batch: H = AES(0), the tag mask AES(J0), then the data
    // counter blocks.
    let mut blocks = Vec::with_capacity(2 + nblocks);
    blocks.push([0u8; 16]);
    blocks.push(counter_block(&record.nonce, 1));
    for j in 0..nblocks {
        blocks.push(counter_block(&record.nonce, 2 + j as u32));
    }
    let enc = aes_encrypt_shared(s, ks, &blocks)?;
    let hkey = pack_block(&enc[..16]);
    let tag_mask = pack_block(&enc[16..32]);
    let keystream = &enc[32..];

    let party = s.party();
    let plaintext: Vec<RssShare<Gf8>> = record
        .body
        .iter()
        .enumerate()
        .map(|(i, &c)| add_public(party, keystream[i], Gf8(c)))
        .collect();

    let digest = ghash_shared(s, hkey, ad, &record.body)?;
    let tag_share = digest.add(tag_mask);
    if s.malicious_checks() {
        rss::verify_queued_gf128_products(s)?;
    }
    let tag = rss::open_vec(s, &[tag_share])?[0];
    if tag.to_be_bytes() != record.tag {
        return Err(MpcError::AuthFailed);
    }
    Ok(plaintext)
}

/// Encrypts shared plaintext bytes into a public AES-GCM ciphertext.
/// The ciphertext is public by definition, so the masked bytes are opened;
/// the tag is opened only after queued products verify.
pub fn gcm_encrypt_shared(
    s: &mut Session,
    ks: &SharedKeySchedule,
    nonce: &[u8; NONCE_BYTES],
    ad: &[u8],
    plaintext: &[RssShare<Gf8>],
) -> MpcResult<GcmCiphertext> {
    let nblocks = plaintext.len().div_ceil(16);
    let mut blocks = Vec::with_capacity(2 + nblocks);
    blocks.push([0u8; 16]);
    blocks.push(counter_block(nonce, 1));
    for j in 0..nblocks {
        blocks.push(counter_block(nonce, 2 + j as u32));
    }
    let enc = aes_encrypt_shared(s, ks, &blocks)?;
    let hkey = pack_block(&enc[..16]);
    let tag_mask = pack_block(&enc[16..32]);
    let keystream = &enc[32..];

    let masked: Vec<RssShare<Gf8>> = plaintext
        .iter()
        .enumerate()
        .map(|(i, &p)| p.add(keystream[i]))
        .collect();
    let body: Vec<u8> = rss::open_vec(s, &masked)?.into_iter().map(|g| g.0).collect();

    let digest = ghash_shared(s, hkey, ad, &body)?;
    let tag_share = digest.add(tag_mask);
    if s.malicious_checks() {
        rss::verify_queued_gf128_products(s)?;
    }
    let tag = rss::open_vec(s, &[tag_share])?[0];
    Ok(GcmCiphertext {
        nonce: *nonce,
        body,
        tag: tag.to_be_bytes(),
    })
}

// ---------------------------------------------------------------------------
// Byte-share <-> bit-share glue

/// Groups shared bytes into 64-bit little-endian words as bit lanes.
fn bytes_to_bitvec(bytes: &[RssShare<Gf8>]) -> BitVecShare {
    assert_eq!(bytes.len() % 8, 0);
    let values: Vec<(u64, u64)> = bytes
        .chunks_exact(8)
        .map(|group| {
            let mut own = [0u8; 8];
            let mut next = [0u8; 8];
            for (i, sh) in group.iter().enumerate() {
                own[i] = sh.own.0;
                next[i] = sh.next.0;
            }
            (u64::from_le_bytes(own), u64::from_le_bytes(next))
        })
        .collect();
    BitVecShare::from_value_shares(64, &values)
}

/// Inverse of [`bytes_to_bitvec`].
fn bitvec_to_bytes(bits: &BitVecShare) -> Vec<RssShare<Gf8>> {
    assert_eq!(bits.width(), 64);
    let mut out = Vec::with_capacity(bits.lanes * 8);
    for (own, next) in bits.to_value_shares() {
        let o = own.to_le_bytes();
        let n = next.to_le_bytes();
        for i in 0..8 {
            out.push(RssShare::new(Gf8(o[i]), Gf8(n[i])));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The distributed protocols

/// Distributed decryption: public sample ciphertext in, arithmetic shares
/// of the 187 fixed-point values out.
pub fn dist_dec(
    s: &mut Session,
    record: &GcmCiphertext,
    user_id: &str,
    key_schedule_share: &[u8; KEY_SCHEDULE_BYTES],
) -> MpcResult<Vec<RssShare<RingEl64>>> {
    let ks = SharedKeySchedule::from_local_share(s, key_schedule_share)?;
    dist_dec_with_schedule(s, record, user_id, &ks)
}

/// Batched variant: all samples of one analysis share one key schedule,
/// which the caller keeps for the following distributed encryption.
pub fn dist_dec_batch(
    s: &mut Session,
    records: &[GcmCiphertext],
    user_id: &str,
    ks: &SharedKeySchedule,
) -> MpcResult<Vec<Vec<RssShare<RingEl64>>>> {
    records
        .iter()
        .map(|record| dist_dec_with_schedule(s, record, user_id, ks))
        .collect()
}

fn dist_dec_with_schedule(
    s: &mut Session,
    record: &GcmCiphertext,
    user_id: &str,
    ks: &SharedKeySchedule,
) -> MpcResult<Vec<RssShare<RingEl64>>> {
    if record.body.len() != SAMPLE_BYTES {
        return Err(MpcError::Format(format!(
            "sample ciphertext body must be {SAMPLE_BYTES} bytes, got {}",
            record.body.len()
        )));
    }
    let ad = device_ad(user_id, &record.nonce);
    let plaintext = gcm_decrypt_shared(s, ks, record, &ad)?;
    let bits = bytes_to_bitvec(&plaintext);
    b2a(s, &bits)
}

/// Distributed encryption of the inference output (`RESULT_VALUES` scores
/// per row): converts to boolean sharing, encrypts under the shared key
/// with the deterministic context nonce, and returns `ct || tag`.
pub fn dist_enc(
    s: &mut Session,
    y: &[RssShare<RingEl64>],
    ks: &SharedKeySchedule,
    ctx: &ResultContext,
) -> MpcResult<Vec<u8>> {
    if y.is_empty() || y.len() % RESULT_VALUES != 0 {
        return Err(MpcError::Format(format!(
            "result must be rows of {RESULT_VALUES} scores, got {} values",
            y.len()
        )));
    }
    let bits = a2b(s, y)?;
    let plaintext = bitvec_to_bytes(&bits);
    let record = gcm_encrypt_shared(s, ks, &ctx.nonce(), &ctx.ad(), &plaintext)?;
    let mut out = record.body;
    out.extend_from_slice(&record.tag);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_expansion_matches_fips_vector() {
        let key = [
            0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf,
            0x4f, 0x3c,
        ];
        let ks = expand_key(&key);
        assert_eq!(&ks[..4], &[0x2b, 0x7e, 0x15, 0x16]);
        assert_eq!(&ks[16..20], &[0xa0, 0xfa, 0xfe, 0x17]);
        assert_eq!(
            &ks[160..176],
            &[
                0xd0, 0x14, 0xf9, 0xa8, 0xc9, 0xee, 0x25, 0x89, 0xe1, 0x3f, 0x0c, 0xc8, 0xb6,
                0x63, 0x0c, 0xa6
            ]
        );
    }

    #[test]
    fn const_sbox_matches_reference_values() {
        assert_eq!(SBOX[0x00], 0x63);
        assert_eq!(SBOX[0x01], 0x7c);
        assert_eq!(SBOX[0x53], 0xed);
        assert_eq!(SBOX[0xff], 0x16);
    }

    #[test]
    fn sample_encoding_round_trip() {
        let values: Vec<f64> = (0..SAMPLE_VALUES).map(|i| (i as f64) / 16.0 - 5.0).collect();
        let bytes = encode_sample(&values, 8).unwrap();
        assert_eq!(bytes.len(), SAMPLE_BYTES);
        let back = decode_sample(&bytes, 8).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() <= 2f64.powi(-8));
        }
    }

    #[test]
    fn record_layout_is_1524_bytes() {
        let record = GcmCiphertext {
            nonce: [1; NONCE_BYTES],
            body: vec![0; SAMPLE_BYTES],
            tag: [2; TAG_BYTES],
        };
        let bytes = record.to_bytes();
        assert_eq!(bytes.len(), SAMPLE_RECORD_BYTES);
        assert_eq!(GcmCiphertext::from_bytes(&bytes).unwrap(), record);
    }

    #[test]
    fn result_nonce_is_a_function_of_the_context() {
        let ctx = ResultContext {
            user_id: "alice".into(),
            party_pks: [vec![1; 256], vec![2; 256], vec![3; 256]],
            analysis_id: "an-1".into(),
            analysis_type: "ecg-5".into(),
        };
        assert_eq!(ctx.nonce(), ctx.nonce());
        let mut other = ctx.clone();
        other.analysis_id = "an-2".into();
        assert_ne!(ctx.nonce(), other.nonce());
    }
}
