//! Fixed-point secure inference: dense layers with probabilistic
//! truncation, ReLU through binary circuits, and batch bookkeeping.
//!
//! All values are fixed-point with `f` fractional bits in `Z_{2^64}`. A
//! dense layer computes the raw double-precision products, sums them, and
//! truncates once per output element; the result carries at most one unit
//! of probabilistic error in the last place.

use crate::algebra::{fp_encode, BitWord, RingEl64, FRACTION_BITS};
use crate::convert::{a2b, b2a, BitRow, BitVecShare};
use crate::error::{MpcError, MpcResult};
use crate::rss::{self, add_public, mul_vec, RssShare};
use crate::session::{Session, StreamLabel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default fraction bits used across the pipeline.
pub const MODEL_FRACTION_BITS: u32 = FRACTION_BITS;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LayerShape {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// The reference architecture: 187 inputs, four hidden layers of 50, five
/// output scores.
pub fn reference_architecture() -> Vec<LayerShape> {
    let mut shapes = vec![LayerShape {
        input: 187,
        output: 50,
        activation: Activation::Relu,
    }];
    for _ in 0..3 {
        shapes.push(LayerShape {
            input: 50,
            output: 50,
            activation: Activation::Relu,
        });
    }
    shapes.push(LayerShape {
        input: 50,
        output: 5,
        activation: Activation::Linear,
    });
    shapes
}

/// A row-major matrix of arithmetic shares.
#[derive(Clone, Debug)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<RssShare<RingEl64>>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<RssShare<RingEl64>>) -> Matrix {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn at(&self, row: usize, col: usize) -> RssShare<RingEl64> {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[RssShare<RingEl64>] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

// ---------------------------------------------------------------------------
// Truncation

/// A preprocessed truncation pair `([r], [r >> f])` with `r` uniform below
/// `2^63`; built from shared random bits, so the high part is exact.
struct TruncPair {
    mask: RssShare<RingEl64>,
    mask_high: RssShare<RingEl64>,
}

fn gen_trunc_pairs(s: &mut Session, n: usize, fraction_bits: u32) -> MpcResult<Vec<TruncPair>> {
    let f = fraction_bits as usize;
    let words = n.div_ceil(64);
    // 63 random bit columns per lane (bit 63 stays zero so masking never
    // wraps), shared with zero communication from the pairwise PRFs.
    let mut cols = Vec::with_capacity(63);
    for _ in 0..63 {
        let mut own = Vec::with_capacity(words);
        let mut next = Vec::with_capacity(words);
        for _ in 0..words {
            let sh = rss::rand_share::<BitWord>(s, StreamLabel::TruncBits);
            own.push(sh.own.0);
            next.push(sh.next.0);
        }
        cols.push(BitRow { own, next });
    }
    let bits = BitVecShare::from_cols(n, cols).zero_extend(64);
    let high = bits.slice_bits(f, 63).zero_extend(64);

    // One conversion round for both values: lanes 0..n hold r, lanes
    // n..2n hold r >> f.
    let mut combined_vals = bits.to_value_shares();
    combined_vals.extend(high.to_value_shares());
    let combined = BitVecShare::from_value_shares(64, &combined_vals);
    let arith = b2a(s, &combined)?;
    Ok((0..n)
        .map(|i| TruncPair {
            mask: arith[i],
            mask_high: arith[n + i],
        })
        .collect())
}

/// Probabilistic truncation by `f` bits: reconstructs to `⌊x / 2^f⌋ + e`
/// with `e ∈ {0, 1}`. Inputs must satisfy `|x| < 2^(63-f)` raw; in
/// detection mode the opened masked value is range-checked and trips
/// `trunc-overflow` otherwise.
pub fn truncate_vec(
    s: &mut Session,
    xs: &[RssShare<RingEl64>],
    fraction_bits: u32,
) -> MpcResult<Vec<RssShare<RingEl64>>> {
    let pairs = gen_trunc_pairs(s, xs.len(), fraction_bits)?;
    let party = s.party();
    let offset = 1u64 << 62;
    let masked: Vec<RssShare<RingEl64>> = xs
        .iter()
        .zip(&pairs)
        .map(|(&x, pair)| add_public(party, x.add(pair.mask), RingEl64(offset)))
        .collect();
    let opened = rss::open_vec(s, &masked)?;
    if s.malicious_checks() {
        let bound = 1u64 << (63 - fraction_bits);
        let lo = offset - bound;
        let hi = (1u64 << 63) + offset + bound;
        for z in &opened {
            if z.0 < lo || z.0 >= hi {
                return Err(MpcError::TruncOverflow);
            }
        }
    }
    let public_shift = 1u64 << (62 - fraction_bits);
    Ok(opened
        .iter()
        .zip(&pairs)
        .map(|(z, pair)| {
            let constant = (z.0 >> fraction_bits).wrapping_sub(public_shift);
            add_public(party, pair.mask_high.neg(), RingEl64(constant))
        })
        .collect())
}

/// Single-element truncation.
pub fn truncate(
    s: &mut Session,
    x: RssShare<RingEl64>,
    fraction_bits: u32,
) -> MpcResult<RssShare<RingEl64>> {
    Ok(truncate_vec(s, &[x], fraction_bits)?[0])
}

// ---------------------------------------------------------------------------
// Layers

/// One dense layer: shares of the weight matrix (input × output,
/// row-major) and the bias vector.
pub struct SharedLayer {
    pub shape: LayerShape,
    pub weights: Vec<RssShare<RingEl64>>,
    pub bias: Vec<RssShare<RingEl64>>,
}

/// One party's share of a model plus the architecture descriptor.
pub struct SharedModel {
    pub fraction_bits: u32,
    pub layers: Vec<SharedLayer>,
}

/// Keeps per-chunk triple consumption bounded during the matrix product.
const DENSE_TRIPLE_BUDGET: usize = 1 << 19;

/// `x · W + b` with one truncation per output element.
pub fn dense(
    s: &mut Session,
    x: &Matrix,
    layer: &SharedLayer,
    fraction_bits: u32,
) -> MpcResult<Matrix> {
    let (input, output) = (layer.shape.input, layer.shape.output);
    if x.cols != input {
        return Err(MpcError::Format(format!(
            "dense input has {} columns, layer expects {input}",
            x.cols
        )));
    }
    let per_row = input * output;
    let chunk_rows = (DENSE_TRIPLE_BUDGET / per_row).max(1);
    let mut raw = Vec::with_capacity(x.rows * output);
    let all_rows: Vec<usize> = (0..x.rows).collect();
    for chunk in all_rows.chunks(chunk_rows) {
        let mut lhs = Vec::with_capacity(chunk.len() * per_row);
        let mut rhs = Vec::with_capacity(chunk.len() * per_row);
        for &r in chunk {
            let row = x.row(r);
            for j in 0..output {
                for (k, &xv) in row.iter().enumerate() {
                    lhs.push(xv);
                    rhs.push(layer.weights[k * output + j]);
                }
            }
        }
        let products = mul_vec::<RingEl64>(s, &lhs, &rhs)?;
        for idx in 0..chunk.len() {
            for j in 0..output {
                let base = idx * per_row + j * input;
                let mut acc = RssShare::<RingEl64>::ZERO;
                for p in &products[base..base + input] {
                    acc = acc.add(*p);
                }
                raw.push(acc);
            }
        }
    }
    let truncated = truncate_vec(s, &raw, fraction_bits)?;
    let data: Vec<RssShare<RingEl64>> = truncated
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.add(layer.bias[i % output]))
        .collect();
    Ok(Matrix::new(x.rows, output, data))
}

/// Element-wise ReLU: the sign bit comes from the boolean conversion, its
/// complement returns to arithmetic as a 0/1 mask, and one multiplication
/// applies it.
pub fn relu(s: &mut Session, x: &Matrix) -> MpcResult<Matrix> {
    let bits = a2b(s, &x.data)?;
    let sign = bits.col(63);
    // NOT on packed bits: flip component 1 (party 1 own, party 3 next).
    let mut not_sign = sign.clone();
    match s.party().number() {
        1 => not_sign.own.iter_mut().for_each(|w| *w = !*w),
        3 => not_sign.next.iter_mut().for_each(|w| *w = !*w),
        _ => {}
    }
    let mask_bits = BitVecShare::from_cols(x.data.len(), vec![not_sign]).zero_extend(64);
    let mask = b2a(s, &mask_bits)?;
    let data = mul_vec::<RingEl64>(s, &x.data, &mask)?;
    Ok(Matrix::new(x.rows, x.cols, data))
}

/// Forward pass over all layers: dense, then the layer's activation.
pub fn infer(s: &mut Session, input: &Matrix, model: &SharedModel) -> MpcResult<Matrix> {
    let mut current = input.clone();
    for layer in &model.layers {
        current = dense(s, &current, layer, model.fraction_bits)?;
        if layer.shape.activation == Activation::Relu {
            current = relu(s, &current)?;
        }
    }
    Ok(current)
}

// ---------------------------------------------------------------------------
// Batch bookkeeping

/// Row bookkeeping for flattening per-analysis matrices into one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchLayout {
    pub row_counts: Vec<usize>,
    pub cols: usize,
}

/// Stacks per-analysis matrices into one large matrix, recording the row
/// grouping.
pub fn flatten_batch(matrices: &[Matrix]) -> MpcResult<(Matrix, BatchLayout)> {
    if matrices.is_empty() {
        return Err(MpcError::Format("empty batch".into()));
    }
    let cols = matrices[0].cols;
    if matrices.iter().any(|m| m.cols != cols) {
        return Err(MpcError::Format("batch matrices differ in width".into()));
    }
    let mut data = Vec::new();
    let mut row_counts = Vec::with_capacity(matrices.len());
    for m in matrices {
        row_counts.push(m.rows);
        data.extend_from_slice(&m.data);
    }
    let rows = row_counts.iter().sum();
    Ok((
        Matrix::new(rows, cols, data),
        BatchLayout { row_counts, cols },
    ))
}

/// Splits a flattened matrix back into per-analysis matrices.
pub fn unflatten_batch(matrix: &Matrix, layout: &BatchLayout) -> MpcResult<Vec<Matrix>> {
    let expected: usize = layout.row_counts.iter().sum();
    if matrix.rows != expected {
        return Err(MpcError::Format(format!(
            "row count {} does not match layout total {expected}",
            matrix.rows
        )));
    }
    let mut out = Vec::with_capacity(layout.row_counts.len());
    let mut offset = 0;
    for &rows in &layout.row_counts {
        let data = matrix.data[offset * matrix.cols..(offset + rows) * matrix.cols].to_vec();
        out.push(Matrix::new(rows, matrix.cols, data));
        offset += rows;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Plaintext models and oracles

pub mod plain {
    use super::*;

    /// A plaintext dense layer; weights indexed `[input][output]`.
    #[derive(Clone, Debug, Serialize, Deserialize)]
    pub struct PlainLayer {
        pub weights: Vec<Vec<f64>>,
        pub bias: Vec<f64>,
        pub activation: Activation,
    }

    /// The model provider's plaintext model.
    #[derive(Clone, Debug, Serialize, Deserialize)]
    pub struct PlainModel {
        pub layers: Vec<PlainLayer>,
    }

    impl PlainModel {
        pub fn shapes(&self) -> Vec<LayerShape> {
            self.layers
                .iter()
                .map(|l| LayerShape {
                    input: l.weights.len(),
                    output: l.bias.len(),
                    activation: l.activation,
                })
                .collect()
        }

        /// Random model with weights and biases uniform in `[-1, 1] / fan_in`.
        pub fn random<R: rand::Rng + ?Sized>(shapes: &[LayerShape], rng: &mut R) -> PlainModel {
            let layers = shapes
                .iter()
                .map(|shape| {
                    let scale = 1.0 / shape.input as f64;
                    PlainLayer {
                        weights: (0..shape.input)
                            .map(|_| {
                                (0..shape.output)
                                    .map(|_| rng.gen_range(-1.0..1.0) * scale)
                                    .collect()
                            })
                            .collect(),
                        bias: (0..shape.output)
                            .map(|_| rng.gen_range(-1.0..1.0) * scale)
                            .collect(),
                        activation: shape.activation,
                    }
                })
                .collect();
            PlainModel { layers }
        }

        /// Floating-point forward pass.
        pub fn forward_f64(&self, x: &[f64]) -> Vec<f64> {
            let mut cur = x.to_vec();
            for layer in &self.layers {
                let mut next = layer.bias.clone();
                for (k, row) in layer.weights.iter().enumerate() {
                    for (j, w) in row.iter().enumerate() {
                        next[j] += cur[k] * w;
                    }
                }
                if layer.activation == Activation::Relu {
                    for v in &mut next {
                        *v = v.max(0.0);
                    }
                }
                cur = next;
            }
            cur
        }

        /// Exact fixed-point forward pass mirroring the secure dataflow
        /// (sum of raw products, one floor-shift per output, then bias).
        pub fn forward_fixed(&self, x: &[i64], fraction_bits: u32) -> MpcResult<Vec<i64>> {
            let mut cur: Vec<i64> = x.to_vec();
            for layer in &self.layers {
                let mut next = Vec::with_capacity(layer.bias.len());
                for j in 0..layer.bias.len() {
                    let mut acc: i128 = 0;
                    for (k, row) in layer.weights.iter().enumerate() {
                        let w = fp_encode(row[j], fraction_bits)?.as_signed() as i128;
                        acc += cur[k] as i128 * w;
                    }
                    let b = fp_encode(layer.bias[j], fraction_bits)?.as_signed();
                    next.push(((acc >> fraction_bits) as i64).wrapping_add(b));
                }
                if layer.activation == Activation::Relu {
                    for v in &mut next {
                        if *v < 0 {
                            *v = 0;
                        }
                    }
                }
                cur = next;
            }
            Ok(cur)
        }
    }

    pub fn argmax(scores: &[f64]) -> usize {
        scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Model sharing and provisioning files

fn share_value<R: rand::Rng + ?Sized>(
    value: f64,
    fraction_bits: u32,
    rng: &mut R,
) -> MpcResult<[RssShare<RingEl64>; 3]> {
    Ok(rss::share(fp_encode(value, fraction_bits)?, rng))
}

/// Fixed-point-encodes and secret-shares a plaintext model into the three
/// parties' share models.
pub fn share_model<R: rand::Rng + ?Sized>(
    model: &plain::PlainModel,
    fraction_bits: u32,
    rng: &mut R,
) -> MpcResult<[SharedModel; 3]> {
    let mut out: [Vec<SharedLayer>; 3] = Default::default();
    for layer in &model.layers {
        let shape = LayerShape {
            input: layer.weights.len(),
            output: layer.bias.len(),
            activation: layer.activation,
        };
        if layer.weights.iter().any(|row| row.len() != shape.output) {
            return Err(MpcError::Format("ragged weight matrix".into()));
        }
        let mut weights: [Vec<RssShare<RingEl64>>; 3] = Default::default();
        for row in &layer.weights {
            for &w in row {
                let shares = share_value(w, fraction_bits, rng)?;
                for (p, dst) in weights.iter_mut().enumerate() {
                    dst.push(shares[p]);
                }
            }
        }
        let mut bias: [Vec<RssShare<RingEl64>>; 3] = Default::default();
        for &b in &layer.bias {
            let shares = share_value(b, fraction_bits, rng)?;
            for (p, dst) in bias.iter_mut().enumerate() {
                dst.push(shares[p]);
            }
        }
        let mut bias_iter = bias.into_iter();
        let mut weight_iter = weights.into_iter();
        for layers in out.iter_mut() {
            layers.push(SharedLayer {
                shape,
                weights: weight_iter.next().unwrap(),
                bias: bias_iter.next().unwrap(),
            });
        }
    }
    Ok(out.map(|layers| SharedModel {
        fraction_bits,
        layers,
    }))
}

const MODEL_MAGIC: &[u8; 4] = b"MOZS";
const MODEL_VERSION: u16 = 1;

impl SharedModel {
    /// Serializes the share file: magic, version, party, precision,
    /// architecture descriptor, per-layer share blobs, SHA-256 checksum.
    pub fn to_bytes(&self, party: crate::session::PartyId) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(party.number());
        out.push(self.fraction_bits as u8);
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.shape.input as u32).to_le_bytes());
            out.extend_from_slice(&(layer.shape.output as u32).to_le_bytes());
            out.push(match layer.shape.activation {
                Activation::Linear => 0,
                Activation::Relu => 1,
            });
        }
        for layer in &self.layers {
            for sh in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&sh.own.0.to_le_bytes());
                out.extend_from_slice(&sh.next.0.to_le_bytes());
            }
        }
        let digest: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> MpcResult<(SharedModel, crate::session::PartyId)> {
        if bytes.len() < 42 || &bytes[..4] != MODEL_MAGIC {
            return Err(MpcError::Format("not a model share file".into()));
        }
        let (payload, checksum) = bytes.split_at(bytes.len() - 32);
        let digest: [u8; 32] = Sha256::digest(payload).into();
        if digest[..] != checksum[..] {
            return Err(MpcError::Format("model share checksum mismatch".into()));
        }
        let version = u16::from_le_bytes(payload[4..6].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(MpcError::Format(format!("unsupported version {version}")));
        }
        let party = crate::session::PartyId::new(payload[6])
            .ok_or_else(|| MpcError::Format("bad party index".into()))?;
        let fraction_bits = payload[7] as u32;
        let n_layers = u16::from_le_bytes(payload[8..10].try_into().unwrap()) as usize;
        let mut offset = 10;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            if payload.len() < offset + 9 {
                return Err(MpcError::Format("model share header truncated".into()));
            }
            let input = u32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap());
            let output = u32::from_le_bytes(payload[offset + 4..offset + 8].try_into().unwrap());
            let activation = match payload[offset + 8] {
                0 => Activation::Linear,
                1 => Activation::Relu,
                other => return Err(MpcError::Format(format!("bad activation byte {other}"))),
            };
            shapes.push(LayerShape {
                input: input as usize,
                output: output as usize,
                activation,
            });
            offset += 9;
        }
        let mut layers = Vec::with_capacity(n_layers);
        for shape in shapes {
            let count = shape.input * shape.output + shape.output;
            let need = count * 16;
            if payload.len() < offset + need {
                return Err(MpcError::Format("model share file truncated".into()));
            }
            let mut elements = Vec::with_capacity(count);
            for i in 0..count {
                let base = offset + 16 * i;
                let own = u64::from_le_bytes(payload[base..base + 8].try_into().unwrap());
                let next = u64::from_le_bytes(payload[base + 8..base + 16].try_into().unwrap());
                elements.push(RssShare::new(RingEl64(own), RingEl64(next)));
            }
            offset += need;
            let bias = elements.split_off(shape.input * shape.output);
            layers.push(SharedLayer {
                shape,
                weights: elements,
                bias,
            });
        }
        Ok((
            SharedModel {
                fraction_bits,
                layers,
            },
            party,
        ))
    }

    pub fn write_file(
        &self,
        path: &std::path::Path,
        party: crate::session::PartyId,
    ) -> MpcResult<()> {
        std::fs::write(path, self.to_bytes(party))?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> MpcResult<(SharedModel, crate::session::PartyId)> {
        SharedModel::from_bytes(&std::fs::read(path)?)
    }
}

/// Reconstructs the plaintext fixed-point weights/biases from three share
/// models (dealer/test helper).
pub fn reconstruct_model_raw(models: &[SharedModel; 3]) -> Vec<(Vec<i64>, Vec<i64>)> {
    models[0]
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let w = (0..layer.weights.len())
                .map(|i| {
                    rss::reconstruct(&[
                        models[0].layers[l].weights[i],
                        models[1].layers[l].weights[i],
                        models[2].layers[l].weights[i],
                    ])
                    .as_signed()
                })
                .collect();
            let b = (0..layer.bias.len())
                .map(|i| {
                    rss::reconstruct(&[
                        models[0].layers[l].bias[i],
                        models[1].layers[l].bias[i],
                        models[2].layers[l].bias[i],
                    ])
                    .as_signed()
                })
                .collect();
            (w, b)
        })
        .collect()
}
