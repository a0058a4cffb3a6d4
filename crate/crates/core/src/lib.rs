//! Three-party honest-majority MPC engine for encrypted sensor analytics.
//!
//! The crate provides the building blocks the party daemons run:
//!
//! * [`algebra`] — exact arithmetic in `Z_{2^64}` (with fixed-point
//!   encoding) and the binary fields `GF(2^8)`, `GF(2^64)` and `GF(2^128)`,
//!   plus the tower decomposition of `GF(2^128)` used for multiplication
//!   verification.
//! * [`rss`] — 2-out-of-3 replicated secret sharing: share/reconstruct,
//!   openings with cross-checks, Beaver multiplication, triple
//!   preprocessing with pairwise sacrifice and batched product
//!   verification.
//! * [`convert`] — boolean circuit machinery: ripple-carry adder over
//!   shared bits and the arithmetic/boolean share conversions.
//! * [`aesgcm`] — oblivious AES-128-GCM over a boolean-shared key
//!   schedule, including distributed decryption and encryption.
//! * [`infer`] — fixed-point neural network inference (dense layers,
//!   ReLU via binary circuits, probabilistic truncation).
//! * [`consent`] — key-share envelopes bound to an analysis context via
//!   RSA-OAEP labels.
//!
//! Values never exist in the clear at any single party during a protocol
//! run; the engine is a correctness-focused desk-scale artifact and does
//! not attempt constant-time hardening.

pub mod aesgcm;
pub mod algebra;
pub mod consent;
pub mod convert;
pub mod error;
pub mod infer;
pub mod net;
pub mod rss;
pub mod session;
pub mod trio;

pub use error::{MpcError, MpcResult};
pub use session::{PartyId, SecurityMode, Session};
