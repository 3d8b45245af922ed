//! Quantization, pairing backends, auxiliary signatures, proof aggregation
//! and verification.
//!
//! Every follower signs the digests of its quantized slices with its private
//! key `Υ`, the leader signs the quantized weights, and the server folds all
//! signatures into one pairing product
//!
//! ```text
//! π = Π_z e( Π_k g^(V_z^(k) + Υ_z), g^(w̄_z) ) = e(g,g)^( Σ_z w̄_z (Σ_k V_z^(k) + K Υ_z) )
//! ```
//!
//! The leader recomputes the exponent from the decoded teacher knowledge and
//! the keys it collected. Since `Σ ŷ = Σ_z w_z Σ_k V_z^(k)` with `w_z = w̄_z / 10^q`
//! and digests measured in `10^-q` units, the check multiplies `Σ ŷ` by
//! `10^(2q)` before rounding.

mod backend;
mod quantize;
mod sign;
mod typea;

pub use backend::{BackendKind, MockElement, MockPairing, PairingBackend, MOCK_ORDER};
pub use quantize::{conv, digest, digest_units, quantize_tensor, rounding_margin, ROUNDING_WARN_THRESHOLD};
pub use sign::{
    aggregate_proof, expected_exponent, sign_logits, sign_weight, verify, AuxProofs, PrivateKey, Proof, Verdict,
    DEFAULT_PROBE_WINDOW,
};
pub use typea::{CurvePoint, Fp2, TypeAPairing, COFACTOR_HEX, ORDER_HEX};

pub(crate) mod hex_big {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| serde::de::Error::custom("invalid hex integer"))
    }
}
