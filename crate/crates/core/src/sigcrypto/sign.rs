use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backend::PairingBackend;
use super::hex_big;
use crate::error::{Error, Result};
use crate::numerics::RealTensor;
use crate::ClientId;

/// Half-width of the exponent window `verify` scans for a diagnostic.
pub const DEFAULT_PROBE_WINDOW: i64 = 2;

/// A follower's signing key `Υ`, uniform in `[1, order - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKey {
    #[serde(with = "hex_big")]
    upsilon: BigUint,
}

impl PrivateKey {
    pub fn random<R: Rng + ?Sized>(order: &BigUint, rng: &mut R) -> Self {
        // 128 spare bits make the modulo bias negligible.
        let limbs = (order.bits() as usize).div_ceil(32) + 4;
        let raw = BigUint::new((0..limbs).map(|_| rng.random()).collect());
        let upsilon = raw % (order - 1u32) + 1u32;
        Self { upsilon }
    }

    pub fn from_value(upsilon: BigUint) -> Self {
        Self { upsilon }
    }

    pub fn value(&self) -> &BigUint {
        &self.upsilon
    }
}

/// `g^(V^(k) + Υ)` for each slice digest, digests in grid units.
pub fn sign_logits<B: PairingBackend>(digests: &[i64], key: &PrivateKey, backend: &B) -> Vec<B::G> {
    let upsilon = BigInt::from(key.upsilon.clone());
    digests.iter().map(|&v| backend.g_pow(&(BigInt::from(v) + &upsilon))).collect()
}

/// `g^(w̄)` for a quantized weight.
pub fn sign_weight<B: PairingBackend>(quantized_weight: i64, backend: &B) -> B::G {
    backend.g_pow(&BigInt::from(quantized_weight))
}

/// Per-member slice signatures and weight signatures of one group.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AuxProofs<B: PairingBackend> {
    pub logits_sigs: BTreeMap<ClientId, Vec<B::G>>,
    pub weight_sigs: BTreeMap<ClientId, B::G>,
}

impl<B: PairingBackend> Default for AuxProofs<B> {
    fn default() -> Self {
        Self { logits_sigs: BTreeMap::new(), weight_sigs: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Proof<B: PairingBackend> {
    pub pi_c: B::Gt,
}

impl<B: PairingBackend> PartialEq for AuxProofs<B> {
    fn eq(&self, other: &Self) -> bool {
        self.logits_sigs == other.logits_sigs && self.weight_sigs == other.weight_sigs
    }
}

impl<B: PairingBackend> PartialEq for Proof<B> {
    fn eq(&self, other: &Self) -> bool {
        self.pi_c == other.pi_c
    }
}

/// `π = Π_z e(Π_k π_z^(k), π_z^c)` over the roster.
pub fn aggregate_proof<B: PairingBackend>(
    aux: &AuxProofs<B>,
    roster: &[ClientId],
    k: usize,
    backend: &B,
) -> Result<Proof<B>> {
    let mut pi_c = backend.gt_identity();
    for &member in roster {
        let sigs = aux.logits_sigs.get(&member).filter(|s| s.len() == k).ok_or(Error::IncompleteAux(member))?;
        let weight = aux.weight_sigs.get(&member).ok_or(Error::IncompleteAux(member))?;
        let folded = sigs.iter().fold(backend.g_identity(), |acc, s| backend.g_mul(&acc, s));
        pi_c = backend.gt_mul(&pi_c, &backend.pair(&folded, weight));
    }
    Ok(Proof { pi_c })
}

/// `round(Σ ŷ·10^(2q)) + K·Σ_i w̄_i Υ_i`, unreduced.
pub fn expected_exponent(
    teacher: &RealTensor,
    quantized_weights: &[i64],
    keys: &[PrivateKey],
    k: usize,
    q: u32,
) -> Result<BigInt> {
    if quantized_weights.len() != keys.len() {
        return Err(Error::InvalidParameter(format!("{} weights for {} keys", quantized_weights.len(), keys.len())));
    }
    let scaled = teacher.sum() * 10f64.powi(2 * q as i32);
    if !scaled.is_finite() || scaled.abs() >= 2f64.powi(62) {
        return Err(Error::Overflow { value: teacher.sum(), digits: 2 * q });
    }
    let mut e = BigInt::from(scaled.round() as i64);
    let mut keyed = BigInt::zero();
    for (&w, key) in quantized_weights.iter().zip(keys) {
        keyed += BigInt::from(w) * BigInt::from(key.upsilon.clone());
    }
    e += keyed * k;
    Ok(e)
}

/// Outcome of the leader's check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    /// `offset` is the integer `d` with `e(g,g)^(E+d) = π` when one lies in
    /// the probe window, which points at a rounding slip rather than tampering.
    Reject {
        offset: Option<i64>,
    },
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Self::Accept)
    }
}

/// Checks `e(g,g)^E = π` for the reconstructed exponent `E`.
#[allow(clippy::too_many_arguments)]
pub fn verify<B: PairingBackend>(
    proof: &Proof<B>,
    teacher: &RealTensor,
    quantized_weights: &[i64],
    keys: &[PrivateKey],
    k: usize,
    q: u32,
    window: i64,
    backend: &B,
) -> Result<Verdict> {
    let e = expected_exponent(teacher, quantized_weights, keys, k, q)?;
    let base = backend.gt_pow_base(&e);
    if base == proof.pi_c {
        return Ok(Verdict::Accept);
    }
    let up = backend.gt_pow_base(&BigInt::from(1));
    let down = backend.gt_pow_base(&BigInt::from(-1));
    let (mut hi, mut lo) = (base.clone(), base);
    for d in 1..=window {
        hi = backend.gt_mul(&hi, &up);
        if hi == proof.pi_c {
            return Ok(Verdict::Reject { offset: Some(d) });
        }
        lo = backend.gt_mul(&lo, &down);
        if lo == proof.pi_c {
            return Ok(Verdict::Reject { offset: Some(-d) });
        }
    }
    Ok(Verdict::Reject { offset: None })
}
