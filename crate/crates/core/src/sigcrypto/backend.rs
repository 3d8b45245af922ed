use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A symmetric bilinear group `(r, G, G_T, e)` with a fixed generator `g`.
///
/// Exponents are taken modulo [`order`](Self::order), so callers may pass
/// negative or oversized integers.
pub trait PairingBackend: Debug + Send + Sync {
    type G: Clone + PartialEq + Debug + Send + Sync + Serialize + DeserializeOwned;
    type Gt: Clone + PartialEq + Debug + Send + Sync + Serialize + DeserializeOwned;

    fn name(&self) -> &'static str;

    /// Prime order of `G` and `G_T`.
    fn order(&self) -> &BigUint;

    /// `g^e`.
    fn g_pow(&self, e: &BigInt) -> Self::G;

    fn g_mul(&self, a: &Self::G, b: &Self::G) -> Self::G;

    fn g_identity(&self) -> Self::G;

    /// `e(a, b)`.
    fn pair(&self, a: &Self::G, b: &Self::G) -> Self::Gt;

    fn gt_mul(&self, a: &Self::Gt, b: &Self::Gt) -> Self::Gt;

    fn gt_identity(&self) -> Self::Gt;

    /// `e(g, g)^e`.
    fn gt_pow_base(&self, e: &BigInt) -> Self::Gt;

    /// `e` reduced into `[0, order)`.
    fn reduce(&self, e: &BigInt) -> BigUint {
        let order = BigInt::from(self.order().clone());
        let r = ((e % &order) + &order) % &order;
        r.to_biguint().expect("reduced exponent is nonnegative")
    }
}

/// Backend selection by name: `"mock"` or `"pairing"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Pairing,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "mock" => Ok(Self::Mock),
            "pairing" => Ok(Self::Pairing),
            other => Err(Error::UnknownBackend(other.to_string())),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mock => "mock",
            Self::Pairing => "pairing",
        })
    }
}

/// `2^61 - 1`.
pub const MOCK_ORDER: u64 = (1 << 61) - 1;

/// Group elements stand for their own discrete logarithms modulo the
/// Mersenne prime [`MOCK_ORDER`]: `g^a` is `a`, the group law adds and the
/// pairing multiplies. Useless as cryptography, exact and fast for testing
/// the exponent bookkeeping.
#[derive(Debug, Clone)]
pub struct MockPairing {
    order: BigUint,
}

/// An element of the mock `G` or `G_T`, identified by its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockElement(pub u64);

impl MockPairing {
    pub fn new() -> Self {
        Self { order: BigUint::from(MOCK_ORDER) }
    }

    fn exponent(&self, e: &BigInt) -> u64 {
        let r = self.reduce(e);
        if r.is_zero() {
            0
        } else {
            r.to_u64_digits()[0]
        }
    }
}

impl Default for MockPairing {
    fn default() -> Self {
        Self::new()
    }
}

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % MOCK_ORDER as u128) as u64
}

fn add_mod(a: u64, b: u64) -> u64 {
    ((a as u128 + b as u128) % MOCK_ORDER as u128) as u64
}

impl PairingBackend for MockPairing {
    type G = MockElement;
    type Gt = MockElement;

    fn name(&self) -> &'static str {
        "mock"
    }

    fn order(&self) -> &BigUint {
        &self.order
    }

    fn g_pow(&self, e: &BigInt) -> MockElement {
        MockElement(self.exponent(e))
    }

    fn g_mul(&self, a: &MockElement, b: &MockElement) -> MockElement {
        MockElement(add_mod(a.0, b.0))
    }

    fn g_identity(&self) -> MockElement {
        MockElement(0)
    }

    fn pair(&self, a: &MockElement, b: &MockElement) -> MockElement {
        MockElement(mul_mod(a.0, b.0))
    }

    fn gt_mul(&self, a: &MockElement, b: &MockElement) -> MockElement {
        MockElement(add_mod(a.0, b.0))
    }

    fn gt_identity(&self) -> MockElement {
        MockElement(0)
    }

    fn gt_pow_base(&self, e: &BigInt) -> MockElement {
        MockElement(self.exponent(e))
    }
}

/// `base^e` by square-and-multiply over an arbitrary monoid.
pub(crate) fn pow_by_squaring<T: Clone>(base: &T, e: &BigUint, one: T, mul: impl Fn(&T, &T) -> T) -> T {
    let mut acc = one;
    let mut sq = base.clone();
    let bits = e.bits();
    for i in 0..bits {
        if e.bit(i) {
            acc = mul(&acc, &sq);
        }
        if i + 1 < bits {
            sq = mul(&sq, &sq);
        }
    }
    acc
}
