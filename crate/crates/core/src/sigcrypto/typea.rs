//! Symmetric Type-A pairing on the supersingular curve `y² = x³ + x` over
//! `F_p` with `p ≡ 3 (mod 4)`.
//!
//! The curve has `p + 1 = h·r` points. `G` is the order-`r` subgroup and
//! `G_T` the order-`r` subgroup of `F_{p²}^* = F_p[i]/(i² + 1)`. The
//! distortion map `φ(x, y) = (-x, i·y)` makes the reduced Tate pairing
//! `e(P, Q) = f_{r,P}(φ(Q))^((p²-1)/r)` non-degenerate on `G x G`.
//!
//! The Miller loop runs in Jacobian coordinates. Line values are scaled by
//! elements of `F_p` and vertical lines are dropped, both of which the final
//! exponentiation erases because `p - 1` divides `(p² - 1)/r`.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::backend::{pow_by_squaring, PairingBackend};
use super::hex_big;

/// 160-bit prime group order.
pub const ORDER_HEX: &str = "b23d0a6979c8c2926b94b5b5749882321e3504cd";
/// Cofactor `h = (p + 1) / r`.
pub const COFACTOR_HEX: &str =
    "b7d7f775b87131135916da5a5662e32b9fc97ce3c170d76ff1e3288316bc7741843c9ebe75b1377eb1ca2e8c";

fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

/// `a + b·i` in `F_{p²}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fp2 {
    #[serde(with = "hex_big")]
    pub a: BigUint,
    #[serde(with = "hex_big")]
    pub b: BigUint,
}

/// An affine point, or the point at infinity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurvePoint {
    Infinity,
    Affine {
        #[serde(with = "hex_big")]
        x: BigUint,
        #[serde(with = "hex_big")]
        y: BigUint,
    },
}

#[derive(Debug)]
struct Field {
    p: BigUint,
}

impl Field {
    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let s = a + b;
        if s >= self.p {
            s - &self.p
        } else {
            s
        }
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        if a >= b {
            a - b
        } else {
            a + &self.p - b
        }
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    fn sqr(&self, a: &BigUint) -> BigUint {
        self.mul(a, a)
    }

    fn small(&self, k: u32, a: &BigUint) -> BigUint {
        (a * k) % &self.p
    }

    fn neg(&self, a: &BigUint) -> BigUint {
        if a.is_zero() {
            BigUint::zero()
        } else {
            &self.p - a
        }
    }

    fn inv(&self, a: &BigUint) -> BigUint {
        a.modinv(&self.p).expect("inverse of a nonzero field element")
    }

    fn fp2_one(&self) -> Fp2 {
        Fp2 { a: BigUint::one(), b: BigUint::zero() }
    }

    fn fp2_mul(&self, x: &Fp2, y: &Fp2) -> Fp2 {
        let ac = self.mul(&x.a, &y.a);
        let bd = self.mul(&x.b, &y.b);
        let cross = self.mul(&self.add(&x.a, &x.b), &self.add(&y.a, &y.b));
        Fp2 { a: self.sub(&ac, &bd), b: self.sub(&self.sub(&cross, &ac), &bd) }
    }

    fn fp2_sqr(&self, x: &Fp2) -> Fp2 {
        let re = self.mul(&self.add(&x.a, &x.b), &self.sub(&x.a, &x.b));
        let im = self.small(2, &self.mul(&x.a, &x.b));
        Fp2 { a: re, b: im }
    }

    fn fp2_conj(&self, x: &Fp2) -> Fp2 {
        Fp2 { a: x.a.clone(), b: self.neg(&x.b) }
    }

    fn fp2_inv(&self, x: &Fp2) -> Fp2 {
        let norm = self.add(&self.sqr(&x.a), &self.sqr(&x.b));
        let n_inv = self.inv(&norm);
        let c = self.fp2_conj(x);
        Fp2 { a: self.mul(&c.a, &n_inv), b: self.mul(&c.b, &n_inv) }
    }
}

/// Jacobian `(X, Y, Z)` with `x = X/Z²`, `y = Y/Z³`; `Z = 0` is infinity.
#[derive(Debug, Clone)]
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Jacobian {
    fn infinity() -> Self {
        Self { x: BigUint::one(), y: BigUint::one(), z: BigUint::zero() }
    }

    fn from_affine(x: &BigUint, y: &BigUint) -> Self {
        Self { x: x.clone(), y: y.clone(), z: BigUint::one() }
    }

    fn is_infinity(&self) -> bool {
        self.z.is_zero()
    }
}

#[derive(Debug)]
struct Inner {
    field: Field,
    order: BigUint,
    cofactor: BigUint,
    generator: CurvePoint,
    /// `g·2^i` for every bit of the order.
    g_table: Vec<CurvePoint>,
    /// `e(g,g)^(2^i)` for every bit of the order.
    gt_table: Vec<Fp2>,
}

/// The real pairing backend. Construction derives the generator and
/// precomputes power tables, so clone the handle rather than rebuilding it.
#[derive(Debug, Clone)]
pub struct TypeAPairing {
    inner: Arc<Inner>,
}

impl TypeAPairing {
    pub fn new() -> Self {
        let order = hex(ORDER_HEX);
        let cofactor = hex(COFACTOR_HEX);
        let p = &cofactor * &order - 1u32;
        let mut inner = Inner {
            field: Field { p },
            order,
            cofactor,
            generator: CurvePoint::Infinity,
            g_table: Vec::new(),
            gt_table: Vec::new(),
        };
        inner.generator = inner.derive_generator();
        let bits = inner.order.bits() as usize;
        let mut acc = inner.generator.clone();
        for _ in 0..bits {
            let next = inner.affine_add(&acc, &acc);
            inner.g_table.push(std::mem::replace(&mut acc, next));
        }
        let egg = inner.pairing(&inner.generator, &inner.generator);
        let mut acc = egg;
        for _ in 0..bits {
            let next = inner.field.fp2_sqr(&acc);
            inner.gt_table.push(std::mem::replace(&mut acc, next));
        }
        Self { inner: Arc::new(inner) }
    }

    /// A process-wide handle, built on first use.
    pub fn shared() -> Self {
        static SHARED: std::sync::OnceLock<TypeAPairing> = std::sync::OnceLock::new();
        SHARED.get_or_init(Self::new).clone()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.inner.field.p
    }

    pub fn cofactor(&self) -> &BigUint {
        &self.inner.cofactor
    }

    pub fn generator(&self) -> &CurvePoint {
        &self.inner.generator
    }

    pub fn is_on_curve(&self, pt: &CurvePoint) -> bool {
        self.inner.is_on_curve(pt)
    }

    /// `k·pt` by double-and-add.
    pub fn scalar_mul(&self, pt: &CurvePoint, k: &BigUint) -> CurvePoint {
        self.inner.scalar_mul(pt, k)
    }
}

impl Default for TypeAPairing {
    fn default() -> Self {
        Self::new()
    }
}

impl Inner {
    fn derive_generator(&self) -> CurvePoint {
        let f = &self.field;
        let legendre = (&f.p - 1u32) >> 1;
        let root = (&f.p + 1u32) >> 2;
        let mut x = BigUint::one();
        loop {
            let rhs = f.add(&f.mul(&f.sqr(&x), &x), &x);
            if !rhs.is_zero() && rhs.modpow(&legendre, &f.p).is_one() {
                let y = rhs.modpow(&root, &f.p);
                let g = self.scalar_mul(&CurvePoint::Affine { x: x.clone(), y }, &self.cofactor);
                if g != CurvePoint::Infinity {
                    return g;
                }
            }
            x += 1u32;
        }
    }

    fn is_on_curve(&self, pt: &CurvePoint) -> bool {
        match pt {
            CurvePoint::Infinity => true,
            CurvePoint::Affine { x, y } => {
                let f = &self.field;
                x < &f.p && y < &f.p && f.sqr(y) == f.add(&f.mul(&f.sqr(x), x), x)
            }
        }
    }

    fn affine_add(&self, a: &CurvePoint, b: &CurvePoint) -> CurvePoint {
        let f = &self.field;
        let (CurvePoint::Affine { x: x1, y: y1 }, CurvePoint::Affine { x: x2, y: y2 }) = (a, b) else {
            return if *a == CurvePoint::Infinity { b.clone() } else { a.clone() };
        };
        let lambda = if x1 == x2 {
            if y1.is_zero() || f.add(y1, y2).is_zero() {
                return CurvePoint::Infinity;
            }
            let num = f.add(&f.small(3, &f.sqr(x1)), &BigUint::one());
            f.mul(&num, &f.inv(&f.small(2, y1)))
        } else {
            f.mul(&f.sub(y2, y1), &f.inv(&f.sub(x2, x1)))
        };
        let x3 = f.sub(&f.sub(&f.sqr(&lambda), x1), x2);
        let y3 = f.sub(&f.mul(&lambda, &f.sub(x1, &x3)), y1);
        CurvePoint::Affine { x: x3, y: y3 }
    }

    fn jacobian_double(&self, t: &Jacobian) -> Jacobian {
        if t.is_infinity() || t.y.is_zero() {
            return Jacobian::infinity();
        }
        let f = &self.field;
        let y2 = f.sqr(&t.y);
        let s = f.small(4, &f.mul(&t.x, &y2));
        let z2 = f.sqr(&t.z);
        let m = f.add(&f.small(3, &f.sqr(&t.x)), &f.sqr(&z2));
        let x3 = f.sub(&f.sqr(&m), &f.small(2, &s));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &f.small(8, &f.sqr(&y2)));
        let z3 = f.small(2, &f.mul(&t.y, &t.z));
        Jacobian { x: x3, y: y3, z: z3 }
    }

    /// `t + (x, y)` for an affine second operand.
    fn jacobian_add_affine(&self, t: &Jacobian, x: &BigUint, y: &BigUint) -> Jacobian {
        if t.is_infinity() {
            return Jacobian::from_affine(x, y);
        }
        let f = &self.field;
        let z2 = f.sqr(&t.z);
        let h = f.sub(&f.mul(x, &z2), &t.x);
        let rr = f.sub(&f.mul(y, &f.mul(&z2, &t.z)), &t.y);
        if h.is_zero() {
            return if rr.is_zero() { self.jacobian_double(t) } else { Jacobian::infinity() };
        }
        let h2 = f.sqr(&h);
        let h3 = f.mul(&h2, &h);
        let xh2 = f.mul(&t.x, &h2);
        let x3 = f.sub(&f.sub(&f.sqr(&rr), &h3), &f.small(2, &xh2));
        let y3 = f.sub(&f.mul(&rr, &f.sub(&xh2, &x3)), &f.mul(&t.y, &h3));
        let z3 = f.mul(&t.z, &h);
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn to_affine(&self, t: &Jacobian) -> CurvePoint {
        if t.is_infinity() {
            return CurvePoint::Infinity;
        }
        let f = &self.field;
        let zi = f.inv(&t.z);
        let zi2 = f.sqr(&zi);
        CurvePoint::Affine { x: f.mul(&t.x, &zi2), y: f.mul(&t.y, &f.mul(&zi2, &zi)) }
    }

    fn scalar_mul(&self, pt: &CurvePoint, k: &BigUint) -> CurvePoint {
        let CurvePoint::Affine { x, y } = pt else {
            return CurvePoint::Infinity;
        };
        let mut acc = Jacobian::infinity();
        for i in (0..k.bits()).rev() {
            acc = self.jacobian_double(&acc);
            if k.bit(i) {
                acc = self.jacobian_add_affine(&acc, x, y);
            }
        }
        self.to_affine(&acc)
    }

    fn miller(&self, px: &BigUint, py: &BigUint, qx: &BigUint, qy: &BigUint) -> Fp2 {
        let f = &self.field;
        let mut acc = f.fp2_one();
        let mut t = Jacobian::from_affine(px, py);
        for i in (0..self.order.bits() - 1).rev() {
            // Tangent at T, scaled by 2·Y·Z³.
            let z2 = f.sqr(&t.z);
            let m = f.add(&f.small(3, &f.sqr(&t.x)), &f.sqr(&z2));
            let re = f.sub(&f.mul(&m, &f.add(&f.mul(qx, &z2), &t.x)), &f.small(2, &f.sqr(&t.y)));
            let im = f.mul(qy, &f.small(2, &f.mul(&t.y, &f.mul(&z2, &t.z))));
            acc = f.fp2_mul(&f.fp2_sqr(&acc), &Fp2 { a: re, b: im });
            t = self.jacobian_double(&t);
            if t.is_infinity() {
                break;
            }
            if self.order.bit(i) {
                // Chord through T and P, scaled by Z·H. The final addition
                // meets -P, whose vertical line is dropped.
                let z2 = f.sqr(&t.z);
                let h = f.sub(&f.mul(px, &z2), &t.x);
                if h.is_zero() {
                    t = Jacobian::infinity();
                    continue;
                }
                let rr = f.sub(&f.mul(py, &f.mul(&z2, &t.z)), &t.y);
                let zh = f.mul(&t.z, &h);
                let re = f.sub(&f.mul(&rr, &f.add(qx, px)), &f.mul(py, &zh));
                let im = f.mul(qy, &zh);
                acc = f.fp2_mul(&acc, &Fp2 { a: re, b: im });
                t = self.jacobian_add_affine(&t, px, py);
            }
        }
        acc
    }

    fn pairing(&self, a: &CurvePoint, b: &CurvePoint) -> Fp2 {
        let f = &self.field;
        let (CurvePoint::Affine { x: px, y: py }, CurvePoint::Affine { x: qx, y: qy }) = (a, b) else {
            return f.fp2_one();
        };
        let m = self.miller(px, py, qx, qy);
        // m^(p-1) = conj(m)/m since the Frobenius is conjugation.
        let easy = f.fp2_mul(&f.fp2_conj(&m), &f.fp2_inv(&m));
        pow_by_squaring(&easy, &self.cofactor, f.fp2_one(), |x, y| f.fp2_mul(x, y))
    }
}

impl PairingBackend for TypeAPairing {
    type G = CurvePoint;
    type Gt = Fp2;

    fn name(&self) -> &'static str {
        "pairing"
    }

    fn order(&self) -> &BigUint {
        &self.inner.order
    }

    fn g_pow(&self, e: &BigInt) -> CurvePoint {
        let e = self.reduce(e);
        let inner = &self.inner;
        let mut acc = Jacobian::infinity();
        for (i, pt) in inner.g_table.iter().enumerate() {
            if e.bit(i as u64) {
                if let CurvePoint::Affine { x, y } = pt {
                    acc = inner.jacobian_add_affine(&acc, x, y);
                }
            }
        }
        inner.to_affine(&acc)
    }

    fn g_mul(&self, a: &CurvePoint, b: &CurvePoint) -> CurvePoint {
        self.inner.affine_add(a, b)
    }

    fn g_identity(&self) -> CurvePoint {
        CurvePoint::Infinity
    }

    fn pair(&self, a: &CurvePoint, b: &CurvePoint) -> Fp2 {
        self.inner.pairing(a, b)
    }

    fn gt_mul(&self, a: &Fp2, b: &Fp2) -> Fp2 {
        self.inner.field.fp2_mul(a, b)
    }

    fn gt_identity(&self) -> Fp2 {
        self.inner.field.fp2_one()
    }

    fn gt_pow_base(&self, e: &BigInt) -> Fp2 {
        let e = self.reduce(e);
        let f = &self.inner.field;
        self.inner
            .gt_table
            .iter()
            .enumerate()
            .filter(|(i, _)| e.bit(*i as u64))
            .fold(f.fp2_one(), |acc, (_, v)| f.fp2_mul(&acc, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn backend() -> &'static TypeAPairing {
        static B: OnceLock<TypeAPairing> = OnceLock::new();
        B.get_or_init(TypeAPairing::new)
    }

    /// Deterministic Miller-Rabin over the first twelve prime bases.
    fn probably_prime(n: &BigUint) -> bool {
        let two = BigUint::from(2u32);
        if n < &two {
            return false;
        }
        let one = BigUint::one();
        let n1 = n - &one;
        let s = n1.trailing_zeros().unwrap_or(0);
        let d = &n1 >> s;
        'bases: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
            let a = BigUint::from(a);
            if &a % n == BigUint::zero() {
                continue;
            }
            let mut x = a.modpow(&d, n);
            if x == one || x == n1 {
                continue;
            }
            for _ in 1..s {
                x = x.modpow(&two, n);
                if x == n1 {
                    continue 'bases;
                }
            }
            return false;
        }
        true
    }

    #[test]
    fn parameters_are_consistent() {
        let b = backend();
        assert!(probably_prime(b.order()));
        assert!(probably_prime(b.modulus()));
        assert_eq!(b.order().bits(), 160);
        assert_eq!(b.modulus().bits(), 512);
        assert_eq!(b.modulus() % 4u32, BigUint::from(3u32));
        assert_eq!(b.cofactor() * b.order(), b.modulus() + 1u32);
        assert!(!probably_prime(&BigUint::from(561u32)));
    }

    #[test]
    fn generator_has_prime_order() {
        let b = backend();
        let g = b.generator();
        assert!(b.is_on_curve(g));
        assert_ne!(*g, CurvePoint::Infinity);
        assert_eq!(b.scalar_mul(g, b.order()), CurvePoint::Infinity);
    }

    #[test]
    fn group_law_and_powers_agree() {
        let b = backend();
        let g = b.generator().clone();
        let g5 = b.g_pow(&BigInt::from(5));
        assert_eq!(g5, b.scalar_mul(&g, &BigUint::from(5u32)));
        assert!(b.is_on_curve(&g5));
        let g2 = b.g_mul(&g, &g);
        assert_eq!(b.g_mul(&g2, &b.g_pow(&BigInt::from(3))), g5);
        assert_eq!(b.g_pow(&BigInt::from(-1)), b.scalar_mul(&g, &(b.order() - 1u32)));
        assert_eq!(b.g_mul(&g5, &b.g_pow(&BigInt::from(-5))), CurvePoint::Infinity);
        assert_eq!(b.g_pow(&BigInt::zero()), b.g_identity());
    }

    #[test]
    fn pairing_is_bilinear_and_non_degenerate() {
        let b = backend();
        let egg = b.pair(b.generator(), b.generator());
        assert_ne!(egg, b.gt_identity());
        assert_eq!(egg, b.gt_pow_base(&BigInt::one()));
        let order = BigInt::from(b.order().clone());
        assert_eq!(pow_by_squaring(&egg, b.order(), b.gt_identity(), |x, y| b.gt_mul(x, y)), b.gt_identity());
        for (a, c) in [(2i64, 3i64), (12345, -678), (1 << 40, 99)] {
            let lhs = b.pair(&b.g_pow(&BigInt::from(a)), &b.g_pow(&BigInt::from(c)));
            let rhs = b.gt_pow_base(&((BigInt::from(a) * c) % &order));
            assert_eq!(lhs, rhs, "a={a} c={c}");
        }
        assert_eq!(b.pair(&CurvePoint::Infinity, b.generator()), b.gt_identity());
    }

    #[test]
    fn elements_round_trip_through_json() {
        let b = backend();
        let g = b.g_pow(&BigInt::from(77));
        let back: CurvePoint = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        let inf: CurvePoint = serde_json::from_str(&serde_json::to_string(&CurvePoint::Infinity).unwrap()).unwrap();
        assert_eq!(inf, CurvePoint::Infinity);
        let t = b.gt_pow_base(&BigInt::from(9));
        let back: Fp2 = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
