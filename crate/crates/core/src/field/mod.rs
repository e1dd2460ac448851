//! Finite-field arithmetic.
//!
//! A [`FieldSpec`] names a field: GF(2^8), GF(2^16), or a prime field of up to
//! 512 bits. [`Field`] is the immutable arithmetic context built from it
//! (Barrett constants or log tables) and is cheap to clone and share across
//! threads. [`FieldElement`] is a plain value tagged with its field's
//! fingerprint so that mixing elements of different fields is detected.

mod barrett;
mod binary;
mod uint;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use barrett::Barrett;
use binary::LogTables;
pub use binary::{clmul_reduce, is_irreducible};
use uint::{Limbs, LIMBS};

/// Largest primes below 2^128, 2^256 and 2^512, written as 2^k - c.
const PRESET_PRIME_OFFSETS: [(u32, u32); 3] = [(128, 159), (256, 189), (512, 569)];

pub const GF256_DEFAULT_POLY: u32 = 0x11B;
pub const GF65536_DEFAULT_POLY: u32 = 0x1100B;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("elements belong to different fields")]
    DistinctFields,
    #[error("zero has no multiplicative inverse")]
    NonInvertible,
    #[error("value {value} is not below the field order {order}")]
    OutOfRange { value: String, order: String },
    #[error("expected {expected} bytes for a field element, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    Binary8,
    Binary16,
    Prime,
}

/// Identifies a finite field. Textual form: `prime:<decimal>`, `gf2e8`, `gf2e16`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    kind: FieldKind,
    /// Irreducible polynomial bitmask (binary kinds) or the odd prime.
    modulus: BigUint,
    word_bits: u32,
}

impl FieldSpec {
    pub fn binary8() -> Self {
        Self::binary8_with(GF256_DEFAULT_POLY).expect("default GF(2^8) polynomial")
    }

    pub fn binary16() -> Self {
        Self::binary16_with(GF65536_DEFAULT_POLY).expect("default GF(2^16) polynomial")
    }

    pub fn binary8_with(poly: u32) -> Result<Self, FieldError> {
        Self::binary(FieldKind::Binary8, poly, 8)
    }

    pub fn binary16_with(poly: u32) -> Result<Self, FieldError> {
        Self::binary(FieldKind::Binary16, poly, 16)
    }

    fn binary(kind: FieldKind, poly: u32, degree: u32) -> Result<Self, FieldError> {
        if poly >> degree != 1 {
            return Err(FieldError::InvalidSpec(format!(
                "polynomial {poly:#x} does not have degree {degree}"
            )));
        }
        Ok(FieldSpec {
            kind,
            modulus: BigUint::from(poly),
            word_bits: degree,
        })
    }

    /// Odd prime modulus of at most 512 bits; primality is checked with 40
    /// Miller-Rabin rounds (error below 2^-80).
    pub fn prime(modulus: BigUint) -> Result<Self, FieldError> {
        let bits = modulus.bits() as u32;
        if bits > 64 * LIMBS as u32 {
            return Err(FieldError::InvalidSpec(format!(
                "modulus of {bits} bits exceeds the 512-bit limit"
            )));
        }
        if !is_probable_prime(&modulus, 40) || modulus == BigUint::from(2u32) {
            return Err(FieldError::InvalidSpec(format!("{modulus} is not an odd prime")));
        }
        Ok(FieldSpec {
            kind: FieldKind::Prime,
            modulus,
            word_bits: bits,
        })
    }

    pub fn prime_u64(modulus: u64) -> Result<Self, FieldError> {
        Self::prime(BigUint::from(modulus))
    }

    /// p = 2^31 - 1.
    pub fn mersenne31() -> Self {
        Self::prime_u64((1 << 31) - 1).expect("2^31-1 is prime")
    }

    /// Largest prime below 2^bits for bits in {128, 256, 512}.
    pub fn preset_prime(bits: u32) -> Result<Self, FieldError> {
        let (_, offset) = PRESET_PRIME_OFFSETS
            .iter()
            .find(|(b, _)| *b == bits)
            .ok_or_else(|| FieldError::InvalidSpec(format!("no preset prime of {bits} bits")))?;
        Self::prime((BigUint::one() << bits as usize) - BigUint::from(*offset))
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    pub fn is_binary(&self) -> bool {
        self.kind != FieldKind::Prime
    }

    /// Number of field elements.
    pub fn order(&self) -> BigUint {
        match self.kind {
            FieldKind::Prime => self.modulus.clone(),
            _ => BigUint::one() << self.word_bits as usize,
        }
    }

    /// Serialized width in bytes: ceil(word_bits / 8).
    pub fn byte_width(&self) -> usize {
        (self.word_bits as usize).div_ceil(8)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FieldKind::Prime => write!(f, "prime:{}", self.modulus),
            FieldKind::Binary8 if self.modulus == BigUint::from(GF256_DEFAULT_POLY) => {
                write!(f, "gf2e8")
            }
            FieldKind::Binary16 if self.modulus == BigUint::from(GF65536_DEFAULT_POLY) => {
                write!(f, "gf2e16")
            }
            FieldKind::Binary8 => write!(f, "gf2e8:{:#x}", self.modulus),
            FieldKind::Binary16 => write!(f, "gf2e16:{:#x}", self.modulus),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse_poly = |p: &str| {
            u32::from_str_radix(p.trim_start_matches("0x"), 16)
                .map_err(|_| FieldError::InvalidSpec(format!("bad polynomial '{p}'")))
        };
        match s.split_once(':') {
            None if s == "gf2e8" => Ok(Self::binary8()),
            None if s == "gf2e16" => Ok(Self::binary16()),
            Some(("gf2e8", p)) => Self::binary8_with(parse_poly(p)?),
            Some(("gf2e16", p)) => Self::binary16_with(parse_poly(p)?),
            Some(("prime", m)) => {
                let m = match m {
                    "128" | "256" | "512" => return Self::preset_prime(m.parse().unwrap()),
                    "m31" => return Ok(Self::mersenne31()),
                    _ => BigUint::from_str(m)
                        .map_err(|_| FieldError::InvalidSpec(format!("bad modulus '{m}'")))?,
                };
                Self::prime(m)
            }
            _ => Err(FieldError::InvalidSpec(format!(
                "expected prime:<modulus>, gf2e8 or gf2e16, got '{s}'"
            ))),
        }
    }
}

impl Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Miller-Rabin with `rounds` random bases after trial division by small primes.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    const SMALL: [u32; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    if *n < BigUint::from(2u32) {
        return false;
    }
    for p in SMALL {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s as usize;
    let mut rng = rand::rng();
    let two = BigUint::from(2u32);
    'witness: for _ in 0..rounds {
        // witness in [2, n-2]; 64 surplus bits make the modulo bias negligible
        let mut bytes = vec![0u8; n.bits().div_ceil(8) as usize + 8];
        rng.fill_bytes(&mut bytes);
        let a = BigUint::from_bytes_le(&bytes) % (n - 3u32) + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// An element of some [`Field`]. Only meaningful together with that field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    limbs: Limbs,
    tag: u32,
}

impl FieldElement {
    pub fn is_zero(&self) -> bool {
        uint::is_zero(&self.limbs)
    }

    /// Fingerprint of the owning field.
    pub fn field_tag(&self) -> u32 {
        self.tag
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", uint::to_biguint(&self.limbs))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", uint::to_biguint(&self.limbs))
    }
}

/// Vectors over F are plain vectors of elements; homogeneity is checked at
/// protocol boundaries, not per element.
pub type FieldVector = Vec<FieldElement>;

#[derive(Debug)]
enum Backend {
    Prime(Barrett),
    Binary(LogTables),
}

#[derive(Debug)]
struct Inner {
    spec: FieldSpec,
    tag: u32,
    backend: Backend,
}

/// Arithmetic context for a [`FieldSpec`]. Immutable and `Send + Sync`.
#[derive(Debug, Clone)]
pub struct Field(Arc<Inner>);

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.0.tag == other.0.tag && self.0.spec == other.0.spec
    }
}

impl Eq for Field {}

fn fingerprint(spec: &FieldSpec) -> u32 {
    // FNV-1a over the canonical textual form
    let mut h: u32 = 0x811c_9dc5;
    for b in spec.to_string().bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Self, FieldError> {
        let backend = match spec.kind {
            FieldKind::Prime => Backend::Prime(Barrett::new(&spec.modulus)),
            FieldKind::Binary8 | FieldKind::Binary16 => {
                let poly = spec.modulus.to_u32().expect("binary polynomial fits in u32");
                Backend::Binary(LogTables::new(poly, spec.word_bits).ok_or_else(|| {
                    FieldError::InvalidSpec(format!("polynomial {poly:#x} is reducible"))
                })?)
            }
        };
        Ok(Field(Arc::new(Inner {
            tag: fingerprint(&spec),
            spec,
            backend,
        })))
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.0.spec
    }

    pub fn tag(&self) -> u32 {
        self.0.tag
    }

    pub fn byte_width(&self) -> usize {
        self.0.spec.byte_width()
    }

    /// Barrett constant floor(2^(2k)/p) for prime fields.
    pub fn barrett_mu(&self) -> Option<BigUint> {
        match &self.0.backend {
            Backend::Prime(b) => Some(b.mu()),
            Backend::Binary(_) => None,
        }
    }

    fn raw(&self, limbs: Limbs) -> FieldElement {
        FieldElement {
            limbs,
            tag: self.0.tag,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.raw([0; LIMBS])
    }

    pub fn one(&self) -> FieldElement {
        let mut l = [0; LIMBS];
        l[0] = 1;
        self.raw(l)
    }

    /// Element with integer value `v`; `v` must be below the field order.
    pub fn from_u64(&self, v: u64) -> Result<FieldElement, FieldError> {
        self.from_biguint(&BigUint::from(v))
    }

    pub fn from_biguint(&self, v: &BigUint) -> Result<FieldElement, FieldError> {
        let order = self.0.spec.order();
        if *v >= order {
            return Err(FieldError::OutOfRange {
                value: v.to_string(),
                order: order.to_string(),
            });
        }
        Ok(self.raw(uint::from_biguint(v).expect("value below order fits")))
    }

    pub fn to_biguint(&self, a: &FieldElement) -> BigUint {
        uint::to_biguint(&a.limbs)
    }

    pub fn to_u64(&self, a: &FieldElement) -> Option<u64> {
        a.limbs[1..].iter().all(|&l| l == 0).then_some(a.limbs[0])
    }

    pub fn contains(&self, a: &FieldElement) -> bool {
        a.tag == self.0.tag
    }

    fn check(&self, a: &FieldElement) -> Result<(), FieldError> {
        if a.tag == self.0.tag {
            Ok(())
        } else {
            Err(FieldError::DistinctFields)
        }
    }

    #[inline]
    pub fn add(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        debug_assert!(a.tag == self.0.tag && b.tag == self.0.tag, "mixed fields");
        match &self.0.backend {
            Backend::Prime(ctx) => self.raw(ctx.add(&a.limbs, &b.limbs)),
            Backend::Binary(_) => {
                let mut l = [0; LIMBS];
                l[0] = a.limbs[0] ^ b.limbs[0];
                self.raw(l)
            }
        }
    }

    #[inline]
    pub fn sub(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        debug_assert!(a.tag == self.0.tag && b.tag == self.0.tag, "mixed fields");
        match &self.0.backend {
            Backend::Prime(ctx) => self.raw(ctx.sub(&a.limbs, &b.limbs)),
            Backend::Binary(_) => self.add(a, b),
        }
    }

    pub fn neg(&self, a: &FieldElement) -> FieldElement {
        self.sub(&self.zero(), a)
    }

    #[inline]
    pub fn mul(&self, a: &FieldElement, b: &FieldElement) -> FieldElement {
        debug_assert!(a.tag == self.0.tag && b.tag == self.0.tag, "mixed fields");
        match &self.0.backend {
            Backend::Prime(ctx) => self.raw(ctx.mul(&a.limbs, &b.limbs)),
            Backend::Binary(t) => {
                let mut l = [0; LIMBS];
                l[0] = t.mul(a.limbs[0], b.limbs[0]);
                self.raw(l)
            }
        }
    }

    /// `acc += a * b`
    #[inline]
    pub fn mul_add_assign(&self, acc: &mut FieldElement, a: &FieldElement, b: &FieldElement) {
        *acc = self.add(acc, &self.mul(a, b));
    }

    pub fn pow(&self, a: &FieldElement, e: &BigUint) -> FieldElement {
        let digits = e.to_u64_digits();
        let mut acc = self.one();
        for i in (0..e.bits() as u32).rev() {
            acc = self.mul(&acc, &acc);
            if uint::bit(&digits, i) {
                acc = self.mul(&acc, a);
            }
        }
        acc
    }

    pub fn inv(&self, a: &FieldElement) -> Result<FieldElement, FieldError> {
        self.check(a)?;
        if a.is_zero() {
            return Err(FieldError::NonInvertible);
        }
        Ok(match &self.0.backend {
            Backend::Prime(_) => {
                let e = &self.0.spec.modulus - BigUint::from(2u32);
                self.pow(a, &e)
            }
            Backend::Binary(t) => {
                let mut l = [0; LIMBS];
                l[0] = t.inv(a.limbs[0]);
                self.raw(l)
            }
        })
    }

    pub fn try_add(&self, a: &FieldElement, b: &FieldElement) -> Result<FieldElement, FieldError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.add(a, b))
    }

    pub fn try_sub(&self, a: &FieldElement, b: &FieldElement) -> Result<FieldElement, FieldError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.sub(a, b))
    }

    pub fn try_mul(&self, a: &FieldElement, b: &FieldElement) -> Result<FieldElement, FieldError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul(a, b))
    }

    /// Uniformly random element.
    pub fn random<R: RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        match &self.0.backend {
            Backend::Binary(_) => {
                let mut l = [0; LIMBS];
                l[0] = rng.next_u64() & ((1u64 << self.0.spec.word_bits) - 1);
                self.raw(l)
            }
            Backend::Prime(ctx) => {
                let n = ctx.limbs();
                let bits = ctx.bits();
                let top_mask = if bits % 64 == 0 {
                    u64::MAX
                } else {
                    (1u64 << (bits % 64)) - 1
                };
                loop {
                    let mut l = [0; LIMBS];
                    for limb in l.iter_mut().take(n) {
                        *limb = rng.next_u64();
                    }
                    l[n - 1] &= top_mask;
                    if uint::cmp(&l[..n], &ctx.modulus()[..n]) == std::cmp::Ordering::Less {
                        return self.raw(l);
                    }
                }
            }
        }
    }

    /// Fixed-width big-endian encoding, `byte_width()` bytes.
    pub fn write_element(&self, a: &FieldElement, out: &mut Vec<u8>) {
        let w = self.byte_width();
        for i in (0..w).rev() {
            out.push((a.limbs[i / 8] >> (8 * (i % 8))) as u8);
        }
    }

    pub fn serialize(&self, a: &FieldElement) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_width());
        self.write_element(a, &mut out);
        out
    }

    /// Inverse of [`Field::serialize`]; rejects values not below the field order.
    pub fn deserialize(&self, bytes: &[u8]) -> Result<FieldElement, FieldError> {
        let w = self.byte_width();
        if bytes.len() != w {
            return Err(FieldError::BadLength {
                expected: w,
                got: bytes.len(),
            });
        }
        let mut l = [0u64; LIMBS];
        for (pos, &b) in bytes.iter().rev().enumerate() {
            l[pos / 8] |= (b as u64) << (8 * (pos % 8));
        }
        let in_range = match &self.0.backend {
            Backend::Binary(_) => l[0] < (1u64 << self.0.spec.word_bits),
            Backend::Prime(ctx) => {
                uint::cmp(&l, ctx.modulus()) == std::cmp::Ordering::Less
            }
        };
        if !in_range {
            return Err(FieldError::OutOfRange {
                value: uint::to_biguint(&l).to_string(),
                order: self.0.spec.order().to_string(),
            });
        }
        Ok(self.raw(l))
    }

    /// Dot product of two equal-length slices.
    pub fn dot(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = self.zero();
        for (x, y) in a.iter().zip(b) {
            self.mul_add_assign(&mut acc, x, y);
        }
        acc
    }
}
