//! Fixed-capacity little-endian limb arithmetic backing the prime fields.
//!
//! All helpers operate on `u64` slices in little-endian limb order. Callers
//! size the output buffers; nothing here allocates.

use std::cmp::Ordering;

use num_bigint::BigUint;

/// Limb capacity of a field element: 8 × 64 = 512 bits.
pub const LIMBS: usize = 8;

pub type Limbs = [u64; LIMBS];

pub fn cmp(a: &[u64], b: &[u64]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    for i in (0..a.len()).rev() {
        match a[i].cmp(&b[i]) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// `a += b`, returning the outgoing carry. `b` may be shorter than `a`.
pub fn add_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut carry = 0u64;
    for i in 0..a.len() {
        let rhs = if i < b.len() { b[i] } else { 0 };
        if i >= b.len() && carry == 0 {
            break;
        }
        let (s1, c1) = a[i].overflowing_add(rhs);
        let (s2, c2) = s1.overflowing_add(carry);
        a[i] = s2;
        carry = (c1 as u64) + (c2 as u64);
    }
    carry != 0
}

/// `a -= b`, returning the outgoing borrow. `b` may be shorter than `a`.
pub fn sub_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut borrow = 0u64;
    for i in 0..a.len() {
        let rhs = if i < b.len() { b[i] } else { 0 };
        if i >= b.len() && borrow == 0 {
            break;
        }
        let (d1, b1) = a[i].overflowing_sub(rhs);
        let (d2, b2) = d1.overflowing_sub(borrow);
        a[i] = d2;
        borrow = (b1 as u64) + (b2 as u64);
    }
    borrow != 0
}

/// Schoolbook product. `out` must hold at least `a.len() + b.len()` limbs and
/// is overwritten.
pub fn mul(a: &[u64], b: &[u64], out: &mut [u64]) {
    debug_assert!(out.len() >= a.len() + b.len());
    out.iter_mut().for_each(|x| *x = 0);
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        let mut carry = 0u128;
        for (j, &bj) in b.iter().enumerate() {
            let t = (ai as u128) * (bj as u128) + (out[i + j] as u128) + carry;
            out[i + j] = t as u64;
            carry = t >> 64;
        }
        let mut k = i + b.len();
        while carry != 0 && k < out.len() {
            let t = (out[k] as u128) + carry;
            out[k] = t as u64;
            carry = t >> 64;
            k += 1;
        }
    }
}

/// `out = a >> bits`, truncated to `out.len()` limbs.
pub fn shr(a: &[u64], bits: u32, out: &mut [u64]) {
    let limb_shift = (bits / 64) as usize;
    let bit_shift = bits % 64;
    for (i, o) in out.iter_mut().enumerate() {
        let src = i + limb_shift;
        let lo = if src < a.len() { a[src] } else { 0 };
        let hi = if src + 1 < a.len() { a[src + 1] } else { 0 };
        *o = if bit_shift == 0 {
            lo
        } else {
            (lo >> bit_shift) | (hi << (64 - bit_shift))
        };
    }
}

pub fn is_zero(a: &[u64]) -> bool {
    a.iter().all(|&x| x == 0)
}

#[cfg(test)]
pub fn bit_len(a: &[u64]) -> u32 {
    for i in (0..a.len()).rev() {
        if a[i] != 0 {
            return 64 * i as u32 + (64 - a[i].leading_zeros());
        }
    }
    0
}

pub fn bit(a: &[u64], i: u32) -> bool {
    let limb = (i / 64) as usize;
    limb < a.len() && (a[limb] >> (i % 64)) & 1 == 1
}

/// Converts to limbs; returns `None` when the value needs more than `LIMBS` limbs.
pub fn from_biguint(v: &BigUint) -> Option<Limbs> {
    let digits = v.to_u64_digits();
    if digits.len() > LIMBS {
        return None;
    }
    let mut out = [0u64; LIMBS];
    out[..digits.len()].copy_from_slice(&digits);
    Some(out)
}

pub fn to_biguint(a: &[u64]) -> BigUint {
    let mut words: Vec<u32> = Vec::with_capacity(a.len() * 2);
    for &limb in a {
        words.push(limb as u32);
        words.push((limb >> 32) as u32);
    }
    BigUint::new(words)
}
