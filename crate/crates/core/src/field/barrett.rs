//! Barrett reduction for odd prime moduli of up to 512 bits.

use num_bigint::BigUint;
use num_traits::One;

use super::uint::{self, Limbs, LIMBS};

/// Precomputed reduction context for a modulus `m` of bit length `k`.
///
/// `mu = floor(2^(2k) / m)`. For `x < m^2`:
/// `q = ((x >> (k-1)) * mu) >> (k+1)` underestimates `floor(x/m)` by at most
/// two, so `x - q*m` needs at most two conditional subtractions.
#[derive(Debug, Clone)]
pub struct Barrett {
    modulus: Limbs,
    /// Limbs occupied by the modulus.
    n: usize,
    k: u32,
    mu: [u64; LIMBS + 1],
    /// Single-word fast path, used when `k <= 62` so every intermediate fits in `u128`.
    small: Option<(u64, u128)>,
}

impl Barrett {
    pub fn new(modulus: &BigUint) -> Self {
        let k = modulus.bits() as u32;
        let limbs = uint::from_biguint(modulus).expect("modulus exceeds limb capacity");
        let n = (k as usize).div_ceil(64);
        let mu_big: BigUint = (BigUint::one() << (2 * k as usize)) / modulus;
        let mut mu = [0u64; LIMBS + 1];
        for (i, d) in mu_big.to_u64_digits().into_iter().enumerate() {
            mu[i] = d;
        }
        let small = (k <= 62).then(|| (limbs[0], mu[0] as u128 | ((mu[1] as u128) << 64)));
        Barrett {
            modulus: limbs,
            n,
            k,
            mu,
            small,
        }
    }

    pub fn modulus(&self) -> &Limbs {
        &self.modulus
    }

    pub fn limbs(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.k
    }

    pub fn mu(&self) -> BigUint {
        uint::to_biguint(&self.mu)
    }

    /// Reduces a single-word-modulus product `x < m^2`.
    #[inline]
    fn reduce_small(&self, x: u128, m: u64, mu: u128) -> u64 {
        let q1 = x >> (self.k - 1);
        let q3 = (q1 * mu) >> (self.k + 1);
        let mut r = x - q3 * m as u128;
        while r >= m as u128 {
            r -= m as u128;
        }
        r as u64
    }

    /// Reduces `x < m^2`, given as `2n` little-endian limbs.
    pub fn reduce_wide(&self, x: &[u64]) -> Limbs {
        let n = self.n;
        if let Some((m, mu)) = self.small {
            let v = x[0] as u128 | ((x.get(1).copied().unwrap_or(0) as u128) << 64);
            let mut out = [0u64; LIMBS];
            out[0] = self.reduce_small(v, m, mu);
            return out;
        }
        let mut q1 = [0u64; LIMBS + 1];
        uint::shr(x, self.k - 1, &mut q1[..n + 1]);
        let mut q2 = [0u64; 2 * LIMBS + 2];
        uint::mul(&q1[..n + 1], &self.mu[..n + 1], &mut q2[..2 * n + 2]);
        let mut q3 = [0u64; LIMBS + 1];
        uint::shr(&q2[..2 * n + 2], self.k + 1, &mut q3[..n + 1]);
        // r = x - q3*m, computed modulo 2^(64(n+1)); exact because 0 <= r < 3m.
        let mut qm = [0u64; 2 * LIMBS + 2];
        uint::mul(&q3[..n + 1], &self.modulus[..n], &mut qm[..2 * n + 1]);
        let mut r = [0u64; LIMBS + 1];
        r[..n + 1].copy_from_slice(&x[..n + 1]);
        uint::sub_assign(&mut r[..n + 1], &qm[..n + 1]);
        let mut m_ext = [0u64; LIMBS + 1];
        m_ext[..n].copy_from_slice(&self.modulus[..n]);
        while uint::cmp(&r[..n + 1], &m_ext[..n + 1]) != std::cmp::Ordering::Less {
            uint::sub_assign(&mut r[..n + 1], &m_ext[..n]);
        }
        let mut out = [0u64; LIMBS];
        out[..n].copy_from_slice(&r[..n]);
        out
    }

    #[inline]
    pub fn mul(&self, a: &Limbs, b: &Limbs) -> Limbs {
        if let Some((m, mu)) = self.small {
            let mut out = [0u64; LIMBS];
            out[0] = self.reduce_small(a[0] as u128 * b[0] as u128, m, mu);
            return out;
        }
        let n = self.n;
        let mut wide = [0u64; 2 * LIMBS];
        uint::mul(&a[..n], &b[..n], &mut wide[..2 * n]);
        self.reduce_wide(&wide[..2 * n])
    }

    #[inline]
    pub fn add(&self, a: &Limbs, b: &Limbs) -> Limbs {
        if let Some((m, _)) = self.small {
            let mut out = [0u64; LIMBS];
            let s = a[0] + b[0];
            out[0] = if s >= m { s - m } else { s };
            return out;
        }
        let n = self.n;
        let mut s = [0u64; LIMBS + 1];
        s[..n].copy_from_slice(&a[..n]);
        uint::add_assign(&mut s[..n + 1], &b[..n]);
        let mut m_ext = [0u64; LIMBS + 1];
        m_ext[..n].copy_from_slice(&self.modulus[..n]);
        if uint::cmp(&s[..n + 1], &m_ext[..n + 1]) != std::cmp::Ordering::Less {
            uint::sub_assign(&mut s[..n + 1], &m_ext[..n]);
        }
        let mut out = [0u64; LIMBS];
        out[..n].copy_from_slice(&s[..n]);
        out
    }

    #[inline]
    pub fn sub(&self, a: &Limbs, b: &Limbs) -> Limbs {
        if let Some((m, _)) = self.small {
            let mut out = [0u64; LIMBS];
            out[0] = if a[0] >= b[0] { a[0] - b[0] } else { a[0] + m - b[0] };
            return out;
        }
        let n = self.n;
        let mut d = *a;
        if uint::sub_assign(&mut d[..n], &b[..n]) {
            uint::add_assign(&mut d[..n], &self.modulus[..n]);
        }
        d
    }
}
