//! GF(2^8) / GF(2^16) arithmetic through log/antilog tables.

/// Carry-less multiply followed by reduction modulo `poly` (degree `degree`).
pub fn clmul_reduce(a: u32, b: u32, poly: u32, degree: u32) -> u32 {
    let mut acc: u64 = 0;
    for i in 0..degree {
        if (b >> i) & 1 == 1 {
            acc ^= (a as u64) << i;
        }
    }
    for bit in (degree..2 * degree).rev() {
        if (acc >> bit) & 1 == 1 {
            acc ^= (poly as u64) << (bit - degree);
        }
    }
    acc as u32
}

fn pow(base: u32, mut e: u32, poly: u32, degree: u32) -> u32 {
    let mut acc = 1u32;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = clmul_reduce(acc, b, poly, degree);
        }
        b = clmul_reduce(b, b, poly, degree);
        e >>= 1;
    }
    acc
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Remainder of GF(2)[x] polynomial division.
fn poly_mod(mut a: u64, b: u64) -> u64 {
    let db = 63 - b.leading_zeros();
    while a != 0 && 63 - a.leading_zeros() >= db {
        a ^= b << (63 - a.leading_zeros() - db);
    }
    a
}

/// Trial division by every polynomial of degree 1..=degree/2.
pub fn is_irreducible(poly: u32, degree: u32) -> bool {
    if poly >> degree != 1 {
        return false;
    }
    for d in 1..=degree / 2 {
        for low in 0..(1u64 << d) {
            let divisor = (1u64 << d) | low;
            if poly_mod(poly as u64, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct LogTables {
    degree: u32,
    #[cfg_attr(not(test), allow(dead_code))]
    generator: u32,
    /// exp[i] = g^i, stored twice over so `log a + log b` never needs a modulo.
    exp: Vec<u16>,
    /// log[a] for a != 0; log[0] is unused.
    log: Vec<u16>,
}

impl LogTables {
    /// Builds tables using the smallest generator of the multiplicative group.
    /// Returns `None` when `poly` is reducible over GF(2).
    pub fn new(poly: u32, degree: u32) -> Option<Self> {
        if !is_irreducible(poly, degree) {
            return None;
        }
        let order = (1u32 << degree) - 1;
        let factors = prime_factors(order);
        let generator = (2..=order).find(|&g| {
            factors
                .iter()
                .all(|&q| pow(g, order / q, poly, degree) != 1)
        })?;
        let mut exp = vec![0u16; 2 * order as usize];
        let mut log = vec![0u16; order as usize + 1];
        let mut x = 1u32;
        for i in 0..order as usize {
            exp[i] = x as u16;
            exp[i + order as usize] = x as u16;
            log[x as usize] = i as u16;
            x = clmul_reduce(x, generator, poly, degree);
        }
        Some(LogTables {
            degree,
            generator,
            exp,
            log,
        })
    }

    #[cfg(test)]
    pub fn generator(&self) -> u32 {
        self.generator
    }

    fn order(&self) -> usize {
        (1usize << self.degree) - 1
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        if a == 0 || b == 0 {
            return 0;
        }
        let idx = self.log[a as usize] as usize + self.log[b as usize] as usize;
        self.exp[idx] as u64
    }

    /// Caller guarantees `a != 0`.
    pub fn inv(&self, a: u64) -> u64 {
        let l = self.log[a as usize] as usize;
        self.exp[(self.order() - l) % self.order()] as u64
    }
}
