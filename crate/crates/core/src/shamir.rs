//! Component-wise threshold sharing of standard basis vectors and Lagrange
//! reconstruction.
//!
//! A query for row `i` of a `p`-row index is the basis vector `e_i`. Each
//! component `c` gets its own random polynomial `f_c` of degree `t + k - 1`
//! with `f_c(x_j) = [c == i_j]` at the `k` batch positions `x_j`; server `n`
//! receives `(f_1(x_n), ..., f_p(x_n))`. Any `t` servers see uniformly random
//! vectors.

use std::collections::HashSet;

use rand::RngCore;
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldVector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShamirError {
    #[error("basis index {index} out of range for vectors of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("batch position {0} collides with a server evaluation point")]
    PositionCollision(String),
    #[error("batch position {0} is not one of the reserved points")]
    NotReserved(String),
    #[error("interpolation points are not pairwise distinct")]
    DuplicatePoints,
    #[error("need at least {need} servers, have {have}")]
    InsufficientServers { need: usize, have: usize },
    #[error("need at least {need} points to interpolate, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("share vectors have mixed lengths")]
    LengthMismatch,
    #[error("at least one batch position is required")]
    EmptyBatch,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Privacy threshold, server coordinates and reserved batch positions.
#[derive(Debug, Clone)]
pub struct ShareConfig {
    t: usize,
    eval_points: Vec<FieldElement>,
    /// Batch positions are the integers `0..reserved`.
    reserved: u64,
}

impl ShareConfig {
    pub fn new(
        field: &Field,
        t: usize,
        eval_points: Vec<FieldElement>,
        reserved: u64,
    ) -> Result<Self, ShamirError> {
        let mut seen = HashSet::new();
        for x in &eval_points {
            if !field.contains(x) {
                return Err(FieldError::DistinctFields.into());
            }
            if !seen.insert(*x) {
                return Err(ShamirError::DuplicatePoints);
            }
            if let Some(v) = field.to_u64(x) {
                if v < reserved {
                    return Err(ShamirError::PositionCollision(v.to_string()));
                }
            }
        }
        Ok(ShareConfig {
            t,
            eval_points,
            reserved,
        })
    }

    /// Servers at the smallest unreserved integers `reserved, reserved+1, ...`.
    pub fn with_default_points(
        field: &Field,
        t: usize,
        ell: usize,
        reserved: u64,
    ) -> Result<Self, ShamirError> {
        let points = default_eval_points(field, ell, reserved)?;
        Self::new(field, t, points, reserved)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn ell(&self) -> usize {
        self.eval_points.len()
    }

    pub fn eval_points(&self) -> &[FieldElement] {
        &self.eval_points
    }

    pub fn reserved(&self) -> u64 {
        self.reserved
    }
}

pub fn default_eval_points(
    field: &Field,
    ell: usize,
    reserved: u64,
) -> Result<Vec<FieldElement>, FieldError> {
    (0..ell as u64).map(|i| field.from_u64(reserved + i)).collect()
}

/// One server's share of a query, plus the clear-text keyword hint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryShare {
    pub x: FieldElement,
    pub q: FieldVector,
    pub hint: String,
    /// Number of batch positions encoded in `q`.
    pub k: u16,
}

/// Shares `e_index` (0-based) of length `p`, encoded at batch position `encode_at`.
pub fn share_basis_vector<R: RngCore + ?Sized>(
    field: &Field,
    p: usize,
    index: usize,
    encode_at: u64,
    cfg: &ShareConfig,
    hint: &str,
    rng: &mut R,
) -> Result<Vec<QueryShare>, ShamirError> {
    share_k_batch(field, p, &[(encode_at, index)], cfg, hint, rng)
}

/// Shares `k` basis vectors of length `p` at once: `constraints[j] = (x_j, i_j)`
/// forces every component polynomial to satisfy `f_c(x_j) = [c == i_j]`.
/// Polynomials have degree `t + k - 1`; they are built in Lagrange form through
/// the constraint points and `t` anchor points carrying uniformly random values.
pub fn share_k_batch<R: RngCore + ?Sized>(
    field: &Field,
    p: usize,
    constraints: &[(u64, usize)],
    cfg: &ShareConfig,
    hint: &str,
    rng: &mut R,
) -> Result<Vec<QueryShare>, ShamirError> {
    let k = constraints.len();
    if k == 0 {
        return Err(ShamirError::EmptyBatch);
    }
    if cfg.ell() < cfg.t + k {
        return Err(ShamirError::InsufficientServers {
            need: cfg.t + k,
            have: cfg.ell(),
        });
    }
    let mut positions = Vec::with_capacity(k + cfg.t);
    for &(pos, index) in constraints {
        if index >= p {
            return Err(ShamirError::IndexOutOfRange { index, len: p });
        }
        if pos >= cfg.reserved {
            return Err(ShamirError::NotReserved(pos.to_string()));
        }
        let x = field.from_u64(pos)?;
        if cfg.eval_points.contains(&x) {
            return Err(ShamirError::PositionCollision(pos.to_string()));
        }
        if positions.contains(&x) {
            return Err(ShamirError::DuplicatePoints);
        }
        positions.push(x);
    }
    // anchors: fresh integers outside the constraint and evaluation points
    let mut candidate = 0u64;
    while positions.len() < k + cfg.t {
        let x = field.from_u64(candidate)?;
        if !positions.contains(&x) && !cfg.eval_points.contains(&x) {
            positions.push(x);
        }
        candidate += 1;
    }
    let anchors: Vec<FieldVector> = (0..cfg.t)
        .map(|_| (0..p).map(|_| field.random(rng)).collect())
        .collect();

    cfg.eval_points
        .iter()
        .map(|x| {
            let lambda = lagrange_coefficients(field, &positions, x)?;
            let mut q = vec![field.zero(); p];
            for (a, anchor) in anchors.iter().enumerate() {
                let coeff = &lambda[k + a];
                for (qc, rc) in q.iter_mut().zip(anchor) {
                    field.mul_add_assign(qc, coeff, rc);
                }
            }
            for (j, &(_, index)) in constraints.iter().enumerate() {
                q[index] = field.add(&q[index], &lambda[j]);
            }
            Ok(QueryShare {
                x: *x,
                q,
                hint: hint.to_string(),
                k: k as u16,
            })
        })
        .collect()
}

/// Coefficients `λ_i` with `Σ λ_i f(xs_i) = f(target)` for every polynomial
/// of degree below `xs.len()`.
pub fn lagrange_coefficients(
    field: &Field,
    xs: &[FieldElement],
    target: &FieldElement,
) -> Result<Vec<FieldElement>, ShamirError> {
    if xs.is_empty() {
        return Err(ShamirError::TooFewPoints { need: 1, got: 0 });
    }
    let distinct: HashSet<_> = xs.iter().collect();
    if distinct.len() != xs.len() {
        return Err(ShamirError::DuplicatePoints);
    }
    if let Some(pos) = xs.iter().position(|x| x == target) {
        let mut out = vec![field.zero(); xs.len()];
        out[pos] = field.one();
        return Ok(out);
    }
    xs.iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut num = field.one();
            let mut den = field.one();
            for (m, xm) in xs.iter().enumerate() {
                if m != i {
                    num = field.mul(&num, &field.sub(target, xm));
                    den = field.mul(&den, &field.sub(xi, xm));
                }
            }
            Ok(field.mul(&num, &field.inv(&den)?))
        })
        .collect()
}

/// Component-wise interpolation at `target` through all given points.
/// `degree` is the degree of the polynomial that generated the points; at
/// least `degree + 1` points are required.
pub fn reconstruct(
    field: &Field,
    points: &[(FieldElement, &[FieldElement])],
    target: &FieldElement,
    degree: usize,
) -> Result<FieldVector, ShamirError> {
    if points.len() < degree + 1 {
        return Err(ShamirError::TooFewPoints {
            need: degree + 1,
            got: points.len(),
        });
    }
    let len = points[0].1.len();
    if points.iter().any(|(_, v)| v.len() != len) {
        return Err(ShamirError::LengthMismatch);
    }
    let xs: Vec<FieldElement> = points.iter().map(|(x, _)| *x).collect();
    let lambda = lagrange_coefficients(field, &xs, target)?;
    let mut out = vec![field.zero(); len];
    for ((_, v), l) in points.iter().zip(&lambda) {
        for (o, vi) in out.iter_mut().zip(v.iter()) {
            field.mul_add_assign(o, l, vi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p31() -> Field {
        Field::new(FieldSpec::prime_u64(31).unwrap()).unwrap()
    }

    fn el(f: &Field, v: u64) -> FieldElement {
        f.from_u64(v).unwrap()
    }

    fn basis(f: &Field, p: usize, i: usize) -> FieldVector {
        (0..p).map(|c| if c == i { f.one() } else { f.zero() }).collect()
    }

    #[test]
    fn linear_interpolation_through_origin() {
        let f = p31();
        let l = lagrange_coefficients(&f, &[el(&f, 2), el(&f, 3)], &f.zero()).unwrap();
        assert_eq!(l, vec![el(&f, 3), el(&f, 29)]);
    }

    #[test]
    fn target_among_points_gives_indicator() {
        let f = p31();
        let xs = [el(&f, 4), el(&f, 7), el(&f, 9)];
        let l = lagrange_coefficients(&f, &xs, &el(&f, 7)).unwrap();
        assert_eq!(l, vec![f.zero(), f.one(), f.zero()]);
    }

    #[test]
    fn duplicate_points_rejected() {
        let f = p31();
        let xs = [el(&f, 4), el(&f, 4)];
        assert_eq!(
            lagrange_coefficients(&f, &xs, &f.zero()),
            Err(ShamirError::DuplicatePoints)
        );
    }

    // Horner evaluation is the independent oracle.
    #[test]
    fn interpolation_matches_horner() {
        let f = Field::new(FieldSpec::mersenne31()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let coeffs: Vec<_> = (0..5).map(|_| f.random(&mut rng)).collect();
            let horner = |x: &FieldElement| {
                coeffs
                    .iter()
                    .rev()
                    .fold(f.zero(), |acc, c| f.add(&f.mul(&acc, x), c))
            };
            let xs: Vec<_> = (10..15).map(|v| el(&f, v)).collect();
            let target = f.random(&mut rng);
            let lambda = lagrange_coefficients(&f, &xs, &target).unwrap();
            let mut acc = f.zero();
            for (x, l) in xs.iter().zip(&lambda) {
                acc = f.add(&acc, &f.mul(l, &horner(x)));
            }
            assert_eq!(acc, horner(&target));
        }
    }

    #[test]
    fn t_zero_shares_are_the_basis_vector() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 0, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for j in 0..2 {
            let shares = share_basis_vector(&f, 4, 2, j, &cfg, "kw", &mut rng).unwrap();
            for s in shares {
                assert_eq!(s.q, basis(&f, 4, 2));
            }
        }
    }

    #[test]
    fn any_two_of_three_recover_basis() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 1, 3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for index in 0..2 {
            let shares = share_basis_vector(&f, 2, index, 0, &cfg, "kw", &mut rng).unwrap();
            for a in 0..3 {
                for b in (a + 1)..3 {
                    let pts = [
                        (shares[a].x, shares[a].q.as_slice()),
                        (shares[b].x, shares[b].q.as_slice()),
                    ];
                    let got = reconstruct(&f, &pts, &f.zero(), 1).unwrap();
                    assert_eq!(got, basis(&f, 2, index));
                }
            }
        }
    }

    #[test]
    fn two_servers_suffice_for_t1_u1() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 1, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shares = share_basis_vector(&f, 3, 1, 0, &cfg, "kw", &mut rng).unwrap();
        let pts: Vec<_> = shares.iter().map(|s| (s.x, s.q.as_slice())).collect();
        assert_eq!(reconstruct(&f, &pts, &f.zero(), 1).unwrap(), basis(&f, 3, 1));
    }

    #[test]
    fn same_basis_at_two_positions() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 1, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shares = share_k_batch(&f, 3, &[(0, 0), (1, 0)], &cfg, "kw", &mut rng).unwrap();
        let pts: Vec<_> = shares.iter().map(|s| (s.x, s.q.as_slice())).collect();
        for pos in 0..2 {
            let got = reconstruct(&f, &pts, &el(&f, pos), 2).unwrap();
            assert_eq!(got, basis(&f, 3, 0));
        }
    }

    #[test]
    fn k2_batch_distinct_indices() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 1, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (i0, i1) in [(0, 2), (2, 1), (1, 1)] {
            let shares =
                share_k_batch(&f, 3, &[(0, i0), (1, i1)], &cfg, "kw", &mut rng).unwrap();
            let pts: Vec<_> = shares.iter().map(|s| (s.x, s.q.as_slice())).collect();
            assert_eq!(reconstruct(&f, &pts, &f.zero(), 2).unwrap(), basis(&f, 3, i0));
            assert_eq!(reconstruct(&f, &pts, &f.one(), 2).unwrap(), basis(&f, 3, i1));
        }
    }

    #[test]
    fn k_batch_error_paths() {
        let f = p31();
        let cfg = ShareConfig::with_default_points(&f, 1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(
            share_k_batch(&f, 3, &[(0, 0), (1, 1)], &cfg, "kw", &mut rng),
            Err(ShamirError::InsufficientServers { need: 3, have: 2 })
        );
        let cfg = ShareConfig::with_default_points(&f, 0, 3, 2).unwrap();
        assert_eq!(
            share_k_batch(&f, 3, &[(1, 0), (1, 1)], &cfg, "kw", &mut rng),
            Err(ShamirError::DuplicatePoints)
        );
        assert_eq!(
            share_basis_vector(&f, 3, 3, 0, &cfg, "kw", &mut rng),
            Err(ShamirError::IndexOutOfRange { index: 3, len: 3 })
        );
        assert!(matches!(
            share_basis_vector(&f, 3, 0, 2, &cfg, "kw", &mut rng),
            Err(ShamirError::NotReserved(_))
        ));
        assert!(matches!(
            ShareConfig::new(&f, 1, vec![el(&f, 1), el(&f, 5)], 2),
            Err(ShamirError::PositionCollision(_))
        ));
        assert_eq!(
            ShareConfig::new(&f, 1, vec![el(&f, 5), el(&f, 5)], 2).unwrap_err(),
            ShamirError::DuplicatePoints
        );
    }

    #[test]
    fn reconstruct_error_paths() {
        let f = p31();
        let v = vec![f.one(); 2];
        let w = vec![f.one(); 3];
        assert!(matches!(
            reconstruct(&f, &[(el(&f, 1), v.as_slice())], &f.zero(), 1),
            Err(ShamirError::TooFewPoints { need: 2, got: 1 })
        ));
        assert_eq!(
            reconstruct(&f, &[(el(&f, 1), &v), (el(&f, 2), &w)], &f.zero(), 1),
            Err(ShamirError::LengthMismatch)
        );
        assert_eq!(
            reconstruct(&f, &[(el(&f, 1), &v), (el(&f, 1), &v)], &f.zero(), 1),
            Err(ShamirError::DuplicatePoints)
        );
    }

    #[test]
    fn constant_points_reconstruct_to_constant() {
        let f = p31();
        let v: Vec<_> = (0..4).map(|i| el(&f, i * 3)).collect();
        let pts: Vec<_> = (5..8).map(|x| (el(&f, x), v.as_slice())).collect();
        for target in 0..5 {
            assert_eq!(reconstruct(&f, &pts, &el(&f, target), 2).unwrap(), v);
        }
    }

    #[test]
    fn round_trip_any_subset() {
        let f = Field::new(FieldSpec::mersenne31()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let t = rng.random_range(0..=3usize);
            let ell = t + 3;
            let p = rng.random_range(1..8usize);
            let index = rng.random_range(0..p);
            let j = rng.random_range(0..2u64);
            let cfg = ShareConfig::with_default_points(&f, t, ell, 2).unwrap();
            let shares = share_basis_vector(&f, p, index, j, &cfg, "kw", &mut rng).unwrap();
            // every (t+1)-subset, walking bitmasks
            for mask in 0u32..(1 << ell) {
                if mask.count_ones() as usize != t + 1 {
                    continue;
                }
                let pts: Vec<_> = (0..ell)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| (shares[i].x, shares[i].q.as_slice()))
                    .collect();
                let got = reconstruct(&f, &pts, &el(&f, j), t).unwrap();
                assert_eq!(got, basis(&f, p, index));
            }
        }
    }
}
