//! u-batch indexes: `u` simple indexes of equal shape are interpolated entry by
//! entry into a matrix polynomial `Π(x)` of degree `u - 1` with `Π(j) = Π_j`,
//! and server `i` stores the evaluation `Π(x_i)` as its bucket.

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError};
use crate::iaq::{BatchedCcs, Ccs, IaqError, SimpleIaq};
use crate::shamir::{lagrange_coefficients, ShamirError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BatchError {
    #[error("no indexes to batch")]
    Empty,
    #[error("index {index} is {got_p}x{got_r}, expected {p}x{r}")]
    Dimension {
        index: usize,
        p: usize,
        r: usize,
        got_p: usize,
        got_r: usize,
    },
    #[error("{labels} family labels for {indexes} indexes")]
    LabelCount { labels: usize, indexes: usize },
    #[error("bucket coordinate {0} collides with a batch position")]
    CoordinateCollision(String),
    #[error("bucket coordinates are not pairwise distinct")]
    DuplicateCoordinates,
    #[error("need at least {need} buckets, got {got}")]
    TooFewBuckets { need: usize, got: usize },
    #[error("buckets disagree on shape or batch size")]
    Inconsistent,
    #[error("batch position {j} out of range for u = {u}")]
    PositionOutOfRange { j: usize, u: usize },
    #[error("recovered entry ({row}, {col}) is not 0 or 1: corrupted bucket")]
    CorruptedBucket { row: usize, col: usize },
    #[error(transparent)]
    Iaq(#[from] IaqError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl From<ShamirError> for BatchError {
    fn from(e: ShamirError) -> Self {
        match e {
            ShamirError::DuplicatePoints => BatchError::DuplicateCoordinates,
            ShamirError::Field(f) => BatchError::Field(f),
            other => BatchError::Field(FieldError::InvalidSpec(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchWarning {
    /// Every index is the same matrix, so the polynomial is constant and the
    /// batch degenerates to a replicated simple index.
    IdenticalIndexes,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// One bucket per coordinate, in coordinate order.
    pub buckets: Vec<BatchedCcs>,
    pub warnings: Vec<BatchWarning>,
}

fn check_coords(field: &Field, coords: &[FieldElement], reserved: usize) -> Result<(), BatchError> {
    let mut seen = HashSet::new();
    for x in coords {
        if let Some(v) = field.to_u64(x) {
            if (v as u128) < reserved as u128 {
                return Err(BatchError::CoordinateCollision(v.to_string()));
            }
        }
        if !seen.insert(*x) {
            return Err(BatchError::DuplicateCoordinates);
        }
    }
    Ok(())
}

/// Batches `indexes` (position `j` holds `indexes[j]`) and evaluates at each
/// coordinate. Entries zero in every index stay structurally zero; entries
/// whose evaluation happens to vanish at a coordinate are dropped from that
/// bucket.
pub fn batch_indexes(
    field: &Field,
    indexes: &[SimpleIaq],
    family_labels: &[String],
    coords: &[FieldElement],
) -> Result<BatchOutput, BatchError> {
    let first = indexes.first().ok_or(BatchError::Empty)?;
    let (p, r) = (first.p(), first.r());
    for (i, m) in indexes.iter().enumerate() {
        if m.p() != p || m.r() != r {
            return Err(BatchError::Dimension {
                index: i,
                p,
                r,
                got_p: m.p(),
                got_r: m.r(),
            });
        }
    }
    if family_labels.len() != indexes.len() {
        return Err(BatchError::LabelCount {
            labels: family_labels.len(),
            indexes: indexes.len(),
        });
    }
    let u = indexes.len();
    check_coords(field, coords, u)?;
    let mut warnings = Vec::new();
    if u > 1 && indexes.iter().all(|m| m.ccs() == first.ccs()) {
        warnings.push(BatchWarning::IdenticalIndexes);
    }

    let nodes: Vec<FieldElement> = (0..u as u64)
        .map(|j| field.from_u64(j))
        .collect::<Result<_, _>>()?;
    // basis[i][j] = L_j(x_i), the Lagrange basis over positions 0..u-1
    let basis: Vec<Vec<FieldElement>> = coords
        .iter()
        .map(|x| lagrange_coefficients(field, &nodes, x))
        .collect::<Result<_, _>>()?;

    // per column: (row, bitmask over positions as a sorted position list)
    let columns: Vec<Vec<(usize, Vec<usize>)>> = (0..r)
        .into_par_iter()
        .map(|c| {
            let mut entries: Vec<(usize, usize)> = Vec::new();
            for (j, m) in indexes.iter().enumerate() {
                let ccs = m.ccs();
                for k in ccs.column(c) {
                    entries.push((ccs.row_idx()[k], j));
                }
            }
            entries.sort_unstable();
            let mut grouped: Vec<(usize, Vec<usize>)> = Vec::new();
            for (row, j) in entries {
                match grouped.last_mut() {
                    Some((last, js)) if *last == row => js.push(j),
                    _ => grouped.push((row, vec![j])),
                }
            }
            grouped
        })
        .collect();

    let buckets = coords
        .par_iter()
        .zip(basis.par_iter())
        .map(|(x, lj)| {
            let mut col_ptr = Vec::with_capacity(r + 1);
            let mut row_idx = Vec::new();
            let mut values = Vec::new();
            col_ptr.push(0);
            for col in &columns {
                for (row, js) in col {
                    let v = js
                        .iter()
                        .fold(field.zero(), |acc, &j| field.add(&acc, &lj[j]));
                    if !v.is_zero() {
                        row_idx.push(*row);
                        values.push(v);
                    }
                }
                col_ptr.push(row_idx.len());
            }
            let ccs = Ccs::from_parts(p, r, col_ptr, row_idx)?;
            Ok(BatchedCcs::new(ccs, values, *x, family_labels.to_vec())?)
        })
        .collect::<Result<Vec<_>, BatchError>>()?;
    Ok(BatchOutput { buckets, warnings })
}

/// Recovers the simple index at batch position `j` by Lagrange interpolation
/// over the given buckets (at least `u`). A result entry outside {0, 1} means
/// some bucket was altered.
pub fn recover_index(
    field: &Field,
    buckets: &[&BatchedCcs],
    j: usize,
) -> Result<SimpleIaq, BatchError> {
    let first = buckets.first().ok_or(BatchError::Empty)?;
    let (u, p, r) = (first.u(), first.p(), first.r());
    if buckets
        .iter()
        .any(|b| b.u() != u || b.p() != p || b.r() != r || b.family_labels() != first.family_labels())
    {
        return Err(BatchError::Inconsistent);
    }
    if buckets.len() < u {
        return Err(BatchError::TooFewBuckets {
            need: u,
            got: buckets.len(),
        });
    }
    if j >= u {
        return Err(BatchError::PositionOutOfRange { j, u });
    }
    let xs: Vec<FieldElement> = buckets.iter().map(|b| *b.x()).collect();
    check_coords(field, &xs, u)?;
    let lambda = lagrange_coefficients(field, &xs, &field.from_u64(j as u64)?)?;

    let mut supports = vec![Vec::new(); p];
    for c in 0..r {
        let mut entries: Vec<(usize, FieldElement)> = Vec::new();
        for (b, l) in buckets.iter().zip(&lambda) {
            let ccs = b.ccs();
            for k in ccs.column(c) {
                entries.push((ccs.row_idx()[k], field.mul(l, &b.values()[k])));
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut i = 0;
        while i < entries.len() {
            let row = entries[i].0;
            let mut acc = field.zero();
            while i < entries.len() && entries[i].0 == row {
                acc = field.add(&acc, &entries[i].1);
                i += 1;
            }
            if acc == field.one() {
                supports[row].push(c);
            } else if !acc.is_zero() {
                return Err(BatchError::CorruptedBucket { row, col: c });
            }
        }
    }
    let labels = (0..p).map(|i| i.to_string()).collect();
    Ok(SimpleIaq::new(Ccs::from_row_supports(&supports, r)?, labels)?)
}
