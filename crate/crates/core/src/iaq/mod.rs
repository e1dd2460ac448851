//! Indexes of aggregate queries: (0,1)-matrices mapping `p` search terms to
//! record subsets, stored column-major (CCS), and the vector × sparse matrix
//! kernel the servers run.

pub mod format;

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldVector};

pub use format::{read_bucket, read_simple, write_bucket, write_simple, FormatError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IaqError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("record index {index} out of range for {len} records")]
    OutOfRange { index: usize, len: usize },
    #[error("row {row} has {got} entries, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("entry ({row}, {col}) is not 0 or 1")]
    NotBinary { row: usize, col: usize },
    #[error("{labels} row labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A (0,1)-vector of length `len` with ones at the sorted positions `ones`.
/// Multiplying it into a database sums the selected records.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggregateVector {
    len: usize,
    ones: Vec<usize>,
}

impl AggregateVector {
    pub fn new(len: usize, mut ones: Vec<usize>) -> Result<Self, IaqError> {
        ones.sort_unstable();
        ones.dedup();
        if let Some(&last) = ones.last() {
            if last >= len {
                return Err(IaqError::OutOfRange { index: last, len });
            }
        }
        Ok(AggregateVector { len, ones })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ones(&self) -> &[usize] {
        &self.ones
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.ones.len()
    }

    pub fn to_dense(&self, field: &Field) -> FieldVector {
        let mut v = vec![field.zero(); self.len];
        for &i in &self.ones {
            v[i] = field.one();
        }
        v
    }
}

/// Compressed column storage of a sparse `rows × cols` pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ccs {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl Ccs {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
    ) -> Result<Self, IaqError> {
        if col_ptr.len() != cols + 1 {
            return Err(IaqError::Dimension {
                expected: cols + 1,
                got: col_ptr.len(),
            });
        }
        if col_ptr[0] != 0 || col_ptr[cols] != row_idx.len() || col_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(IaqError::Dimension {
                expected: row_idx.len(),
                got: col_ptr[cols],
            });
        }
        if let Some(&bad) = row_idx.iter().find(|&&r| r >= rows) {
            return Err(IaqError::OutOfRange { index: bad, len: rows });
        }
        Ok(Ccs {
            rows,
            cols,
            col_ptr,
            row_idx,
        })
    }

    /// Builds from per-row supports (each row's sorted column positions).
    pub fn from_row_supports(rows: &[Vec<usize>], cols: usize) -> Result<Self, IaqError> {
        let mut counts = vec![0usize; cols + 1];
        for support in rows {
            for &c in support {
                if c >= cols {
                    return Err(IaqError::OutOfRange { index: c, len: cols });
                }
                counts[c + 1] += 1;
            }
        }
        for c in 0..cols {
            counts[c + 1] += counts[c];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; col_ptr[cols]];
        // rows visited in order, so row indices within each column come out sorted
        for (r, support) in rows.iter().enumerate() {
            for &c in support {
                row_idx[next[c]] = r;
                next[c] += 1;
            }
        }
        Ok(Ccs {
            rows: rows.len(),
            cols,
            col_ptr,
            row_idx,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn column(&self, c: usize) -> std::ops::Range<usize> {
        self.col_ptr[c]..self.col_ptr[c + 1]
    }

    /// Columns holding at least one nonzero.
    pub fn nonzero_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&c| self.col_ptr[c] != self.col_ptr[c + 1])
            .collect()
    }

    pub fn row_supports(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.rows];
        for c in 0..self.cols {
            for k in self.column(c) {
                out[self.row_idx[k]].push(c);
            }
        }
        out
    }
}

/// Converts a dense (0,1)-matrix to CCS. Nonzero entries other than 1 are rejected.
pub fn ccs_from_dense(dense: &[Vec<u8>]) -> Result<Ccs, IaqError> {
    let cols = dense.first().map_or(0, |r| r.len());
    let mut supports = Vec::with_capacity(dense.len());
    for (r, row) in dense.iter().enumerate() {
        if row.len() != cols {
            return Err(IaqError::RaggedRow {
                row: r,
                expected: cols,
                got: row.len(),
            });
        }
        let mut support = Vec::new();
        for (c, &v) in row.iter().enumerate() {
            match v {
                0 => {}
                1 => support.push(c),
                _ => return Err(IaqError::NotBinary { row: r, col: c }),
            }
        }
        supports.push(support);
    }
    Ccs::from_row_supports(&supports, cols)
}

pub fn ccs_to_dense(ccs: &Ccs) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; ccs.cols]; ccs.rows];
    for c in 0..ccs.cols {
        for k in ccs.column(c) {
            out[ccs.row_idx[k]][c] = 1;
        }
    }
    out
}

/// A `p × r` index whose rows are aggregate vectors. All stored nonzeros are 1,
/// so no value array is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleIaq {
    ccs: Ccs,
    row_labels: Vec<String>,
}

impl SimpleIaq {
    pub fn new(ccs: Ccs, row_labels: Vec<String>) -> Result<Self, IaqError> {
        if row_labels.len() != ccs.rows {
            return Err(IaqError::LabelCount {
                labels: row_labels.len(),
                rows: ccs.rows,
            });
        }
        Ok(SimpleIaq { ccs, row_labels })
    }

    pub fn from_rows(rows: &[AggregateVector], row_labels: Vec<String>) -> Result<Self, IaqError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(IaqError::Dimension {
                expected: cols,
                got: bad.len(),
            });
        }
        let supports: Vec<Vec<usize>> = rows.iter().map(|r| r.ones.clone()).collect();
        Self::new(Ccs::from_row_supports(&supports, cols)?, row_labels)
    }

    /// Unlabelled index from a dense (0,1)-matrix; rows are labelled `0..p`.
    pub fn from_dense(dense: &[Vec<u8>]) -> Result<Self, IaqError> {
        let ccs = ccs_from_dense(dense)?;
        let labels = (0..ccs.rows).map(|i| i.to_string()).collect();
        Self::new(ccs, labels)
    }

    pub fn p(&self) -> usize {
        self.ccs.rows
    }

    pub fn r(&self) -> usize {
        self.ccs.cols
    }

    pub fn ccs(&self) -> &Ccs {
        &self.ccs
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        ccs_to_dense(&self.ccs)
    }

    pub fn rows(&self) -> Vec<AggregateVector> {
        self.ccs
            .row_supports()
            .into_iter()
            .map(|ones| AggregateVector { len: self.r(), ones })
            .collect()
    }

    pub fn row(&self, i: usize) -> AggregateVector {
        let ones = (0..self.r())
            .filter(|&c| self.ccs.column(c).any(|k| self.ccs.row_idx[k] == i))
            .collect();
        AggregateVector { len: self.r(), ones }
    }
}

/// One server's evaluation of a batched index polynomial at coordinate `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchedCcs {
    ccs: Ccs,
    values: Vec<FieldElement>,
    x: FieldElement,
    family_labels: Vec<String>,
}

impl BatchedCcs {
    pub fn new(
        ccs: Ccs,
        values: Vec<FieldElement>,
        x: FieldElement,
        family_labels: Vec<String>,
    ) -> Result<Self, IaqError> {
        if values.len() != ccs.nnz() {
            return Err(IaqError::Dimension {
                expected: ccs.nnz(),
                got: values.len(),
            });
        }
        Ok(BatchedCcs {
            ccs,
            values,
            x,
            family_labels,
        })
    }

    pub fn p(&self) -> usize {
        self.ccs.rows
    }

    pub fn r(&self) -> usize {
        self.ccs.cols
    }

    /// Number of batched indexes.
    pub fn u(&self) -> usize {
        self.family_labels.len()
    }

    pub fn x(&self) -> &FieldElement {
        &self.x
    }

    pub fn ccs(&self) -> &Ccs {
        &self.ccs
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn family_labels(&self) -> &[String] {
        &self.family_labels
    }

    pub fn to_dense(&self, field: &Field) -> Vec<FieldVector> {
        let mut out = vec![vec![field.zero(); self.r()]; self.p()];
        for c in 0..self.r() {
            for k in self.ccs.column(c) {
                out[self.ccs.row_idx[k]][c] = self.values[k];
            }
        }
        out
    }

    /// Bucket of an unbatched index: every stored value is 1.
    pub fn from_simple(field: &Field, index: &SimpleIaq, x: FieldElement, label: &str) -> Self {
        BatchedCcs {
            values: vec![field.one(); index.ccs.nnz()],
            ccs: index.ccs.clone(),
            x,
            family_labels: vec![label.to_string()],
        }
    }
}

/// Either kind of index the kernel can run against.
pub trait SparseIndex: Sync {
    fn ccs(&self) -> &Ccs;
    /// Value of the `k`-th stored entry; `None` means the implicit 1.
    fn value(&self, k: usize) -> Option<&FieldElement>;
}

impl SparseIndex for SimpleIaq {
    fn ccs(&self) -> &Ccs {
        &self.ccs
    }
    #[inline]
    fn value(&self, _k: usize) -> Option<&FieldElement> {
        None
    }
}

impl SparseIndex for BatchedCcs {
    fn ccs(&self) -> &Ccs {
        &self.ccs
    }
    #[inline]
    fn value(&self, k: usize) -> Option<&FieldElement> {
        Some(&self.values[k])
    }
}

#[inline]
fn column_dot<M: SparseIndex + ?Sized>(field: &Field, q: &[FieldElement], m: &M, c: usize) -> FieldElement {
    let ccs = m.ccs();
    let mut acc = field.zero();
    for k in ccs.column(c) {
        let qr = &q[ccs.row_idx[k]];
        match m.value(k) {
            None => acc = field.add(&acc, qr),
            Some(v) => field.mul_add_assign(&mut acc, qr, v),
        }
    }
    acc
}

fn check_len<M: SparseIndex + ?Sized>(q: &[FieldElement], m: &M) -> Result<(), IaqError> {
    if q.len() != m.ccs().rows {
        return Err(IaqError::Dimension {
            expected: m.ccs().rows,
            got: q.len(),
        });
    }
    Ok(())
}

/// `q · Π` as a dense length-`r` vector, visiting every column.
pub fn vspm<M: SparseIndex + ?Sized>(field: &Field, q: &[FieldElement], m: &M) -> Result<FieldVector, IaqError> {
    check_len(q, m)?;
    Ok((0..m.ccs().cols).map(|c| column_dot(field, q, m, c)).collect())
}

/// Column-parallel [`vspm`].
pub fn vspm_par<M: SparseIndex + ?Sized>(field: &Field, q: &[FieldElement], m: &M) -> Result<FieldVector, IaqError> {
    check_len(q, m)?;
    Ok((0..m.ccs().cols)
        .into_par_iter()
        .map(|c| column_dot(field, q, m, c))
        .collect())
}

/// `q · Π` restricted to the given columns (normally the index's nonzero
/// columns); every other entry of the product is zero and never computed.
pub fn vspm_columns<M: SparseIndex + ?Sized>(
    field: &Field,
    q: &[FieldElement],
    m: &M,
    columns: &[usize],
    parallel: bool,
) -> Result<Vec<(usize, FieldElement)>, IaqError> {
    check_len(q, m)?;
    let one = |&c: &usize| (c, column_dot(field, q, m, c));
    Ok(if parallel {
        columns.par_iter().map(one).collect()
    } else {
        columns.iter().map(one).collect()
    })
}

/// Row-weight check. Strict mode enforces `2 <= weight <= r`; lenient mode
/// accepts any weight (all-zero and single-record rows are legitimate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub strict: bool,
    /// `(row, weight)` for each row outside the allowed range.
    pub offending_rows: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.offending_rows.is_empty()
    }
}

pub fn validate_simple_iaq(m: &SimpleIaq, strict: bool) -> ValidationReport {
    let mut weights = vec![0usize; m.p()];
    for &r in m.ccs.row_idx() {
        weights[r] += 1;
    }
    let min = if strict { 2 } else { 0 };
    let offending_rows = weights
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w < min || w > m.r())
        .collect();
    ValidationReport {
        strict,
        offending_rows,
    }
}
