//! Binary CCS file format (little-endian).
//!
//! ```text
//! "IAQ1" | u8 kind (0 = structure only, 1 = valued)
//! u64 p | u64 r | u64 nnz | u64 col_ptr[r+1] | u64 row_idx[nnz]
//! kind 1 only:
//!   u32 len | field spec text | nnz field elements (fixed width, big-endian)
//!   u64 u | x coordinate (one field element) | u × (u32 len | family label)
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{BatchedCcs, Ccs, IaqError};
use crate::field::{Field, FieldError, FieldSpec};

const MAGIC: &[u8; 4] = b"IAQ1";
const KIND_STRUCTURE: u8 = 0;
const KIND_VALUED: u8 = 1;
/// Refuse absurd lengths before allocating.
const MAX_LEN: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic, not an IAQ1 file")]
    Magic,
    #[error("expected kind {expected}, found {found}")]
    Kind { expected: u8, found: u8 },
    #[error("file written for field {found}, expected {expected}")]
    FieldMismatch { expected: String, found: String },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Iaq(#[from] IaqError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn get_str<R: Read>(r: &mut R) -> Result<String, FormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    let mut buf = vec![0u8; u32::from_le_bytes(b) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| FormatError::Corrupt("label is not UTF-8".into()))
}

fn get_len<R: Read>(r: &mut R) -> Result<usize, FormatError> {
    let v = get_u64(r)?;
    if v > MAX_LEN {
        return Err(FormatError::Corrupt(format!("length {v} too large")));
    }
    Ok(v as usize)
}

fn write_structure<W: Write>(w: &mut W, kind: u8, ccs: &Ccs) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[kind])?;
    put_u64(w, ccs.rows() as u64)?;
    put_u64(w, ccs.cols() as u64)?;
    put_u64(w, ccs.nnz() as u64)?;
    for &v in ccs.col_ptr() {
        put_u64(w, v as u64)?;
    }
    for &v in ccs.row_idx() {
        put_u64(w, v as u64)?;
    }
    Ok(())
}

fn read_structure<R: Read>(r: &mut R, expected_kind: u8) -> Result<Ccs, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::Magic);
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    if kind[0] != expected_kind {
        return Err(FormatError::Kind {
            expected: expected_kind,
            found: kind[0],
        });
    }
    let p = get_len(r)?;
    let cols = get_len(r)?;
    let nnz = get_len(r)?;
    let col_ptr = (0..=cols).map(|_| get_len(r)).collect::<Result<Vec<_>, _>>()?;
    let row_idx = (0..nnz).map(|_| get_len(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(Ccs::from_parts(p, cols, col_ptr, row_idx)?)
}

/// Writes the structure of a simple index; row labels travel in the manifest.
pub fn write_simple<W: Write>(w: &mut W, ccs: &Ccs) -> io::Result<()> {
    write_structure(w, KIND_STRUCTURE, ccs)
}

pub fn read_simple<R: Read>(r: &mut R) -> Result<Ccs, FormatError> {
    read_structure(r, KIND_STRUCTURE)
}

pub fn write_bucket<W: Write>(w: &mut W, field: &Field, bucket: &BatchedCcs) -> io::Result<()> {
    write_structure(w, KIND_VALUED, bucket.ccs())?;
    put_str(w, &field.spec().to_string())?;
    let mut buf = Vec::with_capacity(bucket.values().len() * field.byte_width());
    for v in bucket.values() {
        field.write_element(v, &mut buf);
    }
    w.write_all(&buf)?;
    put_u64(w, bucket.u() as u64)?;
    w.write_all(&field.serialize(bucket.x()))?;
    for label in bucket.family_labels() {
        put_str(w, label)?;
    }
    Ok(())
}

pub fn read_bucket<R: Read>(r: &mut R, field: &Field) -> Result<BatchedCcs, FormatError> {
    let ccs = read_structure(r, KIND_VALUED)?;
    let spec_text = get_str(r)?;
    let spec: FieldSpec = spec_text.parse()?;
    if &spec != field.spec() {
        return Err(FormatError::FieldMismatch {
            expected: field.spec().to_string(),
            found: spec_text,
        });
    }
    let w = field.byte_width();
    let mut buf = vec![0u8; w];
    let mut values = Vec::with_capacity(ccs.nnz());
    for _ in 0..ccs.nnz() {
        r.read_exact(&mut buf)?;
        values.push(field.deserialize(&buf)?);
    }
    let u = get_len(r)?;
    r.read_exact(&mut buf)?;
    let x = field.deserialize(&buf)?;
    let labels = (0..u).map(|_| get_str(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(BatchedCcs::new(ccs, values, x, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iaq::ccs_from_dense;

    #[test]
    fn golden_structure_bytes() {
        let ccs = ccs_from_dense(&[vec![1, 0], vec![1, 1]]).unwrap();
        let mut out = Vec::new();
        write_simple(&mut out, &ccs).unwrap();
        let mut expect = b"IAQ1".to_vec();
        expect.push(0);
        for v in [2u64, 2, 3, 0, 2, 3, 0, 1, 1] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(out, expect);
        assert_eq!(read_simple(&mut out.as_slice()).unwrap(), ccs);
    }

    #[test]
    fn golden_bucket_bytes() {
        let field = Field::new(FieldSpec::prime_u64(31).unwrap()).unwrap();
        let ccs = ccs_from_dense(&[vec![0, 1]]).unwrap();
        let bucket = BatchedCcs::new(
            ccs,
            vec![field.from_u64(30).unwrap()],
            field.from_u64(2).unwrap(),
            vec!["a".into(), "bc".into()],
        )
        .unwrap();
        let mut out = Vec::new();
        write_bucket(&mut out, &field, &bucket).unwrap();
        let mut expect = b"IAQ1".to_vec();
        expect.push(1);
        for v in [1u64, 2, 1, 0, 0, 1, 0] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.extend_from_slice(&8u32.to_le_bytes());
        expect.extend_from_slice(b"prime:31");
        expect.push(30);
        expect.extend_from_slice(&2u64.to_le_bytes());
        expect.push(2);
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(b"a");
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(b"bc");
        assert_eq!(out, expect);
        assert_eq!(read_bucket(&mut out.as_slice(), &field).unwrap(), bucket);
    }

    #[test]
    fn rejects_wrong_kind_and_field() {
        let field = Field::new(FieldSpec::prime_u64(31).unwrap()).unwrap();
        let ccs = ccs_from_dense(&[vec![1]]).unwrap();
        let mut out = Vec::new();
        write_simple(&mut out, &ccs).unwrap();
        assert!(matches!(
            read_bucket(&mut out.as_slice(), &field),
            Err(FormatError::Kind { expected: 1, found: 0 })
        ));
        let bucket = BatchedCcs::from_simple(
            &field,
            &crate::iaq::SimpleIaq::from_dense(&[vec![1]]).unwrap(),
            field.from_u64(3).unwrap(),
            "a",
        );
        let mut out = Vec::new();
        write_bucket(&mut out, &field, &bucket).unwrap();
        let other = Field::new(FieldSpec::mersenne31()).unwrap();
        assert!(matches!(
            read_bucket(&mut out.as_slice(), &other),
            Err(FormatError::FieldMismatch { .. })
        ));
        assert!(matches!(read_simple(&mut &b"NOPE"[..]), Err(FormatError::Magic)));
    }
}
