//! Database matrix over a field, with the plaintext table it was encoded from.

pub mod filter;
pub mod oracle;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldSpec, FieldVector};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column}: {msg}")]
    Parse { row: usize, column: String, msg: String },
    #[error("row {row}, column {column}: value {value} does not fit below the field order")]
    Overflow { row: usize, column: String, value: String },
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("attribute {0} is not categorical")]
    NotCategorical(String),
    #[error("aggregation set is empty")]
    EmptyAggregationSet,
    #[error("vector length {got} does not match record count {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("column {column}: {records} records with maximum {max} may wrap modulo {modulus}")]
    Headroom {
        column: String,
        records: usize,
        max: u64,
        modulus: String,
    },
    #[error("field {0} cannot carry integer sums")]
    BinaryField(String),
    #[error("{0}")]
    Undefined(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Numeric,
    /// Dates and date-times, stored as epoch seconds.
    Timestamp,
    Categorical,
    Text,
}

impl AttrKind {
    /// Numeric and timestamp cells hold integers.
    pub fn is_ordered(self) -> bool {
        matches!(self, AttrKind::Numeric | AttrKind::Timestamp)
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttrKind,
    #[serde(default = "one")]
    pub words: usize,
    /// Categorical only: ids are assigned in this order first, then by first occurrence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl Attribute {
    pub fn new(name: &str, kind: AttrKind) -> Self {
        Attribute {
            name: name.to_string(),
            kind,
            words: 1,
            levels: Vec::new(),
        }
    }

    pub fn text(name: &str, words: usize) -> Self {
        Attribute {
            words,
            ..Self::new(name, AttrKind::Text)
        }
    }

    pub fn with_levels(mut self, levels: &[&str]) -> Self {
        self.levels = levels.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "attribute", alias = "attributes")]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub aggregation_set: Vec<String>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>, aggregation_set: &[&str]) -> Result<Self, DatasetError> {
        let s = Schema {
            attributes,
            aggregation_set: aggregation_set.iter().map(|s| s.to_string()).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if a.name.is_empty() || !seen.insert(a.name.as_str()) {
                return Err(DatasetError::Schema(format!("duplicate or empty attribute name {:?}", a.name)));
            }
            match a.kind {
                AttrKind::Text if a.words == 0 => {
                    return Err(DatasetError::Schema(format!("text attribute {} needs words >= 1", a.name)));
                }
                AttrKind::Text => {}
                _ if a.words != 1 => {
                    return Err(DatasetError::Schema(format!("attribute {} must occupy exactly one word", a.name)));
                }
                _ => {}
            }
            if !a.levels.is_empty() && a.kind != AttrKind::Categorical {
                return Err(DatasetError::Schema(format!("levels given for non-categorical {}", a.name)));
            }
        }
        for name in &self.aggregation_set {
            match self.attribute(name) {
                Some(a) if a.kind.is_ordered() => {}
                Some(_) => {
                    return Err(DatasetError::Schema(format!("aggregation attribute {name} is not numeric")));
                }
                None => return Err(DatasetError::UnknownAttribute(name.clone())),
            }
        }
        Ok(())
    }

    /// Parses TOML (`[[attribute]]` tables) or JSON, chosen by the first non-blank byte.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let schema: Schema = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Words per record.
    pub fn s(&self) -> usize {
        self.attributes.iter().map(|a| a.words).sum()
    }

    /// First word of `name` within a record.
    pub fn word_offset(&self, name: &str) -> Option<usize> {
        let mut off = 0;
        for a in &self.attributes {
            if a.name == name {
                return Some(off);
            }
            off += a.words;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cell {
    Int(u64),
    Text(String),
}

impl Cell {
    pub fn as_int(&self) -> Option<u64> {
        match self {
            Cell::Int(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// Plaintext records, one cell per schema attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &Cell>, DatasetError> {
        let c = self
            .column_index(name)
            .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))?;
        Ok(self.rows.iter().map(move |row| &row[c]))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|c| c.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Value-to-id assignment for a categorical attribute (ids start at 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    pub attribute: String,
    pub entries: Vec<(String, u64)>,
}

impl IdMap {
    pub fn id_of(&self, label: &str) -> Option<u64> {
        self.entries.iter().find(|(l, _)| l == label).map(|e| e.1)
    }

    pub fn label_of(&self, id: u64) -> Option<&str> {
        self.entries.iter().find(|(_, i)| *i == id).map(|e| e.0.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Two columns, `value,id`, with a header row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["value", "id"])?;
        for (label, id) in &self.entries {
            out.write_record([label.as_str(), &id.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(attribute: &str, r: R) -> Result<Self, DatasetError> {
        let mut entries = Vec::new();
        for (i, rec) in csv::Reader::from_reader(r).records().enumerate() {
            let rec = rec?;
            let id = rec
                .get(1)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .filter(|&id| id > 0)
                .ok_or_else(|| DatasetError::Parse {
                    row: i + 1,
                    column: "id".into(),
                    msg: "expected a positive integer".into(),
                })?;
            entries.push((rec.get(0).unwrap_or_default().to_string(), id));
        }
        Ok(IdMap {
            attribute: attribute.to_string(),
            entries,
        })
    }
}

/// The r×s matrix D, row-major.
#[derive(Debug, Clone)]
pub struct DatabaseMatrix {
    field: Field,
    schema: Schema,
    r: usize,
    s: usize,
    data: Vec<FieldElement>,
}

impl PartialEq for DatabaseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.field.spec() == other.field.spec()
            && self.schema == other.schema
            && self.r == other.r
            && self.data == other.data
    }
}

impl DatabaseMatrix {
    pub fn new(field: Field, schema: Schema, r: usize, data: Vec<FieldElement>) -> Result<Self, DatasetError> {
        schema.validate()?;
        let s = schema.s();
        if data.len() != r * s {
            return Err(DatasetError::Dimension {
                expected: r * s,
                got: data.len(),
            });
        }
        Ok(DatabaseMatrix {
            field,
            schema,
            r,
            s,
            data,
        })
    }

    /// Random matrix for benchmarks; one numeric attribute per word.
    pub fn random<R: rand::RngCore + ?Sized>(field: &Field, r: usize, s: usize, rng: &mut R) -> Self {
        let attrs = (0..s).map(|j| Attribute::new(&format!("c{j}"), AttrKind::Numeric)).collect();
        let schema = Schema {
            attributes: attrs,
            aggregation_set: Vec::new(),
        };
        let data = (0..r * s).map(|_| field.random(rng)).collect();
        DatabaseMatrix {
            field: field.clone(),
            schema,
            r,
            s,
            data,
        }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn spec(&self) -> &FieldSpec {
        self.field.spec()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn data(&self) -> &[FieldElement] {
        &self.data
    }

    pub fn record(&self, i: usize) -> &[FieldElement] {
        &self.data[i * self.s..(i + 1) * self.s]
    }

    pub fn get(&self, i: usize, j: usize) -> &FieldElement {
        &self.data[i * self.s + j]
    }

    /// Word index of a single-word attribute.
    pub fn word_of(&self, name: &str) -> Result<usize, DatasetError> {
        self.schema
            .word_offset(name)
            .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))
    }

    fn appended(&self, attr: Attribute, column: &[FieldElement]) -> DatabaseMatrix {
        let s = self.s + 1;
        let mut data = Vec::with_capacity(self.r * s);
        for (i, v) in column.iter().enumerate() {
            data.extend_from_slice(self.record(i));
            data.push(*v);
        }
        let mut schema = self.schema.clone();
        schema.attributes.push(attr);
        DatabaseMatrix {
            field: self.field.clone(),
            schema,
            r: self.r,
            s,
            data,
        }
    }
}

/// An encoded matrix together with its plaintext source and id maps.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: DatabaseMatrix,
    pub table: Table,
    pub id_maps: BTreeMap<String, IdMap>,
}

impl Dataset {
    pub fn schema(&self) -> &Schema {
        self.matrix.schema()
    }

    pub fn field(&self) -> &Field {
        self.matrix.field()
    }

    pub fn r(&self) -> usize {
        self.matrix.r()
    }

    /// Encodes a typed table. Categorical ids follow schema levels, then first occurrence.
    pub fn from_table(schema: Schema, table: Table, field: &Field) -> Result<Self, DatasetError> {
        schema.validate()?;
        let names: Vec<&str> = schema.attributes.iter().map(|a| a.name.as_str()).collect();
        if table.columns.iter().map(String::as_str).ne(names.iter().copied()) {
            return Err(DatasetError::Schema(format!(
                "table columns {:?} do not match schema {:?}",
                table.columns, names
            )));
        }
        let mut id_maps = BTreeMap::new();
        for (c, a) in schema.attributes.iter().enumerate() {
            if a.kind == AttrKind::Categorical {
                id_maps.insert(a.name.clone(), assign_ids(a, table.rows.iter().map(|row| &row[c]))?);
            }
        }
        let lookups: HashMap<&str, HashMap<&str, u64>> = id_maps
            .iter()
            .map(|(k, m)| (k.as_str(), m.entries.iter().map(|(l, i)| (l.as_str(), *i)).collect()))
            .collect();

        let s = schema.s();
        let bytes_per_word = text_bytes_per_word(field.spec());
        let mut data = Vec::with_capacity(table.rows.len() * s);
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != schema.attributes.len() {
                return Err(DatasetError::Parse {
                    row: i + 1,
                    column: String::new(),
                    msg: format!("expected {} cells, found {}", schema.attributes.len(), row.len()),
                });
            }
            for (a, cell) in schema.attributes.iter().zip(row) {
                let overflow = || DatasetError::Overflow {
                    row: i + 1,
                    column: a.name.clone(),
                    value: cell.to_string(),
                };
                match (a.kind, cell) {
                    (AttrKind::Numeric | AttrKind::Timestamp, Cell::Int(v)) => {
                        data.push(field.from_u64(*v).map_err(|_| overflow())?)
                    }
                    (AttrKind::Categorical, Cell::Text(t)) => {
                        let id = lookups[a.name.as_str()][t.as_str()];
                        data.push(field.from_u64(id).map_err(|_| overflow())?)
                    }
                    (AttrKind::Text, Cell::Text(t)) => {
                        pack_text(field, t, a.words, bytes_per_word, &mut data).map_err(|_| overflow())?
                    }
                    _ => {
                        return Err(DatasetError::Parse {
                            row: i + 1,
                            column: a.name.clone(),
                            msg: "cell type does not match attribute kind".into(),
                        })
                    }
                }
            }
        }
        let matrix = DatabaseMatrix::new(field.clone(), schema, table.rows.len(), data)?;
        Ok(Dataset {
            matrix,
            table,
            id_maps,
        })
    }

    /// Column name used for COUNT on `group_attr`: the derived id column for
    /// categoricals, the attribute itself for numerics.
    pub fn count_column(&self, group_attr: &str) -> Result<String, DatasetError> {
        let a = self
            .schema()
            .attribute(group_attr)
            .ok_or_else(|| DatasetError::UnknownAttribute(group_attr.to_string()))?;
        Ok(match a.kind {
            AttrKind::Categorical => format!("{group_attr}_id"),
            _ => group_attr.to_string(),
        })
    }
}

fn assign_ids<'a>(attr: &Attribute, cells: impl Iterator<Item = &'a Cell>) -> Result<IdMap, DatasetError> {
    let mut entries: Vec<(String, u64)> = Vec::new();
    let mut seen = HashSet::new();
    let labels = attr
        .levels
        .iter()
        .map(String::as_str)
        .chain(cells.filter_map(|c| match c {
            Cell::Text(t) => Some(t.as_str()),
            Cell::Int(_) => None,
        }));
    for label in labels {
        if seen.insert(label.to_string()) {
            entries.push((label.to_string(), entries.len() as u64 + 1));
        }
    }
    Ok(IdMap {
        attribute: attr.name.clone(),
        entries,
    })
}

/// Bytes of text that fit in one word without reaching the field order.
pub fn text_bytes_per_word(spec: &FieldSpec) -> usize {
    if spec.is_binary() {
        spec.word_bits() as usize / 8
    } else {
        (spec.word_bits() as usize - 1) / 8
    }
}

fn pack_text(
    field: &Field,
    text: &str,
    words: usize,
    per_word: usize,
    out: &mut Vec<FieldElement>,
) -> Result<(), FieldError> {
    let bytes = text.as_bytes();
    if bytes.len() > words * per_word {
        return Err(FieldError::OutOfRange {
            value: format!("{} text bytes", bytes.len()),
            order: format!("{} bytes", words * per_word),
        });
    }
    for w in 0..words {
        let start = (w * per_word).min(bytes.len());
        let end = ((w + 1) * per_word).min(bytes.len());
        let mut chunk = bytes[start..end].to_vec();
        chunk.resize(per_word, 0);
        out.push(field.from_biguint(&num_bigint::BigUint::from_bytes_be(&chunk))?);
    }
    Ok(())
}

/// Inverse of text packing: concatenates words and strips zero padding.
pub fn unpack_text(field: &Field, words: &[FieldElement]) -> String {
    let per_word = text_bytes_per_word(field.spec());
    let mut bytes = Vec::with_capacity(words.len() * per_word);
    for w in words {
        let b = field.to_biguint(w).to_bytes_be();
        bytes.extend(std::iter::repeat_n(0u8, per_word.saturating_sub(b.len())));
        bytes.extend_from_slice(&b[b.len().saturating_sub(per_word)..]);
    }
    while bytes.last() == Some(&0) {
        bytes.pop();
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

pub fn ingest_csv(path: &Path, schema: &Schema, spec: &FieldSpec) -> Result<Dataset, DatasetError> {
    ingest_reader(std::fs::File::open(path)?, schema, spec)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &Schema, spec: &FieldSpec) -> Result<Dataset, DatasetError> {
    schema.validate()?;
    let field = Field::new(spec.clone())?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let names: Vec<&str> = schema.attributes.iter().map(|a| a.name.as_str()).collect();
    if header.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(DatasetError::Schema(format!(
            "CSV header {header:?} does not match schema attributes {names:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(names.len());
        for (a, raw) in schema.attributes.iter().zip(rec.iter()) {
            let err = |msg: &str| DatasetError::Parse {
                row: i + 1,
                column: a.name.clone(),
                msg: format!("{msg}: {raw:?}"),
            };
            row.push(match a.kind {
                AttrKind::Numeric => Cell::Int(raw.parse().map_err(|_| {
                    if !raw.is_empty() && raw.bytes().all(|b| b.is_ascii_digit()) {
                        DatasetError::Overflow {
                            row: i + 1,
                            column: a.name.clone(),
                            value: raw.to_string(),
                        }
                    } else {
                        err("expected a non-negative integer")
                    }
                })?),
                AttrKind::Timestamp => Cell::Int(
                    raw.parse()
                        .ok()
                        .or_else(|| filter::parse_timestamp(raw))
                        .ok_or_else(|| err("expected a date or epoch seconds"))?,
                ),
                AttrKind::Categorical if raw.is_empty() => return Err(err("empty categorical value")),
                AttrKind::Categorical | AttrKind::Text => Cell::Text(raw.to_string()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::Schema("CSV has no records".into()));
    }
    let table = Table {
        columns: header,
        rows,
    };
    Dataset::from_table(schema.clone(), table, &field)
}

/// Appends the numeric `<attr>_id` column and adds it to the aggregation set.
pub fn preprocess_ids(ds: &Dataset, attribute: &str) -> Result<(Dataset, IdMap), DatasetError> {
    let attr = ds
        .schema()
        .attribute(attribute)
        .ok_or_else(|| DatasetError::UnknownAttribute(attribute.to_string()))?;
    if attr.kind != AttrKind::Categorical {
        return Err(DatasetError::NotCategorical(attribute.to_string()));
    }
    let map = ds.id_maps[attribute].clone();
    let id_name = format!("{attribute}_id");
    if ds.schema().attribute(&id_name).is_some() {
        return Ok((ds.clone(), map));
    }
    let c = ds.table.column_index(attribute).expect("schema and table agree");
    let ids: Vec<u64> = ds
        .table
        .rows
        .iter()
        .map(|row| match &row[c] {
            Cell::Text(t) => map.id_of(t).expect("every value has an id"),
            Cell::Int(v) => *v,
        })
        .collect();
    let field = ds.field();
    let column = ids.iter().map(|&id| field.from_u64(id)).collect::<Result<Vec<_>, _>>()?;
    let mut matrix = ds.matrix.appended(Attribute::new(&id_name, AttrKind::Numeric), &column);
    matrix.schema.aggregation_set.push(id_name.clone());
    let mut table = ds.table.clone();
    table.columns.push(id_name);
    for (row, id) in table.rows.iter_mut().zip(ids) {
        row.push(Cell::Int(id));
    }
    Ok((
        Dataset {
            matrix,
            table,
            id_maps: ds.id_maps.clone(),
        },
        map,
    ))
}

/// Keeps only the aggregation-set columns, in schema order.
/// Runs [`preprocess_ids`] on every categorical attribute that has no id column yet.
pub fn derive_all_ids(mut ds: Dataset) -> Result<Dataset, DatasetError> {
    let names: Vec<String> = ds
        .schema()
        .attributes
        .iter()
        .filter(|a| a.kind == AttrKind::Categorical)
        .map(|a| a.name.clone())
        .collect();
    for name in names {
        if ds.schema().attribute(&format!("{name}_id")).is_none() {
            ds = preprocess_ids(&ds, &name)?.0;
        }
    }
    Ok(ds)
}

pub fn project_essential(db: &DatabaseMatrix) -> Result<DatabaseMatrix, DatasetError> {
    let keep = &db.schema.aggregation_set;
    if keep.is_empty() {
        return Err(DatasetError::EmptyAggregationSet);
    }
    let mut words = Vec::new();
    let mut attrs = Vec::new();
    let mut off = 0;
    for a in &db.schema.attributes {
        if keep.contains(&a.name) {
            words.extend(off..off + a.words);
            attrs.push(a.clone());
        }
        off += a.words;
    }
    let mut data = Vec::with_capacity(db.r * words.len());
    for i in 0..db.r {
        let rec = db.record(i);
        data.extend(words.iter().map(|&j| rec[j]));
    }
    let schema = Schema {
        attributes: attrs,
        aggregation_set: keep.clone(),
    };
    DatabaseMatrix::new(db.field.clone(), schema, db.r, data)
}

/// v·D over every record, parallel over words.
pub fn db_multiply(v: &[FieldElement], db: &DatabaseMatrix) -> Result<FieldVector, DatasetError> {
    if v.len() != db.r {
        return Err(DatasetError::Dimension {
            expected: db.r,
            got: v.len(),
        });
    }
    let field = &db.field;
    let column = |j: usize| {
        let mut acc = field.zero();
        for (i, x) in v.iter().enumerate() {
            field.mul_add_assign(&mut acc, x, db.get(i, j));
        }
        acc
    };
    Ok(if db.s > 1 && db.r * db.s > 4096 {
        (0..db.s).into_par_iter().map(column).collect()
    } else {
        (0..db.s).map(column).collect()
    })
}

/// v·D where v is given by its nonzero entries `(record, value)`.
pub fn db_multiply_sparse(
    entries: &[(usize, FieldElement)],
    db: &DatabaseMatrix,
) -> Result<FieldVector, DatasetError> {
    if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= db.r) {
        return Err(DatasetError::Dimension {
            expected: db.r,
            got: i + 1,
        });
    }
    let field = &db.field;
    let column = |j: usize| {
        let mut acc = field.zero();
        for (i, x) in entries {
            field.mul_add_assign(&mut acc, x, db.get(*i, j));
        }
        acc
    };
    Ok(if db.s > 1 && entries.len() * db.s > 4096 {
        (0..db.s).into_par_iter().map(column).collect()
    } else {
        (0..db.s).map(column).collect()
    })
}

/// For prime fields, requires r·max < modulus on each named column.
pub fn check_headroom(ds: &Dataset, columns: &[&str]) -> Result<(), DatasetError> {
    let spec = ds.field().spec();
    if spec.is_binary() {
        return Err(DatasetError::BinaryField(spec.to_string()));
    }
    for &name in columns {
        let max = ds
            .table
            .column(name)?
            .filter_map(Cell::as_int)
            .max()
            .unwrap_or(0);
        let bound = num_bigint::BigUint::from(max) * ds.r();
        if &bound >= spec.modulus() {
            return Err(DatasetError::Headroom {
                column: name.to_string(),
                records: ds.r(),
                max,
                modulus: spec.modulus().to_string(),
            });
        }
    }
    Ok(())
}

/// The six-record hospitalization table used throughout the tests and as the CLI default.
pub mod sample {
    use super::*;

    pub const CSV: &str = include_str!("../../fixtures/hospital.csv");
    pub const SCHEMA: &str = include_str!("../../fixtures/hospital.toml");

    pub fn schema() -> Schema {
        Schema::parse(SCHEMA).expect("bundled schema is valid")
    }

    /// Sample data with `gender_id` and `state_id` derived.
    pub fn dataset(spec: &FieldSpec) -> Result<Dataset, DatasetError> {
        let ds = ingest_reader(CSV.as_bytes(), &schema(), spec)?;
        let (ds, _) = preprocess_ids(&ds, "gender")?;
        let (ds, _) = preprocess_ids(&ds, "state")?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m31() -> FieldSpec {
        FieldSpec::mersenne31()
    }

    fn raw_sample() -> Dataset {
        ingest_reader(sample::CSV.as_bytes(), &sample::schema(), &m31()).unwrap()
    }

    fn word(ds: &Dataset, v: &FieldVector, name: &str) -> u64 {
        ds.field().to_u64(&v[ds.matrix.word_of(name).unwrap()]).unwrap()
    }

    #[test]
    fn sample_ingest() {
        let ds = raw_sample();
        assert_eq!(ds.r(), 6);
        let days: Vec<u64> = ds.table.column("days").unwrap().filter_map(Cell::as_int).collect();
        assert_eq!(days, vec![10, 2, 14, 2, 7, 2]);
        let j = ds.matrix.word_of("days").unwrap();
        let encoded: Vec<u64> = (0..6).map(|i| ds.field().to_u64(ds.matrix.get(i, j)).unwrap()).collect();
        assert_eq!(encoded, days);
    }

    #[test]
    fn id_assignment() {
        let ds = raw_sample();
        let g = &ds.id_maps["gender"];
        assert_eq!((g.id_of("Male"), g.id_of("Female"), g.id_of("Other")), (Some(1), Some(2), Some(3)));
        let s = &ds.id_maps["state"];
        assert_eq!((s.id_of("CA"), s.id_of("OR"), s.id_of("WA")), (Some(1), Some(2), Some(3)));

        let (ds2, map) = preprocess_ids(&ds, "gender").unwrap();
        assert_eq!(&map, g);
        let ids: Vec<u64> = ds2.table.column("gender_id").unwrap().filter_map(Cell::as_int).collect();
        assert_eq!(ids, vec![1, 1, 2, 1, 2, 3]);
        assert!(ds2.schema().aggregation_set.contains(&"gender_id".to_string()));
        assert_eq!(ds2.matrix.s(), ds.matrix.s() + 1);
        assert!(matches!(preprocess_ids(&ds, "days"), Err(DatasetError::NotCategorical(_))));
        assert!(matches!(preprocess_ids(&ds, "nope"), Err(DatasetError::UnknownAttribute(_))));
    }

    #[test]
    fn single_valued_column_gets_id_one() {
        let schema = Schema::new(vec![Attribute::new("c", AttrKind::Categorical)], &[]).unwrap();
        let ds = ingest_reader("c\nx\nx\nx\n".as_bytes(), &schema, &m31()).unwrap();
        let (ds, _) = preprocess_ids(&ds, "c").unwrap();
        assert!(ds.table.column("c_id").unwrap().all(|c| *c == Cell::Int(1)));
    }

    #[test]
    fn id_map_csv_round_trip() {
        let ds = raw_sample();
        let mut buf = Vec::new();
        ds.id_maps["state"].write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "value,id\nCA,1\nOR,2\nWA,3\n");
        assert_eq!(IdMap::read_csv("state", buf.as_slice()).unwrap(), ds.id_maps["state"]);
        assert!(IdMap::read_csv("s", "value,id\nA,0\n".as_bytes()).is_err());
    }

    #[test]
    fn multiply_examples() {
        let ds = raw_sample();
        let f = ds.field();
        let mut e3 = vec![f.zero(); 6];
        e3[2] = f.one();
        let out = db_multiply(&e3, &ds.matrix).unwrap();
        assert_eq!(out.as_slice(), ds.matrix.record(2));
        assert_eq!(word(&ds, &out, "days"), 14);

        let v: Vec<_> = [1, 0, 0, 1, 0, 0].iter().map(|&x| f.from_u64(x).unwrap()).collect();
        assert_eq!(word(&ds, &db_multiply(&v, &ds.matrix).unwrap(), "days"), 12);

        let zero = vec![f.zero(); 6];
        assert!(db_multiply(&zero, &ds.matrix).unwrap().iter().all(FieldElement::is_zero));
        assert!(matches!(db_multiply(&zero[..5], &ds.matrix), Err(DatasetError::Dimension { .. })));
    }

    #[test]
    fn overflow_and_parse_errors() {
        let schema = Schema::new(vec![Attribute::new("n", AttrKind::Numeric)], &["n"]).unwrap();
        let spec = FieldSpec::prime_u64(31).unwrap();
        assert!(ingest_reader("n\n30\n".as_bytes(), &schema, &spec).is_ok());
        assert!(matches!(
            ingest_reader("n\n31\n".as_bytes(), &schema, &spec),
            Err(DatasetError::Overflow { row: 1, .. })
        ));
        assert!(matches!(
            ingest_reader("n\n99999999999999999999999\n".as_bytes(), &schema, &spec),
            Err(DatasetError::Overflow { .. })
        ));
        match ingest_reader("n\n1\nabc\n".as_bytes(), &schema, &spec) {
            Err(DatasetError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "n")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ingest_reader("m\n1\n".as_bytes(), &schema, &spec), Err(DatasetError::Schema(_))));
        assert!(matches!(ingest_reader("n\n".as_bytes(), &schema, &spec), Err(DatasetError::Schema(_))));
    }

    #[test]
    fn text_packing() {
        let schema = Schema::new(
            vec![Attribute::new("id", AttrKind::Numeric), Attribute::text("note", 4)],
            &[],
        )
        .unwrap();
        let ds = ingest_reader("id,note\n1,\n2,hello world\n".as_bytes(), &schema, &m31()).unwrap();
        assert!(ds.matrix.record(0)[1..].iter().all(FieldElement::is_zero));
        // 3 bytes per word under a 31-bit prime
        let rec = &ds.matrix.record(1)[1..];
        assert_eq!(ds.field().to_u64(&rec[0]), Some(u64::from_be_bytes([0, 0, 0, 0, 0, b'h', b'e', b'l'])));
        assert_eq!(unpack_text(ds.field(), rec), "hello world");
        assert!(matches!(
            ingest_reader("id,note\n1,this is far too long\n".as_bytes(), &schema, &m31()),
            Err(DatasetError::Overflow { .. })
        ));
    }

    #[test]
    fn projection() {
        // 5 attributes, 3 aggregated
        let schema = Schema::new(
            vec![
                Attribute::text("text", 4),
                Attribute::new("user", AttrKind::Categorical),
                Attribute::new("likes", AttrKind::Numeric),
                Attribute::new("retweets", AttrKind::Numeric),
                Attribute::new("time", AttrKind::Timestamp),
            ],
            &["likes", "retweets", "time"],
        )
        .unwrap();
        let csv = "text,user,likes,retweets,time\nhi,a,3,4,2022-01-01\nyo,b,5,6,2022-01-02\n";
        let ds = ingest_reader(csv.as_bytes(), &schema, &m31()).unwrap();
        assert_eq!(ds.matrix.s(), 8);
        let p = project_essential(&ds.matrix).unwrap();
        assert_eq!((p.r(), p.s()), (2, 3));
        assert_eq!(p.record(1), &ds.matrix.record(1)[5..8]);

        let f = ds.field();
        let v = vec![f.from_u64(7).unwrap(), f.from_u64(9).unwrap()];
        let full = db_multiply(&v, &ds.matrix).unwrap();
        assert_eq!(db_multiply(&v, &p).unwrap(), full[5..8].to_vec());

        let mut none = ds.matrix.schema().clone();
        none.aggregation_set.clear();
        let m = DatabaseMatrix::new(f.clone(), none, 2, ds.matrix.data().to_vec()).unwrap();
        assert!(matches!(project_essential(&m), Err(DatasetError::EmptyAggregationSet)));
    }

    #[test]
    fn mimic_style_projection() {
        let mut attrs: Vec<Attribute> = ["subject", "hadm", "admittime", "dischtime", "los", "age", "charges", "icu_hours", "notes"]
            .iter()
            .map(|n| Attribute::new(n, AttrKind::Numeric))
            .collect();
        attrs[8] = Attribute::text("notes", 2);
        let schema = Schema::new(attrs, &["los", "age", "charges", "icu_hours"]).unwrap();
        let field = Field::new(m31()).unwrap();
        let rows = vec![vec![Cell::Int(1); 8].into_iter().chain([Cell::Text("x".into())]).collect()];
        let columns = schema.attributes.iter().map(|a| a.name.clone()).collect();
        let ds = Dataset::from_table(schema, Table { columns, rows }, &field).unwrap();
        assert_eq!(project_essential(&ds.matrix).unwrap().s(), 4);
    }

    #[test]
    fn headroom() {
        let ds = sample::dataset(&m31()).unwrap();
        check_headroom(&ds, &["days", "gender_id"]).unwrap();
        let schema = Schema::new(
            vec![Attribute::new("days", AttrKind::Numeric), Attribute::new("g", AttrKind::Categorical)],
            &["days"],
        )
        .unwrap();
        let csv = "days,g\n10,a\n2,b\n14,a\n2,c\n7,b\n2,c\n";
        let small = ingest_reader(csv.as_bytes(), &schema, &FieldSpec::prime_u64(61).unwrap()).unwrap();
        let (small, _) = preprocess_ids(&small, "g").unwrap();
        // 6 * 14 = 84 >= 61, 6 * 3 = 18 < 61
        assert!(matches!(check_headroom(&small, &["days"]), Err(DatasetError::Headroom { .. })));
        check_headroom(&small, &["g_id"]).unwrap();
        let bin = ingest_reader(csv.as_bytes(), &schema, &FieldSpec::binary8()).unwrap();
        assert!(matches!(check_headroom(&bin, &["days"]), Err(DatasetError::BinaryField(_))));
    }

    #[test]
    fn schema_formats() {
        let s = sample::schema();
        assert_eq!(Schema::parse(&s.to_toml()).unwrap(), s);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(Schema::parse(&json).unwrap(), s);
        assert!(Schema::parse("[[attribute]]\nname='a'\nkind='numeric'\nwords=2\n").is_err());
        assert!(Schema::parse("aggregation_set=['b']\n[[attribute]]\nname='a'\nkind='numeric'\n").is_err());
    }
}
