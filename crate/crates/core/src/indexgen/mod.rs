//! Builds simple IAQ matrices from plaintext data, one linear scan per index.

pub mod plan;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::filter::{Literal, Predicate};
use crate::dataset::{check_headroom, AttrKind, Cell, Dataset, DatasetError};
use crate::iaq::{format, Ccs, IaqError, SimpleIaq};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Iaq(#[from] IaqError),
    #[error(transparent)]
    Format(#[from] format::FormatError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("attribute {0} cannot order records")]
    NotOrdered(String),
    #[error("group attribute {0} has no id map")]
    NoIdMap(String),
    #[error("group attribute {attr} takes value 0, ids must be positive")]
    ZeroId { attr: String },
    #[error("id value must be at least 1")]
    InvalidId,
    #[error("aggregate {aggregate} is not a multiple of id {id}: corrupted response")]
    CorruptedResponse { aggregate: String, id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Min => "min",
            Direction::Max => "max",
        })
    }
}

/// One row of a group index: the group value and the positive id it decodes by.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub label: String,
    pub id: u64,
    pub cell: Cell,
}

/// Levels of a group attribute: id-map order for categoricals, sorted distinct values otherwise.
pub fn group_levels(ds: &Dataset, attr: &str) -> Result<Vec<Level>, IndexError> {
    let a = ds
        .schema()
        .attribute(attr)
        .ok_or_else(|| DatasetError::UnknownAttribute(attr.to_string()))?;
    match a.kind {
        AttrKind::Categorical => {
            let map = ds.id_maps.get(attr).ok_or_else(|| IndexError::NoIdMap(attr.to_string()))?;
            let mut entries = map.entries.clone();
            entries.sort_by_key(|e| e.1);
            Ok(entries
                .into_iter()
                .map(|(label, id)| Level {
                    cell: Cell::Text(label.clone()),
                    label,
                    id,
                })
                .collect())
        }
        AttrKind::Numeric | AttrKind::Timestamp => {
            let mut values: Vec<u64> = ds.table.column(attr)?.filter_map(Cell::as_int).collect();
            values.sort_unstable();
            values.dedup();
            if values.first() == Some(&0) {
                return Err(IndexError::ZeroId { attr: attr.to_string() });
            }
            Ok(values
                .into_iter()
                .map(|v| Level {
                    label: v.to_string(),
                    id: v,
                    cell: Cell::Int(v),
                })
                .collect())
        }
        AttrKind::Text => Err(IndexError::NoIdMap(attr.to_string())),
    }
}

/// Finds the level an equality literal names: by label, then by id.
pub fn find_level<'a>(levels: &'a [Level], value: &Literal) -> Option<(usize, &'a Level)> {
    let label = match value {
        Literal::Text(s) => s.clone(),
        Literal::Int(v) | Literal::Date(v) => v.to_string(),
    };
    levels.iter().enumerate().find(|(_, l)| l.label == label).or_else(|| match value {
        Literal::Int(v) | Literal::Date(v) => levels.iter().enumerate().find(|(_, l)| l.id == *v),
        Literal::Text(_) => None,
    })
}

fn compile_filters<'a>(ds: &Dataset, filters: &'a [Predicate]) -> Result<Vec<(usize, &'a Predicate)>, IndexError> {
    filters
        .iter()
        .map(|p| {
            ds.table
                .column_index(&p.attr)
                .map(|c| (c, p))
                .ok_or_else(|| DatasetError::UnknownAttribute(p.attr.clone()).into())
        })
        .collect()
}

/// Columns that integer sums run over: non-timestamp numerics of the aggregation set.
fn summed_columns(ds: &Dataset) -> Vec<&str> {
    let schema = ds.schema();
    schema
        .aggregation_set
        .iter()
        .filter(|n| schema.attribute(n).is_some_and(|a| a.kind == AttrKind::Numeric))
        .map(String::as_str)
        .collect()
}

/// Entry (g, rec) is 1 iff record `rec` has group value g and passes every filter.
/// Serves SUM over any numeric column and COUNT through the id column.
pub fn build_group_index(ds: &Dataset, group_attr: &str, filters: &[Predicate]) -> Result<SimpleIaq, IndexError> {
    check_headroom(ds, &summed_columns(ds))?;
    let levels = group_levels(ds, group_attr)?;
    let g = ds.table.column_index(group_attr).expect("attribute checked");
    let filters = compile_filters(ds, filters)?;
    let lookup: HashMap<&Cell, usize> = levels.iter().enumerate().map(|(i, l)| (&l.cell, i)).collect();
    let mut rows = vec![Vec::new(); levels.len()];
    for (rec, row) in ds.table.rows.iter().enumerate() {
        if filters.iter().all(|(c, p)| p.matches(&row[*c])) {
            if let Some(&level) = lookup.get(&row[g]) {
                rows[level].push(rec);
            }
        }
    }
    let ccs = Ccs::from_row_supports(&rows, ds.r())?;
    Ok(SimpleIaq::new(ccs, levels.into_iter().map(|l| l.label).collect())?)
}

/// At most one 1 per row, at the record holding the group's extremum of `order_attr`;
/// ties go to the lowest record index and empty groups give all-zero rows.
pub fn build_minmax_index(
    ds: &Dataset,
    group_attr: &str,
    order_attr: &str,
    direction: Direction,
    filters: &[Predicate],
) -> Result<SimpleIaq, IndexError> {
    let order_kind = ds
        .schema()
        .attribute(order_attr)
        .ok_or_else(|| DatasetError::UnknownAttribute(order_attr.to_string()))?
        .kind;
    if !order_kind.is_ordered() {
        return Err(IndexError::NotOrdered(order_attr.to_string()));
    }
    let levels = group_levels(ds, group_attr)?;
    let g = ds.table.column_index(group_attr).expect("attribute checked");
    let o = ds.table.column_index(order_attr).expect("attribute checked");
    let filters = compile_filters(ds, filters)?;
    let lookup: HashMap<&Cell, usize> = levels.iter().enumerate().map(|(i, l)| (&l.cell, i)).collect();
    let mut best: Vec<Option<(u64, usize)>> = vec![None; levels.len()];
    for (rec, row) in ds.table.rows.iter().enumerate() {
        if !filters.iter().all(|(c, p)| p.matches(&row[*c])) {
            continue;
        }
        let (Some(&level), Some(v)) = (lookup.get(&row[g]), row[o].as_int()) else {
            continue;
        };
        let better = match best[level] {
            None => true,
            Some((cur, _)) => match direction {
                Direction::Min => v < cur,
                Direction::Max => v > cur,
            },
        };
        if better {
            best[level] = Some((v, rec));
        }
    }
    let rows: Vec<Vec<usize>> = best.into_iter().map(|b| b.map(|(_, rec)| vec![rec]).unwrap_or_default()).collect();
    let ccs = Ccs::from_row_supports(&rows, ds.r())?;
    Ok(SimpleIaq::new(ccs, levels.into_iter().map(|l| l.label).collect())?)
}

/// Divides an id-column aggregate by the id; anything but an exact multiple is corruption.
pub fn count_decode(aggregate: &BigUint, id: u64) -> Result<BigUint, IndexError> {
    if id == 0 {
        return Err(IndexError::InvalidId);
    }
    let id_big = BigUint::from(id);
    if !(aggregate % &id_big).is_zero() {
        return Err(IndexError::CorruptedResponse {
            aggregate: aggregate.to_string(),
            id,
        });
    }
    Ok(aggregate / id_big)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FamilyKind {
    Group {
        group_attr: String,
        #[serde(default)]
        filters: Vec<Predicate>,
    },
    Extremum {
        group_attr: String,
        order_attr: String,
        direction: Direction,
        #[serde(default)]
        filters: Vec<Predicate>,
    },
}

impl FamilyKind {
    pub fn group_attr(&self) -> &str {
        match self {
            FamilyKind::Group { group_attr, .. } | FamilyKind::Extremum { group_attr, .. } => group_attr,
        }
    }

    pub fn filters(&self) -> &[Predicate] {
        match self {
            FamilyKind::Group { filters, .. } | FamilyKind::Extremum { filters, .. } => filters,
        }
    }

    pub fn describe(&self) -> String {
        let filters: Vec<String> = self.filters().iter().map(|p| p.to_string()).collect();
        let head = match self {
            FamilyKind::Group { group_attr, .. } => format!("group by {group_attr}"),
            FamilyKind::Extremum {
                group_attr,
                order_attr,
                direction,
                ..
            } => format!("{direction}({order_attr}) per {group_attr}"),
        };
        if filters.is_empty() {
            head
        } else {
            format!("{head} where {}", filters.join(" and "))
        }
    }
}

/// Sidecar metadata written next to an index file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub keyword: String,
    pub kind: FamilyKind,
    pub p: usize,
    pub r: usize,
    pub row_labels: Vec<String>,
    pub row_ids: Vec<u64>,
    /// File holding the id map of the group attribute, if categorical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_map: Option<String>,
    pub filter: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexFamily {
    pub manifest: IndexManifest,
    pub index: SimpleIaq,
}

pub fn build_family(ds: &Dataset, keyword: &str, kind: FamilyKind) -> Result<IndexFamily, IndexError> {
    let index = match &kind {
        FamilyKind::Group { group_attr, filters } => build_group_index(ds, group_attr, filters)?,
        FamilyKind::Extremum {
            group_attr,
            order_attr,
            direction,
            filters,
        } => build_minmax_index(ds, group_attr, order_attr, *direction, filters)?,
    };
    let levels = group_levels(ds, kind.group_attr())?;
    let id_map = ds
        .id_maps
        .contains_key(kind.group_attr())
        .then(|| format!("{}.ids.csv", kind.group_attr()));
    Ok(IndexFamily {
        manifest: IndexManifest {
            keyword: keyword.to_string(),
            p: index.p(),
            r: index.r(),
            row_labels: index.row_labels().to_vec(),
            row_ids: levels.iter().map(|l| l.id).collect(),
            id_map,
            filter: kind.describe(),
            kind,
        },
        index,
    })
}

impl IndexFamily {
    /// Writes `<keyword>.iaq`, `<keyword>.json` and the group id map into `dir`.
    pub fn save(&self, dir: &Path, ds: &Dataset) -> Result<Vec<PathBuf>, IndexError> {
        std::fs::create_dir_all(dir)?;
        let kw = &self.manifest.keyword;
        let iaq = dir.join(format!("{kw}.iaq"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&iaq)?);
        format::write_simple(&mut w, self.index.ccs())?;
        w.flush()?;
        let manifest = dir.join(format!("{kw}.json"));
        std::fs::write(&manifest, serde_json::to_string_pretty(&self.manifest)?)?;
        let mut out = vec![iaq, manifest];
        if let Some(name) = &self.manifest.id_map {
            let path = dir.join(name);
            ds.id_maps[self.manifest.kind.group_attr()].write_csv(std::fs::File::create(&path)?)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn load(dir: &Path, keyword: &str) -> Result<Self, IndexError> {
        let manifest: IndexManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{keyword}.json")))?)?;
        let mut r = std::io::BufReader::new(std::fs::File::open(dir.join(format!("{keyword}.iaq")))?);
        let ccs = format::read_simple(&mut r)?;
        let index = SimpleIaq::new(ccs, manifest.row_labels.clone())?;
        Ok(IndexFamily { manifest, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::filter::CmpOp;
    use crate::dataset::sample;
    use crate::field::FieldSpec;

    fn ds() -> Dataset {
        sample::dataset(&FieldSpec::mersenne31()).unwrap()
    }

    fn dense(m: &SimpleIaq) -> Vec<String> {
        m.to_dense().iter().map(|r| r.iter().map(|b| b.to_string()).collect()).collect()
    }

    #[test]
    fn sample_group_indexes() {
        let ds = ds();
        let patient = build_group_index(&ds, "patient", &[]).unwrap();
        assert_eq!(dense(&patient), ["100100", "010000", "001010", "000001"]);
        assert_eq!(patient.row_labels(), ["1", "2", "3", "4"]);

        let before_june = Predicate::new("admit", CmpOp::Lt, Literal::parse("2022-06-01"));
        let duration = build_group_index(&ds, "gender", &[before_june]).unwrap();
        assert_eq!(dense(&duration), ["110000", "000000", "000001"]);

        let population = build_group_index(&ds, "gender", &[]).unwrap();
        assert_eq!(dense(&population), ["110100", "001010", "000001"]);
        assert_eq!(population.row_labels(), ["Male", "Female", "Other"]);

        let state = build_group_index(&ds, "state", &[]).unwrap();
        assert_eq!(dense(&state), ["010001", "100100", "001010"]);
    }

    #[test]
    fn sample_extremum_indexes() {
        let ds = ds();
        let latest = build_minmax_index(&ds, "state", "admit", Direction::Max, &[]).unwrap();
        let earliest = build_minmax_index(&ds, "state", "admit", Direction::Min, &[]).unwrap();
        assert_eq!(dense(&latest), ["000001", "000100", "000010"]);
        assert_eq!(dense(&earliest), ["010000", "100000", "001000"]);
        // patient 2 and 4 have one record each
        let lo = build_minmax_index(&ds, "patient", "days", Direction::Min, &[]).unwrap();
        let hi = build_minmax_index(&ds, "patient", "days", Direction::Max, &[]).unwrap();
        assert_eq!(lo.row(1), hi.row(1));
        assert_eq!(lo.row(3), hi.row(3));
        // ties on days=2 in CA go to the lower record
        let tie = build_minmax_index(&ds, "state", "days", Direction::Min, &[]).unwrap();
        assert_eq!(dense(&tie)[0], "010000");
        let empty = build_minmax_index(&ds, "state", "days", Direction::Max, &[Predicate::new(
            "days",
            CmpOp::Gt,
            Literal::Int(12),
        )])
        .unwrap();
        assert_eq!(dense(&empty), ["000000", "000000", "001000"]);
        assert!(matches!(
            build_minmax_index(&ds, "state", "gender", Direction::Max, &[]),
            Err(IndexError::NotOrdered(_))
        ));
    }

    #[test]
    fn decode_counts() {
        assert_eq!(count_decode(&BigUint::from(4u8), 2).unwrap(), BigUint::from(2u8));
        assert_eq!(count_decode(&BigUint::zero(), 3).unwrap(), BigUint::zero());
        assert!(matches!(count_decode(&BigUint::from(5u8), 2), Err(IndexError::CorruptedResponse { .. })));
        assert!(matches!(count_decode(&BigUint::from(5u8), 0), Err(IndexError::InvalidId)));
    }

    #[test]
    fn errors() {
        let ds = ds();
        assert!(matches!(
            build_group_index(&ds, "nope", &[]),
            Err(IndexError::Dataset(DatasetError::UnknownAttribute(_)))
        ));
        assert!(matches!(
            build_group_index(&ds, "state", &[Predicate::eq("nope", Literal::Int(1))]),
            Err(IndexError::Dataset(DatasetError::UnknownAttribute(_)))
        ));
        let schema = crate::dataset::Schema::new(
            vec![
                crate::dataset::Attribute::new("days", AttrKind::Numeric),
                crate::dataset::Attribute::new("state", AttrKind::Categorical),
            ],
            &["days"],
        )
        .unwrap();
        let bin =
            crate::dataset::ingest_reader("days,state\n3,CA\n4,OR\n".as_bytes(), &schema, &FieldSpec::binary16())
                .unwrap();
        assert!(matches!(
            build_group_index(&bin, "state", &[]),
            Err(IndexError::Dataset(DatasetError::BinaryField(_)))
        ));
    }

    #[test]
    fn levels_lookup() {
        let ds = ds();
        let levels = group_levels(&ds, "state").unwrap();
        assert_eq!(find_level(&levels, &Literal::Text("OR".into())).unwrap().0, 1);
        assert_eq!(find_level(&levels, &Literal::Int(3)).unwrap().1.label, "WA");
        assert!(find_level(&levels, &Literal::Text("XX".into())).is_none());
        let patients = group_levels(&ds, "patient").unwrap();
        assert_eq!(find_level(&patients, &Literal::Int(3)).unwrap().0, 2);
    }

    #[test]
    fn save_and_load() {
        let ds = ds();
        let dir = tempfile::tempdir().unwrap();
        let fam = build_family(
            &ds,
            "population",
            FamilyKind::Group {
                group_attr: "gender".into(),
                filters: vec![],
            },
        )
        .unwrap();
        assert_eq!(fam.manifest.row_ids, vec![1, 2, 3]);
        let files = fam.save(dir.path(), &ds).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(IndexFamily::load(dir.path(), "population").unwrap(), fam);
        let ids = std::fs::read_to_string(dir.path().join("gender.ids.csv")).unwrap();
        assert_eq!(ids, "value,id\nMale,1\nFemale,2\nOther,3\n");
    }
}
