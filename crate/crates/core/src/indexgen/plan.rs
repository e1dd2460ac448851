//! Query planning against a catalog of deployed buckets, and client-side post-processing.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{count_decode, Direction, FamilyKind, IndexError, IndexManifest};
use crate::dataset::filter::{CmpOp, Literal, Predicate};
use crate::dataset::{AttrKind, Schema};
use crate::field::{Field, FieldVector};
use crate::query::{AggFn, Answer, QuerySpec};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unsupported query: {0}")]
    Unsupported(String),
    #[error("no deployed index serves {0}")]
    NoFamily(String),
    #[error("{attr} has no group value {value}")]
    UnknownGroupValue { attr: String, value: String },
    #[error("column {0} is not served")]
    MissingColumn(String),
    #[error("batched queries need two rows of family {0} in one round")]
    PositionConflict(String),
    #[error("batched queries target different buckets ({0} and {1})")]
    MixedBuckets(String, String),
    #[error("{0} over bucket {1} needs an unbatched (u = 1) bucket")]
    NeedsUnbatched(String, String),
    #[error("expected {expected} decoded vectors, got {got}")]
    DecodedCount { expected: usize, got: usize },
    #[error("corrupted response: {0}")]
    Corrupted(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// A deployed bucket: u index families of equal height batched under one keyword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketInfo {
    pub keyword: String,
    pub p: usize,
    pub families: Vec<IndexManifest>,
}

impl BucketInfo {
    pub fn u(&self) -> usize {
        self.families.len()
    }
}

/// What a client needs to know about a deployment: served columns and buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub schema: Schema,
    pub buckets: Vec<BucketInfo>,
}

impl Catalog {
    pub fn s(&self) -> usize {
        self.schema.s()
    }

    pub fn bucket(&self, keyword: &str) -> Option<&BucketInfo> {
        self.buckets.iter().find(|b| b.keyword == keyword)
    }

    /// Largest number of batch positions any plan can use.
    pub fn max_k(&self) -> usize {
        self.buckets
            .iter()
            .map(|b| if b.u() == 1 { b.p.max(2) } else { b.u() })
            .max()
            .unwrap_or(1)
    }

    fn word(&self, column: &str) -> Result<usize, PlanError> {
        self.schema
            .word_offset(column)
            .ok_or_else(|| PlanError::MissingColumn(column.to_string()))
    }

    /// Word carrying the id of `group_attr`: the derived id column, else a numeric attribute itself.
    fn id_word(&self, group_attr: &str) -> Result<usize, PlanError> {
        let derived = format!("{group_attr}_id");
        if self.schema.attribute(&derived).is_some() {
            return self.word(&derived);
        }
        match self.schema.attribute(group_attr) {
            Some(a) if a.kind.is_ordered() => self.word(group_attr),
            _ => Err(PlanError::MissingColumn(derived)),
        }
    }
}

/// Basis vector e_row encoded at batch position `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub position: u64,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRead {
    pub label: String,
    pub slot: usize,
    pub word: usize,
    /// Present for COUNT: the id the aggregate is divided by.
    pub id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PostProcess {
    Sum { slot: usize, word: usize },
    Count { slot: usize, word: usize, id: u64 },
    Mean { sum: (usize, usize), count: (usize, usize), id: u64 },
    /// `id_word` is zero exactly when the group had no qualifying record.
    Extremum { slot: usize, word: usize, id_word: usize, id: u64 },
    Histogram { groups: Vec<GroupRead> },
    GroupExtremum { direction: Direction, groups: Vec<GroupRead> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedQuery {
    pub query: QuerySpec,
    pub family: String,
    pub post: PostProcess,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    /// Bucket keyword sent as the server hint.
    pub keyword: String,
    pub p: usize,
    pub u: usize,
    /// Words per response.
    pub s: usize,
    pub slots: Vec<Slot>,
    pub queries: Vec<PlannedQuery>,
}

impl Plan {
    pub fn k(&self) -> usize {
        self.slots.len()
    }

    /// Degree of the response polynomial for privacy threshold t.
    pub fn degree(&self, t: usize) -> usize {
        t + self.k() - 1 + self.u - 1
    }

    pub fn constraints(&self) -> Vec<(u64, usize)> {
        self.slots.iter().map(|s| (s.position, s.row)).collect()
    }

    pub fn positions(&self) -> Vec<u64> {
        self.slots.iter().map(|s| s.position).collect()
    }

    /// Turns the decoded vectors (one per slot, in slot order) into answers.
    pub fn finish(&self, field: &Field, decoded: &[FieldVector]) -> Result<Vec<Answer>, PlanError> {
        if decoded.len() != self.slots.len() {
            return Err(PlanError::DecodedCount {
                expected: self.slots.len(),
                got: decoded.len(),
            });
        }
        let read = |slot: usize, word: usize| -> Result<BigUint, PlanError> {
            decoded[slot]
                .get(word)
                .map(|v| field.to_biguint(v))
                .ok_or_else(|| PlanError::Corrupted(format!("response shorter than word {word}")))
        };
        let group_value = |g: &GroupRead| -> Result<BigUint, PlanError> {
            let v = read(g.slot, g.word)?;
            Ok(match g.id {
                Some(id) => count_decode(&v, id)?,
                None => v,
            })
        };
        self.queries
            .iter()
            .map(|q| match &q.post {
                PostProcess::Sum { slot, word } => Ok(Answer::Value(read(*slot, *word)?)),
                PostProcess::Count { slot, word, id } => Ok(Answer::Value(count_decode(&read(*slot, *word)?, *id)?)),
                PostProcess::Mean { sum, count, id } => Ok(Answer::Mean {
                    sum: read(sum.0, sum.1)?,
                    count: count_decode(&read(count.0, count.1)?, *id)?,
                }),
                PostProcess::Extremum {
                    slot,
                    word,
                    id_word,
                    id,
                } => {
                    let got = read(*slot, *id_word)?;
                    if got == BigUint::ZERO {
                        return Ok(Answer::Extremum(None));
                    }
                    if got != BigUint::from(*id) {
                        return Err(PlanError::Corrupted(format!("record id {got}, expected {id}")));
                    }
                    let v = read(*slot, *word)?;
                    let v = u64::try_from(&v).map_err(|_| PlanError::Corrupted(format!("value {v} exceeds 64 bits")))?;
                    Ok(Answer::Extremum(Some(v)))
                }
                PostProcess::Histogram { groups } => Ok(Answer::Histogram(
                    groups
                        .iter()
                        .map(|g| Ok((g.label.clone(), group_value(g)?)))
                        .collect::<Result<BTreeMap<_, _>, PlanError>>()?,
                )),
                PostProcess::GroupExtremum { direction, groups } => {
                    let values = groups
                        .iter()
                        .map(|g| Ok((g.label.clone(), group_value(g)?)))
                        .collect::<Result<Vec<_>, PlanError>>()?;
                    let best = match direction {
                        Direction::Min => values.iter().map(|v| &v.1).min(),
                        Direction::Max => values.iter().map(|v| &v.1).max(),
                    }
                    .cloned()
                    .ok_or_else(|| PlanError::Corrupted("no groups".into()))?;
                    let mut labels: Vec<String> =
                        values.into_iter().filter(|(_, v)| *v == best).map(|(l, _)| l).collect();
                    labels.sort();
                    Ok(Answer::GroupExtremum { labels, value: best })
                }
            })
            .collect()
    }
}

fn same_filters(a: &[Predicate], b: &[Predicate]) -> bool {
    let a: HashSet<&Predicate> = a.iter().collect();
    let b: HashSet<&Predicate> = b.iter().collect();
    a == b
}

fn find_row(m: &IndexManifest, value: &Literal) -> Option<usize> {
    let label = match value {
        Literal::Text(s) => s.clone(),
        Literal::Int(v) | Literal::Date(v) => v.to_string(),
    };
    m.row_labels.iter().position(|l| *l == label).or_else(|| match value {
        Literal::Int(v) | Literal::Date(v) => m.row_ids.iter().position(|id| id == v),
        Literal::Text(_) => None,
    })
}

struct Resolved<'a> {
    bucket: &'a BucketInfo,
    family: usize,
    rows: Vec<usize>,
    build: Box<dyn Fn(&[usize]) -> Result<PostProcess, PlanError> + 'a>,
}

fn kind_fits(kind: &FamilyKind, spec: &QuerySpec) -> bool {
    match (kind, spec.func) {
        (FamilyKind::Group { .. }, AggFn::Sum | AggFn::Count | AggFn::Mean) => true,
        (FamilyKind::Group { .. }, AggFn::Min | AggFn::Max) => spec.inner.is_some(),
        (
            FamilyKind::Extremum {
                order_attr,
                direction,
                ..
            },
            AggFn::Min | AggFn::Max,
        ) => {
            spec.inner.is_none()
                && spec.column.as_deref() == Some(order_attr.as_str())
                && (*direction == Direction::Min) == (spec.func == AggFn::Min)
        }
        _ => false,
    }
}

fn candidates<'a>(catalog: &'a Catalog, spec: &QuerySpec) -> Vec<(&'a BucketInfo, usize)> {
    catalog
        .buckets
        .iter()
        .flat_map(|b| (0..b.families.len()).map(move |f| (b, f)))
        .filter(|(b, f)| match &spec.family {
            Some(name) => b.families[*f].keyword == *name || (b.keyword == *name && b.u() == 1),
            None => true,
        })
        .filter(|(b, f)| kind_fits(&b.families[*f].kind, spec))
        .collect()
}

fn resolve<'a>(catalog: &'a Catalog, spec: &QuerySpec) -> Result<Resolved<'a>, PlanError> {
    if let Some(g) = &spec.group_by {
        let (bucket, f) = candidates(catalog, spec)
            .into_iter()
            .find(|(b, f)| {
                let m = &b.families[*f];
                matches!(m.kind, FamilyKind::Group { .. })
                    && m.kind.group_attr() == g
                    && same_filters(m.kind.filters(), &spec.filters)
            })
            .ok_or_else(|| PlanError::NoFamily(spec.to_string()))?;
        let m = &bucket.families[f];
        let per_group = spec.inner.unwrap_or(spec.func);
        let word = match per_group {
            AggFn::Count => catalog.id_word(g)?,
            _ => catalog.word(spec.column.as_deref().unwrap_or_default())?,
        };
        let counting = per_group == AggFn::Count;
        let direction = match spec.func {
            AggFn::Min => Some(Direction::Min),
            AggFn::Max if spec.inner.is_some() => Some(Direction::Max),
            _ => None,
        };
        let labels = m.row_labels.clone();
        let ids = m.row_ids.clone();
        return Ok(Resolved {
            bucket,
            family: f,
            rows: (0..m.p).collect(),
            build: Box::new(move |slots| {
                let groups = slots
                    .iter()
                    .enumerate()
                    .map(|(row, &slot)| GroupRead {
                        label: labels[row].clone(),
                        slot,
                        word,
                        id: counting.then_some(ids[row]),
                    })
                    .collect();
                Ok(match direction {
                    Some(direction) => PostProcess::GroupExtremum { direction, groups },
                    None => PostProcess::Histogram { groups },
                })
            }),
        });
    }

    let mut last_err = PlanError::NoFamily(spec.to_string());
    for (i, eq) in spec.filters.iter().enumerate() {
        if eq.op != CmpOp::Eq {
            continue;
        }
        let rest: Vec<Predicate> = spec
            .filters
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        let Some((bucket, f)) = candidates(catalog, spec).into_iter().find(|(b, f)| {
            let m = &b.families[*f];
            m.kind.group_attr() == eq.attr && same_filters(m.kind.filters(), &rest)
        }) else {
            continue;
        };
        let m = &bucket.families[f];
        let Some(row) = find_row(m, &eq.value) else {
            last_err = PlanError::UnknownGroupValue {
                attr: eq.attr.clone(),
                value: eq.value.to_string(),
            };
            continue;
        };
        let id = m.row_ids[row];
        let group = eq.attr.clone();
        let column = spec.column.clone().unwrap_or_default();
        let (rows, build): (Vec<usize>, Box<dyn Fn(&[usize]) -> Result<PostProcess, PlanError>>) = match spec.func {
            AggFn::Sum => {
                let word = catalog.word(&column)?;
                (vec![row], Box::new(move |s| Ok(PostProcess::Sum { slot: s[0], word })))
            }
            AggFn::Count => {
                let word = catalog.id_word(&group)?;
                (vec![row], Box::new(move |s| Ok(PostProcess::Count { slot: s[0], word, id })))
            }
            AggFn::Mean => {
                let sum_word = catalog.word(&column)?;
                let count_word = catalog.id_word(&group)?;
                (
                    vec![row, row],
                    Box::new(move |s| {
                        Ok(PostProcess::Mean {
                            sum: (s[0], sum_word),
                            count: (s[1], count_word),
                            id,
                        })
                    }),
                )
            }
            AggFn::Min | AggFn::Max => {
                let word = catalog.word(&column)?;
                let id_word = catalog.id_word(&group)?;
                (
                    vec![row],
                    Box::new(move |s| {
                        Ok(PostProcess::Extremum {
                            slot: s[0],
                            word,
                            id_word,
                            id,
                        })
                    }),
                )
            }
        };
        return Ok(Resolved {
            bucket,
            family: f,
            rows,
            build,
        });
    }
    Err(last_err)
}

/// Plans one query; see [`plan_batch`].
pub fn plan_query(spec: &QuerySpec, catalog: &Catalog) -> Result<Plan, PlanError> {
    plan_batch(std::slice::from_ref(spec), catalog)
}

/// Plans queries answered together in one round against a single bucket.
///
/// On an unbatched bucket every read takes its own position 0, 1, ...; on a u-batch
/// bucket a read of family j sits at position j, and identical reads share a slot.
pub fn plan_batch(specs: &[QuerySpec], catalog: &Catalog) -> Result<Plan, PlanError> {
    if specs.is_empty() {
        return Err(PlanError::Unsupported("empty batch".into()));
    }
    let mut slots: Vec<Slot> = Vec::new();
    let mut queries = Vec::new();
    let mut bucket: Option<&BucketInfo> = None;
    for spec in specs {
        if spec.column.as_deref().is_some_and(|c| {
            catalog.schema.attribute(c).is_some_and(|a| !a.kind.is_ordered() && a.kind != AttrKind::Categorical)
        }) {
            return Err(PlanError::Unsupported(format!("aggregate over text column in {spec}")));
        }
        let res = resolve(catalog, spec)?;
        match bucket {
            Some(b) if b.keyword != res.bucket.keyword => {
                return Err(PlanError::MixedBuckets(b.keyword.clone(), res.bucket.keyword.clone()));
            }
            _ => bucket = Some(res.bucket),
        }
        let u = res.bucket.u();
        if u > 1 && res.rows.len() > 1 && res.rows.iter().any(|r| *r != res.rows[0]) {
            return Err(PlanError::NeedsUnbatched(spec.to_string(), res.bucket.keyword.clone()));
        }
        let mut assigned = Vec::with_capacity(res.rows.len());
        for &row in &res.rows {
            if u == 1 {
                slots.push(Slot {
                    position: slots.len() as u64,
                    row,
                });
                assigned.push(slots.len() - 1);
                continue;
            }
            let position = res.family as u64;
            match slots.iter().position(|s| s.position == position) {
                Some(i) if slots[i].row == row => assigned.push(i),
                Some(_) => return Err(PlanError::PositionConflict(res.bucket.families[res.family].keyword.clone())),
                None => {
                    slots.push(Slot { position, row });
                    assigned.push(slots.len() - 1);
                }
            }
        }
        queries.push(PlannedQuery {
            query: spec.clone(),
            family: res.bucket.families[res.family].keyword.clone(),
            post: (res.build)(&assigned)?,
        });
    }
    let bucket = bucket.expect("nonempty batch");
    Ok(Plan {
        keyword: bucket.keyword.clone(),
        p: bucket.p,
        u: bucket.u(),
        s: catalog.s(),
        slots,
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample;
    use crate::field::FieldSpec;
    use crate::indexgen::build_family;
    use crate::query::parse_query;

    fn group(attr: &str, filters: Vec<Predicate>) -> FamilyKind {
        FamilyKind::Group {
            group_attr: attr.into(),
            filters,
        }
    }

    fn catalog() -> Catalog {
        let ds = sample::dataset(&FieldSpec::mersenne31()).unwrap();
        let fam = |kw: &str, kind| build_family(&ds, kw, kind).unwrap().manifest;
        let before_june = Predicate::parse("admit < 2022-06-01").unwrap();
        Catalog {
            schema: ds.schema().clone(),
            buckets: vec![
                BucketInfo {
                    keyword: "patient".into(),
                    p: 4,
                    families: vec![fam("patient", group("patient", vec![]))],
                },
                BucketInfo {
                    keyword: "gender".into(),
                    p: 3,
                    families: vec![
                        fam("duration", group("gender", vec![before_june])),
                        fam("population", group("gender", vec![])),
                    ],
                },
                BucketInfo {
                    keyword: "state".into(),
                    p: 3,
                    families: vec![fam("state", group("state", vec![]))],
                },
                BucketInfo {
                    keyword: "admissions".into(),
                    p: 3,
                    families: vec![
                        fam(
                            "latest",
                            FamilyKind::Extremum {
                                group_attr: "state".into(),
                                order_attr: "admit".into(),
                                direction: Direction::Max,
                                filters: vec![],
                            },
                        ),
                        fam(
                            "earliest",
                            FamilyKind::Extremum {
                                group_attr: "state".into(),
                                order_attr: "admit".into(),
                                direction: Direction::Min,
                                filters: vec![],
                            },
                        ),
                    ],
                },
            ],
        }
    }

    fn plan(q: &str) -> Result<Plan, PlanError> {
        plan_query(&parse_query(q).unwrap(), &catalog())
    }

    #[test]
    fn sum_is_direct() {
        let p = plan("SUM(days) WHERE patient=3").unwrap();
        assert_eq!((p.keyword.as_str(), p.k(), p.u), ("patient", 1, 1));
        assert_eq!(p.slots, vec![Slot { position: 0, row: 2 }]);
        assert_eq!(p.queries[0].post, PostProcess::Sum { slot: 0, word: 4 });
    }

    #[test]
    fn count_uses_batch_position() {
        let p = plan("COUNT(*) WHERE gender=Female").unwrap();
        assert_eq!((p.keyword.as_str(), p.u), ("gender", 2));
        assert_eq!(p.slots, vec![Slot { position: 1, row: 1 }]);
        let id_word = catalog().schema.word_offset("gender_id").unwrap();
        assert_eq!(p.queries[0].post, PostProcess::Count { slot: 0, word: id_word, id: 2 });
        let p = plan("SUM(days) WHERE gender=Male AND admit < 2022-06-01").unwrap();
        assert_eq!(p.slots, vec![Slot { position: 0, row: 0 }]);
    }

    #[test]
    fn mean_and_histogram() {
        let p = plan("MEAN(days) WHERE state=CA").unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.slots, vec![Slot { position: 0, row: 0 }, Slot { position: 1, row: 0 }]);
        let p = plan("HISTOGRAM(state)").unwrap();
        assert_eq!(p.k(), 3);
        assert!(matches!(&p.queries[0].post, PostProcess::Histogram { groups } if groups.len() == 3));
        // on a 2-batch bucket the mean reads both words from one slot
        let p = plan("MEAN(days) WHERE gender=Female").unwrap();
        assert_eq!(p.slots, vec![Slot { position: 1, row: 1 }]);
        assert!(matches!(plan("HISTOGRAM(gender)"), Err(PlanError::NeedsUnbatched(..))));
        let p = plan("MAX(COUNT(*)) GROUP BY state").unwrap();
        assert!(matches!(&p.queries[0].post, PostProcess::GroupExtremum { direction: Direction::Max, .. }));
    }

    #[test]
    fn extremum() {
        let p = plan("MIN(admit) WHERE state=CA").unwrap();
        assert_eq!((p.keyword.as_str(), p.slots[0]), ("admissions", Slot { position: 1, row: 0 }));
        let p = plan("MAX(admit) WHERE state=WA").unwrap();
        assert_eq!(p.slots[0], Slot { position: 0, row: 2 });
        assert!(matches!(plan("MAX(days) WHERE state=WA"), Err(PlanError::NoFamily(_))));
    }

    #[test]
    fn batches() {
        let cat = catalog();
        let qs = crate::query::parse_batch(
            "SUM(days) WHERE gender=Male AND admit < 2022-06-01; COUNT(*) WHERE gender=Female",
        )
        .unwrap();
        let p = plan_batch(&qs, &cat).unwrap();
        assert_eq!(p.slots, vec![Slot { position: 0, row: 0 }, Slot { position: 1, row: 1 }]);
        assert_eq!(p.degree(1), 1 + 1 + 1);
        let clash = crate::query::parse_batch("COUNT(*) WHERE gender=Female; COUNT(*) WHERE gender=Male").unwrap();
        assert!(matches!(plan_batch(&clash, &cat), Err(PlanError::PositionConflict(_))));
        let mixed = crate::query::parse_batch("COUNT(*) WHERE gender=Female; SUM(days) WHERE patient=1").unwrap();
        assert!(matches!(plan_batch(&mixed, &cat), Err(PlanError::MixedBuckets(..))));
        let multi = crate::query::parse_batch("SUM(days) WHERE patient=1; SUM(days) WHERE patient=3").unwrap();
        assert_eq!(plan_batch(&multi, &cat).unwrap().k(), 2);
    }

    #[test]
    fn planning_errors() {
        assert!(matches!(plan("SUM(days) WHERE patient=9"), Err(PlanError::UnknownGroupValue { .. })));
        assert!(matches!(plan("SUM(days) WHERE days=2"), Err(PlanError::NoFamily(_))));
        assert!(matches!(plan("SUM(days) WHERE patient=1 AND days > 1"), Err(PlanError::NoFamily(_))));
        assert!(matches!(plan("SUM(nope) WHERE patient=1"), Err(PlanError::MissingColumn(_))));
        assert!(matches!(plan("SUM(days) WHERE patient=1 USING state"), Err(PlanError::NoFamily(_))));
        assert_eq!(plan("SUM(days) WHERE patient=1 USING patient").unwrap().keyword, "patient");
    }

    #[test]
    fn finish_decodes() {
        let field = Field::new(FieldSpec::mersenne31()).unwrap();
        let cat = catalog();
        let s = cat.s();
        let vec_with = |pairs: &[(usize, u64)]| {
            let mut v = vec![field.zero(); s];
            for &(w, x) in pairs {
                v[w] = field.from_u64(x).unwrap();
            }
            v
        };
        let gid = cat.schema.word_offset("gender_id").unwrap();
        let p = plan_query(&parse_query("COUNT(*) WHERE gender=Female").unwrap(), &cat).unwrap();
        let ans = p.finish(&field, &[vec_with(&[(gid, 4)])]).unwrap();
        assert_eq!(ans, vec![Answer::Value(BigUint::from(2u8))]);
        assert!(matches!(
            p.finish(&field, &[vec_with(&[(gid, 5)])]),
            Err(PlanError::Index(IndexError::CorruptedResponse { .. }))
        ));
        assert!(matches!(p.finish(&field, &[]), Err(PlanError::DecodedCount { .. })));

        let sid = cat.schema.word_offset("state_id").unwrap();
        let admit = cat.schema.word_offset("admit").unwrap();
        let p = plan_query(&parse_query("MAX(admit) WHERE state=OR").unwrap(), &cat).unwrap();
        assert_eq!(p.finish(&field, &[vec_with(&[])]).unwrap(), vec![Answer::Extremum(None)]);
        assert_eq!(
            p.finish(&field, &[vec_with(&[(sid, 2), (admit, 77)])]).unwrap(),
            vec![Answer::Extremum(Some(77))]
        );
        assert!(p.finish(&field, &[vec_with(&[(sid, 3), (admit, 77)])]).is_err());
    }
}
