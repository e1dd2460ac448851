//! Seeded synthetic tables mirroring the hospital, Twitter-like and MIMIC-like schemas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{preprocess_ids, AttrKind, Attribute, Cell, Dataset, DatasetError, Schema, Table};
use crate::field::Field;

/// 2022-01-01T00:00:00Z
const YEAR_START: u64 = 1_640_995_200;
const YEAR_SECONDS: u64 = 365 * 86_400;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnGen {
    /// 1, 2, 3, ...
    Sequence,
    Uniform { lo: u64, hi: u64 },
    /// Whole days within 2022.
    Date,
    Categorical(Vec<String>),
    Text { words: usize, max_len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthetic {
    pub columns: Vec<(String, ColumnGen)>,
    pub aggregation_set: Vec<String>,
}

impl Synthetic {
    pub fn new() -> Self {
        Synthetic {
            columns: Vec::new(),
            aggregation_set: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, gen: ColumnGen) -> Self {
        self.columns.push((name.to_string(), gen));
        self
    }

    pub fn aggregate(mut self, names: &[&str]) -> Self {
        self.aggregation_set.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn schema(&self) -> Result<Schema, DatasetError> {
        let attrs = self
            .columns
            .iter()
            .map(|(name, gen)| match gen {
                ColumnGen::Sequence | ColumnGen::Uniform { .. } => Attribute::new(name, AttrKind::Numeric),
                ColumnGen::Date => Attribute::new(name, AttrKind::Timestamp),
                ColumnGen::Categorical(levels) => Attribute {
                    levels: levels.clone(),
                    ..Attribute::new(name, AttrKind::Categorical)
                },
                ColumnGen::Text { words, .. } => Attribute::text(name, *words),
            })
            .collect();
        Schema::new(attrs, &self.aggregation_set.iter().map(String::as_str).collect::<Vec<_>>())
    }

    pub fn table<R: Rng + ?Sized>(&self, records: usize, rng: &mut R) -> Table {
        let rows = (0..records)
            .map(|i| {
                self.columns
                    .iter()
                    .map(|(_, gen)| match gen {
                        ColumnGen::Sequence => Cell::Int(i as u64 + 1),
                        ColumnGen::Uniform { lo, hi } => Cell::Int(rng.random_range(*lo..=*hi)),
                        ColumnGen::Date => Cell::Int(YEAR_START + rng.random_range(0..YEAR_SECONDS / 86_400) * 86_400),
                        ColumnGen::Categorical(levels) => {
                            Cell::Text(levels[rng.random_range(0..levels.len())].clone())
                        }
                        ColumnGen::Text { max_len, .. } => {
                            let len = rng.random_range(0..=*max_len);
                            Cell::Text((0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
                        }
                    })
                    .collect()
            })
            .collect();
        Table {
            columns: self.columns.iter().map(|(n, _)| n.clone()).collect(),
            rows,
        }
    }

    /// Generates, encodes, and derives `<attr>_id` columns for every categorical.
    pub fn dataset(&self, records: usize, seed: u64, field: &Field) -> Result<Dataset, DatasetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = self.table(records, &mut rng);
        let mut ds = Dataset::from_table(self.schema()?, table, field)?;
        for (name, gen) in &self.columns {
            if matches!(gen, ColumnGen::Categorical(_)) {
                ds = preprocess_ids(&ds, name)?.0;
            }
        }
        Ok(ds)
    }
}

impl Default for Synthetic {
    fn default() -> Self {
        Self::new()
    }
}

fn levels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Hospital admissions; `patients` distinct patient ids and `states` state labels.
pub fn hospital(patients: u64, states: usize) -> Synthetic {
    Synthetic::new()
        .column("hospitalization_id", ColumnGen::Sequence)
        .column("patient", ColumnGen::Uniform { lo: 1, hi: patients })
        .column("admit", ColumnGen::Date)
        .column(
            "gender",
            ColumnGen::Categorical(vec!["Male".into(), "Female".into(), "Other".into()]),
        )
        .column("days", ColumnGen::Uniform { lo: 1, hi: 30 })
        .column("state", ColumnGen::Categorical(levels("S", states)))
        .column("age", ColumnGen::Uniform { lo: 0, hi: 100 })
        .aggregate(&["patient", "admit", "days", "age"])
}

/// Five attributes, three of them aggregated.
pub fn twitter(users: u64) -> Synthetic {
    Synthetic::new()
        .column("text", ColumnGen::Text { words: 4, max_len: 12 })
        .column("user_id", ColumnGen::Uniform { lo: 1, hi: users })
        .column("like_count", ColumnGen::Uniform { lo: 0, hi: 5000 })
        .column("retweet_count", ColumnGen::Uniform { lo: 0, hi: 1000 })
        .column("reply_count", ColumnGen::Uniform { lo: 0, hi: 500 })
        .aggregate(&["like_count", "retweet_count", "reply_count"])
}

/// Nine admission fields, four of them aggregated.
pub fn mimic(subjects: u64) -> Synthetic {
    Synthetic::new()
        .column("row_id", ColumnGen::Sequence)
        .column("subject_id", ColumnGen::Uniform { lo: 1, hi: subjects })
        .column("admittime", ColumnGen::Date)
        .column(
            "admission_type",
            ColumnGen::Categorical(vec![
                "EMERGENCY".into(),
                "ELECTIVE".into(),
                "URGENT".into(),
                "NEWBORN".into(),
            ]),
        )
        .column("ethnicity", ColumnGen::Categorical(levels("E", 5)))
        .column("hospitalization_duration", ColumnGen::Uniform { lo: 1, hi: 60 })
        .column("dose_val_rx", ColumnGen::Uniform { lo: 0, hi: 1000 })
        .column("insurance", ColumnGen::Text { words: 2, max_len: 6 })
        .column("diagnosis", ColumnGen::Text { words: 2, max_len: 6 })
        .aggregate(&["subject_id", "admittime", "hospitalization_duration", "dose_val_rx"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::project_essential;
    use crate::field::FieldSpec;

    fn m31() -> Field {
        Field::new(FieldSpec::mersenne31()).unwrap()
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let f = m31();
        let a = hospital(20, 5).dataset(100, 7, &f).unwrap();
        let b = hospital(20, 5).dataset(100, 7, &f).unwrap();
        let c = hospital(20, 5).dataset(100, 8, &f).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.matrix, b.matrix);
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn preset_shapes() {
        let f = m31();
        let tw = twitter(10).dataset(8, 1, &f).unwrap();
        assert_eq!(tw.schema().attributes.len(), 5);
        assert_eq!(project_essential(&tw.matrix).unwrap().s(), 3);
        let mm = mimic(10).dataset(8, 1, &f).unwrap();
        assert_eq!(mm.table.columns.len(), 9 + 2);
        let h = hospital(4, 3).dataset(8, 1, &f).unwrap();
        assert!(h.schema().aggregation_set.contains(&"state_id".to_string()));
        assert!(h.table.column("days").unwrap().all(|c| matches!(c, Cell::Int(1..=30))));
    }
}
