//! Brute-force plaintext evaluation by row scan in arbitrary-precision integers.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::Zero;

use super::{Cell, DatasetError, Table};
use crate::query::{AggFn, Answer, QuerySpec};

fn column_index(table: &Table, name: &str) -> Result<usize, DatasetError> {
    table
        .column_index(name)
        .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))
}

fn int_cell(cell: &Cell, name: &str) -> Result<u64, DatasetError> {
    cell.as_int()
        .ok_or_else(|| DatasetError::Schema(format!("column {name} is not numeric")))
}

/// SUM/COUNT of one group's rows.
fn fold(rows: &[&Vec<Cell>], func: AggFn, col: Option<(usize, &str)>) -> Result<BigUint, DatasetError> {
    match (func, col) {
        (AggFn::Count, _) => Ok(BigUint::from(rows.len())),
        (AggFn::Sum, Some((c, name))) => rows
            .iter()
            .try_fold(BigUint::zero(), |acc, row| Ok(acc + int_cell(&row[c], name)?)),
        _ => Err(DatasetError::Schema(format!("{func} needs a column"))),
    }
}

pub fn oracle_aggregate(table: &Table, spec: &QuerySpec) -> Result<Answer, DatasetError> {
    let filters = spec
        .filters
        .iter()
        .map(|p| Ok((column_index(table, &p.attr)?, p)))
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let col = match &spec.column {
        Some(name) => Some((column_index(table, name)?, name.as_str())),
        None => None,
    };
    let rows: Vec<&Vec<Cell>> = table
        .rows
        .iter()
        .filter(|row| filters.iter().all(|(c, p)| p.matches(&row[*c])))
        .collect();

    if let Some(group) = &spec.group_by {
        let g = column_index(table, group)?;
        let mut groups: BTreeMap<String, Vec<&Vec<Cell>>> =
            table.rows.iter().map(|row| (row[g].to_string(), Vec::new())).collect();
        for row in &rows {
            groups.get_mut(&row[g].to_string()).expect("group seen").push(row);
        }
        let per_group_fn = spec.inner.unwrap_or(spec.func);
        let hist = groups
            .into_iter()
            .map(|(label, members)| Ok((label, fold(&members, per_group_fn, col)?)))
            .collect::<Result<BTreeMap<_, _>, DatasetError>>()?;
        if spec.inner.is_none() {
            return Ok(Answer::Histogram(hist));
        }
        let best = match spec.func {
            AggFn::Min => hist.values().min(),
            _ => hist.values().max(),
        }
        .cloned()
        .ok_or_else(|| DatasetError::Undefined("no groups".into()))?;
        let labels = hist.into_iter().filter(|(_, v)| *v == best).map(|(k, _)| k).collect();
        return Ok(Answer::GroupExtremum { labels, value: best });
    }

    match spec.func {
        AggFn::Sum | AggFn::Count => Ok(Answer::Value(fold(&rows, spec.func, col)?)),
        AggFn::Mean => {
            if rows.is_empty() {
                return Err(DatasetError::Undefined("MEAN over an empty record set".into()));
            }
            Ok(Answer::Mean {
                sum: fold(&rows, AggFn::Sum, col)?,
                count: BigUint::from(rows.len()),
            })
        }
        AggFn::Min | AggFn::Max => {
            let (c, name) = col.ok_or_else(|| DatasetError::Schema(format!("{} needs a column", spec.func)))?;
            let values = rows.iter().map(|row| int_cell(&row[c], name)).collect::<Result<Vec<_>, _>>()?;
            Ok(Answer::Extremum(if spec.func == AggFn::Min {
                values.into_iter().min()
            } else {
                values.into_iter().max()
            }))
        }
    }
}
