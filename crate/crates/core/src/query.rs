//! SQL-like query mini-language.
//!
//! ```text
//! stmt  := [SELECT] agg [FROM ident] [WHERE cond {AND cond}] [GROUP BY ident] [USING ident]
//! agg   := FN '(' ('*' | ident | FN '(' ('*' | ident) ')') ')'
//! FN    := SUM | COUNT | MEAN | AVG | MIN | MAX | HISTOGRAM
//! cond  := ident ('=' | '<' | '<=' | '>' | '>=') literal | ident BETWEEN literal AND literal
//! ```
//!
//! Several statements separated by `;` form one batch.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::filter::{CmpOp, Literal, Predicate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unsupported query: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggFn {
    Sum,
    Count,
    Mean,
    Min,
    Max,
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFn::Sum => "SUM",
            AggFn::Count => "COUNT",
            AggFn::Mean => "MEAN",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuerySpec {
    pub func: AggFn,
    /// Aggregated column; `None` means `*`.
    pub column: Option<String>,
    /// For `MAX(COUNT(*)) GROUP BY g`: the per-group aggregate being ranked.
    pub inner: Option<AggFn>,
    pub filters: Vec<Predicate>,
    pub group_by: Option<String>,
    /// Optional explicit index family.
    pub family: Option<String>,
}

impl QuerySpec {
    pub fn new(func: AggFn, column: Option<&str>) -> Self {
        QuerySpec {
            func,
            column: column.map(str::to_string),
            inner: None,
            filters: Vec::new(),
            group_by: None,
            family: None,
        }
    }

    pub fn filter(mut self, p: Predicate) -> Self {
        self.filters.push(p);
        self
    }

    pub fn group_by(mut self, attr: &str) -> Self {
        self.group_by = Some(attr.to_string());
        self
    }

    pub fn is_histogram(&self) -> bool {
        self.group_by.is_some() && self.inner.is_none()
    }
}

impl fmt::Display for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = self.column.as_deref().unwrap_or("*");
        match self.inner {
            Some(inner) => write!(f, "{}({}({}))", self.func, inner, col)?,
            None => write!(f, "{}({})", self.func, col)?,
        }
        for (i, p) in self.filters.iter().enumerate() {
            write!(f, " {} {}", if i == 0 { "WHERE" } else { "AND" }, p)?;
        }
        if let Some(g) = &self.group_by {
            write!(f, " GROUP BY {g}")?;
        }
        if let Some(fam) = &self.family {
            write!(f, " USING {fam}")?;
        }
        Ok(())
    }
}

/// A decoded or oracle-computed query result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    /// SUM or COUNT.
    Value(BigUint),
    Mean { sum: BigUint, count: BigUint },
    /// MIN or MAX of a column; `None` when no record qualifies.
    Extremum(Option<u64>),
    /// Per-group SUM or COUNT keyed by group label.
    Histogram(BTreeMap<String, BigUint>),
    /// `MIN/MAX(agg) GROUP BY g`: every group attaining the extremum, sorted.
    GroupExtremum { labels: Vec<String>, value: BigUint },
}

impl Answer {
    pub fn mean(&self) -> Option<f64> {
        match self {
            Answer::Mean { sum, count } if !count.is_zero() => {
                Some(sum.to_f64().unwrap_or(f64::NAN) / count.to_f64().unwrap_or(f64::NAN))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Value(v) => write!(f, "{v}"),
            Answer::Mean { sum, count } => match self.mean() {
                Some(m) => write!(f, "{m} (sum {sum} / count {count})"),
                None => write!(f, "undefined (sum {sum} / count {count})"),
            },
            Answer::Extremum(Some(v)) => write!(f, "{v}"),
            Answer::Extremum(None) => f.write_str("none"),
            Answer::Histogram(h) => {
                let parts: Vec<String> = h.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Answer::GroupExtremum { labels, value } => write!(f, "{} ({value})", labels.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == b'\'' || c == b'"' {
            let end = text[i + 1..].find(c as char).ok_or(QueryError::Parse {
                pos: i,
                msg: "unterminated string".into(),
            })?;
            out.push((start, Tok::Str(text[i + 1..i + 1 + end].to_string())));
            i += end + 2;
            continue;
        }
        let two = text.get(i..i + 2);
        if let Some(sym) = ["<=", ">="].into_iter().find(|s| two == Some(*s)) {
            out.push((start, Tok::Sym(sym)));
            i += 2;
            continue;
        }
        if let Some(sym) = ["(", ")", "*", "=", "<", ">", ","]
            .into_iter()
            .find(|s| s.as_bytes()[0] == c)
        {
            out.push((start, Tok::Sym(sym)));
            i += 1;
            continue;
        }
        if c.is_ascii_alphanumeric() || c == b'_' {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.' | b'-' | b':'))
            {
                i += 1;
            }
            out.push((start, Tok::Word(text[start..i].to_string())));
            continue;
        }
        return Err(QueryError::Parse {
            pos: i,
            msg: format!("unexpected character {:?}", c as char),
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Parse {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.peek_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {kw}"))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), QueryError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected '{sym}'"))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Word(w))
                if w.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') =>
            {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn literal(&mut self) -> Result<Literal, QueryError> {
        let lit = match self.peek() {
            Some(Tok::Str(s)) => Literal::Text(s.clone()),
            Some(Tok::Word(w)) => Literal::parse(w),
            _ => return self.err("expected literal"),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn func(&mut self) -> Result<(AggFn, bool), QueryError> {
        let name = match self.peek() {
            Some(Tok::Word(w)) => w.to_ascii_uppercase(),
            _ => return self.err("expected aggregate function"),
        };
        let f = match name.as_str() {
            "SUM" => (AggFn::Sum, false),
            "COUNT" => (AggFn::Count, false),
            "MEAN" | "AVG" => (AggFn::Mean, false),
            "MIN" => (AggFn::Min, false),
            "MAX" => (AggFn::Max, false),
            "HISTOGRAM" => (AggFn::Count, true),
            "JOIN" => return Err(QueryError::Unsupported("JOIN".into())),
            _ => return self.err(format!("unknown aggregate function {name}")),
        };
        self.pos += 1;
        Ok(f)
    }

    fn arg(&mut self) -> Result<Option<String>, QueryError> {
        if self.eat_sym("*") {
            Ok(None)
        } else {
            self.ident().map(Some)
        }
    }

    fn condition(&mut self) -> Result<Predicate, QueryError> {
        if self.peek_kw("SELECT") {
            return Err(QueryError::Unsupported("nested SELECT".into()));
        }
        let attr = self.ident()?;
        if self.eat_kw("BETWEEN") {
            let lo = self.literal()?;
            self.expect_kw("AND")?;
            let hi = self.literal()?;
            return Ok(Predicate::between(&attr, lo, hi));
        }
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("IN") || w.eq_ignore_ascii_case("LIKE") => {
                return Err(QueryError::Unsupported(w.to_ascii_uppercase()));
            }
            _ => return self.err("expected comparison operator"),
        };
        self.pos += 1;
        if self.peek_kw("SELECT") || matches!(self.peek(), Some(Tok::Sym("("))) {
            return Err(QueryError::Unsupported("nested SELECT".into()));
        }
        Ok(Predicate::new(&attr, op, self.literal()?))
    }

    fn statement(&mut self) -> Result<QuerySpec, QueryError> {
        self.eat_kw("SELECT");
        let (func, histogram) = self.func()?;
        self.expect_sym("(")?;
        let mut inner = None;
        let column;
        if matches!(self.peek(), Some(Tok::Word(_)))
            && matches!(self.toks.get(self.pos + 1), Some((_, Tok::Sym("("))))
        {
            let (f, h) = self.func()?;
            if h {
                return Err(QueryError::Unsupported("nested HISTOGRAM".into()));
            }
            self.expect_sym("(")?;
            column = self.arg()?;
            self.expect_sym(")")?;
            inner = Some(f);
        } else {
            column = self.arg()?;
        }
        self.expect_sym(")")?;
        if self.eat_kw("FROM") {
            self.ident()?;
            if self.peek_kw("JOIN") || self.eat_sym(",") {
                return Err(QueryError::Unsupported("JOIN".into()));
            }
        }
        let mut filters = Vec::new();
        if self.eat_kw("WHERE") {
            filters.push(self.condition()?);
            while self.eat_kw("AND") {
                filters.push(self.condition()?);
            }
            if self.peek_kw("OR") {
                return Err(QueryError::Unsupported("OR".into()));
            }
        }
        let mut group_by = None;
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by = Some(self.ident()?);
        }
        let mut family = None;
        if self.eat_kw("USING") {
            family = Some(self.ident()?);
        }
        if self.pos != self.toks.len() {
            if self.peek_kw("JOIN") {
                return Err(QueryError::Unsupported("JOIN".into()));
            }
            return self.err("unexpected trailing input");
        }

        let mut spec = QuerySpec {
            func,
            column,
            inner,
            filters,
            group_by,
            family,
        };
        if histogram {
            let Some(attr) = spec.column.take() else {
                return self.err("HISTOGRAM needs a grouping attribute");
            };
            if spec.group_by.as_ref().is_some_and(|g| g != &attr) {
                return self.err("HISTOGRAM attribute disagrees with GROUP BY");
            }
            spec.group_by = Some(attr);
        }
        if let Some(inner) = spec.inner {
            if !matches!(spec.func, AggFn::Min | AggFn::Max)
                || !matches!(inner, AggFn::Sum | AggFn::Count)
            {
                return Err(QueryError::Unsupported(format!("{}({}(..))", spec.func, inner)));
            }
            if spec.group_by.is_none() {
                return Err(QueryError::Unsupported("nested aggregate without GROUP BY".into()));
            }
            if inner == AggFn::Sum && spec.column.is_none() {
                return self.err("SUM needs a column");
            }
        } else {
            if spec.func != AggFn::Count && spec.column.is_none() {
                return self.err(format!("{} needs a column", spec.func));
            }
            if spec.group_by.is_some() && matches!(spec.func, AggFn::Min | AggFn::Max | AggFn::Mean) {
                return Err(QueryError::Unsupported(format!("{} with GROUP BY", spec.func)));
            }
        }
        Ok(spec)
    }
}

pub fn parse_query(text: &str) -> Result<QuerySpec, QueryError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(QueryError::Parse {
            pos: 0,
            msg: "empty query".into(),
        });
    }
    Parser {
        toks,
        pos: 0,
        end: text.len(),
    }
    .statement()
}

/// Splits on `;` and parses every non-empty statement.
pub fn parse_batch(text: &str) -> Result<Vec<QuerySpec>, QueryError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in text.split(';') {
        if !part.trim().is_empty() {
            out.push(parse_query(part).map_err(|e| match e {
                QueryError::Parse { pos, msg } => QueryError::Parse {
                    pos: pos + offset,
                    msg,
                },
                other => other,
            })?);
        }
        offset += part.len() + 1;
    }
    if out.is_empty() {
        return Err(QueryError::Parse {
            pos: 0,
            msg: "empty query".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_forms() {
        let q = parse_query("SUM(days) WHERE patient=3").unwrap();
        assert_eq!(q.func, AggFn::Sum);
        assert_eq!(q.column.as_deref(), Some("days"));
        assert_eq!(q.filters, vec![Predicate::eq("patient", Literal::Int(3))]);

        let q = parse_query("select count(*) from db where gender = Female").unwrap();
        assert_eq!(q.func, AggFn::Count);
        assert_eq!(q.column, None);
        assert_eq!(q.filters[0].value, Literal::Text("Female".into()));

        let q = parse_query("SELECT AVG(days) FROM t WHERE state='CA' AND admit < 2022-06-01").unwrap();
        assert_eq!(q.func, AggFn::Mean);
        assert_eq!(q.filters.len(), 2);
        assert_eq!(q.filters[1].op, CmpOp::Lt);
    }

    #[test]
    fn histogram_and_nested() {
        let q = parse_query("HISTOGRAM(gender)").unwrap();
        assert_eq!((q.func, q.group_by.as_deref()), (AggFn::Count, Some("gender")));
        assert!(q.is_histogram());
        let q = parse_query("SELECT COUNT(*) FROM t GROUP BY state").unwrap();
        assert!(q.is_histogram());
        let q = parse_query("MAX(COUNT(*)) GROUP BY state").unwrap();
        assert_eq!(q.inner, Some(AggFn::Count));
        assert!(!q.is_histogram());
        let q = parse_query("MIN(SUM(days)) GROUP BY state USING by_state").unwrap();
        assert_eq!(q.family.as_deref(), Some("by_state"));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "SUM(days) WHERE patient = 3",
            "COUNT(*) WHERE gender = 'Female' AND admit < 2022-06-01",
            "MAX(COUNT(*)) GROUP BY state",
            "SUM(days) WHERE days BETWEEN 2 AND 9 GROUP BY gender USING fam",
        ] {
            let q = parse_query(text).unwrap();
            assert_eq!(parse_query(&q.to_string()).unwrap(), q, "{text}");
        }
    }

    #[test]
    fn batches() {
        let qs = parse_batch("SUM(days) WHERE patient=3; COUNT(*) WHERE patient=3;").unwrap();
        assert_eq!(qs.len(), 2);
        match parse_batch("SUM(days); SUM(") {
            Err(QueryError::Parse { pos, .. }) => assert!(pos >= 11),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_are_precise() {
        assert_eq!(
            parse_query("SUM days"),
            Err(QueryError::Parse {
                pos: 4,
                msg: "expected '('".into()
            })
        );
        assert!(matches!(parse_query("SUM(*)"), Err(QueryError::Parse { .. })));
        assert!(matches!(parse_query("FOO(x)"), Err(QueryError::Parse { pos: 0, .. })));
        assert!(matches!(parse_query("SUM(x) WHERE a = 'b"), Err(QueryError::Parse { .. })));
        assert!(matches!(parse_query(""), Err(QueryError::Parse { .. })));
        assert!(matches!(parse_query("SUM(x) WHERE a = 1 extra"), Err(QueryError::Parse { .. })));
    }

    #[test]
    fn unsupported_constructs() {
        for text in [
            "SUM(x) FROM a JOIN b",
            "SUM(x) FROM a, b",
            "SUM(x) WHERE a = 1 OR b = 2",
            "SUM(x) WHERE a IN 1",
            "SUM(x) WHERE a = (SELECT 1)",
            "SUM(COUNT(*)) GROUP BY a",
            "MAX(COUNT(*))",
            "MIN(days) GROUP BY state",
        ] {
            assert!(matches!(parse_query(text), Err(QueryError::Unsupported(_))), "{text}");
        }
    }
}
