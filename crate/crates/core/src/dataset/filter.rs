//! Record predicates: `=`, `<`, `<=`, `>`, `>=` and inclusive ranges.

use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::Cell;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(u64),
    /// Calendar date, held as epoch seconds at midnight UTC.
    Date(u64),
    Text(String),
}

impl Literal {
    /// Numbers and `YYYY-MM-DD` dates become ordered literals; anything else is text.
    pub fn parse(raw: &str) -> Literal {
        let raw = raw.trim();
        let unquoted = raw
            .strip_prefix('\'')
            .and_then(|s| s.strip_suffix('\''))
            .or_else(|| raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')));
        if let Some(s) = unquoted {
            return Literal::Text(s.to_string());
        }
        if let Ok(v) = raw.parse::<u64>() {
            return Literal::Int(v);
        }
        if let Some(ts) = parse_timestamp(raw) {
            return Literal::Date(ts);
        }
        Literal::Text(raw.to_string())
    }

    fn ordinal(&self) -> Option<u64> {
        match self {
            Literal::Int(v) | Literal::Date(v) => Some(*v),
            Literal::Text(_) => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Date(v) => match chrono::DateTime::from_timestamp(*v as i64, 0) {
                Some(dt) if dt.time() == chrono::NaiveTime::MIN => {
                    write!(f, "{}", dt.format("%Y-%m-%d"))
                }
                Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S")),
                None => write!(f, "{v}"),
            },
            Literal::Text(s) => write!(f, "'{s}'"),
        }
    }
}

/// Accepts `YYYY-MM-DD`, `MM-DD-YYYY`, and ISO date-times; returns epoch seconds.
pub fn parse_timestamp(raw: &str) -> Option<u64> {
    let raw = raw.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return u64::try_from(dt.and_utc().timestamp()).ok();
        }
    }
    for fmt in ["%Y-%m-%d", "%m-%d-%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
            return u64::try_from(d.and_time(chrono::NaiveTime::MIN).and_utc().timestamp()).ok();
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
    /// Inclusive on both ends.
    Between,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub attr: String,
    pub op: CmpOp,
    pub value: Literal,
    /// Upper bound for [`CmpOp::Between`].
    pub upper: Option<Literal>,
}

impl Predicate {
    pub fn new(attr: &str, op: CmpOp, value: Literal) -> Self {
        Predicate {
            attr: attr.to_string(),
            op,
            value,
            upper: None,
        }
    }

    pub fn between(attr: &str, lo: Literal, hi: Literal) -> Self {
        Predicate {
            attr: attr.to_string(),
            op: CmpOp::Between,
            value: lo,
            upper: Some(hi),
        }
    }

    pub fn eq(attr: &str, value: Literal) -> Self {
        Self::new(attr, CmpOp::Eq, value)
    }

    /// Parses `attr op value` or `attr BETWEEN lo AND hi`.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let lower = text.to_ascii_lowercase();
        if let Some(pos) = lower.find(" between ") {
            let attr = text[..pos].trim();
            let rest = &text[pos + 9..];
            let and = rest.to_ascii_lowercase().find(" and ")?;
            return Some(Self::between(
                attr,
                Literal::parse(&rest[..and]),
                Literal::parse(&rest[and + 5..]),
            ));
        }
        for (tok, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            if let Some(pos) = text.find(tok) {
                let attr = text[..pos].trim();
                if attr.is_empty() {
                    return None;
                }
                return Some(Self::new(attr, op, Literal::parse(&text[pos + tok.len()..])));
            }
        }
        None
    }

    /// Evaluates against one cell. Text supports equality only.
    pub fn matches(&self, cell: &Cell) -> bool {
        match cell {
            Cell::Int(v) => {
                let Some(x) = self.value.ordinal() else {
                    return false;
                };
                match self.op {
                    CmpOp::Eq => *v == x,
                    CmpOp::Lt => *v < x,
                    CmpOp::Le => *v <= x,
                    CmpOp::Gt => *v > x,
                    CmpOp::Ge => *v >= x,
                    CmpOp::Between => match self.upper.as_ref().and_then(Literal::ordinal) {
                        Some(hi) => x <= *v && *v <= hi,
                        None => false,
                    },
                }
            }
            Cell::Text(s) => {
                self.op == CmpOp::Eq
                    && match &self.value {
                        Literal::Text(t) => s == t,
                        Literal::Int(n) => s == &n.to_string(),
                        Literal::Date(_) => false,
                    }
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Between => {
                let hi = self.upper.as_ref().map(|u| u.to_string()).unwrap_or_default();
                return write!(f, "{} BETWEEN {} AND {}", self.attr, self.value, hi);
            }
        };
        write!(f, "{} {} {}", self.attr, op, self.value)
    }
}
