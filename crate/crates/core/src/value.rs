//! Typed column values, numeric ranges, and the fixed unit table.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Declared type of a relational column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnType {
    Text,
    /// Number stored in the given canonical unit (if any).
    Number {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Boolean,
    Enum { variants: Vec<String> },
    /// Closed/open numeric interval in the given canonical unit.
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
}

impl ColumnType {
    pub fn number(unit: Option<&str>) -> Self {
        ColumnType::Number { unit: unit.map(str::to_string) }
    }

    pub fn range(unit: Option<&str>) -> Self {
        ColumnType::Range { unit: unit.map(str::to_string) }
    }

    pub fn enumeration(variants: &[&str]) -> Self {
        ColumnType::Enum { variants: variants.iter().map(|v| v.to_string()).collect() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number { .. } => "number",
            ColumnType::Boolean => "boolean",
            ColumnType::Enum { .. } => "enum",
            ColumnType::Range { .. } => "range",
        }
    }

    /// Whether an ordered index can be built over this column.
    pub fn indexable(&self) -> bool {
        !matches!(self, ColumnType::Range { .. })
    }
}

/// Numeric interval; `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumRange {
    pub min: Option<f64>,
    pub max: Option<f64>,
    #[serde(default = "yes")]
    pub min_inclusive: bool,
    #[serde(default = "yes")]
    pub max_inclusive: bool,
}

fn yes() -> bool {
    true
}

impl NumRange {
    pub const UNBOUNDED: NumRange =
        NumRange { min: None, max: None, min_inclusive: true, max_inclusive: true };

    /// `[min, +inf)`
    pub fn at_least(min: f64) -> Self {
        NumRange { min: Some(min), ..Self::UNBOUNDED }
    }

    /// `(-inf, max)`
    pub fn below(max: f64) -> Self {
        NumRange { max: Some(max), max_inclusive: false, ..Self::UNBOUNDED }
    }

    /// `[min, max]`
    pub fn between(min: f64, max: f64) -> Self {
        NumRange { min: Some(min), max: Some(max), ..Self::UNBOUNDED }
    }

    pub fn contains(&self, x: f64) -> bool {
        let lower = match self.min {
            None => true,
            Some(m) if self.min_inclusive => x >= m,
            Some(m) => x > m,
        };
        let upper = match self.max {
            None => true,
            Some(m) if self.max_inclusive => x <= m,
            Some(m) => x < m,
        };
        lower && upper
    }

    /// Some point inside the interval, used to construct satisfying inputs.
    pub fn witness(&self) -> Option<f64> {
        let x = match (self.min, self.max) {
            (None, None) => 0.0,
            (Some(lo), None) => lo + 5.0,
            (None, Some(hi)) => (hi / 2.0).max(0.0),
            (Some(lo), Some(hi)) => (lo + hi) / 2.0,
        };
        self.contains(x).then_some(x)
    }

    pub fn scaled(&self, factor: f64) -> NumRange {
        NumRange { min: self.min.map(|v| v * factor), max: self.max.map(|v| v * factor), ..*self }
    }
}

impl fmt::Display for NumRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.min_inclusive && self.min.is_some() { '[' } else { '(' };
        let close = if self.max_inclusive && self.max.is_some() { ']' } else { ')' };
        let lo = self.min.map(fmt_num).unwrap_or_else(|| "-inf".into());
        let hi = self.max.map(fmt_num).unwrap_or_else(|| "+inf".into());
        write!(f, "{open}{lo}, {hi}{close}")
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// A single cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Null,
    Text(String),
    Number(f64),
    /// Number tagged with a unit; normalized to the column unit on insert.
    Quantity { amount: f64, unit: String },
    Bool(bool),
    Enum(String),
    Range(NumRange),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_range(&self) -> Option<&NumRange> {
        match self {
            Value::Range(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Checks `self` against a column type and returns the stored form.
    pub fn coerce(self, ty: &ColumnType) -> Result<Value, String> {
        match (ty, self) {
            (_, Value::Null) => Ok(Value::Null),
            (ColumnType::Text, Value::Text(s)) => Ok(Value::Text(s)),
            (ColumnType::Number { .. }, Value::Number(x)) => Ok(Value::Number(x)),
            (ColumnType::Number { unit: Some(col) }, Value::Quantity { amount, unit }) => {
                convert(amount, &unit, col).map(Value::Number)
            }
            (ColumnType::Number { unit: None }, Value::Quantity { unit, .. }) => {
                Err(format!("column is unitless but value carries unit {unit}"))
            }
            (ColumnType::Boolean, Value::Bool(b)) => Ok(Value::Bool(b)),
            (ColumnType::Enum { variants }, Value::Enum(s) | Value::Text(s)) => {
                if variants.iter().any(|v| v == &s) {
                    Ok(Value::Enum(s))
                } else {
                    Err(format!("{s:?} is not one of {variants:?}"))
                }
            }
            (ColumnType::Range { .. }, Value::Range(r)) => {
                if let (Some(lo), Some(hi)) = (r.min, r.max) {
                    if lo > hi {
                        return Err(format!("empty range {r}"));
                    }
                }
                Ok(Value::Range(r))
            }
            (ty, v) => Err(format!("expected {}, got {}", ty.name(), v.kind())),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Text(_) => "text",
            Value::Number(_) => "number",
            Value::Quantity { .. } => "quantity",
            Value::Bool(_) => "boolean",
            Value::Enum(_) => "enum",
            Value::Range(_) => "range",
        }
    }

    /// Total order among comparable scalar values of the same kind.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => Some(a.total_cmp(b)),
            (Value::Text(a), Value::Text(b))
            | (Value::Enum(a), Value::Enum(b))
            | (Value::Text(a), Value::Enum(b))
            | (Value::Enum(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "null"),
            Value::Text(s) | Value::Enum(s) => write!(f, "{s:?}"),
            Value::Number(x) => write!(f, "{}", fmt_num(*x)),
            Value::Quantity { amount, unit } => write!(f, "{} {unit}", fmt_num(*amount)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Range(r) => write!(f, "{r}"),
        }
    }
}

/// Fixed unit table: (unit, dimension, factor to the dimension's base unit).
const UNITS: &[(&str, &str, f64)] = &[
    ("mcg", "mass", 0.001),
    ("mg", "mass", 1.0),
    ("g", "mass", 1000.0),
    ("kg", "mass", 1_000_000.0),
    ("ml", "volume", 1.0),
    ("l", "volume", 1000.0),
    ("ml/min", "clearance", 1.0),
    ("l/h", "clearance", 1000.0 / 60.0),
    ("years", "time", 1.0),
    ("mg/day", "daily_mass", 1.0),
    ("g/day", "daily_mass", 1000.0),
];

fn lookup_unit(unit: &str) -> Option<(&'static str, f64)> {
    let u = unit.trim().to_ascii_lowercase();
    UNITS.iter().find(|(name, _, _)| *name == u).map(|(_, dim, f)| (*dim, *f))
}

/// Converts `amount` from `from` into `to` using the fixed unit table.
pub fn convert(amount: f64, from: &str, to: &str) -> Result<f64, String> {
    let (from_dim, from_f) = lookup_unit(from).ok_or_else(|| format!("unknown unit {from}"))?;
    let (to_dim, to_f) = lookup_unit(to).ok_or_else(|| format!("unknown unit {to}"))?;
    if from_dim != to_dim {
        return Err(format!("cannot convert {from} ({from_dim}) to {to} ({to_dim})"));
    }
    if from_f == to_f {
        return Ok(amount);
    }
    Ok(amount * from_f / to_f)
}
