//! Tabular records and their CSV/JSON rendering.

use std::fs;
use std::path::{Path, PathBuf};

use illusion_core::squeeze::ExactRational;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};
use crate::format::{float_json, float_text, rational_text};

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i128),
    Float(f64),
    Text(String),
    Bool(bool),
    Rational(ExactRational),
}

impl Field {
    fn text(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::Float(v) => float_text(*v),
            Field::Text(s) => s.clone(),
            Field::Bool(b) => b.to_string(),
            Field::Rational(r) => rational_text(r),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Int(v) => serde_json::from_str(&v.to_string()).expect("integer literal"),
            Field::Float(v) => float_json(*v),
            Field::Text(s) => Value::String(s.clone()),
            Field::Bool(b) => Value::Bool(*b),
            Field::Rational(r) => Value::String(rational_text(r)),
        }
    }
}

macro_rules! int_field {
    ($($t:ty),*) => {$(
        impl From<$t> for Field {
            fn from(v: $t) -> Self {
                Field::Int(v as i128)
            }
        }
    )*};
}
int_field!(u32, u64, usize, i32, i64);

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Bool(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.into())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl From<ExactRational> for Field {
    fn from(v: ExactRational) -> Self {
        Field::Rational(v)
    }
}

/// Rows under a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Records {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl Records {
    pub fn new(columns: &[&'static str]) -> Self {
        Records {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, f)| (c.to_string(), f.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Write `records` to `path` and hand the path back.
pub fn emit_report(records: &Records, format: Format, path: &Path) -> Result<PathBuf> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords(path.to_path_buf()));
    }
    match format {
        Format::Csv => {
            let csv_err = |source| CliError::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
            out.write_record(&records.columns).map_err(csv_err)?;
            for row in &records.rows {
                out.write_record(row.iter().map(Field::text)).map_err(csv_err)?;
            }
            out.flush().map_err(|e| CliError::io(path, e))?;
        }
        Format::Json => write_json(path, &records.to_json())?,
    }
    Ok(path.to_path_buf())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
