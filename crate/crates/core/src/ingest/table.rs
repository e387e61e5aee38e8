use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, TableSchema};
use crate::cohort::{parse_timestamp, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Null,
    Str(String),
    Int(i64),
    Float(f64),
    Time(Timestamp),
    Code(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Code(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_string(&self) -> Option<String> {
        self.as_str().map(str::to_owned)
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_time(&self) -> Option<Timestamp> {
        match self {
            Value::Time(t) => Some(*t),
            _ => None,
        }
    }
}

/// A typed table; `rows[i][j]` holds column `j` of `schema`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<Value>>,
    /// Header columns not named by the schema (ignored).
    pub ignored_columns: Vec<String>,
}

impl RawTable {
    pub fn empty(schema: TableSchema) -> Self {
        RawTable {
            schema,
            rows: Vec::new(),
            ignored_columns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cell accessor by column name; panics if the schema lacks it.
    pub fn get(&self, row: usize, column: &str) -> &Value {
        let idx = self
            .schema
            .index_of(column)
            .unwrap_or_else(|| panic!("{} has no column {column}", self.schema.table_name));
        &self.rows[row][idx]
    }
}

fn parse_cell(raw: &str, kind: ColumnKind) -> Option<Value> {
    let text = raw.trim();
    match kind {
        ColumnKind::String => Some(Value::Str(raw.to_owned())),
        ColumnKind::Code => Some(Value::Code(text.to_owned())),
        ColumnKind::Integer => text
            .parse::<i64>()
            .ok()
            .or_else(|| {
                // "3.0" style integers as exported by some tools
                text.parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                    .map(|f| f as i64)
            })
            .map(Value::Int),
        ColumnKind::Float => text
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite())
            .map(Value::Float),
        ColumnKind::Timestamp => parse_timestamp(text).map(Value::Time),
    }
}

pub fn load_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_table_from_reader(file, schema)
}

/// Parses comma-separated, RFC-4180 quoted text with a header row.
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_table_from_reader<R: Read>(reader: R, schema: &TableSchema) -> Result<RawTable> {
    let table = &schema.table_name;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut seen = BTreeSet::new();
    for h in headers.iter() {
        if !seen.insert(h.trim()) {
            return Err(Error::Schema {
                table: table.clone(),
                message: format!("duplicate header `{}`", h.trim()),
            });
        }
    }

    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == col.name)
            .ok_or_else(|| Error::Schema {
                table: table.clone(),
                message: format!("missing required column `{}`", col.name),
            })?;
        positions.push(pos);
    }
    let ignored_columns: Vec<String> = headers
        .iter()
        .map(|h| h.trim())
        .filter(|h| schema.index_of(h).is_none())
        .map(str::to_owned)
        .collect();
    if !ignored_columns.is_empty() {
        tracing::warn!(
            table = %table,
            count = ignored_columns.len(),
            "ignoring columns outside the schema"
        );
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let mut row = Vec::with_capacity(schema.columns.len());
        for (col, &pos) in schema.columns.iter().zip(&positions) {
            let raw = record.get(pos).unwrap_or("");
            if raw.trim().is_empty() {
                if col.nullable {
                    row.push(Value::Null);
                    continue;
                }
                return Err(Error::Cell {
                    table: table.clone(),
                    row: row_no,
                    column: col.name.clone(),
                    value: raw.to_owned(),
                    kind: format!("non-null {}", col.kind.name()),
                });
            }
            let value = parse_cell(raw, col.kind).ok_or_else(|| Error::Cell {
                table: table.clone(),
                row: row_no,
                column: col.name.clone(),
                value: raw.to_owned(),
                kind: col.kind.name().to_owned(),
            })?;
            row.push(value);
        }
        rows.push(row);
    }

    Ok(RawTable {
        schema: schema.clone(),
        rows,
        ignored_columns,
    })
}
