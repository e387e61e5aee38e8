use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    String,
    Integer,
    Float,
    Timestamp,
    /// Identifier or vocabulary code; kept verbatim.
    Code,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::String => "string",
            ColumnKind::Integer => "integer",
            ColumnKind::Float => "float",
            ColumnKind::Timestamp => "timestamp",
            ColumnKind::Code => "code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub table_name: String,
    pub columns: Vec<ColumnSpec>,
}

pub const KEY_COLUMNS: [&str; 3] = ["subject_id", "stay_id", "hadm_id"];

impl TableSchema {
    pub fn new(table_name: &str, columns: &[(&str, ColumnKind, bool)]) -> Result<Self> {
        let schema = TableSchema {
            table_name: table_name.to_owned(),
            columns: columns
                .iter()
                .map(|&(name, kind, nullable)| ColumnSpec {
                    name: name.to_owned(),
                    kind,
                    nullable,
                })
                .collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema {
                    table: self.table_name.clone(),
                    message: format!("column `{}` declared twice", c.name),
                });
            }
        }
        if !KEY_COLUMNS.iter().any(|k| seen.contains(k)) {
            return Err(Error::Schema {
                table: self.table_name.clone(),
                message: "no key column (subject_id, stay_id or hadm_id)".into(),
            });
        }
        Ok(())
    }

    pub fn index_of(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == column)
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.table_name)
    }
}

pub const ARRIVAL: &str = "arrival";
pub const TRIAGE: &str = "triage";
pub const MEDRECON: &str = "medrecon";
pub const VITALS: &str = "vitals";
pub const DIAGNOSIS: &str = "diagnosis";
pub const PYXIS: &str = "pyxis";
pub const MICRO: &str = "micro_susceptibility";

pub const MODALITY_TABLES: [&str; 6] = [ARRIVAL, TRIAGE, MEDRECON, VITALS, DIAGNOSIS, PYXIS];
pub const ALL_TABLES: [&str; 7] = [ARRIVAL, TRIAGE, MEDRECON, VITALS, DIAGNOSIS, PYXIS, MICRO];

use ColumnKind::{Code, Float, Integer, String as Str, Timestamp as Ts};

/// The fixed column subsets consumed downstream, one schema per source file.
pub fn schema(table: &str) -> Option<TableSchema> {
    let cols: &[(&str, ColumnKind, bool)] = match table {
        ARRIVAL => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("hadm_id", Code, true),
            ("intime", Ts, false),
            ("gender", Str, true),
            ("race", Str, true),
            ("arrival_transport", Str, true),
            ("age", Integer, true),
        ],
        TRIAGE => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("temperature", Float, true),
            ("heartrate", Float, true),
            ("resprate", Float, true),
            ("o2sat", Float, true),
            ("sbp", Float, true),
            ("dbp", Float, true),
            ("pain", Str, true),
            ("acuity", Integer, true),
            ("chiefcomplaint", Str, true),
        ],
        MEDRECON => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("charttime", Ts, false),
            ("name", Str, false),
            ("etcdescription", Str, true),
        ],
        VITALS => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("charttime", Ts, false),
            ("temperature", Float, true),
            ("heartrate", Float, true),
            ("resprate", Float, true),
            ("o2sat", Float, true),
            ("sbp", Float, true),
            ("dbp", Float, true),
            ("rhythm", Str, true),
            ("pain", Str, true),
        ],
        DIAGNOSIS => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("icd_code", Code, false),
            ("icd_version", Integer, false),
            ("icd_title", Str, false),
        ],
        PYXIS => &[
            ("subject_id", Code, false),
            ("stay_id", Code, false),
            ("charttime", Ts, false),
            ("name", Str, false),
        ],
        MICRO => &[
            ("subject_id", Code, false),
            ("hadm_id", Code, true),
            ("stay_id", Code, true),
            ("charttime", Ts, false),
            ("spec_type_desc", Str, false),
            ("org_name", Str, false),
            ("ab_name", Str, true),
            ("interpretation", Code, true),
        ],
        _ => return None,
    };
    Some(TableSchema::new(table, cols).expect("built-in schemas are valid"))
}

pub fn all_schemas() -> Vec<TableSchema> {
    ALL_TABLES.iter().map(|t| schema(t).unwrap()).collect()
}
