//! Schema-validated loading of the seven source tables and the per-visit
//! join.

mod assemble;
pub mod schema;
mod table;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

pub use assemble::{
    assemble_visits, susceptibility_records, Assembly, RejectedRow, Susceptibility,
};
pub use schema::{ColumnKind, ColumnSpec, TableSchema};
pub use table::{load_table, load_table_from_reader, RawTable, Value};

use crate::cohort::{apply_inclusion_criteria, Cohort, InclusionCriteria, LabelPolicy};
use crate::error::Result;

/// Loads every table in [`schema::ALL_TABLES`] from `dir/<table>.csv`.
pub fn load_dataset(dir: &Path) -> Result<BTreeMap<String, RawTable>> {
    schema::all_schemas()
        .into_par_iter()
        .map(|s| {
            let table = load_table(dir.join(s.file_name()), &s)?;
            Ok((s.table_name.clone(), table))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub cohort: Cohort,
    pub rejected: Vec<RejectedRow>,
    pub visits_assembled: usize,
    pub labels_before_inclusion: usize,
}

/// Load, join, convert microbiology rows to labels and apply the inclusion
/// criteria. The returned cohort is not yet split.
pub fn ingest_dir(
    dir: &Path,
    criteria: &InclusionCriteria,
    policy: &LabelPolicy,
) -> Result<IngestOutput> {
    let tables = load_dataset(dir)?;
    let assembly = assemble_visits(&tables)?;
    let micro = susceptibility_records(&tables[schema::MICRO], policy)?;
    let visits_assembled = assembly.visits.len();
    let labels_before_inclusion = micro.labels.len();
    let cohort =
        apply_inclusion_criteria(assembly.visits, &micro.cultures, micro.labels, criteria)?;
    let mut rejected = assembly.rejected;
    rejected.extend(micro.skipped);
    Ok(IngestOutput {
        cohort,
        rejected,
        visits_assembled,
        labels_before_inclusion,
    })
}
