use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::{self, ARRIVAL, DIAGNOSIS, MEDRECON, MICRO, PYXIS, TRIAGE, VITALS};
use super::table::RawTable;
use crate::cohort::{
    Antibiotic, ArrivalInfo, CultureResult, DiagnosisCode, EDVisit, HadmId, Interpretation,
    LabelPolicy, MedreconEntry, PrescriptionLabelRow, PyxisEvent, SpecimenSource, StayId,
    SubjectId, TriageInfo, VitalSign,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub table: String,
    /// 1-based data row number in the source file.
    pub row: usize,
    pub stay_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub visits: Vec<EDVisit>,
    pub rejected: Vec<RejectedRow>,
    /// Modality rows attached to some visit (arrival rows included).
    pub accepted_rows: usize,
}

fn opt_string(t: &RawTable, row: usize, col: &str) -> Option<String> {
    t.get(row, col).as_string()
}

fn opt_f64(t: &RawTable, row: usize, col: &str) -> Option<f64> {
    t.get(row, col).as_f64()
}

fn required_string(t: &RawTable, row: usize, col: &str) -> String {
    opt_string(t, row, col).expect("non-nullable column checked at load")
}

/// Joins modality rows onto arrival rows by `stay_id`.
///
/// Rows whose stay is missing from the arrival table, whose subject differs
/// from the arrival row, or that duplicate a single-row modality are
/// reported in `rejected` rather than failing the load.
pub fn assemble_visits(tables: &BTreeMap<String, RawTable>) -> Result<Assembly> {
    for name in schema::MODALITY_TABLES {
        if !tables.contains_key(name) {
            return Err(Error::Schema {
                table: name.to_owned(),
                message: "modality table missing".into(),
            });
        }
    }

    let mut rejected = Vec::new();
    let mut accepted_rows = 0usize;
    let mut visits: BTreeMap<StayId, EDVisit> = BTreeMap::new();

    let reject = |rejected: &mut Vec<RejectedRow>, table: &str, i: usize, stay: &str, why: &str| {
        rejected.push(RejectedRow {
            table: table.to_owned(),
            row: i + 1,
            stay_id: Some(stay.to_owned()),
            reason: why.to_owned(),
        });
    };

    let arrival = &tables[ARRIVAL];
    for i in 0..arrival.len() {
        let stay = StayId(required_string(arrival, i, "stay_id"));
        if visits.contains_key(&stay) {
            reject(&mut rejected, ARRIVAL, i, &stay.0, "duplicate arrival row");
            continue;
        }
        let info = ArrivalInfo {
            intime: arrival.get(i, "intime").as_time().expect("checked at load"),
            gender: opt_string(arrival, i, "gender"),
            race: opt_string(arrival, i, "race"),
            arrival_transport: opt_string(arrival, i, "arrival_transport"),
            age: arrival.get(i, "age").as_i64(),
        };
        let visit = EDVisit::new(
            SubjectId(required_string(arrival, i, "subject_id")),
            stay.clone(),
            opt_string(arrival, i, "hadm_id").map(HadmId),
            info,
        );
        visits.insert(stay, visit);
        accepted_rows += 1;
    }

    // Resolves a modality row to its visit, or records why it cannot be.
    fn target<'a>(
        visits: &'a mut BTreeMap<StayId, EDVisit>,
        t: &RawTable,
        i: usize,
    ) -> std::result::Result<&'a mut EDVisit, &'static str> {
        let stay = StayId(required_string(t, i, "stay_id"));
        let subject = required_string(t, i, "subject_id");
        match visits.get_mut(&stay) {
            None => Err("stay_id not present in arrival table"),
            Some(v) if v.subject_id.0 != subject => Err("subject_id disagrees with arrival row"),
            Some(v) => Ok(v),
        }
    }

    let triage = &tables[TRIAGE];
    let mut triaged = std::collections::BTreeSet::new();
    for i in 0..triage.len() {
        let stay = required_string(triage, i, "stay_id");
        match target(&mut visits, triage, i) {
            Err(why) => reject(&mut rejected, TRIAGE, i, &stay, why),
            Ok(_) if triaged.contains(&stay) => {
                reject(&mut rejected, TRIAGE, i, &stay, "duplicate triage row")
            }
            Ok(v) => {
                v.triage = TriageInfo {
                    temperature: opt_f64(triage, i, "temperature"),
                    heartrate: opt_f64(triage, i, "heartrate"),
                    resprate: opt_f64(triage, i, "resprate"),
                    o2sat: opt_f64(triage, i, "o2sat"),
                    sbp: opt_f64(triage, i, "sbp"),
                    dbp: opt_f64(triage, i, "dbp"),
                    pain: opt_string(triage, i, "pain"),
                    acuity: triage.get(i, "acuity").as_i64(),
                    chiefcomplaint: opt_string(triage, i, "chiefcomplaint"),
                };
                triaged.insert(stay);
                accepted_rows += 1;
            }
        }
    }

    let medrecon = &tables[MEDRECON];
    for i in 0..medrecon.len() {
        match target(&mut visits, medrecon, i) {
            Err(why) => reject(
                &mut rejected,
                MEDRECON,
                i,
                &required_string(medrecon, i, "stay_id"),
                why,
            ),
            Ok(v) => {
                v.medrecon.push(MedreconEntry {
                    charttime: medrecon.get(i, "charttime").as_time().unwrap(),
                    name: required_string(medrecon, i, "name"),
                    etcdescription: opt_string(medrecon, i, "etcdescription"),
                });
                accepted_rows += 1;
            }
        }
    }

    let vitals = &tables[VITALS];
    for i in 0..vitals.len() {
        match target(&mut visits, vitals, i) {
            Err(why) => reject(
                &mut rejected,
                VITALS,
                i,
                &required_string(vitals, i, "stay_id"),
                why,
            ),
            Ok(v) => {
                v.vitals.push(VitalSign {
                    charttime: vitals.get(i, "charttime").as_time().unwrap(),
                    temperature: opt_f64(vitals, i, "temperature"),
                    heartrate: opt_f64(vitals, i, "heartrate"),
                    resprate: opt_f64(vitals, i, "resprate"),
                    o2sat: opt_f64(vitals, i, "o2sat"),
                    sbp: opt_f64(vitals, i, "sbp"),
                    dbp: opt_f64(vitals, i, "dbp"),
                    rhythm: opt_string(vitals, i, "rhythm"),
                    pain: opt_string(vitals, i, "pain"),
                });
                accepted_rows += 1;
            }
        }
    }

    let diagnosis = &tables[DIAGNOSIS];
    for i in 0..diagnosis.len() {
        match target(&mut visits, diagnosis, i) {
            Err(why) => reject(
                &mut rejected,
                DIAGNOSIS,
                i,
                &required_string(diagnosis, i, "stay_id"),
                why,
            ),
            Ok(v) => {
                v.diagnoses.push(DiagnosisCode {
                    icd_code: required_string(diagnosis, i, "icd_code"),
                    icd_version: diagnosis.get(i, "icd_version").as_i64().unwrap(),
                    icd_title: required_string(diagnosis, i, "icd_title"),
                });
                accepted_rows += 1;
            }
        }
    }

    let pyxis = &tables[PYXIS];
    for i in 0..pyxis.len() {
        match target(&mut visits, pyxis, i) {
            Err(why) => reject(
                &mut rejected,
                PYXIS,
                i,
                &required_string(pyxis, i, "stay_id"),
                why,
            ),
            Ok(v) => {
                v.pyxis.push(PyxisEvent {
                    charttime: pyxis.get(i, "charttime").as_time().unwrap(),
                    name: required_string(pyxis, i, "name"),
                });
                accepted_rows += 1;
            }
        }
    }

    // stable sorts: ties keep source row order
    for v in visits.values_mut() {
        v.medrecon.sort_by_key(|m| m.charttime);
        v.vitals.sort_by_key(|m| m.charttime);
        v.pyxis.sort_by_key(|m| m.charttime);
    }

    Ok(Assembly {
        visits: visits.into_values().collect(),
        rejected,
        accepted_rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Susceptibility {
    pub cultures: Vec<CultureResult>,
    pub labels: Vec<PrescriptionLabelRow>,
    pub skipped: Vec<RejectedRow>,
}

/// Splits the microbiology table into culture results and one label row per
/// (stay, antibiotic). Repeated tests of the same pair are collapsed by
/// [`LabelPolicy::label`]; label order follows first appearance.
pub fn susceptibility_records(micro: &RawTable, policy: &LabelPolicy) -> Result<Susceptibility> {
    if micro.schema.table_name != MICRO {
        return Err(Error::Schema {
            table: micro.schema.table_name.clone(),
            message: format!("expected the {MICRO} table"),
        });
    }
    let mut cultures = Vec::new();
    let mut skipped = Vec::new();
    type Key = (StayId, Antibiotic);
    let mut order: Vec<Key> = Vec::new();
    let mut observed: BTreeMap<Key, (SubjectId, Option<HadmId>, Vec<Interpretation>)> =
        BTreeMap::new();

    let skip = |skipped: &mut Vec<RejectedRow>, i: usize, stay: Option<String>, why: String| {
        skipped.push(RejectedRow {
            table: MICRO.to_owned(),
            row: i + 1,
            stay_id: stay,
            reason: why,
        });
    };

    for i in 0..micro.len() {
        let subject = SubjectId(required_string(micro, i, "subject_id"));
        let hadm = opt_string(micro, i, "hadm_id").map(HadmId);
        let stay = opt_string(micro, i, "stay_id");
        cultures.push(CultureResult {
            subject_id: subject.clone(),
            hadm_id: hadm.clone(),
            organism_name: required_string(micro, i, "org_name"),
            specimen_source: SpecimenSource::from_description(&required_string(
                micro,
                i,
                "spec_type_desc",
            )),
            collected_at: micro.get(i, "charttime").as_time().unwrap(),
        });

        let (ab, interp) = match (
            opt_string(micro, i, "ab_name"),
            opt_string(micro, i, "interpretation"),
        ) {
            (Some(ab), Some(interp)) => (ab, interp),
            // culture without a susceptibility panel
            _ => continue,
        };
        let Some(stay) = stay else {
            skip(
                &mut skipped,
                i,
                None,
                "susceptibility row without stay_id".into(),
            );
            continue;
        };
        let antibiotic = match ab.parse::<Antibiotic>() {
            Ok(a) => a,
            Err(_) => {
                skip(
                    &mut skipped,
                    i,
                    Some(stay),
                    format!("antibiotic {ab:?} not modelled"),
                );
                continue;
            }
        };
        let interp = match interp.parse::<Interpretation>() {
            Ok(x) => x,
            Err(_) => {
                skip(
                    &mut skipped,
                    i,
                    Some(stay),
                    format!("interpretation {interp:?}"),
                );
                continue;
            }
        };
        let key = (StayId(stay), antibiotic);
        let entry = observed.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (subject, hadm, Vec::new())
        });
        entry.2.push(interp);
    }

    let labels = order
        .into_iter()
        .map(|key| {
            let (subject_id, hadm_id, interps) = observed.remove(&key).unwrap();
            PrescriptionLabelRow {
                subject_id,
                stay_id: key.0,
                hadm_id,
                antibiotic: key.1,
                label: policy.label(interps),
            }
        })
        .collect();
    Ok(Susceptibility {
        cultures,
        labels,
        skipped,
    })
}
