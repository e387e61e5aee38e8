//! Dummy-coded tabular features: numeric passthrough with missing
//! indicators, capped one-hot categoricals and multi-hot diagnosis
//! categories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::cohort::{Cohort, EDVisit, StayId};
use crate::embed::{read_matrix, write_matrix, MatrixHeader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_CARDINALITY_CAP: usize = 64;
/// Overflow bucket; bracketed so it cannot collide with a recorded value.
pub const OTHER: &str = "<other>";
pub const MISSING_CATEGORY: &str = "<missing>";

const VITAL_KINDS: [&str; 6] = [
    "temperature",
    "heartrate",
    "resprate",
    "o2sat",
    "sbp",
    "dbp",
];
const AGGREGATES: [&str; 4] = ["last", "min", "max", "mean"];
const CATEGORICALS: [&str; 5] = [
    "gender",
    "race",
    "arrival_transport",
    "chiefcomplaint",
    "triage_pain",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame<T: Scalar = f32> {
    pub stay_ids: Vec<StayId>,
    pub columns: Vec<String>,
    /// Masked cells hold zero.
    pub values: Array2<T>,
    /// True where the value was observed.
    pub mask: Array2<bool>,
    /// Source field → emitted columns.
    pub dictionary: BTreeMap<String, Vec<String>>,
}

impl<T: Scalar> FeatureFrame<T> {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Source field an emitted column came from.
    pub fn source_of(&self, column: &str) -> Option<&str> {
        self.dictionary
            .iter()
            .find(|(_, cols)| cols.iter().any(|c| c == column))
            .map(|(s, _)| s.as_str())
    }

    /// Values with masked cells as NaN, the trainer's missing marker.
    pub fn to_nan_matrix(&self) -> Array2<T> {
        let mut out = self.values.clone();
        for ((i, j), m) in self.mask.indexed_iter() {
            if !m {
                out[[i, j]] = T::nan();
            }
        }
        out
    }

    /// Writes the matrix (masked cells as NaN) plus a dictionary sidecar.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let header = MatrixHeader {
            backend_id: "tabular".into(),
            dimension: self.columns.len(),
            count: self.len(),
            stay_ids: self.stay_ids.clone(),
            truncated: None,
            columns: Some(self.columns.clone()),
        };
        write_matrix(stem, &header, &self.to_nan_matrix())?;
        let dict = stem.with_extension("dict.json");
        fs::write(
            &dict,
            serde_json::to_string_pretty(&self.dictionary)? + "\n",
        )
        .map_err(|e| Error::io(&dict, e))
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let (header, data) = read_matrix::<T>(stem)?;
        let dict = stem.with_extension("dict.json");
        let text = fs::read_to_string(&dict).map_err(|e| Error::io(&dict, e))?;
        let dictionary = serde_json::from_str(&text)?;
        let mask = data.mapv(|v| !v.is_nan());
        let values = data.mapv(|v| if v.is_nan() { T::zero() } else { v });
        Ok(FeatureFrame {
            stay_ids: header.stay_ids,
            columns: header.columns.unwrap_or_default(),
            values,
            mask,
            dictionary,
        })
    }
}

fn categorical_value(visit: &EDVisit, field: &str) -> String {
    let v = match field {
        "gender" => visit.arrival.gender.as_deref(),
        "race" => visit.arrival.race.as_deref(),
        "arrival_transport" => visit.arrival.arrival_transport.as_deref(),
        "chiefcomplaint" => visit.triage.chiefcomplaint.as_deref(),
        "triage_pain" => visit.triage.pain.as_deref(),
        _ => unreachable!("unknown categorical {field}"),
    };
    v.map_or_else(|| MISSING_CATEGORY.to_owned(), str::to_owned)
}

fn numeric_values(visit: &EDVisit) -> Vec<(String, Option<f64>)> {
    let t = &visit.triage;
    let mut out = vec![
        ("age".to_owned(), visit.arrival.age.map(|a| a as f64)),
        ("triage.temperature".to_owned(), t.temperature),
        ("triage.heartrate".to_owned(), t.heartrate),
        ("triage.resprate".to_owned(), t.resprate),
        ("triage.o2sat".to_owned(), t.o2sat),
        ("triage.sbp".to_owned(), t.sbp),
        ("triage.dbp".to_owned(), t.dbp),
        ("triage.acuity".to_owned(), t.acuity.map(|a| a as f64)),
    ];
    for kind in VITAL_KINDS {
        let series: Vec<f64> = visit
            .vitals
            .iter()
            .filter_map(|v| match kind {
                "temperature" => v.temperature,
                "heartrate" => v.heartrate,
                "resprate" => v.resprate,
                "o2sat" => v.o2sat,
                "sbp" => v.sbp,
                _ => v.dbp,
            })
            .collect();
        let agg = |name: &str| -> Option<f64> {
            if series.is_empty() {
                return None;
            }
            Some(match name {
                "last" => *series.last().unwrap(),
                "min" => series.iter().copied().fold(f64::INFINITY, f64::min),
                "max" => series.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => series.iter().sum::<f64>() / series.len() as f64,
            })
        };
        for a in AGGREGATES {
            out.push((format!("vitals.{kind}.{a}"), agg(a)));
        }
    }
    out
}

fn counts(visit: &EDVisit) -> [(&'static str, f64); 3] {
    [
        ("count.medrecon", visit.medrecon.len() as f64),
        ("count.vitals", visit.vitals.len() as f64),
        ("count.pyxis", visit.pyxis.len() as f64),
    ]
}

fn dx_column(version: i64, prefix: &str) -> String {
    format!("dx.icd{version}.{prefix}")
}

/// Kept categories for one field: the `cap` most frequent (ties by name).
fn top_categories(values: &[String], cap: usize) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for v in values {
        *freq.entry(v).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(cap)
        .map(|(v, _)| v.to_owned())
        .collect()
}

/// Features for `visits` in the given order.
pub fn featurize_visits<T: Scalar>(
    visits: &[&EDVisit],
    cardinality_cap: usize,
) -> Result<FeatureFrame<T>> {
    if cardinality_cap == 0 {
        return Err(Error::Config("cardinality_cap must be at least 1".into()));
    }
    let mut columns: Vec<String> = Vec::new();
    let mut dictionary: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut emit = |source: &str, col: String, columns: &mut Vec<String>| {
        dictionary
            .entry(source.to_owned())
            .or_default()
            .push(col.clone());
        columns.push(col);
    };

    let placeholder = placeholder_visit();
    for (name, _) in &numeric_values(&placeholder) {
        emit(name, name.clone(), &mut columns);
        emit(name, format!("{name}.missing"), &mut columns);
    }
    for (name, _) in counts(&placeholder) {
        emit(name, name.to_owned(), &mut columns);
    }
    let mut kept: Vec<Vec<String>> = Vec::new();
    for field in CATEGORICALS {
        let vals: Vec<String> = visits.iter().map(|v| categorical_value(v, field)).collect();
        let top = top_categories(&vals, cardinality_cap);
        for c in &top {
            emit(field, format!("{field}={c}"), &mut columns);
        }
        emit(field, format!("{field}={OTHER}"), &mut columns);
        kept.push(top);
    }
    let dx: BTreeSet<(i64, String)> = visits
        .iter()
        .flat_map(|v| {
            v.diagnoses
                .iter()
                .map(|d| (d.icd_version, d.prefix().to_owned()))
        })
        .collect();
    for (version, prefix) in &dx {
        emit("diagnoses", dx_column(*version, prefix), &mut columns);
    }
    let index: HashMap<&str, usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    if index.len() != columns.len() {
        return Err(Error::Validation {
            message: "duplicate feature column names".into(),
            rows: vec![],
        });
    }

    let width = columns.len();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = visits
        .par_iter()
        .map(|visit| {
            let mut vals = vec![0.0; width];
            let mut mask = vec![true; width];
            for (name, v) in numeric_values(visit) {
                let i = index[name.as_str()];
                match v {
                    Some(x) if x.is_finite() => vals[i] = x,
                    _ => {
                        mask[i] = false;
                        vals[index[format!("{name}.missing").as_str()]] = 1.0;
                    }
                }
            }
            for (name, v) in counts(visit) {
                vals[index[name]] = v;
            }
            for (field, top) in CATEGORICALS.iter().zip(&kept) {
                let v = categorical_value(visit, field);
                let col = if top.contains(&v) {
                    format!("{field}={v}")
                } else {
                    format!("{field}={OTHER}")
                };
                vals[index[col.as_str()]] = 1.0;
            }
            for d in &visit.diagnoses {
                vals[index[dx_column(d.icd_version, d.prefix()).as_str()]] = 1.0;
            }
            (vals, mask)
        })
        .collect();
    let n = visits.len();
    let mut values = Array2::from_elem((n, width), T::zero());
    let mut mask = Array2::from_elem((n, width), true);
    for (i, (v, m)) in rows.into_iter().enumerate() {
        for j in 0..width {
            values[[i, j]] = T::from_f64_lossy(v[j]);
            mask[[i, j]] = m[j];
        }
    }
    Ok(FeatureFrame {
        stay_ids: visits.iter().map(|v| v.stay_id.clone()).collect(),
        columns,
        values,
        mask,
        dictionary,
    })
}

fn placeholder_visit() -> EDVisit {
    EDVisit::new(
        "_".into(),
        "_".into(),
        None,
        crate::cohort::ArrivalInfo {
            intime: chrono::NaiveDateTime::default(),
            gender: None,
            race: None,
            arrival_transport: None,
            age: None,
        },
    )
}

/// Features for every label-bearing visit, in [`Cohort::visit_order`].
pub fn featurize_tabular<T: Scalar>(
    cohort: &Cohort,
    cardinality_cap: usize,
) -> Result<FeatureFrame<T>> {
    let visits: Vec<&EDVisit> = cohort
        .visit_order()
        .into_iter()
        .map(|s| &cohort.visits()[s])
        .collect();
    featurize_visits(&visits, cardinality_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{parse_timestamp, ArrivalInfo, DiagnosisCode, VitalSign};

    fn visit(i: usize, gender: Option<&str>, dx: &[(&str, i64)]) -> EDVisit {
        let mut v = EDVisit::new(
            format!("p{i}").into(),
            format!("s{i}").into(),
            None,
            ArrivalInfo {
                intime: parse_timestamp("2150-01-01 10:00:00").unwrap(),
                gender: gender.map(Into::into),
                race: Some("WHITE".into()),
                arrival_transport: None,
                age: if i % 2 == 0 {
                    Some(30 + i as i64)
                } else {
                    None
                },
            },
        );
        v.diagnoses = dx
            .iter()
            .map(|(c, ver)| DiagnosisCode {
                icd_code: (*c).into(),
                icd_version: *ver,
                icd_title: "t".into(),
            })
            .collect();
        v
    }

    fn five() -> Vec<EDVisit> {
        vec![
            visit(0, Some("F"), &[("4019", 9), ("25000", 9)]),
            visit(1, Some("M"), &[("4011", 9)]),
            visit(2, Some("F"), &[("I10", 10), ("E119", 10)]),
            visit(3, None, &[]),
            visit(4, Some("X"), &[("E119", 10), ("E111", 10), ("4019", 9)]),
        ]
    }

    #[test]
    fn brute_force_tally_on_five_visits() {
        let vs = five();
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f64> = featurize_visits(&refs, 64).unwrap();
        let dx_cols: Vec<&String> = f.columns.iter().filter(|c| c.starts_with("dx.")).collect();
        // distinct (version, prefix): 401,250 (v9); I10,E11 (v10)
        assert_eq!(dx_cols.len(), 4);
        let expected_sums = [
            ("dx.icd9.401", 3.0),
            ("dx.icd9.250", 1.0),
            ("dx.icd10.I10", 1.0),
            ("dx.icd10.E11", 2.0),
        ];
        for (col, sum) in expected_sums {
            let j = f.column(col).unwrap();
            assert_eq!(f.values.column(j).sum(), sum, "{col}");
        }
        // numeric: 8 base + 24 vitals aggregates, each with an indicator
        let genders = 4; // F, M, <missing>, X
        let races = 1;
        let transports = 1;
        let complaints = 1;
        let pains = 1;
        let expected = 32 * 2
            + 3
            + (genders + 1)
            + (races + 1)
            + (transports + 1)
            + (complaints + 1)
            + (pains + 1)
            + 4;
        assert_eq!(f.columns.len(), expected);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let vs = five();
        let refs: Vec<&EDVisit> = vs.iter().collect();
        for cap in [1, 2, 64] {
            let f: FeatureFrame<f32> = featurize_visits(&refs, cap).unwrap();
            for field in CATEGORICALS {
                let cols: Vec<usize> = f.dictionary[field]
                    .iter()
                    .map(|c| f.column(c).unwrap())
                    .collect();
                for i in 0..f.len() {
                    let s: f32 = cols.iter().map(|&j| f.values[[i, j]]).sum();
                    assert_eq!(s, 1.0);
                }
            }
        }
    }

    #[test]
    fn cap_one_keeps_most_frequent_plus_other() {
        let vs = vec![
            visit(0, Some("A"), &[]),
            visit(1, Some("B"), &[]),
            visit(2, Some("A"), &[]),
            visit(3, Some("C"), &[]),
        ];
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f64> = featurize_visits(&refs, 1).unwrap();
        assert_eq!(f.dictionary["gender"], vec!["gender=A", "gender=<other>"]);
        let other = f.column("gender=<other>").unwrap();
        assert_eq!(f.values.column(other).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn literal_other_value_keeps_its_own_column() {
        let vs = vec![visit(0, Some("OTHER"), &[]), visit(1, Some("B"), &[])];
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f64> = featurize_visits(&refs, 64).unwrap();
        assert!(f.column("gender=OTHER").is_some());
        assert!(f.column("gender=<other>").is_some());
    }

    #[test]
    fn rare_category_under_cap_gets_a_column() {
        let vs = five();
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f64> = featurize_visits(&refs, 64).unwrap();
        let j = f.column("gender=X").unwrap();
        assert_eq!(f.values[[4, j]], 1.0);
        assert_eq!(f.values.column(j).sum(), 1.0);
    }

    #[test]
    fn missing_numerics_are_masked_not_nan() {
        let mut vs = five();
        vs[0].vitals.push(VitalSign {
            charttime: parse_timestamp("2150-01-01 11:00:00").unwrap(),
            temperature: None,
            heartrate: Some(90.0),
            resprate: None,
            o2sat: None,
            sbp: None,
            dbp: None,
            rhythm: None,
            pain: None,
        });
        let second = VitalSign {
            heartrate: Some(110.0),
            ..vs[0].vitals[0].clone()
        };
        vs[0].vitals.push(second);
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f64> = featurize_visits(&refs, 64).unwrap();
        assert!(f.values.iter().all(|v| v.is_finite()));
        let age = f.column("age").unwrap();
        let age_missing = f.column("age.missing").unwrap();
        assert!(!f.mask[[1, age]]);
        assert_eq!(f.values[[1, age]], 0.0);
        assert_eq!(f.values[[1, age_missing]], 1.0);
        assert_eq!(f.values[[0, age]], 30.0);
        let col = |n: &str| f.values[[0, f.column(n).unwrap()]];
        assert_eq!(col("vitals.heartrate.last"), 110.0);
        assert_eq!(col("vitals.heartrate.min"), 90.0);
        assert_eq!(col("vitals.heartrate.max"), 110.0);
        assert_eq!(col("vitals.heartrate.mean"), 100.0);
        assert_eq!(col("count.vitals"), 2.0);
        assert!(f.to_nan_matrix()[[1, age]].is_nan());
    }

    #[test]
    fn dictionary_maps_every_column_to_one_source() {
        let vs = five();
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let f: FeatureFrame<f32> = featurize_visits(&refs, 2).unwrap();
        let mut seen = BTreeMap::new();
        for (src, cols) in &f.dictionary {
            for c in cols {
                assert!(
                    seen.insert(c.clone(), src.clone()).is_none(),
                    "{c} listed twice"
                );
            }
        }
        assert_eq!(seen.len(), f.columns.len());
        for c in &f.columns {
            assert_eq!(f.source_of(c), Some(seen[c].as_str()));
        }
    }

    #[test]
    fn deterministic_and_round_trips_through_disk() {
        let vs = five();
        let refs: Vec<&EDVisit> = vs.iter().collect();
        let a: FeatureFrame<f32> = featurize_visits(&refs, 64).unwrap();
        let b: FeatureFrame<f32> = featurize_visits(&refs, 64).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("tab");
        a.write(&stem).unwrap();
        assert_eq!(FeatureFrame::<f32>::read(&stem).unwrap(), a);
    }
}
