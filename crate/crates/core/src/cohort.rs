//! Patients, ED visits, susceptibility labels and the patient-grouped
//! train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = NaiveDateTime;

/// Rendering used for timestamps in CSV output and in pseudo-notes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Accepts ISO-8601 date-times with either a `T` or a space separator,
/// optional fractional seconds, and bare dates.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let text = text.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(ts);
        }
    }
    chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(SubjectId);
id_newtype!(StayId);
id_newtype!(HadmId);

/// The six clinical modalities, in note order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Arrival,
    Triage,
    Medrecon,
    Vitals,
    Diagnoses,
    Pyxis,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Arrival,
        Modality::Triage,
        Modality::Medrecon,
        Modality::Vitals,
        Modality::Diagnoses,
        Modality::Pyxis,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Modality::Arrival => "arrival",
            Modality::Triage => "triage",
            Modality::Medrecon => "medrecon",
            Modality::Vitals => "vitals",
            Modality::Diagnoses => "diagnoses",
            Modality::Pyxis => "pyxis",
        }
    }

    /// Human-readable name used in the empty-modality marker sentence.
    pub fn display_name(self) -> &'static str {
        match self {
            Modality::Arrival => "arrival",
            Modality::Triage => "triage",
            Modality::Medrecon => "medication reconciliation",
            Modality::Vitals => "vital sign",
            Modality::Diagnoses => "diagnosis",
            Modality::Pyxis => "Pyxis dispensation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Antibiotic {
    Clindamycin,
    Daptomycin,
    Erythromycin,
    Gentamicin,
    Levofloxacin,
    Oxacillin,
    Rifampin,
    Tetracycline,
    #[serde(rename = "Trimethoprim/sulfa")]
    TrimethoprimSulfa,
    Vancomycin,
}

impl Antibiotic {
    pub const ALL: [Antibiotic; 10] = [
        Antibiotic::Clindamycin,
        Antibiotic::Daptomycin,
        Antibiotic::Erythromycin,
        Antibiotic::Gentamicin,
        Antibiotic::Levofloxacin,
        Antibiotic::Oxacillin,
        Antibiotic::Rifampin,
        Antibiotic::Tetracycline,
        Antibiotic::TrimethoprimSulfa,
        Antibiotic::Vancomycin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Antibiotic::Clindamycin => "Clindamycin",
            Antibiotic::Daptomycin => "Daptomycin",
            Antibiotic::Erythromycin => "Erythromycin",
            Antibiotic::Gentamicin => "Gentamicin",
            Antibiotic::Levofloxacin => "Levofloxacin",
            Antibiotic::Oxacillin => "Oxacillin",
            Antibiotic::Rifampin => "Rifampin",
            Antibiotic::Tetracycline => "Tetracycline",
            Antibiotic::TrimethoprimSulfa => "Trimethoprim/sulfa",
            Antibiotic::Vancomycin => "Vancomycin",
        }
    }

    /// File-name-safe identifier.
    pub fn slug(self) -> String {
        self.name().to_ascii_lowercase().replace('/', "_")
    }

    pub fn index(self) -> usize {
        Antibiotic::ALL.iter().position(|&a| a == self).unwrap()
    }
}

impl fmt::Display for Antibiotic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Antibiotic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let found = Antibiotic::ALL.iter().copied().find(|a| {
            let name: String = a
                .name()
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            name == norm
        });
        match found {
            Some(a) => Ok(a),
            None if norm == "trimethoprimsulfamethoxazole" || norm == "trimethoprimsul" => {
                Ok(Antibiotic::TrimethoprimSulfa)
            }
            None => Err(Error::Config(format!("unknown antibiotic {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalInfo {
    pub intime: Timestamp,
    pub gender: Option<String>,
    pub race: Option<String>,
    pub arrival_transport: Option<String>,
    pub age: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageInfo {
    pub temperature: Option<f64>,
    pub heartrate: Option<f64>,
    pub resprate: Option<f64>,
    pub o2sat: Option<f64>,
    pub sbp: Option<f64>,
    pub dbp: Option<f64>,
    pub pain: Option<String>,
    pub acuity: Option<i64>,
    pub chiefcomplaint: Option<String>,
}

impl TriageInfo {
    pub fn is_empty(&self) -> bool {
        *self == TriageInfo::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedreconEntry {
    pub charttime: Timestamp,
    pub name: String,
    pub etcdescription: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalSign {
    pub charttime: Timestamp,
    pub temperature: Option<f64>,
    pub heartrate: Option<f64>,
    pub resprate: Option<f64>,
    pub o2sat: Option<f64>,
    pub sbp: Option<f64>,
    pub dbp: Option<f64>,
    pub rhythm: Option<String>,
    pub pain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisCode {
    pub icd_code: String,
    pub icd_version: i64,
    pub icd_title: String,
}

impl DiagnosisCode {
    /// Category-level code: the first three characters.
    pub fn prefix(&self) -> &str {
        let end = self
            .icd_code
            .char_indices()
            .nth(3)
            .map_or(self.icd_code.len(), |(i, _)| i);
        &self.icd_code[..end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyxisEvent {
    pub charttime: Timestamp,
    pub name: String,
}

/// One emergency-department stay with its six modality row sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EDVisit {
    pub subject_id: SubjectId,
    pub stay_id: StayId,
    pub hadm_id: Option<HadmId>,
    pub arrival: ArrivalInfo,
    #[serde(default)]
    pub triage: TriageInfo,
    #[serde(default)]
    pub medrecon: Vec<MedreconEntry>,
    #[serde(default)]
    pub vitals: Vec<VitalSign>,
    #[serde(default)]
    pub diagnoses: Vec<DiagnosisCode>,
    #[serde(default)]
    pub pyxis: Vec<PyxisEvent>,
}

impl EDVisit {
    pub fn new(
        subject_id: SubjectId,
        stay_id: StayId,
        hadm_id: Option<HadmId>,
        arrival: ArrivalInfo,
    ) -> Self {
        EDVisit {
            subject_id,
            stay_id,
            hadm_id,
            arrival,
            triage: TriageInfo::default(),
            medrecon: Vec::new(),
            vitals: Vec::new(),
            diagnoses: Vec::new(),
            pyxis: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.subject_id.0.is_empty() || self.stay_id.0.is_empty() {
            return Err(Error::Validation {
                message: "visit identifiers must be non-empty".into(),
                rows: vec![format!(
                    "subject={:?} stay={:?}",
                    self.subject_id.0, self.stay_id.0
                )],
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecimenSource {
    Blood,
    Urine,
    CerebralSpinalFluid,
    PleuralCavity,
    JointFluid,
    Other,
}

impl SpecimenSource {
    pub const STERILE_FLUIDS: [SpecimenSource; 5] = [
        SpecimenSource::Blood,
        SpecimenSource::Urine,
        SpecimenSource::CerebralSpinalFluid,
        SpecimenSource::PleuralCavity,
        SpecimenSource::JointFluid,
    ];

    /// Maps a free-text specimen description (e.g. `"BLOOD CULTURE"`,
    /// `"CSF;SPINAL FLUID"`) onto the enumerated sources.
    pub fn from_description(desc: &str) -> SpecimenSource {
        let d = desc.to_ascii_uppercase();
        if d.contains("CSF") || d.contains("SPINAL") || d.contains("CEREBRAL") {
            SpecimenSource::CerebralSpinalFluid
        } else if d.contains("PLEURAL") {
            SpecimenSource::PleuralCavity
        } else if d.contains("JOINT") {
            SpecimenSource::JointFluid
        } else if d.contains("BLOOD") {
            SpecimenSource::Blood
        } else if d.contains("URINE") {
            SpecimenSource::Urine
        } else {
            SpecimenSource::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CultureResult {
    pub subject_id: SubjectId,
    pub hadm_id: Option<HadmId>,
    pub organism_name: String,
    pub specimen_source: SpecimenSource,
    pub collected_at: Timestamp,
}

/// Laboratory interpretation of a susceptibility test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpretation {
    Susceptible,
    Intermediate,
    Resistant,
}

impl FromStr for Interpretation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" | "SUSCEPTIBLE" => Ok(Interpretation::Susceptible),
            "I" | "INTERMEDIATE" => Ok(Interpretation::Intermediate),
            "R" | "RESISTANT" => Ok(Interpretation::Resistant),
            other => Err(Error::Config(format!("unknown interpretation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// label 1 = susceptible
    #[default]
    Susceptible,
    /// label 1 = resistant
    Resistant,
}

/// How laboratory interpretations become binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelPolicy {
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default)]
    pub intermediate_is_susceptible: bool,
}

impl LabelPolicy {
    pub fn is_susceptible(&self, interp: Interpretation) -> bool {
        match interp {
            Interpretation::Susceptible => true,
            Interpretation::Resistant => false,
            Interpretation::Intermediate => self.intermediate_is_susceptible,
        }
    }

    /// Binary label for a (visit, antibiotic) pair given every interpretation
    /// observed for it: the pair counts as susceptible only if all are.
    pub fn label<I>(&self, interps: I) -> bool
    where
        I: IntoIterator<Item = Interpretation>,
    {
        let susceptible = interps.into_iter().all(|i| self.is_susceptible(i));
        match self.polarity {
            Polarity::Susceptible => susceptible,
            Polarity::Resistant => !susceptible,
        }
    }
}

/// One (visit, antibiotic) susceptibility observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrescriptionLabelRow {
    pub subject_id: SubjectId,
    pub stay_id: StayId,
    pub hadm_id: Option<HadmId>,
    pub antibiotic: Antibiotic,
    /// Positive class under the configured [`LabelPolicy`].
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionCriteria {
    /// Case-insensitive substrings; an organism qualifies if any matches.
    pub organism_patterns: Vec<String>,
    pub specimen_sources: Vec<SpecimenSource>,
}

impl Default for InclusionCriteria {
    fn default() -> Self {
        InclusionCriteria {
            organism_patterns: vec!["staph".to_owned()],
            specimen_sources: SpecimenSource::STERILE_FLUIDS.to_vec(),
        }
    }
}

impl InclusionCriteria {
    pub fn qualifies(&self, culture: &CultureResult) -> bool {
        let organism = culture.organism_name.to_lowercase();
        self.specimen_sources.contains(&culture.specimen_source)
            && self
                .organism_patterns
                .iter()
                .any(|p| organism.contains(&p.to_lowercase()))
    }
}

#[derive(Deserialize)]
struct CohortParts {
    visits: BTreeMap<StayId, EDVisit>,
    labels: Vec<PrescriptionLabelRow>,
    #[serde(default)]
    split: BTreeMap<SubjectId, Partition>,
}

impl TryFrom<CohortParts> for Cohort {
    type Error = Error;

    fn try_from(parts: CohortParts) -> Result<Self> {
        Cohort::from_parts(parts.visits, parts.labels, parts.split)
    }
}

/// Visits, their labels and (once assigned) the subject-level split.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CohortParts")]
pub struct Cohort {
    visits: BTreeMap<StayId, EDVisit>,
    labels: Vec<PrescriptionLabelRow>,
    split: BTreeMap<SubjectId, Partition>,
}

impl Cohort {
    /// Builds a cohort, checking that every label references an existing
    /// visit and that the split (if any) covers every labelled subject.
    pub fn from_parts(
        visits: BTreeMap<StayId, EDVisit>,
        labels: Vec<PrescriptionLabelRow>,
        split: BTreeMap<SubjectId, Partition>,
    ) -> Result<Self> {
        for (key, visit) in &visits {
            visit.validate()?;
            if *key != visit.stay_id {
                return Err(Error::Validation {
                    message: "visit keyed under a different stay_id".into(),
                    rows: vec![key.0.clone()],
                });
            }
        }
        let orphans: Vec<String> = labels
            .iter()
            .filter(|l| !visits.contains_key(&l.stay_id))
            .map(|l| format!("stay_id={} antibiotic={}", l.stay_id, l.antibiotic))
            .collect();
        if !orphans.is_empty() {
            return Err(Error::Validation {
                message: "label rows reference unknown stays".into(),
                rows: orphans,
            });
        }
        if !split.is_empty() {
            let uncovered: Vec<String> = labels
                .iter()
                .filter(|l| !split.contains_key(&l.subject_id))
                .map(|l| l.subject_id.0.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if !uncovered.is_empty() {
                return Err(Error::Validation {
                    message: "split does not cover every labelled subject".into(),
                    rows: uncovered,
                });
            }
        }
        Ok(Cohort {
            visits,
            labels,
            split,
        })
    }

    pub fn visits(&self) -> &BTreeMap<StayId, EDVisit> {
        &self.visits
    }

    pub fn labels(&self) -> &[PrescriptionLabelRow] {
        &self.labels
    }

    pub fn split(&self) -> &BTreeMap<SubjectId, Partition> {
        &self.split
    }

    pub fn is_split(&self) -> bool {
        !self.split.is_empty()
    }

    pub fn partition_of(&self, subject: &SubjectId) -> Option<Partition> {
        self.split.get(subject).copied()
    }

    /// Label-bearing visits in stay order; the row order used by every
    /// feature and embedding matrix.
    pub fn visit_order(&self) -> Vec<&StayId> {
        let labelled: BTreeSet<&StayId> = self.labels.iter().map(|l| &l.stay_id).collect();
        labelled.into_iter().collect()
    }

    pub fn antibiotics(&self) -> Vec<Antibiotic> {
        let set: BTreeSet<Antibiotic> = self.labels.iter().map(|l| l.antibiotic).collect();
        set.into_iter().collect()
    }

    pub fn subjects(&self) -> BTreeSet<&SubjectId> {
        self.labels.iter().map(|l| &l.subject_id).collect()
    }
}

/// Keeps label rows whose visit links (subject + admission) to at least one
/// qualifying culture; visits left without labels are dropped.
pub fn apply_inclusion_criteria(
    visits: Vec<EDVisit>,
    cultures: &[CultureResult],
    labels: Vec<PrescriptionLabelRow>,
    criteria: &InclusionCriteria,
) -> Result<Cohort> {
    let mut by_stay: BTreeMap<StayId, EDVisit> = BTreeMap::new();
    for visit in visits {
        by_stay.insert(visit.stay_id.clone(), visit);
    }

    let bad: Vec<String> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match by_stay.get(&l.stay_id) {
            None => Some(format!("row {i}: unknown stay_id {}", l.stay_id)),
            Some(v) if v.subject_id != l.subject_id => Some(format!(
                "row {i}: stay_id {} belongs to subject {}, label says {}",
                l.stay_id, v.subject_id, l.subject_id
            )),
            Some(_) => None,
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation {
            message: "label rows do not match any visit".into(),
            rows: bad,
        });
    }

    let qualifying: BTreeSet<(&SubjectId, &HadmId)> = cultures
        .iter()
        .filter(|c| criteria.qualifies(c))
        .filter_map(|c| c.hadm_id.as_ref().map(|h| (&c.subject_id, h)))
        .collect();

    let kept: Vec<PrescriptionLabelRow> = labels
        .into_iter()
        .filter(|l| {
            let visit = &by_stay[&l.stay_id];
            let hadm = visit.hadm_id.as_ref().or(l.hadm_id.as_ref());
            hadm.is_some_and(|h| qualifying.contains(&(&l.subject_id, h)))
        })
        .collect();

    let keep_stays: BTreeSet<StayId> = kept.iter().map(|l| l.stay_id.clone()).collect();
    by_stay.retain(|k, _| keep_stays.contains(k));
    Cohort::from_parts(by_stay, kept, BTreeMap::new())
}

/// Assigns whole subjects to train or test so that roughly `test_fraction`
/// of label rows land in test. Deterministic for a fixed seed.
pub fn grouped_split(cohort: &Cohort, test_fraction: f64, seed: u64) -> Result<Cohort> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rows_per_subject: BTreeMap<&SubjectId, usize> = BTreeMap::new();
    for l in &cohort.labels {
        *rows_per_subject.entry(&l.subject_id).or_default() += 1;
    }
    if rows_per_subject.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 labelled subjects, found {}",
            rows_per_subject.len()
        )));
    }

    let mut subjects: Vec<(&SubjectId, usize)> = rows_per_subject.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);

    let total: usize = subjects.iter().map(|(_, n)| n).sum();
    let target = test_fraction * total as f64;
    let mut test_rows = 0usize;
    let (mut n_train, mut n_test) = (0usize, 0usize);
    let mut split = BTreeMap::new();
    let last = subjects.len() - 1;
    for (i, (subject, n)) in subjects.iter().enumerate() {
        let closer = (target - (test_rows + n) as f64).abs() < (target - test_rows as f64).abs();
        // both partitions must end up non-empty
        let to_test = if i == last && n_test == 0 {
            true
        } else if i == last && n_train == 0 {
            false
        } else {
            closer
        };
        if to_test {
            test_rows += n;
            n_test += 1;
            split.insert((*subject).clone(), Partition::Test);
        } else {
            n_train += 1;
            split.insert((*subject).clone(), Partition::Train);
        }
    }
    Cohort::from_parts(cohort.visits.clone(), cohort.labels.clone(), split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub antibiotic: Antibiotic,
    pub train_count: usize,
    pub test_count: usize,
    pub prevalence_pct: f64,
}

/// Prevalence of each antibiotic: the share of label-bearing visits
/// (prescriptions) on which it was tested.
pub fn prevalence_table(cohort: &Cohort) -> Vec<PrevalenceRow> {
    let prescriptions = cohort.visit_order().len();
    Antibiotic::ALL
        .iter()
        .map(|&antibiotic| {
            let (mut train_count, mut test_count) = (0, 0);
            for l in cohort.labels.iter().filter(|l| l.antibiotic == antibiotic) {
                match cohort.partition_of(&l.subject_id) {
                    Some(Partition::Train) => train_count += 1,
                    Some(Partition::Test) => test_count += 1,
                    None => {}
                }
            }
            PrevalenceRow {
                antibiotic,
                train_count,
                test_count,
                prevalence_pct: prevalence_pct(train_count + test_count, prescriptions),
            }
        })
        .collect()
}

pub fn prevalence_pct(count: usize, prescriptions: usize) -> f64 {
    if prescriptions == 0 {
        0.0
    } else {
        count as f64 / prescriptions as f64 * 100.0
    }
}

/// Per-row labels and partitions aligned to a matrix row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub labels: BTreeMap<Antibiotic, Vec<Option<bool>>>,
    pub partition: Vec<Partition>,
}

impl Targets {
    /// Requires a split cohort; every row must be a labelled visit.
    pub fn from_cohort(cohort: &Cohort, rows: &[StayId]) -> Result<Self> {
        if !cohort.is_split() {
            return Err(Error::Split("cohort has no train/test assignment".into()));
        }
        let index: BTreeMap<&StayId, usize> =
            rows.iter().enumerate().map(|(i, s)| (s, i)).collect();
        if index.len() != rows.len() {
            return Err(Error::Validation {
                message: "duplicate stay ids in row order".into(),
                rows: vec![],
            });
        }
        let mut labels: BTreeMap<Antibiotic, Vec<Option<bool>>> = BTreeMap::new();
        let mut subject: Vec<Option<&SubjectId>> = vec![None; rows.len()];
        for l in cohort.labels() {
            let Some(&i) = index.get(&l.stay_id) else {
                continue;
            };
            labels
                .entry(l.antibiotic)
                .or_insert_with(|| vec![None; rows.len()])[i] = Some(l.label);
            subject[i] = Some(&l.subject_id);
        }
        let missing: Vec<String> = rows
            .iter()
            .zip(&subject)
            .filter(|(_, s)| s.is_none())
            .map(|(r, _)| r.0.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation {
                message: "rows without labels in the cohort".into(),
                rows: missing,
            });
        }
        let partition = subject
            .into_iter()
            .map(|s| {
                cohort
                    .partition_of(s.unwrap())
                    .expect("split covers labelled subjects")
            })
            .collect();
        Ok(Targets { labels, partition })
    }

    /// Rows in `part` carrying a label for `antibiotic`.
    pub fn mask(&self, antibiotic: Antibiotic, part: Partition) -> Vec<bool> {
        match self.labels.get(&antibiotic) {
            Some(ls) => ls
                .iter()
                .zip(&self.partition)
                .map(|(l, p)| l.is_some() && *p == part)
                .collect(),
            None => vec![false; self.partition.len()],
        }
    }

    /// Labels with unlabelled rows set to false; use with [`Targets::mask`].
    pub fn dense(&self, antibiotic: Antibiotic) -> Vec<bool> {
        match self.labels.get(&antibiotic) {
            Some(ls) => ls.iter().map(|l| l.unwrap_or(false)).collect(),
            None => vec![false; self.partition.len()],
        }
    }
}
