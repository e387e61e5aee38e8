//! Synthetic cohorts shaped like the ED extracts, with planted phenotype
//! clusters and a known susceptibility signal.

mod pools;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

pub use pools::{background_pools, builtin_phenotypes};

use crate::cohort::{format_timestamp, Antibiotic, Timestamp};
use crate::error::{Error, Result};
use crate::ingest::schema::{self, ARRIVAL, DIAGNOSIS, MEDRECON, MICRO, PYXIS, TRIAGE, VITALS};

/// Free-text fields that can carry the phenotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Triage chief complaint.
    Complaint,
    /// Diagnosis code and title.
    Diagnosis,
    /// Medication reconciliation drug names.
    Medication,
    /// Pyxis dispensations.
    Dispensed,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Complaint,
        Channel::Diagnosis,
        Channel::Medication,
        Channel::Dispensed,
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub complaints: Vec<String>,
    /// (ICD-10 code, title)
    pub diagnoses: Vec<(String, String)>,
    pub medications: Vec<String>,
    pub dispensed: Vec<String>,
}

impl Pools {
    fn len(&self, channel: Channel) -> usize {
        match channel {
            Channel::Complaint => self.complaints.len(),
            Channel::Diagnosis => self.diagnoses.len(),
            Channel::Medication => self.medications.len(),
            Channel::Dispensed => self.dispensed.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phenotype {
    pub name: String,
    pub prior: f64,
    /// Terms the phenotype's text fields are built from.
    pub vocabulary: Vec<String>,
    pub pools: Pools,
    /// Shift of the susceptibility log-odds; missing antibiotics get 0.
    #[serde(default)]
    pub offsets: BTreeMap<Antibiotic, f64>,
}

impl Phenotype {
    pub fn offset(&self, ab: Antibiotic) -> f64 {
        self.offsets.get(&ab).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub phenotypes: Vec<Phenotype>,
    /// Baseline probability of a susceptible result.
    pub base_rates: BTreeMap<Antibiotic, f64>,
    /// Probability that a visit's culture is tested against each antibiotic.
    pub coverage: BTreeMap<Antibiotic, f64>,
    /// Probability a patient has two or more visits.
    pub multi_visit_rate: f64,
    pub signal_channels: Vec<Channel>,
    /// Share of visits whose only culture fails the inclusion criteria.
    pub noise_culture_rate: f64,
    /// Per-field null probability for nullable measurements.
    pub null_rate: f64,
    pub seed: u64,
}

/// Fraction of prescriptions tested per antibiotic in the reference cohort.
pub fn reference_coverage() -> BTreeMap<Antibiotic, f64> {
    use Antibiotic::*;
    BTreeMap::from([
        (Clindamycin, 0.5469),
        (Daptomycin, 0.3751),
        (Erythromycin, 0.5459),
        (Gentamicin, 0.9489),
        (Levofloxacin, 0.6000),
        (Oxacillin, 0.5632),
        (Rifampin, 0.3996),
        (Tetracycline, 0.7657),
        (TrimethoprimSulfa, 0.7166),
        (Vancomycin, 0.5253),
    ])
}

fn default_base_rates() -> BTreeMap<Antibiotic, f64> {
    let rates = [0.65, 0.95, 0.45, 0.95, 0.6, 0.5, 0.97, 0.9, 0.95, 0.98];
    Antibiotic::ALL.iter().copied().zip(rates).collect()
}

const DEFAULT_PRIORS: [f64; 7] = [0.2, 0.15, 0.15, 0.1, 0.15, 0.15, 0.1];

// rows follow builtin_phenotypes(), columns follow Antibiotic::ALL
const DEFAULT_OFFSETS: [[f64; 10]; 7] = [
    [-1.5, -1.0, -1.5, 0.0, -1.0, -2.0, 0.0, -0.5, -0.5, -1.5],
    [-0.5, 0.5, -0.5, -1.0, 0.0, -1.0, 0.5, 0.0, -1.0, 0.0],
    [1.0, 0.0, 1.0, 0.5, -1.5, 1.0, 0.0, 0.5, 0.5, 0.5],
    [1.5, 1.0, 1.5, 1.0, 1.0, 1.5, 1.0, 1.0, 1.0, 1.0],
    [0.0, -0.5, 0.0, 0.5, 1.5, 0.0, -1.0, -1.5, 0.0, 0.5],
    [-1.0, 0.0, -1.0, 0.0, -2.0, -0.5, 0.5, 0.0, -0.5, -0.5],
    [0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.5, 1.5, 1.0],
];

impl Default for SynthConfig {
    fn default() -> Self {
        let phenotypes = builtin_phenotypes()
            .into_iter()
            .zip(DEFAULT_PRIORS)
            .zip(DEFAULT_OFFSETS)
            .map(|((mut p, prior), offsets)| {
                p.prior = prior;
                p.offsets = Antibiotic::ALL.iter().copied().zip(offsets).collect();
                p
            })
            .collect();
        SynthConfig {
            n_patients: 500,
            phenotypes,
            base_rates: default_base_rates(),
            coverage: reference_coverage(),
            multi_visit_rate: 0.15,
            signal_channels: Channel::ALL.to_vec(),
            noise_culture_rate: 0.1,
            null_rate: 0.05,
            seed: 0,
        }
    }
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in [0, 1], got {p}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::Config("n_patients must be at least 1".into()));
        }
        if self.phenotypes.is_empty() {
            return Err(Error::Config("at least one phenotype is required".into()));
        }
        let total: f64 = self.phenotypes.iter().map(|p| p.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "phenotype priors sum to {total}, not 1"
            )));
        }
        let mut names = BTreeSet::new();
        for p in &self.phenotypes {
            check_probability(&format!("prior of {}", p.name), p.prior)?;
            if !names.insert(&p.name) {
                return Err(Error::Config(format!(
                    "phenotype {:?} listed twice",
                    p.name
                )));
            }
            for &c in &self.signal_channels {
                if p.pools.len(c) == 0 {
                    return Err(Error::Config(format!(
                        "phenotype {:?} has an empty {c:?} pool",
                        p.name
                    )));
                }
            }
            if p.offsets.values().any(|o| !o.is_finite()) {
                return Err(Error::Config(format!(
                    "phenotype {:?} has a non-finite offset",
                    p.name
                )));
            }
        }
        for (ab, r) in &self.base_rates {
            check_probability(&format!("base rate of {ab}"), *r)?;
        }
        for (ab, r) in &self.coverage {
            check_probability(&format!("coverage of {ab}"), *r)?;
        }
        check_probability("multi_visit_rate", self.multi_visit_rate)?;
        check_probability("noise_culture_rate", self.noise_culture_rate)?;
        check_probability("null_rate", self.null_rate)?;
        let background = background_pools();
        for c in Channel::ALL {
            if background.len(c) == 0 {
                return Err(Error::Config(format!("background {c:?} pool is empty")));
            }
        }
        Ok(())
    }

    pub fn base_rate(&self, ab: Antibiotic) -> f64 {
        self.base_rates.get(&ab).copied().unwrap_or(0.5)
    }

    /// P(susceptible | phenotype) = logistic(logit(base) + offset).
    pub fn susceptible_probability(&self, phenotype: &Phenotype, ab: Antibiotic) -> f64 {
        let base = self.base_rate(ab);
        if base <= 0.0 {
            return 0.0;
        }
        if base >= 1.0 {
            return 1.0;
        }
        let z = (base / (1.0 - base)).ln() + phenotype.offset(ab);
        1.0 / (1.0 + (-z).exp())
    }
}

/// AUROC of the Bayes-optimal scorer when the score is the group-level
/// positive probability: groups are `(weight, p_positive)`. `None` when one
/// class has zero mass.
pub fn mixture_auroc(groups: &[(f64, f64)]) -> Option<f64> {
    let pos: f64 = groups.iter().map(|(w, p)| w * p).sum();
    let neg: f64 = groups.iter().map(|(w, p)| w * (1.0 - p)).sum();
    if pos <= 0.0 || neg <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    for &(wa, pa) in groups {
        for &(wb, pb) in groups {
            let pairs = wa * pa * wb * (1.0 - pb);
            if pa > pb {
                acc += pairs;
            } else if pa == pb {
                acc += 0.5 * pairs;
            }
        }
    }
    Some(acc / (pos * neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeSummary {
    pub name: String,
    pub prior: f64,
    pub vocabulary: Vec<String>,
    pub patients: usize,
    pub susceptible_probability: BTreeMap<Antibiotic, f64>,
}

/// Ground truth written next to the generated tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub n_patients: usize,
    pub n_visits: usize,
    pub n_susceptibility_rows: usize,
    pub signal_channels: Vec<Channel>,
    pub phenotypes: Vec<PhenotypeSummary>,
    pub patient_phenotype: BTreeMap<String, String>,
    pub stay_phenotype: BTreeMap<String, String>,
    /// Stays whose only culture fails the inclusion criteria.
    pub excluded_stays: Vec<String>,
    pub bayes_auroc: BTreeMap<Antibiotic, f64>,
}

impl SynthManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct Synthetic {
    /// CSV text keyed by table name.
    pub tables: BTreeMap<String, String>,
    pub manifest: SynthManifest,
}

impl Synthetic {
    /// Writes `<table>.csv` for every table plus `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in &self.tables {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

struct Tables {
    writers: BTreeMap<&'static str, csv::Writer<Vec<u8>>>,
}

impl Tables {
    fn new() -> Result<Self> {
        let mut writers = BTreeMap::new();
        for name in schema::ALL_TABLES {
            let s = schema::schema(name).expect("builtin table");
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(s.columns.iter().map(|c| c.name.as_str()))?;
            writers.insert(name, w);
        }
        Ok(Tables { writers })
    }

    fn push(&mut self, table: &'static str, row: &[String]) -> Result<()> {
        self.writers
            .get_mut(table)
            .expect("known table")
            .write_record(row)?;
        Ok(())
    }

    fn finish(self) -> Result<BTreeMap<String, String>> {
        self.writers
            .into_iter()
            .map(|(name, w)| {
                let bytes = w
                    .into_inner()
                    .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
                Ok((
                    name.to_owned(),
                    String::from_utf8(bytes).expect("utf-8 input"),
                ))
            })
            .collect()
    }
}

struct Sampler<'a> {
    rng: ChaCha8Rng,
    config: &'a SynthConfig,
    background: Pools,
}

impl Sampler<'_> {
    fn maybe(&mut self, value: String) -> String {
        if self.rng.gen::<f64>() < self.config.null_rate {
            String::new()
        } else {
            value
        }
    }

    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        Normal::new(mean, sd)
            .expect("valid sd")
            .sample(&mut self.rng)
    }

    fn vital(&mut self, mean: f64, sd: f64, lo: f64, hi: f64, decimals: usize) -> String {
        let v = self.normal(mean, sd).clamp(lo, hi);
        self.maybe(format!("{v:.decimals$}"))
    }

    fn maybe_choice(&mut self, items: &[&str]) -> String {
        let v = items.choose(&mut self.rng).unwrap().to_string();
        self.maybe(v)
    }

    fn maybe_int(&mut self, lo: i64, hi: i64) -> String {
        let v = self.rng.gen_range(lo..=hi).to_string();
        self.maybe(v)
    }

    fn pool(&mut self, pheno: &Pools, channel: Channel, signal: bool) -> usize {
        let n = if signal {
            pheno.len(channel)
        } else {
            self.background.len(channel)
        };
        self.rng.gen_range(0..n)
    }

    fn signal(&self, channel: Channel) -> bool {
        self.config.signal_channels.contains(&channel)
    }

    fn complaint(&mut self, pheno: &Phenotype) -> String {
        let signal = self.signal(Channel::Complaint);
        let i = self.pool(&pheno.pools, Channel::Complaint, signal);
        if signal {
            pheno.pools.complaints[i].clone()
        } else {
            self.background.complaints[i].clone()
        }
    }

    /// First pick comes from the phenotype when the channel carries signal,
    /// later picks from it with probability one half.
    fn picks(&mut self, pheno: &Phenotype, channel: Channel, count: usize) -> Vec<(bool, usize)> {
        let signal = self.signal(channel);
        (0..count)
            .map(|k| {
                let from_pheno = signal && (k == 0 || self.rng.gen_bool(0.5));
                (from_pheno, self.pool(&pheno.pools, channel, from_pheno))
            })
            .collect()
    }
}

const STAY_BASE: u64 = 30_000_000;
const HADM_BASE: u64 = 20_000_000;
const SUBJECT_BASE: u64 = 10_000_000;

/// Generates every table in memory. Output is a pure function of the config.
pub fn generate_tables(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        config,
        background: background_pools(),
    };
    let mut t = Tables::new()?;
    let priors = WeightedIndex::new(config.phenotypes.iter().map(|p| p.prior))
        .map_err(|e| Error::Config(format!("phenotype priors: {e}")))?;
    let epoch = NaiveDate::from_ymd_opt(2150, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let specimen_weights = WeightedIndex::new([0.6, 0.25, 0.07, 0.05, 0.03]).unwrap();

    let mut patient_phenotype = BTreeMap::new();
    let mut stay_phenotype = BTreeMap::new();
    let mut excluded_stays = Vec::new();
    let mut counts = vec![0usize; config.phenotypes.len()];
    let mut n_visits = 0u64;
    let mut n_micro = 0usize;

    for p in 0..config.n_patients {
        let subject = (SUBJECT_BASE + p as u64).to_string();
        let pi = priors.sample(&mut s.rng);
        let pheno = &config.phenotypes[pi];
        counts[pi] += 1;
        patient_phenotype.insert(subject.clone(), pheno.name.clone());

        let n_stays = if s.rng.gen_bool(config.multi_visit_rate) {
            s.rng.gen_range(2..=3)
        } else {
            1
        };
        let gender = ["F", "M"].choose(&mut s.rng).unwrap().to_string();
        let race = pools::RACES.choose(&mut s.rng).unwrap().to_string();
        let age0: i64 = s.rng.gen_range(18..=90);
        let mut intime: Timestamp = epoch + Duration::minutes(s.rng.gen_range(0..(3650 * 24 * 60)));

        for v in 0..n_stays {
            if v > 0 {
                intime += Duration::days(s.rng.gen_range(20..400));
            }
            let stay = (STAY_BASE + n_visits).to_string();
            let hadm = (HADM_BASE + n_visits).to_string();
            n_visits += 1;
            stay_phenotype.insert(stay.clone(), pheno.name.clone());
            let at = |minutes: i64| format_timestamp(&(intime + Duration::minutes(minutes)));

            let age = (age0 + (intime - epoch).num_days() / 365).to_string();
            let row = [
                subject.clone(),
                stay.clone(),
                hadm.clone(),
                at(0),
                s.maybe(gender.clone()),
                s.maybe(race.clone()),
                s.maybe_choice(&pools::TRANSPORTS),
                s.maybe(age),
            ];
            t.push(ARRIVAL, &row)?;

            let complaint = s.complaint(pheno);
            let row = [
                subject.clone(),
                stay.clone(),
                s.vital(98.6, 0.9, 94.0, 105.0, 1),
                s.vital(88.0, 15.0, 40.0, 180.0, 0),
                s.vital(18.0, 3.0, 8.0, 40.0, 0),
                s.vital(97.0, 2.0, 80.0, 100.0, 0),
                s.vital(130.0, 20.0, 70.0, 220.0, 0),
                s.vital(75.0, 12.0, 30.0, 130.0, 0),
                s.maybe_int(0, 10),
                s.maybe_int(1, 5),
                complaint,
            ];
            t.push(TRIAGE, &row)?;

            let n_med = s.rng.gen_range(2..=6);
            for (k, (own, i)) in s
                .picks(pheno, Channel::Medication, n_med)
                .into_iter()
                .enumerate()
            {
                let name = if own {
                    &pheno.pools.medications[i]
                } else {
                    &s.background.medications[i]
                };
                let row = [
                    subject.clone(),
                    stay.clone(),
                    at(10 + k as i64),
                    name.clone(),
                    s.maybe_choice(&pools::MEDICATION_CLASSES),
                ];
                t.push(MEDRECON, &row)?;
            }

            let n_vitals = s.rng.gen_range(1..=4);
            for k in 0..n_vitals {
                let row = [
                    subject.clone(),
                    stay.clone(),
                    at(30 + 60 * k),
                    s.vital(98.6, 0.9, 94.0, 105.0, 1),
                    s.vital(88.0, 15.0, 40.0, 180.0, 0),
                    s.vital(18.0, 3.0, 8.0, 40.0, 0),
                    s.vital(97.0, 2.0, 80.0, 100.0, 0),
                    s.vital(130.0, 20.0, 70.0, 220.0, 0),
                    s.vital(75.0, 12.0, 30.0, 130.0, 0),
                    s.maybe_choice(&pools::RHYTHMS),
                    s.maybe_int(0, 10),
                ];
                t.push(VITALS, &row)?;
            }

            let n_dx = s.rng.gen_range(1..=3);
            let mut seen = BTreeSet::new();
            for (own, i) in s.picks(pheno, Channel::Diagnosis, n_dx) {
                let (code, title) = if own {
                    &pheno.pools.diagnoses[i]
                } else {
                    &s.background.diagnoses[i]
                };
                if !seen.insert(code.clone()) {
                    continue;
                }
                t.push(
                    DIAGNOSIS,
                    &[
                        subject.clone(),
                        stay.clone(),
                        code.clone(),
                        "10".into(),
                        title.clone(),
                    ],
                )?;
            }

            let n_pyxis = s.rng.gen_range(1..=4);
            for (k, (own, i)) in s
                .picks(pheno, Channel::Dispensed, n_pyxis)
                .into_iter()
                .enumerate()
            {
                let name = if own {
                    &pheno.pools.dispensed[i]
                } else {
                    &s.background.dispensed[i]
                };
                t.push(
                    PYXIS,
                    &[
                        subject.clone(),
                        stay.clone(),
                        at(45 + 20 * k as i64),
                        name.clone(),
                    ],
                )?;
            }

            let noise = s.rng.gen_bool(config.noise_culture_rate);
            let (specimen, organism) = if noise {
                excluded_stays.push(stay.clone());
                if s.rng.gen_bool(0.5) {
                    ("URINE", "ESCHERICHIA COLI")
                } else {
                    ("SWAB", pools::STAPH_ORGANISMS[0])
                }
            } else {
                (
                    pools::STERILE_SPECIMENS[specimen_weights.sample(&mut s.rng)],
                    *pools::STAPH_ORGANISMS.choose(&mut s.rng).unwrap(),
                )
            };
            let culture = |ab: &str, interp: &str| {
                [
                    subject.clone(),
                    hadm.clone(),
                    stay.clone(),
                    at(120),
                    specimen.to_owned(),
                    organism.to_owned(),
                    ab.to_owned(),
                    interp.to_owned(),
                ]
            };
            let mut tested = 0;
            for ab in Antibiotic::ALL {
                let cover = config.coverage.get(&ab).copied().unwrap_or(0.0);
                if !s.rng.gen_bool(cover) {
                    continue;
                }
                let p = if noise {
                    0.5
                } else {
                    config.susceptible_probability(pheno, ab)
                };
                let interp = if s.rng.gen_bool(p) { "S" } else { "R" };
                t.push(MICRO, &culture(&ab.name().to_ascii_uppercase(), interp))?;
                tested += 1;
                n_micro += 1;
            }
            if tested == 0 {
                t.push(MICRO, &culture("", ""))?;
            }
        }
    }

    let bayes_auroc = Antibiotic::ALL
        .iter()
        .filter(|ab| config.coverage.get(ab).is_some_and(|c| *c > 0.0))
        .filter_map(|&ab| {
            let groups: Vec<(f64, f64)> = config
                .phenotypes
                .iter()
                .map(|p| (p.prior, config.susceptible_probability(p, ab)))
                .collect();
            mixture_auroc(&groups).map(|a| (ab, a))
        })
        .collect();
    let phenotypes = config
        .phenotypes
        .iter()
        .zip(&counts)
        .map(|(p, &n)| PhenotypeSummary {
            name: p.name.clone(),
            prior: p.prior,
            vocabulary: p.vocabulary.clone(),
            patients: n,
            susceptible_probability: Antibiotic::ALL
                .iter()
                .map(|&ab| (ab, config.susceptible_probability(p, ab)))
                .collect(),
        })
        .collect();
    let mut signal_channels = config.signal_channels.clone();
    signal_channels.sort();
    signal_channels.dedup();

    Ok(Synthetic {
        tables: t.finish()?,
        manifest: SynthManifest {
            seed: config.seed,
            n_patients: config.n_patients,
            n_visits: n_visits as usize,
            n_susceptibility_rows: n_micro,
            signal_channels,
            phenotypes,
            patient_phenotype,
            stay_phenotype,
            excluded_stays,
            bayes_auroc,
        },
    })
}

/// Generates a cohort into `dir`.
pub fn generate(config: &SynthConfig, dir: &Path) -> Result<SynthManifest> {
    let synthetic = generate_tables(config)?;
    synthetic.write(dir)?;
    Ok(synthetic.manifest)
}
