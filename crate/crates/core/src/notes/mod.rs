//! Pseudo-notes: each visit's six modality tables rendered as one
//! paragraph of text.

pub mod template;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use template::{ModalityTemplate, TemplateSet};

use crate::cohort::{format_timestamp, EDVisit, Modality, StayId};
use crate::embed::tokenize::{count_tokens, token_spans};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub modality: Modality,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoNote {
    pub stay_id: StayId,
    pub text: String,
    /// Byte ranges tiling `text`; the joining space belongs to the segment
    /// it follows.
    pub segments: Vec<Segment>,
    pub token_count: usize,
    pub truncated: bool,
}

impl PseudoNote {
    pub fn segment_text(&self, modality: Modality) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.modality == modality)
            .map(|s| &self.text[s.start..s.end])
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Non-null field values of each row of `modality`, rendered as text.
pub fn modality_rows(visit: &EDVisit, modality: Modality) -> Vec<BTreeMap<&'static str, String>> {
    fn put<T>(
        row: &mut BTreeMap<&'static str, String>,
        key: &'static str,
        v: Option<T>,
        f: impl Fn(T) -> String,
    ) {
        if let Some(v) = v {
            row.insert(key, f(v));
        }
    }
    match modality {
        Modality::Arrival => {
            let a = &visit.arrival;
            let mut r = BTreeMap::new();
            r.insert("intime", format_timestamp(&a.intime));
            put(&mut r, "gender", a.gender.clone(), |s| s);
            put(&mut r, "race", a.race.clone(), |s| s);
            put(
                &mut r,
                "arrival_transport",
                a.arrival_transport.clone(),
                |s| s,
            );
            put(&mut r, "age", a.age, |v| v.to_string());
            vec![r]
        }
        Modality::Triage => {
            let t = &visit.triage;
            if t.is_empty() {
                return Vec::new();
            }
            let mut r = BTreeMap::new();
            put(&mut r, "temperature", t.temperature, num);
            put(&mut r, "heartrate", t.heartrate, num);
            put(&mut r, "resprate", t.resprate, num);
            put(&mut r, "o2sat", t.o2sat, num);
            put(&mut r, "sbp", t.sbp, num);
            put(&mut r, "dbp", t.dbp, num);
            put(&mut r, "pain", t.pain.clone(), |s| s);
            put(&mut r, "acuity", t.acuity, |v| v.to_string());
            put(&mut r, "chiefcomplaint", t.chiefcomplaint.clone(), |s| s);
            vec![r]
        }
        Modality::Medrecon => visit
            .medrecon
            .iter()
            .map(|m| {
                let mut r = BTreeMap::new();
                r.insert("charttime", format_timestamp(&m.charttime));
                r.insert("name", m.name.clone());
                put(&mut r, "etcdescription", m.etcdescription.clone(), |s| s);
                r
            })
            .collect(),
        Modality::Vitals => visit
            .vitals
            .iter()
            .map(|v| {
                let mut r = BTreeMap::new();
                r.insert("charttime", format_timestamp(&v.charttime));
                put(&mut r, "temperature", v.temperature, num);
                put(&mut r, "heartrate", v.heartrate, num);
                put(&mut r, "resprate", v.resprate, num);
                put(&mut r, "o2sat", v.o2sat, num);
                put(&mut r, "sbp", v.sbp, num);
                put(&mut r, "dbp", v.dbp, num);
                put(&mut r, "rhythm", v.rhythm.clone(), |s| s);
                put(&mut r, "pain", v.pain.clone(), |s| s);
                r
            })
            .collect(),
        Modality::Diagnoses => visit
            .diagnoses
            .iter()
            .map(|d| {
                let mut r = BTreeMap::new();
                r.insert("icd_code", d.icd_code.clone());
                r.insert("icd_version", d.icd_version.to_string());
                r.insert("icd_title", d.icd_title.clone());
                r
            })
            .collect(),
        Modality::Pyxis => visit
            .pyxis
            .iter()
            .map(|p| {
                let mut r = BTreeMap::new();
                r.insert("charttime", format_timestamp(&p.charttime));
                r.insert("name", p.name.clone());
                r
            })
            .collect(),
    }
}

/// Renders visits with a fixed [`TemplateSet`].
#[derive(Debug, Clone, Default)]
pub struct NoteSerializer {
    templates: TemplateSet,
}

impl NoteSerializer {
    pub fn new(templates: TemplateSet) -> Self {
        NoteSerializer { templates }
    }

    pub fn serialize_modality(&self, visit: &EDVisit, modality: Modality) -> String {
        self.templates
            .get(modality)
            .render(&modality_rows(visit, modality))
    }

    pub fn serialize_visit(&self, visit: &EDVisit) -> PseudoNote {
        let mut text = String::new();
        let mut segments: Vec<Segment> = Vec::with_capacity(6);
        for modality in Modality::ALL {
            if let Some(prev) = segments.last_mut() {
                text.push(' ');
                prev.end = text.len();
            }
            let start = text.len();
            text.push_str(&self.serialize_modality(visit, modality));
            segments.push(Segment {
                modality,
                start,
                end: text.len(),
            });
        }
        PseudoNote {
            stay_id: visit.stay_id.clone(),
            token_count: count_tokens(&text),
            text,
            segments,
            truncated: false,
        }
    }
}

pub fn serialize_modality(visit: &EDVisit, modality: Modality) -> String {
    NoteSerializer::default().serialize_modality(visit, modality)
}

pub fn serialize_visit(visit: &EDVisit) -> PseudoNote {
    NoteSerializer::default().serialize_visit(visit)
}

/// Keeps the first `budget_tokens` tokens, cutting the text right after the
/// last kept token. Later modalities go first. Idempotent.
///
/// # Panics
/// If `budget_tokens` is zero.
pub fn truncate_to_budget(note: &PseudoNote, budget_tokens: usize) -> PseudoNote {
    assert!(budget_tokens >= 1, "token budget must be at least 1");
    let mut spans = token_spans(&note.text);
    let Some((_, cut)) = spans.nth(budget_tokens - 1) else {
        return note.clone();
    };
    if spans.next().is_none() {
        return note.clone();
    }
    let segments = note
        .segments
        .iter()
        .filter(|s| s.start < cut)
        .map(|s| Segment {
            end: s.end.min(cut),
            ..*s
        })
        .collect();
    PseudoNote {
        stay_id: note.stay_id.clone(),
        text: note.text[..cut].to_owned(),
        segments,
        token_count: budget_tokens,
        truncated: true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub stay_id: StayId,
    pub text: String,
    pub truncated: bool,
}

impl From<&PseudoNote> for NoteRecord {
    fn from(n: &PseudoNote) -> Self {
        NoteRecord {
            stay_id: n.stay_id.clone(),
            text: n.text.clone(),
            truncated: n.truncated,
        }
    }
}

/// One JSON object per line: `{stay_id, text, truncated}`.
pub fn write_jsonl<W: Write>(mut out: W, notes: &[PseudoNote]) -> Result<()> {
    for n in notes {
        serde_json::to_writer(&mut out, &NoteRecord::from(n))?;
        out.write_all(b"\n")
            .map_err(|e| crate::Error::io("<notes>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<NoteRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| crate::Error::io("<notes>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
