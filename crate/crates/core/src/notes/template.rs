//! Line-oriented template files.
//!
//! ```text
//! # comment
//! sentence: Medications reconciled on arrival were {rows}.
//! row: {name}[ ({etcdescription})]
//! separator: ,
//! empty: No medication reconciliation information recorded.
//! ```
//!
//! `row` placeholders name fields of the modality. A bracketed group is
//! emitted only when every placeholder inside it has a value. Leading
//! commas, semicolons and spaces of the first literal emitted in a row are
//! dropped, so optional groups can carry their own separators. Literal text
//! may not contain digits; every numeral in a note comes from a field.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cohort::Modality;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Lit(String),
    Field(String),
    Group(Vec<Piece>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTemplate {
    pub modality: Modality,
    sentence: Vec<Piece>,
    row: Vec<Piece>,
    separator: String,
    empty: String,
}

pub fn fields_of(modality: Modality) -> &'static [&'static str] {
    match modality {
        Modality::Arrival => &["intime", "gender", "race", "arrival_transport", "age"],
        Modality::Triage => &[
            "temperature",
            "heartrate",
            "resprate",
            "o2sat",
            "sbp",
            "dbp",
            "pain",
            "acuity",
            "chiefcomplaint",
        ],
        Modality::Medrecon => &["charttime", "name", "etcdescription"],
        Modality::Vitals => &[
            "charttime",
            "temperature",
            "heartrate",
            "resprate",
            "o2sat",
            "sbp",
            "dbp",
            "rhythm",
            "pain",
        ],
        Modality::Diagnoses => &["icd_code", "icd_version", "icd_title"],
        Modality::Pyxis => &["charttime", "name"],
    }
}

fn parse_pieces(src: &str, name: &str) -> Result<Vec<Piece>> {
    let err = |message: String| Error::Template {
        name: name.to_owned(),
        message,
    };
    let mut stack: Vec<Vec<Piece>> = vec![Vec::new()];
    let mut lit = String::new();
    let mut chars = src.chars();
    let flush = |lit: &mut String, stack: &mut Vec<Vec<Piece>>| {
        if !lit.is_empty() {
            stack
                .last_mut()
                .unwrap()
                .push(Piece::Lit(std::mem::take(lit)));
        }
    };
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e) => lit.push(e),
                None => return Err(err("dangling escape".into())),
            },
            '{' => {
                flush(&mut lit, &mut stack);
                let mut field = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => field.push(ch),
                        None => return Err(err("unclosed `{`".into())),
                    }
                }
                let field = field.trim().to_owned();
                if field.is_empty() {
                    return Err(err("empty placeholder".into()));
                }
                stack.last_mut().unwrap().push(Piece::Field(field));
            }
            '}' => return Err(err("unmatched `}`".into())),
            '[' => {
                flush(&mut lit, &mut stack);
                if stack.len() > 1 {
                    return Err(err("optional groups cannot nest".into()));
                }
                stack.push(Vec::new());
            }
            ']' => {
                flush(&mut lit, &mut stack);
                if stack.len() < 2 {
                    return Err(err("unmatched `]`".into()));
                }
                let group = stack.pop().unwrap();
                stack.last_mut().unwrap().push(Piece::Group(group));
            }
            c => lit.push(c),
        }
    }
    flush(&mut lit, &mut stack);
    if stack.len() != 1 {
        return Err(err("unclosed `[`".into()));
    }
    Ok(stack.pop().unwrap())
}

fn placeholders(pieces: &[Piece], out: &mut Vec<String>) {
    for p in pieces {
        match p {
            Piece::Field(f) => out.push(f.clone()),
            Piece::Group(g) => placeholders(g, out),
            Piece::Lit(_) => {}
        }
    }
}

fn literals(pieces: &[Piece], out: &mut String) {
    for p in pieces {
        match p {
            Piece::Lit(s) => out.push_str(s),
            Piece::Group(g) => literals(g, out),
            Piece::Field(_) => {}
        }
    }
}

impl ModalityTemplate {
    pub fn parse(modality: Modality, source: &str) -> Result<Self> {
        let name = format!("{}.txt", modality.key());
        let err = |message: String| Error::Template {
            name: name.clone(),
            message,
        };
        let mut keys: BTreeMap<&str, &str> = BTreeMap::new();
        for line in source.lines() {
            let trimmed = line.trim_end();
            if trimmed.trim_start().starts_with('#') || trimmed.trim().is_empty() {
                continue;
            }
            let (key, value) = trimmed
                .split_once(':')
                .ok_or_else(|| err(format!("expected `key: value`, got {trimmed:?}")))?;
            let key = key.trim();
            if !matches!(key, "sentence" | "row" | "separator" | "empty") {
                return Err(err(format!("unknown key `{key}`")));
            }
            if keys
                .insert(key, value.strip_prefix(' ').unwrap_or(value))
                .is_some()
            {
                return Err(err(format!("key `{key}` given twice")));
            }
        }
        let sentence = parse_pieces(
            keys.get("sentence")
                .ok_or_else(|| err("missing `sentence`".into()))?,
            &name,
        )?;
        let row = parse_pieces(
            keys.get("row").ok_or_else(|| err("missing `row`".into()))?,
            &name,
        )?;

        let mut names = Vec::new();
        placeholders(&sentence, &mut names);
        if names != ["rows"] {
            return Err(err(
                "`sentence` must contain exactly one {rows} placeholder".into(),
            ));
        }
        if sentence.iter().any(|p| matches!(p, Piece::Group(_))) {
            return Err(err("`sentence` cannot contain optional groups".into()));
        }
        names.clear();
        placeholders(&row, &mut names);
        let allowed = fields_of(modality);
        if let Some(bad) = names.iter().find(|n| !allowed.contains(&n.as_str())) {
            return Err(err(format!("unknown field {{{bad}}}")));
        }

        let empty = keys.get("empty").map_or_else(
            || format!("No {} information recorded.", modality.display_name()),
            |s| s.trim().to_owned(),
        );
        let mut text = String::new();
        literals(&sentence, &mut text);
        literals(&row, &mut text);
        text.push_str(&empty);
        if text.chars().any(|c| c.is_ascii_digit()) {
            return Err(err("template text may not contain digits".into()));
        }
        let separator = keys.get("separator").map_or(",", |s| s.trim());
        Ok(ModalityTemplate {
            modality,
            sentence,
            row,
            separator: format!("{separator} "),
            empty,
        })
    }

    pub fn empty_marker(&self) -> &str {
        &self.empty
    }

    fn render_row(&self, fields: &BTreeMap<&str, String>) -> String {
        fn push_lit(out: &mut String, lit: &str) {
            if out.is_empty() {
                out.push_str(
                    lit.trim_start_matches(|c: char| c == ',' || c == ';' || c.is_whitespace()),
                );
            } else {
                out.push_str(lit);
            }
        }
        let mut out = String::new();
        for piece in &self.row {
            match piece {
                Piece::Lit(s) => push_lit(&mut out, s),
                Piece::Field(f) => {
                    if let Some(v) = fields.get(f.as_str()) {
                        out.push_str(v);
                    }
                }
                Piece::Group(group) => {
                    let complete = group.iter().all(|p| match p {
                        Piece::Field(f) => fields.contains_key(f.as_str()),
                        _ => true,
                    });
                    if !complete {
                        continue;
                    }
                    for p in group {
                        match p {
                            Piece::Lit(s) => push_lit(&mut out, s),
                            Piece::Field(f) => out.push_str(&fields[f.as_str()]),
                            Piece::Group(_) => unreachable!("nesting rejected at parse"),
                        }
                    }
                }
            }
        }
        out.trim_end().to_owned()
    }

    /// Renders the whole segment from per-row field maps (null fields
    /// absent from the map).
    pub fn render(&self, rows: &[BTreeMap<&str, String>]) -> String {
        let rendered: Vec<String> = rows
            .iter()
            .map(|r| self.render_row(r))
            .filter(|r| !r.is_empty())
            .collect();
        if rendered.is_empty() {
            return self.empty.clone();
        }
        let joined = rendered.join(&self.separator);
        let mut out = String::new();
        for piece in &self.sentence {
            match piece {
                Piece::Lit(s) => out.push_str(s),
                Piece::Field(_) => out.push_str(&joined),
                Piece::Group(_) => unreachable!(),
            }
        }
        out
    }
}

/// One template per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: Vec<ModalityTemplate>,
}

fn builtin_source(modality: Modality) -> &'static str {
    match modality {
        Modality::Arrival => include_str!("../../templates/arrival.txt"),
        Modality::Triage => include_str!("../../templates/triage.txt"),
        Modality::Medrecon => include_str!("../../templates/medrecon.txt"),
        Modality::Vitals => include_str!("../../templates/vitals.txt"),
        Modality::Diagnoses => include_str!("../../templates/diagnoses.txt"),
        Modality::Pyxis => include_str!("../../templates/pyxis.txt"),
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = Modality::ALL
            .iter()
            .map(|&m| ModalityTemplate::parse(m, builtin_source(m)).expect("builtin template"))
            .collect();
        TemplateSet { templates }
    }

    /// Reads `<modality>.txt` files from `dir`; modalities without a file
    /// keep the built-in wording.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut templates = Vec::with_capacity(6);
        for m in Modality::ALL {
            let path = dir.join(format!("{}.txt", m.key()));
            let t = if path.exists() {
                let src = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                ModalityTemplate::parse(m, &src)?
            } else {
                ModalityTemplate::parse(m, builtin_source(m))?
            };
            templates.push(t);
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, modality: Modality) -> &ModalityTemplate {
        &self.templates[modality as usize]
    }

    /// Raw text of the built-in template for `modality`.
    pub fn builtin_source(modality: Modality) -> &'static str {
        builtin_source(modality)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn builtins_parse() {
        let set = TemplateSet::builtin();
        for m in Modality::ALL {
            assert_eq!(set.get(m).modality, m);
        }
    }

    #[test]
    fn optional_groups_drop_with_missing_fields() {
        let t = ModalityTemplate::parse(
            Modality::Medrecon,
            "sentence: Meds: {rows}.\nrow: {name}[ ({etcdescription})]\n",
        )
        .unwrap();
        let out = t.render(&[
            row(&[("name", "insulin"), ("etcdescription", "Insulins")]),
            row(&[("name", "aspirin")]),
        ]);
        assert_eq!(out, "Meds: insulin (Insulins), aspirin.");
        assert_eq!(
            t.render(&[]),
            "No medication reconciliation information recorded."
        );
    }

    #[test]
    fn leading_separator_of_first_group_is_dropped() {
        let set = TemplateSet::builtin();
        let out = set
            .get(Modality::Triage)
            .render(&[row(&[("heartrate", "101"), ("pain", "7")])]);
        assert_eq!(out, "At triage heart rate 101, pain score 7.");
    }

    #[test]
    fn values_are_never_trimmed() {
        let set = TemplateSet::builtin();
        let out = set
            .get(Modality::Triage)
            .render(&[row(&[("chiefcomplaint", ", fever")])]);
        assert!(out.contains(", fever"), "{out}");
    }

    #[test]
    fn malformed_templates_are_rejected() {
        let bad = [
            "row: {name}\n",
            "sentence: {rows}\n",
            "sentence: {rows}\nrow: {nope}\n",
            "sentence: x\nrow: {name}\n",
            "sentence: {rows}\nrow: [a [b]]\n",
            "sentence: {rows}\nrow: {name\n",
            "sentence: {rows}\nrow: {name} ]\n",
            "sentence: {rows}\nrow: {name} 2 times\n",
            "sentence: {rows}\nrow: {name}\nrow: {name}\n",
            "sentence: {rows}\nrow: {name}\ncolour: red\n",
        ];
        for src in bad {
            assert!(
                ModalityTemplate::parse(Modality::Medrecon, src).is_err(),
                "{src:?}"
            );
        }
    }

    #[test]
    fn escapes_and_custom_separator() {
        let t = ModalityTemplate::parse(
            Modality::Pyxis,
            "sentence: Given \\[in ED\\]: {rows}.\nrow: {name}\nseparator: ;\nempty: Nothing given.\n",
        )
        .unwrap();
        assert_eq!(
            t.render(&[row(&[("name", "a")]), row(&[("name", "b")])]),
            "Given [in ED]: a; b."
        );
        assert_eq!(t.render(&[]), "Nothing given.");
    }

    #[test]
    fn load_dir_overrides_one_modality() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("pyxis.txt"),
            "sentence: Dispensed {rows}.\nrow: {name}\n",
        )
        .unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(
            set.get(Modality::Pyxis)
                .render(&[row(&[("name", "zosyn")])]),
            "Dispensed zosyn."
        );
        assert_eq!(
            set.get(Modality::Arrival),
            TemplateSet::builtin().get(Modality::Arrival)
        );
    }
}
