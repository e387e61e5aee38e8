use super::{Phenotype, Pools};

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn codes(items: &[(&str, &str)]) -> Vec<(String, String)> {
    items
        .iter()
        .map(|(c, t)| (c.to_string(), t.to_string()))
        .collect()
}

fn phenotype(
    name: &str,
    vocabulary: &[&str],
    complaints: &[&str],
    diagnoses: &[(&str, &str)],
    medications: &[&str],
    dispensed: &[&str],
) -> Phenotype {
    Phenotype {
        name: name.to_owned(),
        prior: 0.0,
        vocabulary: strings(vocabulary),
        pools: Pools {
            complaints: strings(complaints),
            diagnoses: codes(diagnoses),
            medications: strings(medications),
            dispensed: strings(dispensed),
        },
        offsets: Default::default(),
    }
}

/// Seven themes with disjoint vocabularies. Priors and offsets are left at
/// zero for the caller to fill.
pub fn builtin_phenotypes() -> Vec<Phenotype> {
    vec![
        phenotype(
            "sepsis",
            &["sepsis", "fever", "acetaminophen", "lactated"],
            &[
                "Fever",
                "Fever, hypotension",
                "Sepsis alert",
                "Fever, chills",
            ],
            &[
                ("A419", "Sepsis, unspecified organism"),
                ("R6520", "Severe sepsis without septic shock"),
                ("R509", "Fever, unspecified"),
            ],
            &["Acetaminophen", "Acetaminophen Extra Strength"],
            &[
                "Acetaminophen",
                "Lactated Ringers",
                "Lactated Ringers Bolus",
            ],
        ),
        phenotype(
            "diabetes",
            &["diabetes", "insulin", "metformin", "hyperglycemia"],
            &[
                "Hyperglycemia",
                "Hyperglycemia, diabetes",
                "Diabetic foot ulcer",
            ],
            &[
                ("E119", "Type 2 diabetes mellitus without complications"),
                ("E1165", "Type 2 diabetes mellitus with hyperglycemia"),
                ("E11621", "Type 2 diabetes mellitus with foot ulcer"),
            ],
            &["Metformin", "Insulin Glargine", "Metformin ER"],
            &["Insulin Regular", "Insulin Lispro"],
        ),
        phenotype(
            "stomach acid",
            &["pantoprazole", "famotidine", "reflux", "epigastric"],
            &["Epigastric pain", "Reflux", "Epigastric burning"],
            &[
                (
                    "K219",
                    "Gastro-esophageal reflux disease without esophagitis",
                ),
                ("K2970", "Gastritis, unspecified, epigastric"),
                ("K259", "Gastric ulcer with reflux"),
            ],
            &["Pantoprazole", "Famotidine", "Omeprazole"],
            &["Pantoprazole", "Famotidine"],
        ),
        phenotype(
            "anxiety",
            &["anxiety", "lorazepam", "panic", "alprazolam"],
            &["Anxiety", "Panic attack", "Anxiety, palpitations"],
            &[
                ("F419", "Anxiety disorder, unspecified"),
                ("F410", "Panic disorder"),
                ("F411", "Generalized anxiety disorder"),
            ],
            &["Lorazepam", "Alprazolam", "Buspirone"],
            &["Lorazepam", "Alprazolam"],
        ),
        phenotype(
            "painkillers",
            &["oxycodone", "hydromorphone", "opioid", "tramadol"],
            &[
                "Opioid withdrawal",
                "Back pain, requesting oxycodone",
                "Chronic pain",
            ],
            &[
                ("F1120", "Opioid dependence, uncomplicated"),
                ("G8929", "Other chronic pain"),
                ("T402X1A", "Poisoning by other opioids, initial encounter"),
            ],
            &["Oxycodone", "Tramadol", "Oxycodone ER"],
            &["Hydromorphone", "Oxycodone", "Tramadol"],
        ),
        phenotype(
            "respiratory",
            &["albuterol", "dyspnea", "pulmonary", "ipratropium"],
            &["Dyspnea", "Dyspnea, cough", "Wheezing, dyspnea"],
            &[
                ("J449", "Chronic obstructive pulmonary disease, unspecified"),
                ("J189", "Pneumonia, unspecified organism"),
                ("J9601", "Acute respiratory failure with hypoxia, pulmonary"),
            ],
            &["Albuterol Inhaler", "Tiotropium", "Ipratropium Inhaler"],
            &["Albuterol Neb", "Ipratropium Neb", "Albuterol-Ipratropium"],
        ),
        phenotype(
            "antidepressants",
            &["sertraline", "depressive", "trazodone", "fluoxetine"],
            &[
                "Depression",
                "Suicidal ideation, depressive symptoms",
                "Depressive episode",
            ],
            &[
                (
                    "F329",
                    "Major depressive disorder, single episode, unspecified",
                ),
                ("F331", "Major depressive disorder, recurrent, moderate"),
                ("R45851", "Suicidal ideations"),
            ],
            &["Sertraline", "Fluoxetine", "Trazodone"],
            &["Sertraline", "Trazodone"],
        ),
    ]
}

/// Phenotype-independent filler used for fields that carry no signal.
pub fn background_pools() -> Pools {
    Pools {
        complaints: strings(&[
            "Fall",
            "Laceration",
            "Weakness",
            "Dizziness",
            "Nausea",
            "Headache",
            "Wound eval",
            "Altered mental status",
            "Chest pain",
            "Leg swelling",
        ]),
        diagnoses: codes(&[
            ("R531", "Weakness"),
            ("W19XXXA", "Unspecified fall, initial encounter"),
            ("R42", "Dizziness and giddiness"),
            ("I10", "Essential (primary) hypertension"),
            ("E785", "Hyperlipidemia, unspecified"),
            ("N179", "Acute kidney failure, unspecified"),
            ("L03115", "Cellulitis of right lower limb"),
            ("R079", "Chest pain, unspecified"),
        ]),
        medications: strings(&[
            "Lisinopril",
            "Atorvastatin",
            "Aspirin",
            "Amlodipine",
            "Multivitamin",
            "Vitamin D3",
            "Metoprolol Succinate XL",
            "Furosemide",
        ]),
        dispensed: strings(&[
            "Ondansetron",
            "Sodium Chloride 0.9% Flush",
            "Heparin",
            "Potassium Chloride",
            "Docusate Sodium",
            "Senna",
        ]),
    }
}

pub const MEDICATION_CLASSES: [&str; 6] = [
    "Analgesics",
    "Antihypertensives",
    "Vitamins",
    "Lipid lowering agents",
    "Diuretics",
    "Psychotherapeutic agents",
];

pub const RACES: [&str; 5] = [
    "WHITE",
    "BLACK/AFRICAN AMERICAN",
    "HISPANIC/LATINO",
    "ASIAN",
    "OTHER",
];

pub const TRANSPORTS: [&str; 4] = ["AMBULANCE", "WALK IN", "HELICOPTER", "UNKNOWN"];

pub const RHYTHMS: [&str; 3] = ["Sinus Rhythm", "Sinus Tachycardia", "Atrial Fibrillation"];

pub const STERILE_SPECIMENS: [&str; 5] = [
    "BLOOD CULTURE",
    "URINE",
    "JOINT FLUID",
    "PLEURAL FLUID",
    "CSF;SPINAL FLUID",
];

pub const STAPH_ORGANISMS: [&str; 2] =
    ["STAPH AUREUS COAG +", "STAPHYLOCOCCUS, COAGULASE NEGATIVE"];
