//! Stage glue shared by the command-line driver and end-to-end tests.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Partition, StayId, Targets};
use crate::embed::{
    bow_matrix, embed_remote, tokenize, train_sgns, word2vec_matrix, EmbeddingMatrix, HashedBow,
    RemoteConfig, SgnsConfig, SgnsModel,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_all, BootstrapConfig, Evaluation, ReportContext};
use crate::gbdt::{fit_multilabel, MultilabelModel, TrainConfig};
use crate::notes::{serialize_visit, truncate_to_budget, PseudoNote};
use crate::tabfeat::{featurize_tabular, DEFAULT_CARDINALITY_CAP};

pub const DEFAULT_TOKEN_BUDGET: usize = 512;

/// Hashed bag-of-words width used by the pipeline. The trainer consumes
/// dense features, so the full hashing space is not practical here.
pub const PIPELINE_BOW_BUCKETS: usize = 512;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    #[default]
    Tabular,
    Bow,
    Word2vec,
    Remote(String),
}

impl Representation {
    pub fn uses_notes(&self) -> bool {
        !matches!(self, Representation::Tabular)
    }

    /// File-name-safe form, e.g. `remote-bio-megatron`.
    pub fn slug(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Tabular => f.write_str("tabular"),
            Representation::Bow => f.write_str("bow"),
            Representation::Word2vec => f.write_str("word2vec"),
            Representation::Remote(m) => write!(f, "remote:{m}"),
        }
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(Representation::Tabular),
            "bow" => Ok(Representation::Bow),
            "word2vec" => Ok(Representation::Word2vec),
            _ => match s.strip_prefix("remote:") {
                Some(m) if !m.is_empty() => Ok(Representation::Remote(m.to_owned())),
                _ => Err(Error::Config(format!(
                    "unknown representation {s:?}; expected tabular, bow, word2vec or remote:<model_id>"
                ))),
            },
        }
    }
}

impl Serialize for Representation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Representation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub token_budget: usize,
    pub cardinality_cap: usize,
    pub bow_buckets: usize,
    pub sgns: SgnsConfig,
    pub remote: Option<RemoteConfig>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            token_budget: DEFAULT_TOKEN_BUDGET,
            cardinality_cap: DEFAULT_CARDINALITY_CAP,
            bow_buckets: PIPELINE_BOW_BUCKETS,
            sgns: SgnsConfig::default(),
            remote: None,
        }
    }
}

/// Budget-truncated notes for every labelled visit, in [`Cohort::visit_order`].
pub fn cohort_notes(cohort: &Cohort, budget: usize) -> Result<Vec<PseudoNote>> {
    if budget == 0 {
        return Err(Error::Config("token budget must be at least 1".into()));
    }
    Ok(cohort
        .visit_order()
        .into_iter()
        .map(|s| truncate_to_budget(&serialize_visit(&cohort.visits()[s]), budget))
        .collect())
}

pub fn row_ids(cohort: &Cohort) -> Vec<StayId> {
    cohort.visit_order().into_iter().cloned().collect()
}

/// Trains word vectors on the texts of training-partition visits only.
pub fn train_word_vectors(
    cohort: &Cohort,
    ids: &[StayId],
    texts: &[String],
    config: &SgnsConfig,
) -> Result<SgnsModel> {
    let corpus: Vec<Vec<String>> = ids
        .iter()
        .zip(texts)
        .filter(|(id, _)| {
            cohort
                .visits()
                .get(*id)
                .is_some_and(|v| cohort.partition_of(&v.subject_id) == Some(Partition::Train))
        })
        .map(|(_, t)| tokenize(t))
        .collect();
    if corpus.is_empty() {
        return Err(Error::Split(
            "no training-partition notes to train word vectors on".into(),
        ));
    }
    train_sgns(&corpus, config)
}

/// Embeds note texts with a text backend; row i belongs to `ids[i]`.
pub fn embed_texts(
    cohort: &Cohort,
    ids: &[StayId],
    texts: &[String],
    representation: &Representation,
    config: &FeatureConfig,
) -> Result<EmbeddingMatrix<f32>> {
    if ids.len() != texts.len() {
        return Err(Error::Dimension {
            expected: ids.len(),
            actual: texts.len(),
        });
    }
    match representation {
        Representation::Tabular => {
            Err(Error::Config("tabular is not a text representation".into()))
        }
        Representation::Bow => {
            if config.bow_buckets == 0 {
                return Err(Error::Config("bow_buckets must be positive".into()));
            }
            bow_matrix(ids.to_vec(), texts, &HashedBow::new(config.bow_buckets))
        }
        Representation::Word2vec => {
            let model = train_word_vectors(cohort, ids, texts, &config.sgns)?;
            word2vec_matrix(ids.to_vec(), texts, &model.words)
        }
        Representation::Remote(model_id) => {
            let mut remote = config
                .remote
                .clone()
                .ok_or_else(|| Error::Config("remote representation needs an endpoint".into()))?;
            remote.model_id = model_id.clone();
            embed_remote(ids.to_vec(), texts, &remote)
        }
    }
}

/// [`embed_texts`] over rendered notes.
pub fn embed_notes(
    cohort: &Cohort,
    notes: &[PseudoNote],
    representation: &Representation,
    config: &FeatureConfig,
) -> Result<EmbeddingMatrix<f32>> {
    let ids: Vec<StayId> = notes.iter().map(|n| n.stay_id.clone()).collect();
    let texts: Vec<String> = notes.iter().map(|n| n.text.clone()).collect();
    embed_texts(cohort, &ids, &texts, representation, config)
}

/// Feature matrix for any representation, rows in [`Cohort::visit_order`].
pub fn build_features(
    cohort: &Cohort,
    representation: &Representation,
    config: &FeatureConfig,
) -> Result<Array2<f32>> {
    match representation {
        Representation::Tabular => {
            Ok(featurize_tabular::<f32>(cohort, config.cardinality_cap)?.to_nan_matrix())
        }
        _ => {
            let notes = cohort_notes(cohort, config.token_budget)?;
            Ok(embed_notes(cohort, &notes, representation, config)?.data)
        }
    }
}

/// Multilabel training on the train partition and bootstrap evaluation on
/// the test partition.
pub fn train_and_evaluate(
    cohort: &Cohort,
    features: &Array2<f32>,
    representation: &Representation,
    train: &TrainConfig,
    bootstrap: &BootstrapConfig,
    config_fingerprint: &str,
) -> Result<(MultilabelModel, Evaluation)> {
    let targets = Targets::from_cohort(cohort, &row_ids(cohort))?;
    let model = fit_multilabel(features.view(), &targets, train)?;
    let ctx = ReportContext {
        representation: representation.to_string(),
        config_fingerprint: config_fingerprint.to_owned(),
        bootstrap: bootstrap.clone(),
    };
    let evaluation = evaluate_all(&model, features.view(), &targets, &ctx)?;
    Ok((model, evaluation))
}
