//! Run configuration: TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use steward_core::cluster::ClusterConfig;
use steward_core::cohort::{LabelPolicy, Polarity};
use steward_core::eval::BootstrapConfig;
use steward_core::gbdt::TrainConfig;
use steward_core::pipeline::{FeatureConfig, Representation};
use steward_core::synthgen::SynthConfig;
use steward_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub patients: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            patients: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortOptions {
    pub test_fraction: f64,
    pub seed: u64,
    pub polarity: Polarity,
    pub intermediate_is_susceptible: bool,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions {
            test_fraction: 0.2,
            seed: 0,
            polarity: Polarity::Susceptible,
            intermediate_is_susceptible: false,
        }
    }
}

impl CohortOptions {
    pub fn policy(&self) -> LabelPolicy {
        LabelPolicy {
            polarity: self.polarity,
            intermediate_is_susceptible: self.intermediate_is_susceptible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityOptions {
    /// Notes kept in similarity.csv; larger sets are thinned evenly along
    /// the cluster ordering.
    pub max_rows: usize,
    /// Heatmap resolution cap per side.
    pub max_cells: usize,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            max_rows: 500,
            max_cells: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of raw tables; defaults to `<workdir>/data`.
    pub input: Option<PathBuf>,
    pub workdir: PathBuf,
    pub representation: Representation,
    pub synth: SynthOptions,
    pub cohort: CohortOptions,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub eval: BootstrapConfig,
    pub cluster: ClusterConfig,
    pub similarity: SimilarityOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn workdir(&self) -> PathBuf {
        if self.workdir.as_os_str().is_empty() {
            PathBuf::from("steward-run")
        } else {
            self.workdir.clone()
        }
    }

    pub fn input_dir(&self) -> PathBuf {
        self.input
            .clone()
            .unwrap_or_else(|| self.workdir().join("data"))
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_patients: self.synth.patients,
            seed: self.synth.seed,
            ..Default::default()
        }
    }

    /// One seed for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.cohort.seed = seed;
        self.features.sgns.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
        self.cluster.kmeans.seed = seed;
    }

    /// Everything that affects results, without the paths.
    pub fn settings(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("input");
            m.remove("workdir");
        }
        v
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(self.settings().to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cohort.test_fraction > 0.0 && self.cohort.test_fraction < 1.0) {
            return Err(Error::Config(
                "cohort.test_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.features.token_budget == 0 {
            return Err(Error::Config(
                "features.token_budget must be at least 1".into(),
            ));
        }
        if self.similarity.max_rows < 2 || self.similarity.max_cells < 1 {
            return Err(Error::Config(
                "similarity.max_rows must be >= 2 and max_cells >= 1".into(),
            ));
        }
        self.train.validate()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
