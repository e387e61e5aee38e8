pub mod cluster;
pub mod cohort;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gbdt;
pub mod ingest;
pub mod notes;
pub mod pipeline;
pub mod scalar;
pub mod synthgen;
pub mod tabfeat;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Embeddings = embed::EmbeddingMatrix<f32>;
pub type Embeddings64 = embed::EmbeddingMatrix<f64>;
pub type Features = tabfeat::FeatureFrame<f32>;
pub type Features64 = tabfeat::FeatureFrame<f64>;
