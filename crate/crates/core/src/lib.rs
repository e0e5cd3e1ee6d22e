//! Table union search over column metadata alone.
//!
//! A catalog holds, per dataset, a title, a topic and the column headers,
//! optionally enriched with a semantic type and a vocabulary property. Each
//! dataset is embedded into one vector; candidates are ranked against a query
//! by cosine similarity and labeled unionable at or above a threshold fitted
//! on a held-out topic split.
//!
//! ```
//! use mus_core::catalog::{extract_metadata, Role};
//! use mus_core::embedding::{compose_dataset_vector, CompositionConfig, LocalEmbedder};
//! use mus_core::search::cosine;
//!
//! let header = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
//! let q = extract_metadata(&header(&["Gender", "Age", "Occupation"]), "Census.csv", "people", Role::Query).unwrap();
//! let c = extract_metadata(&header(&["Sex", "Age", "Job"]), "Survey.csv", "people", Role::Candidate).unwrap();
//! let embedder = LocalEmbedder::default();
//! let cfg = CompositionConfig::td();
//! let qv = compose_dataset_vector::<f64>(&q, &cfg, &embedder).unwrap();
//! let cv = compose_dataset_vector::<f64>(&c, &cfg, &embedder).unwrap();
//! let score = cosine(&qv.vector, &cv.vector).unwrap();
//! assert!(score > 0.0 && score <= 1.0);
//! ```

pub mod calibration;
pub mod catalog;
pub mod embedding;
pub mod enrichment;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod scalar;
pub mod search;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Whether a component may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Concurrency {
    #[default]
    Concurrent,
    Serial,
}

pub type Vector = embedding::EmbeddingVector<f64>;
pub type Vector32 = embedding::EmbeddingVector<f32>;
pub type DatasetVector = embedding::DatasetVector<f64>;
pub type Ranking = search::RankedList<f64>;
pub type Calibration = calibration::CalibrationResult<f64>;
pub type Report = evaluation::EvalReport<f64>;
pub type Run = pipeline::PipelineRun<f64>;
