//! Text embeddings and their composition into one vector per dataset.
//!
//! Every metadata term of a column (header label, semantic type, vocabulary
//! property label) is embedded separately. Term vectors are L2-normalized,
//! averaged over the whole dataset and normalized again. In the topic guided
//! scenario the normalized topic embedding is mixed in with weight
//! `topic_weight` and the column composite with `1 - topic_weight`.

mod cache;
mod http;
mod local;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{ColumnMeta, DatasetMeta};
use crate::error::ErrorClass;
use crate::scalar::Scalar;
use crate::Concurrency;

pub use cache::{read_vectors, write_vectors, CachedProvider, EmbeddingCache, VectorRecord};
pub(crate) use http::{agent as http_agent, call_with_retry};
pub use http::{http_embed, HttpProvider, RetryPolicy, DEFAULT_MAX_BATCH};
pub use local::{fnv1a64, local_embed, LocalEmbedder, DEFAULT_DIM, SIGN_SALT};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service {endpoint} unavailable after {attempts} attempt(s): {detail}")]
    Unavailable { endpoint: String, attempts: u32, detail: String },
    #[error("embedding service {endpoint}: malformed response: {detail}")]
    Protocol { endpoint: String, detail: String },
    #[error("embedding dimension changed from {expected} to {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedding contains non-finite components")]
    NonFinite,
    #[error("invalid embedding dimension {0}")]
    InvalidDim(usize),
    #[error("{0}")]
    Provider(String),
}

impl EmbedError {
    /// Whether repeating the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Unavailable { .. } | EmbedError::Provider(_))
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            EmbedError::InvalidDim(_) => ErrorClass::Input,
            _ => ErrorClass::External,
        }
    }
}

/// Fixed-dimension real vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<S> {
    components: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(components: Vec<S>) -> Result<Self, EmbedError> {
        if components.is_empty() {
            return Err(EmbedError::InvalidDim(0));
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector { components })
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector {
            components: vec![S::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.components
    }

    pub fn into_inner(self) -> Vec<S> {
        self.components
    }

    pub fn dot(&self, other: &Self) -> S {
        self.components
            .iter()
            .zip(&other.components)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|x| x.is_zero())
    }

    /// Unit vector in the same direction; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let norm = self.norm();
        if norm.is_zero() {
            return self.clone();
        }
        self.map(|x| x / norm)
    }

    pub fn scaled(&self, factor: S) -> Self {
        self.map(|x| x * factor)
    }

    fn map(&self, f: impl Fn(S) -> S) -> Self {
        EmbeddingVector {
            components: self.components.iter().map(|&x| f(x)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self, weight: S) {
        for (a, &b) in self.components.iter_mut().zip(&other.components) {
            *a = *a + weight * b;
        }
    }
}

/// Anything that turns text into vectors.
pub trait EmbeddingProvider<S: Scalar>: Send + Sync {
    /// Stable description of the model behind this provider; two providers
    /// with the same identity must return identical vectors for identical text.
    fn identity(&self) -> String;

    fn dim(&self) -> Result<usize, EmbedError>;

    /// Embed a batch, preserving order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

impl<S: Scalar, P: EmbeddingProvider<S> + ?Sized> EmbeddingProvider<S> for &P {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn dim(&self) -> Result<usize, EmbedError> {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        (**self).embed_batch(texts)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

impl<S: Scalar, P: EmbeddingProvider<S> + ?Sized> EmbeddingProvider<S> for Box<P> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn dim(&self) -> Result<usize, EmbedError> {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        (**self).embed_batch(texts)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// An embedding plus whether it is the degenerate zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded<S> {
    pub vector: EmbeddingVector<S>,
    pub degenerate: bool,
}

/// Embed one text after trimming it. Blank text yields a flagged zero vector
/// without calling the provider.
pub fn embed_text<S: Scalar>(text: &str, provider: &dyn EmbeddingProvider<S>) -> Result<Embedded<S>, EmbedError> {
    Ok(embed_texts(&[text.to_string()], provider)?.remove(0))
}

/// Batched [`embed_text`].
pub fn embed_texts<S: Scalar>(texts: &[String], provider: &dyn EmbeddingProvider<S>) -> Result<Vec<Embedded<S>>, EmbedError> {
    let trimmed: Vec<&str> = texts.iter().map(|t| t.trim()).collect();
    let wanted: Vec<String> = trimmed.iter().filter(|t| !t.is_empty()).map(|t| t.to_string()).collect();
    let mut vectors = if wanted.is_empty() {
        Vec::new()
    } else {
        provider.embed_batch(&wanted)?
    }
    .into_iter();
    let dim = match vectors.as_slice().first() {
        Some(v) => v.dim(),
        None => provider.dim()?,
    };
    trimmed
        .iter()
        .map(|t| {
            let vector = if t.is_empty() {
                EmbeddingVector::zeros(dim)
            } else {
                vectors
                    .next()
                    .ok_or_else(|| EmbedError::Provider("provider returned too few vectors".into()))?
            };
            if vector.dim() != dim {
                return Err(EmbedError::DimMismatch {
                    expected: dim,
                    found: vector.dim(),
                });
            }
            let degenerate = vector.is_zero();
            Ok(Embedded { vector, degenerate })
        })
        .collect()
}

/// Split a camelCase / snake_case identifier into lowercase words.
/// `educationLevel` → `education level`, `HTMLParser` → `html parser`.
pub fn split_identifier(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            continue;
        }
        if c.is_uppercase() && !current.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                words.push(std::mem::take(&mut current));
            }
        }
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    words.join(" ")
}

/// Local name of an IRI: the part after the last `#` or `/`.
pub fn iri_local_name(iri: &str) -> &str {
    iri.rsplit(['#', '/']).next().unwrap_or(iri)
}

/// Terms of a column that get their own embedding: the label, then the
/// semantic type, then the vocabulary property's human-readable name.
pub fn column_terms(c: &ColumnMeta) -> Vec<String> {
    let mut terms = vec![c.label.clone()];
    if let Some(ty) = &c.semantic_type {
        terms.push(ty.clone());
    }
    if let Some(iri) = &c.vocab_property {
        let words = split_identifier(iri_local_name(iri));
        if !words.is_empty() {
            terms.push(words);
        }
    }
    terms
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Candidates restricted to the query's topic; the topic is not embedded.
    Td,
    /// All candidates; the topic is embedded with a weight.
    Tg,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Td => "td",
            Scenario::Tg => "tg",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "td" => Ok(Scenario::Td),
            "tg" => Ok(Scenario::Tg),
            other => Err(format!("unknown scenario {other:?} (expected td or tg)")),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_TOPIC_WEIGHT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionConfig {
    pub scenario: Scenario,
    /// Share of the topic embedding in the topic guided composite.
    pub topic_weight: f64,
}

impl CompositionConfig {
    pub fn td() -> Self {
        CompositionConfig {
            scenario: Scenario::Td,
            topic_weight: DEFAULT_TOPIC_WEIGHT,
        }
    }

    pub fn tg(topic_weight: f64) -> Self {
        CompositionConfig {
            scenario: Scenario::Tg,
            topic_weight,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.topic_weight) {
            return Err(format!("topic weight {} outside [0, 1]", self.topic_weight));
        }
        Ok(())
    }
}

/// One dataset's composite vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetVector<S> {
    pub dataset_id: String,
    pub vector: EmbeddingVector<S>,
    pub scenario: Scenario,
    pub config_digest: String,
    /// All terms embedded to zero; excluded from ranking.
    pub degenerate: bool,
}

fn config_digest(provider_identity: &str, cfg: &CompositionConfig) -> String {
    let canonical = match cfg.scenario {
        Scenario::Td => format!("{provider_identity}|td"),
        Scenario::Tg => format!("{provider_identity}|tg|{}", cfg.topic_weight),
    };
    let hash = Sha256::digest(canonical.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Compose the dataset vector from precomputed term and topic embeddings.
///
/// `terms` holds the embeddings of every column term; `topic` is required
/// when the scenario is topic guided and the weight is non-zero.
pub fn compose_from_parts<S: Scalar>(
    terms: &[EmbeddingVector<S>],
    topic: Option<&EmbeddingVector<S>>,
    cfg: &CompositionConfig,
) -> (EmbeddingVector<S>, bool) {
    let dim = terms.first().map_or(0, |v| v.dim());
    let mut sum = EmbeddingVector::zeros(dim);
    let mut count = 0usize;
    for t in terms.iter().filter(|t| !t.is_zero()) {
        sum.add_assign(&t.normalized(), S::one());
        count += 1;
    }
    if count == 0 {
        return (sum, true);
    }
    let columns = sum.scaled(S::one() / S::from_count(count)).normalized();
    if cfg.scenario == Scenario::Td || cfg.topic_weight == 0.0 {
        return (columns, false);
    }
    let w = S::lit(cfg.topic_weight);
    let mut mixed = columns.scaled(S::one() - w);
    if let Some(topic) = topic.filter(|t| !t.is_zero()) {
        mixed.add_assign(&topic.normalized(), w);
    }
    let out = mixed.normalized();
    let degenerate = out.is_zero();
    (out, degenerate)
}

/// Build the composite vector of one dataset.
pub fn compose_dataset_vector<S: Scalar>(
    d: &DatasetMeta,
    cfg: &CompositionConfig,
    provider: &dyn EmbeddingProvider<S>,
) -> Result<DatasetVector<S>, EmbedError> {
    // sorted so the floating point sum depends only on the multiset of terms
    let mut terms: Vec<String> = d.columns.iter().flat_map(column_terms).collect();
    terms.sort();
    let embedded = embed_texts(&terms, provider)?;
    let term_vectors: Vec<EmbeddingVector<S>> = embedded.into_iter().map(|e| e.vector).collect();
    let topic = if cfg.scenario == Scenario::Tg && cfg.topic_weight != 0.0 {
        Some(embed_text(&d.topic, provider)?.vector)
    } else {
        None
    };
    let (vector, degenerate) = compose_from_parts(&term_vectors, topic.as_ref(), cfg);
    if degenerate {
        log::warn!("dataset {}: all metadata terms embed to zero; excluded from ranking", d.id);
    }
    Ok(DatasetVector {
        dataset_id: d.id.clone(),
        vector,
        scenario: cfg.scenario,
        config_digest: config_digest(&provider.identity(), cfg),
        degenerate,
    })
}

/// Compose many datasets, in parallel when the provider allows it.
pub fn compose_all<'a, S: Scalar>(
    datasets: impl IntoIterator<Item = &'a DatasetMeta>,
    cfg: &CompositionConfig,
    provider: &dyn EmbeddingProvider<S>,
) -> Result<BTreeMap<String, DatasetVector<S>>, EmbedError> {
    let datasets: Vec<&DatasetMeta> = datasets.into_iter().collect();
    let vectors: Vec<DatasetVector<S>> = match provider.concurrency() {
        Concurrency::Concurrent => datasets
            .par_iter()
            .map(|d| compose_dataset_vector(d, cfg, provider))
            .collect::<Result<_, _>>()?,
        Concurrency::Serial => datasets
            .iter()
            .map(|d| compose_dataset_vector(d, cfg, provider))
            .collect::<Result<_, _>>()?,
    };
    Ok(vectors.into_iter().map(|v| (v.dataset_id.clone(), v)).collect())
}
