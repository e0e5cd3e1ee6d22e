//! Per-run embedding cache and the JSON Lines dataset-vector file.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use super::{DatasetVector, EmbedError, EmbeddingProvider, EmbeddingVector, Scenario};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Concurrency;

/// Text embeddings keyed by (provider identity, text).
#[derive(Debug)]
pub struct EmbeddingCache<S> {
    map: DashMap<(String, String), EmbeddingVector<S>>,
}

impl<S: Scalar> Default for EmbeddingCache<S> {
    fn default() -> Self {
        EmbeddingCache { map: DashMap::new() }
    }
}

impl<S: Scalar> EmbeddingCache<S> {
    pub fn get(&self, identity: &str, text: &str) -> Option<EmbeddingVector<S>> {
        self.map.get(&(identity.to_string(), text.to_string())).map(|v| v.value().clone())
    }

    /// Insert unless present; returns the cached value either way.
    pub fn get_or_insert(&self, identity: &str, text: &str, v: EmbeddingVector<S>) -> EmbeddingVector<S> {
        self.map
            .entry((identity.to_string(), text.to_string()))
            .or_insert(v)
            .value()
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Wraps a provider so each distinct text is embedded once per run.
pub struct CachedProvider<S, P> {
    inner: P,
    cache: EmbeddingCache<S>,
}

impl<S: Scalar, P: EmbeddingProvider<S>> CachedProvider<S, P> {
    pub fn new(inner: P) -> Self {
        CachedProvider {
            inner,
            cache: EmbeddingCache::default(),
        }
    }

    pub fn cache(&self) -> &EmbeddingCache<S> {
        &self.cache
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<S: Scalar, P: EmbeddingProvider<S>> EmbeddingProvider<S> for CachedProvider<S, P> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn dim(&self) -> Result<usize, EmbedError> {
        self.inner.dim()
    }

    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        let identity = self.inner.identity();
        let missing: Vec<String> = texts
            .iter()
            .filter(|t| self.cache.get(&identity, t).is_none())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            // the identity may now include a model name learned from the first response
            let identity_after = self.inner.identity();
            for (t, v) in missing.iter().zip(fresh) {
                self.cache.get_or_insert(&identity_after, t, v);
            }
            return texts
                .iter()
                .map(|t| {
                    self.cache
                        .get(&identity_after, t)
                        .ok_or_else(|| EmbedError::Provider(format!("provider identity changed while embedding {t:?}")))
                })
                .collect();
        }
        Ok(texts.iter().map(|t| self.cache.get(&identity, t).expect("checked above")).collect())
    }
}

/// One line of the dataset-vector cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord<S> {
    pub id: String,
    pub scenario: Scenario,
    pub dim: usize,
    pub vector: Vec<S>,
    pub config_digest: String,
}

impl<S: Scalar> From<&DatasetVector<S>> for VectorRecord<S> {
    fn from(v: &DatasetVector<S>) -> Self {
        VectorRecord {
            id: v.dataset_id.clone(),
            scenario: v.scenario,
            dim: v.vector.dim(),
            vector: v.vector.as_slice().to_vec(),
            config_digest: v.config_digest.clone(),
        }
    }
}

pub fn write_vectors<'a, S: Scalar>(path: &Path, vectors: impl IntoIterator<Item = &'a DatasetVector<S>>) -> Result<()> {
    let ctx = || path.display().to_string();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?);
    for v in vectors {
        let line = serde_json::to_string(&VectorRecord::from(v)).map_err(|e| Error::json(ctx(), e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(ctx(), e))?;
    }
    out.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_vectors<S: Scalar>(path: &Path) -> Result<Vec<DatasetVector<S>>> {
    let ctx = |n: usize| format!("{}:{n}", path.display());
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(ctx(i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VectorRecord<S> = serde_json::from_str(&line).map_err(|e| Error::json(ctx(i + 1), e))?;
        if rec.dim != rec.vector.len() {
            return Err(EmbedError::DimMismatch {
                expected: rec.dim,
                found: rec.vector.len(),
            }
            .into());
        }
        let vector = EmbeddingVector::new(rec.vector)?;
        out.push(DatasetVector {
            dataset_id: rec.id,
            degenerate: vector.is_zero(),
            vector,
            scenario: rec.scenario,
            config_digest: rec.config_digest,
        });
    }
    Ok(out)
}
