//! Vocabulary properties and their ranking against column headers.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnrichmentError;
use crate::catalog::is_absolute_iri;
use crate::embedding::{embed_text, embed_texts, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;
use crate::search::cosine;

/// Size of the candidate set handed to a property selector.
pub const CANDIDATE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub iri: String,
    pub label: String,
}

/// Parse `iri<TAB>label` lines; blank lines are skipped.
pub fn parse_vocabulary(text: &str, source: &str) -> Result<Vec<VocabularyEntry>, EnrichmentError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |detail: &str| EnrichmentError::Vocabulary {
            source_name: source.to_string(),
            line: n + 1,
            detail: detail.to_string(),
        };
        if line.trim().is_empty() {
            continue;
        }
        let (iri, label) = line.split_once('\t').ok_or_else(|| bad("expected iri<TAB>label"))?;
        let (iri, label) = (iri.trim(), label.trim());
        if !is_absolute_iri(iri) {
            return Err(bad("not an absolute IRI"));
        }
        if label.is_empty() {
            return Err(bad("empty label"));
        }
        if !seen.insert(iri.to_string()) {
            return Err(bad("duplicate IRI"));
        }
        out.push(VocabularyEntry {
            iri: iri.to_string(),
            label: label.to_string(),
        });
    }
    Ok(out)
}

pub fn read_vocabulary(path: &Path) -> Result<Vec<VocabularyEntry>, EnrichmentError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnrichmentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_vocabulary(&text, &path.display().to_string())
}

/// Up to ten most similar vocabulary entries for one column header, best
/// first; equal scores ordered by ascending IRI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCandidateSet<S> {
    pub column_label: String,
    pub candidates: Vec<(VocabularyEntry, S)>,
}

impl<S: Scalar> PropertyCandidateSet<S> {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn top(&self) -> Option<&VocabularyEntry> {
        self.candidates.first().map(|(e, _)| e)
    }

    pub fn contains_iri(&self, iri: &str) -> Option<&VocabularyEntry> {
        self.candidates.iter().map(|(e, _)| e).find(|e| e.iri == iri)
    }

    pub fn entries(&self) -> Vec<VocabularyEntry> {
        self.candidates.iter().map(|(e, _)| e.clone()).collect()
    }
}

/// Vocabulary with label embeddings computed once.
pub struct VocabIndex<S> {
    entries: Vec<(VocabularyEntry, EmbeddingVector<S>)>,
}

impl<S: Scalar> VocabIndex<S> {
    pub fn build(vocab: &[VocabularyEntry], embedder: &dyn EmbeddingProvider<S>) -> Result<Self, EnrichmentError> {
        if vocab.is_empty() {
            return Err(EnrichmentError::EmptyVocabulary);
        }
        let labels: Vec<String> = vocab.iter().map(|e| e.label.clone()).collect();
        let vectors = embed_texts(&labels, embedder)?;
        Ok(VocabIndex {
            entries: vocab
                .iter()
                .cloned()
                .zip(vectors)
                .filter(|(_, e)| !e.degenerate)
                .map(|(entry, e)| (entry, e.vector))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank(&self, column_label: &str, embedder: &dyn EmbeddingProvider<S>) -> Result<PropertyCandidateSet<S>, EnrichmentError> {
        let query = embed_text(column_label, embedder)?;
        let mut candidates: Vec<(VocabularyEntry, S)> = Vec::new();
        if !query.degenerate {
            for (entry, v) in &self.entries {
                let score = cosine(&query.vector, v)?;
                candidates.push((entry.clone(), score));
            }
        }
        candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.iri.cmp(&b.0.iri)));
        candidates.truncate(CANDIDATE_LIMIT);
        Ok(PropertyCandidateSet {
            column_label: column_label.to_string(),
            candidates,
        })
    }
}

/// Embed the header and every vocabulary label; keep the ten closest.
pub fn rank_property_candidates<S: Scalar>(
    column_label: &str,
    vocab: &[VocabularyEntry],
    embedder: &dyn EmbeddingProvider<S>,
) -> Result<PropertyCandidateSet<S>, EnrichmentError> {
    VocabIndex::build(vocab, embedder)?.rank(column_label, embedder)
}
