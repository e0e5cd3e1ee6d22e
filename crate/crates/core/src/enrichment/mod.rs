//! Column enrichment: semantic data types and vocabulary properties.
//!
//! Types come from a [`TypeAnnotator`]. Properties are picked in two steps:
//! the ten vocabulary entries closest to the header by embedding cosine, then
//! a [`PropertySelector`] choosing one of them. Failures on one column leave
//! that column unenriched and are reported; they never abort a run.

mod types;
mod vocab;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ColumnMeta, DatasetMeta};
use crate::embedding::{EmbedError, EmbeddingProvider, RetryPolicy};
use crate::scalar::Scalar;
use crate::search::SearchError;
use crate::Concurrency;

pub use types::{
    is_known_type, AnnotatorError, DictionaryAnnotator, MappingAnnotator, TypeAnnotator, TYPE_INVENTORY, TYPE_INVENTORY_VERSION,
};
pub use vocab::{
    parse_vocabulary, rank_property_candidates, read_vocabulary, PropertyCandidateSet, VocabIndex, VocabularyEntry, CANDIDATE_LIMIT,
};

#[derive(Debug, Error)]
pub enum EnrichmentError {
    #[error("{source_name}:{line}: {detail}")]
    Vocabulary { source_name: String, line: usize, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("unknown enrichment setting {0:?} (expected base, dtypes, dbpedia or dtypes+dbpedia)")]
    UnknownSetting(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl EnrichmentError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EnrichmentError::Embed(e) if e.is_retryable())
    }
}

/// Which column annotations are produced and take part in composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnrichmentMode {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "dtypes")]
    Dtypes,
    #[serde(rename = "dbpedia")]
    Dbpedia,
    #[serde(rename = "dtypes+dbpedia")]
    DtypesDbpedia,
}

impl EnrichmentMode {
    pub const ALL: [EnrichmentMode; 4] = [
        EnrichmentMode::Base,
        EnrichmentMode::Dtypes,
        EnrichmentMode::Dbpedia,
        EnrichmentMode::DtypesDbpedia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnrichmentMode::Base => "base",
            EnrichmentMode::Dtypes => "dtypes",
            EnrichmentMode::Dbpedia => "dbpedia",
            EnrichmentMode::DtypesDbpedia => "dtypes+dbpedia",
        }
    }

    pub fn uses_types(self) -> bool {
        matches!(self, EnrichmentMode::Dtypes | EnrichmentMode::DtypesDbpedia)
    }

    pub fn uses_properties(self) -> bool {
        matches!(self, EnrichmentMode::Dbpedia | EnrichmentMode::DtypesDbpedia)
    }

    /// Drop the annotations this setting does not use.
    pub fn project_column(self, c: &ColumnMeta) -> ColumnMeta {
        ColumnMeta {
            label: c.label.clone(),
            semantic_type: c.semantic_type.clone().filter(|_| self.uses_types()),
            vocab_property: c.vocab_property.clone().filter(|_| self.uses_properties()),
        }
    }

    pub fn project_catalog(self, cat: &Catalog) -> Catalog {
        cat.map_datasets(|d| DatasetMeta {
            columns: d.columns.iter().map(|c| self.project_column(c)).collect(),
            ..d.clone()
        })
    }
}

impl fmt::Display for EnrichmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnrichmentMode {
    type Err = EnrichmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnrichmentMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EnrichmentError::UnknownSetting(s.to_string()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("property selector failed: {0}")]
pub struct SelectorError(pub String);

/// Chooses one vocabulary property for a column among ranked candidates.
pub trait PropertySelector: Send + Sync {
    /// Return the IRI of the chosen candidate, or `None` to leave the column
    /// without a property.
    fn select(&self, column_label: &str, candidates: &[VocabularyEntry]) -> Result<Option<String>, SelectorError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

/// Picks the highest-cosine candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct TopCandidateSelector;

impl PropertySelector for TopCandidateSelector {
    fn select(&self, _column_label: &str, candidates: &[VocabularyEntry]) -> Result<Option<String>, SelectorError> {
        Ok(candidates.first().map(|e| e.iri.clone()))
    }
}

/// Fixed column label → property IRI choices.
#[derive(Debug, Clone, Default)]
pub struct MappingSelector {
    map: std::collections::BTreeMap<String, String>,
}

impl MappingSelector {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        MappingSelector {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

impl PropertySelector for MappingSelector {
    fn select(&self, column_label: &str, _candidates: &[VocabularyEntry]) -> Result<Option<String>, SelectorError> {
        Ok(self.map.get(column_label).cloned())
    }
}

/// Selector behind `POST {endpoint}/select`:
/// `{"column": .., "candidates": [{"iri", "label"}..]}` → `{"iri": ..}`.
pub struct HttpSelector {
    endpoint: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpSelector {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpSelector {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            retry: RetryPolicy::default(),
            agent: crate::embedding::http_agent(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

#[derive(Serialize)]
struct SelectRequest<'a> {
    column: &'a str,
    candidates: &'a [VocabularyEntry],
}

#[derive(Deserialize)]
struct SelectResponse {
    iri: Option<String>,
}

impl PropertySelector for HttpSelector {
    fn select(&self, column_label: &str, candidates: &[VocabularyEntry]) -> Result<Option<String>, SelectorError> {
        let url = format!("{}/select", self.endpoint);
        let body = serde_json::to_value(SelectRequest {
            column: column_label,
            candidates,
        })
        .expect("request serializes");
        let resp: SelectResponse =
            crate::embedding::call_with_retry(&self.agent, &url, Some(&body), self.retry).map_err(|e| SelectorError(e.to_string()))?;
        Ok(resp.iri)
    }
}

/// Outcome of [`select_property`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub entry: Option<VocabularyEntry>,
    /// The selector answered outside the candidate set; the top candidate was used.
    pub fell_back: bool,
    pub error: Option<String>,
}

/// Ask `selector` for a property, constrained to the candidate set.
pub fn select_property<S: Scalar>(cs: &PropertyCandidateSet<S>, selector: &dyn PropertySelector) -> Selection {
    let none = Selection {
        entry: None,
        fell_back: false,
        error: None,
    };
    if cs.is_empty() {
        return none;
    }
    match selector.select(&cs.column_label, &cs.entries()) {
        Ok(None) => none,
        Ok(Some(iri)) => match cs.contains_iri(&iri) {
            Some(e) => Selection {
                entry: Some(e.clone()),
                ..none
            },
            None => {
                log::warn!(
                    "column {:?}: selector chose {iri}, not a candidate; using top candidate",
                    cs.column_label
                );
                Selection {
                    entry: cs.top().cloned(),
                    fell_back: true,
                    error: None,
                }
            }
        },
        Err(e) => {
            log::warn!("column {:?}: {e}", cs.column_label);
            Selection {
                error: Some(e.to_string()),
                ..none
            }
        }
    }
}

fn try_annotate(c: &ColumnMeta, annotator: &dyn TypeAnnotator) -> Result<Option<String>, String> {
    match annotator.annotate(&c.label) {
        Ok(Some(ty)) if is_known_type(&ty) => Ok(Some(ty)),
        Ok(Some(ty)) => Err(format!("annotator returned {ty:?}, not in {TYPE_INVENTORY_VERSION}")),
        Ok(None) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

/// Set the column's semantic type when the annotator returns one.
pub fn annotate_semantic_type(c: &ColumnMeta, annotator: &dyn TypeAnnotator) -> ColumnMeta {
    match try_annotate(c, annotator) {
        Ok(Some(ty)) => c.clone().with_semantic_type(ty),
        Ok(None) => c.clone(),
        Err(e) => {
            log::warn!("column {:?}: {e}", c.label);
            c.clone()
        }
    }
}

/// Everything `enrich_catalog` needs.
pub struct EnrichmentSettings<'a, S> {
    pub mode: EnrichmentMode,
    pub annotator: &'a dyn TypeAnnotator,
    pub selector: &'a dyn PropertySelector,
    pub vocabulary: &'a [VocabularyEntry],
    pub embedder: &'a dyn EmbeddingProvider<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnrichmentStage {
    Type,
    Property,
}

/// A column that could not be (fully) enriched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnrichmentIssue {
    pub dataset_id: String,
    pub column: String,
    pub stage: EnrichmentStage,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentOutcome {
    pub catalog: Catalog,
    pub issues: Vec<EnrichmentIssue>,
}

fn enrich_dataset<S: Scalar>(
    d: &DatasetMeta,
    settings: &EnrichmentSettings<'_, S>,
    index: Option<&VocabIndex<S>>,
) -> (DatasetMeta, Vec<EnrichmentIssue>) {
    let mut issues = Vec::new();
    let mut issue = |column: &ColumnMeta, stage, detail: String| {
        log::warn!("{}/{}: {detail}", d.id, column.label);
        issues.push(EnrichmentIssue {
            dataset_id: d.id.clone(),
            column: column.label.clone(),
            stage,
            detail,
        });
    };
    let mut out = d.clone();
    for column in &mut out.columns {
        if settings.mode.uses_types() {
            match try_annotate(column, settings.annotator) {
                Ok(Some(ty)) => column.semantic_type = Some(ty),
                Ok(None) => {}
                Err(e) => issue(column, EnrichmentStage::Type, e),
            }
        }
        if let Some(index) = index {
            match index.rank(&column.label, settings.embedder) {
                Ok(cs) => {
                    let sel = select_property(&cs, settings.selector);
                    if let Some(e) = sel.error {
                        issue(column, EnrichmentStage::Property, e);
                    } else if sel.fell_back {
                        issue(
                            column,
                            EnrichmentStage::Property,
                            "selector answer outside candidates; used top candidate".into(),
                        );
                    }
                    if let Some(entry) = sel.entry {
                        column.vocab_property = Some(entry.iri);
                    }
                }
                Err(e) => issue(column, EnrichmentStage::Property, e.to_string()),
            }
        }
    }
    (out, issues)
}

/// Apply the enrichments of `settings.mode` to every column. `Base` returns
/// the catalog unchanged. Labels, ids, topics and column order are preserved.
pub fn enrich_catalog<S: Scalar>(cat: &Catalog, settings: &EnrichmentSettings<'_, S>) -> Result<EnrichmentOutcome, EnrichmentError> {
    if settings.mode == EnrichmentMode::Base {
        return Ok(EnrichmentOutcome {
            catalog: cat.clone(),
            issues: Vec::new(),
        });
    }
    let index = if settings.mode.uses_properties() {
        Some(VocabIndex::build(settings.vocabulary, settings.embedder)?)
    } else {
        None
    };
    let datasets: Vec<&DatasetMeta> = cat.iter().collect();
    let parallel = [
        settings.annotator.concurrency(),
        settings.selector.concurrency(),
        settings.embedder.concurrency(),
    ]
    .iter()
    .all(|c| *c == Concurrency::Concurrent);
    let results: Vec<(DatasetMeta, Vec<EnrichmentIssue>)> = if parallel {
        datasets.par_iter().map(|d| enrich_dataset(d, settings, index.as_ref())).collect()
    } else {
        datasets.iter().map(|d| enrich_dataset(d, settings, index.as_ref())).collect()
    };
    let mut catalog = cat.clone();
    let mut issues = Vec::new();
    for (d, mut i) in results {
        catalog.datasets.insert(d.id.clone(), d);
        issues.append(&mut i);
    }
    Ok(EnrichmentOutcome { catalog, issues })
}
