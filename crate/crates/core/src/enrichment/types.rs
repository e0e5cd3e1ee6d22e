//! Semantic type annotation of column headers.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embedding::split_identifier;
use crate::Concurrency;

/// Closed inventory of semantic types (the 78 labels of the Sherlock model).
pub const TYPE_INVENTORY: [&str; 78] = [
    "address",
    "affiliate",
    "affiliation",
    "age",
    "album",
    "area",
    "artist",
    "birth Date",
    "birth Place",
    "brand",
    "capacity",
    "category",
    "city",
    "class",
    "classification",
    "club",
    "code",
    "collection",
    "command",
    "company",
    "component",
    "continent",
    "country",
    "county",
    "creator",
    "credit",
    "currency",
    "day",
    "depth",
    "description",
    "director",
    "duration",
    "education",
    "elevation",
    "family",
    "file Size",
    "format",
    "gender",
    "genre",
    "grades",
    "industry",
    "isbn",
    "jockey",
    "language",
    "location",
    "manufacturer",
    "name",
    "nationality",
    "notes",
    "operator",
    "order",
    "organisation",
    "origin",
    "owner",
    "person",
    "plays",
    "position",
    "product",
    "publisher",
    "range",
    "rank",
    "ranking",
    "region",
    "religion",
    "requirement",
    "result",
    "sales",
    "service",
    "sex",
    "species",
    "state",
    "status",
    "symbol",
    "team",
    "team Name",
    "type",
    "weight",
    "year",
];

/// Version tag of [`TYPE_INVENTORY`]; bump when the list changes.
pub const TYPE_INVENTORY_VERSION: &str = "sherlock-78/v1";

pub fn is_known_type(ty: &str) -> bool {
    TYPE_INVENTORY.contains(&ty)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("type annotator failed: {0}")]
pub struct AnnotatorError(pub String);

/// Maps a column header to at most one type from [`TYPE_INVENTORY`].
pub trait TypeAnnotator: Send + Sync {
    fn annotate(&self, label: &str) -> Result<Option<String>, AnnotatorError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

/// Header words that name a type without containing it.
const SYNONYMS: [(&str, &str); 14] = [
    ("occupation", "position"),
    ("job", "position"),
    ("profession", "position"),
    ("marital", "status"),
    ("dob", "birth Date"),
    ("birthday", "birth Date"),
    ("birthplace", "birth Place"),
    ("town", "city"),
    ("nation", "country"),
    ("employer", "company"),
    ("firm", "company"),
    ("degree", "education"),
    ("qualification", "education"),
    ("surname", "name"),
];

/// Header-only annotator over the type inventory.
///
/// The header is split into lowercase words. In order: the whole header equal
/// to a type; a synonym word; the longest type whose words occur contiguously
/// in the header (earliest inventory entry on ties).
#[derive(Debug, Clone)]
pub struct DictionaryAnnotator {
    types: Vec<(Vec<String>, &'static str)>,
    synonyms: BTreeMap<&'static str, &'static str>,
}

impl Default for DictionaryAnnotator {
    fn default() -> Self {
        let types = TYPE_INVENTORY
            .iter()
            .map(|t| (t.to_lowercase().split(' ').map(str::to_string).collect(), *t))
            .collect();
        DictionaryAnnotator {
            types,
            synonyms: SYNONYMS.into_iter().collect(),
        }
    }
}

impl TypeAnnotator for DictionaryAnnotator {
    fn annotate(&self, label: &str) -> Result<Option<String>, AnnotatorError> {
        let words: Vec<String> = split_identifier(label)
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        if words.is_empty() {
            return Ok(None);
        }
        if let Some((_, ty)) = self.types.iter().find(|(tw, _)| *tw == words) {
            return Ok(Some(ty.to_string()));
        }
        if let Some(ty) = words.iter().find_map(|w| self.synonyms.get(w.as_str())) {
            return Ok(Some(ty.to_string()));
        }
        let best = self
            .types
            .iter()
            .filter(|(tw, _)| words.windows(tw.len()).any(|win| win == tw.as_slice()))
            .fold(None::<&(Vec<String>, &str)>, |best, cand| match best {
                Some(b) if b.0.len() >= cand.0.len() => Some(b),
                _ => Some(cand),
            });
        Ok(best.map(|(_, ty)| ty.to_string()))
    }
}

/// Fixed label → type table, e.g. output of an external classifier.
#[derive(Debug, Clone, Default)]
pub struct MappingAnnotator {
    map: BTreeMap<String, String>,
}

impl MappingAnnotator {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        MappingAnnotator {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

impl TypeAnnotator for MappingAnnotator {
    fn annotate(&self, label: &str) -> Result<Option<String>, AnnotatorError> {
        Ok(self.map.get(label).cloned())
    }
}
