//! Dataless table metadata: the data model, header extraction from CSV files,
//! Turtle (de)serialization and directory loading.
//!
//! A [`DatasetMeta`] never holds cell values. Extraction reads exactly one
//! record (the header row) from each CSV file.

mod turtle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use turtle::{parse_turtle, parse_turtle_with_warnings, serialize_turtle, TurtleError};

/// Base IRI used for dataset and column nodes unless overridden.
pub const DEFAULT_BASE_IRI: &str = "http://metaUnionSearch";

/// Name of the per-directory file assigning topic and role to each source file.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Name of the index written next to the Turtle files of an ingested catalog.
pub const INDEX_FILE: &str = "catalog.json";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{file}: empty header row")]
    EmptyHeader { file: String },
    #[error("{file}: header cell {position} is empty")]
    EmptyLabel { file: String, position: usize },
    #[error("{file}: topic must not be empty")]
    EmptyTopic { file: String },
    #[error("cannot derive a dataset identifier from title {title:?}")]
    InvalidTitle { title: String },
    #[error("dataset {id}: no columns")]
    NoColumns { id: String },
    #[error("not an absolute IRI: {iri:?}")]
    InvalidIri { iri: String },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: header cell {position} is not valid UTF-8")]
    Encoding { file: String, position: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: no entry in {MANIFEST_FILE}")]
    MissingManifestEntry { file: String },
    #[error("duplicate dataset id {id:?} in {first} and {second}")]
    DuplicateId { id: String, first: PathBuf, second: PathBuf },
    #[error("{file}: {source}")]
    Turtle {
        file: String,
        #[source]
        source: TurtleError,
    },
}

/// Whether a dataset is searched for (query) or searched among (candidate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Candidate,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Query => "query",
            Role::Candidate => "candidate",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "query" => Some(Role::Query),
            "candidate" => Some(Role::Candidate),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Column-level metadata: the header label plus optional enrichments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_property: Option<String>,
}

impl ColumnMeta {
    /// Unenriched column; the label is trimmed and must not end up empty.
    pub fn new(label: &str) -> Option<Self> {
        let label = label.trim();
        (!label.is_empty()).then(|| ColumnMeta {
            label: label.to_string(),
            semantic_type: None,
            vocab_property: None,
        })
    }

    pub fn with_semantic_type(mut self, ty: impl Into<String>) -> Self {
        self.semantic_type = Some(ty.into());
        self
    }

    pub fn with_vocab_property(mut self, iri: impl Into<String>) -> Result<Self, CatalogError> {
        let iri = iri.into();
        if !is_absolute_iri(&iri) {
            return Err(CatalogError::InvalidIri { iri });
        }
        self.vocab_property = Some(iri);
        Ok(self)
    }

    pub fn is_enriched(&self) -> bool {
        self.semantic_type.is_some() || self.vocab_property.is_some()
    }
}

/// A dataless table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub title: String,
    pub topic: String,
    pub role: Role,
    pub columns: Vec<ColumnMeta>,
}

impl DatasetMeta {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !is_identifier(&self.id) {
            return Err(CatalogError::InvalidTitle { title: self.title.clone() });
        }
        if self.topic.trim().is_empty() {
            return Err(CatalogError::EmptyTopic { file: self.title.clone() });
        }
        if self.columns.is_empty() {
            return Err(CatalogError::NoColumns { id: self.id.clone() });
        }
        for (i, c) in self.columns.iter().enumerate() {
            if c.label.is_empty() || c.label.trim() != c.label {
                return Err(CatalogError::EmptyLabel {
                    file: self.title.clone(),
                    position: i + 1,
                });
            }
            if let Some(iri) = &c.vocab_property {
                if !is_absolute_iri(iri) {
                    return Err(CatalogError::InvalidIri { iri: iri.clone() });
                }
            }
        }
        Ok(())
    }

    /// IRI-safe identifiers for the columns, in column order.
    ///
    /// Each label is CamelCase-joined like dataset ids. Identifiers that
    /// collide get `_{n}` appended, `n` being the 1-based occurrence.
    pub fn column_ids(&self) -> Vec<String> {
        let raw: Vec<String> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let id = camel_join(&c.label);
                if id.is_empty() {
                    format!("Column{}", i + 1)
                } else {
                    id
                }
            })
            .collect();
        let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
        for id in &raw {
            *totals.entry(id).or_default() += 1;
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        raw.iter()
            .map(|id| {
                if totals[id.as_str()] == 1 {
                    id.clone()
                } else {
                    let n = seen.entry(id).or_default();
                    *n += 1;
                    format!("{id}_{n}")
                }
            })
            .collect()
    }
}

/// Derive a dataset identifier from a file title: drop the extension, split
/// on anything that is not an ASCII letter or digit, capitalize each part and
/// join. `Psychology_UEA3GE8N.csv` becomes `PsychologyUEA3GE8N`.
pub fn dataset_id_from_title(title: &str) -> Option<String> {
    let stem = match title.rfind('.') {
        Some(pos) if pos > 0 => &title[..pos],
        _ => title,
    };
    let id = camel_join(stem);
    (!id.is_empty()).then_some(id)
}

fn camel_join(s: &str) -> String {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|part| !part.is_empty())
        .map(|part| {
            let mut chars = part.chars();
            let first = chars.next().unwrap().to_ascii_uppercase();
            std::iter::once(first).chain(chars).collect::<String>()
        })
        .collect()
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `scheme:rest` with an RFC 3987 scheme and no characters Turtle forbids in an IRI.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut sc = scheme.chars();
    let scheme_ok =
        sc.next().is_some_and(|c| c.is_ascii_alphabetic()) && sc.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !s
            .chars()
            .any(|c| c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

/// Build a [`DatasetMeta`] from a header row.
pub fn extract_metadata(header: &[String], title: &str, topic: &str, role: Role) -> Result<DatasetMeta, CatalogError> {
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return Err(CatalogError::EmptyHeader { file: title.to_string() });
    }
    if topic.trim().is_empty() {
        return Err(CatalogError::EmptyTopic { file: title.to_string() });
    }
    let id = dataset_id_from_title(title).ok_or_else(|| CatalogError::InvalidTitle { title: title.to_string() })?;
    let columns = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            ColumnMeta::new(h).ok_or_else(|| CatalogError::EmptyLabel {
                file: title.to_string(),
                position: i + 1,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetMeta {
        id,
        title: title.to_string(),
        topic: topic.to_string(),
        role,
        columns,
    })
}

/// Read the first record of a CSV file. Nothing past the first record is parsed.
pub fn read_csv_header(path: &Path) -> Result<Vec<String>, CatalogError> {
    let file_name = display_name(path);
    let file = File::open(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut record = csv::ByteRecord::new();
    let found = reader.read_byte_record(&mut record).map_err(|source| CatalogError::Csv {
        file: file_name.clone(),
        source,
    })?;
    if !found {
        return Err(CatalogError::EmptyHeader { file: file_name });
    }
    record
        .iter()
        .enumerate()
        .map(|(i, field)| {
            let field = if i == 0 {
                field.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(field)
            } else {
                field
            };
            std::str::from_utf8(field).map(str::to_string).map_err(|_| CatalogError::Encoding {
                file: file_name.clone(),
                position: i + 1,
            })
        })
        .collect()
}

/// Extract metadata from a CSV file; the title is the file name.
pub fn extract_from_csv(path: &Path, topic: &str, role: Role) -> Result<DatasetMeta, CatalogError> {
    let header = read_csv_header(path)?;
    extract_metadata(&header, &display_name(path), topic, role)
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub topic: String,
    pub role: Role,
}

/// `manifest.json`: file name → topic and role.
pub type Manifest = BTreeMap<String, ManifestEntry>;

pub fn read_manifest(path: &Path) -> Result<Manifest, CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CatalogError::Manifest {
        path: path.to_path_buf(),
        source,
    })
}

/// Immutable set of datasets keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Catalog {
    pub datasets: BTreeMap<String, DatasetMeta>,
    pub provenance: PathBuf,
    /// Source file of each dataset, when loaded from disk.
    pub sources: BTreeMap<String, PathBuf>,
}

impl Catalog {
    pub fn new(provenance: impl Into<PathBuf>) -> Self {
        Catalog {
            provenance: provenance.into(),
            ..Default::default()
        }
    }

    pub fn from_datasets(datasets: impl IntoIterator<Item = DatasetMeta>) -> Result<Self, CatalogError> {
        let mut cat = Catalog::default();
        for d in datasets {
            cat.insert(d, PathBuf::new())?;
        }
        Ok(cat)
    }

    pub fn insert(&mut self, dataset: DatasetMeta, source: PathBuf) -> Result<(), CatalogError> {
        dataset.validate()?;
        if let Some(first) = self.sources.get(&dataset.id) {
            return Err(CatalogError::DuplicateId {
                id: dataset.id.clone(),
                first: first.clone(),
                second: source,
            });
        }
        self.sources.insert(dataset.id.clone(), source);
        self.datasets.insert(dataset.id.clone(), dataset);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetMeta> {
        self.datasets.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetMeta> {
        self.datasets.values()
    }

    pub fn queries(&self) -> impl Iterator<Item = &DatasetMeta> {
        self.iter().filter(|d| d.role == Role::Query)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &DatasetMeta> {
        self.iter().filter(|d| d.role == Role::Candidate)
    }

    pub fn topics(&self) -> BTreeSet<String> {
        self.iter().map(|d| d.topic.clone()).collect()
    }

    /// Find a dataset by id or, failing that, by title (source file name).
    pub fn resolve(&self, name: &str) -> Option<&DatasetMeta> {
        self.get(name)
            .or_else(|| self.iter().find(|d| d.title == name))
            .or_else(|| dataset_id_from_title(name).and_then(|id| self.get(&id)))
    }

    /// Query topics with no candidate of the same topic.
    pub fn orphan_query_topics(&self) -> BTreeSet<String> {
        let candidate_topics: BTreeSet<&str> = self.candidates().map(|d| d.topic.as_str()).collect();
        self.queries()
            .filter(|q| !candidate_topics.contains(q.topic.as_str()))
            .map(|q| q.topic.clone())
            .collect()
    }

    /// Replace every dataset through `f`, keeping ids and sources.
    pub fn map_datasets(&self, mut f: impl FnMut(&DatasetMeta) -> DatasetMeta) -> Catalog {
        Catalog {
            datasets: self.datasets.iter().map(|(id, d)| (id.clone(), f(d))).collect(),
            provenance: self.provenance.clone(),
            sources: self.sources.clone(),
        }
    }
}

/// Load every `.csv` and `.ttl` file of a directory.
///
/// CSV files need a `manifest.json` entry; Turtle files carry their topic and
/// role, but a manifest entry for them overrides the role.
pub fn load_catalog(dir: &Path) -> Result<Catalog, CatalogError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.is_file() {
        read_manifest(&manifest_path)?
    } else {
        Manifest::new()
    };
    load_catalog_with(dir, &manifest)
}

/// [`load_catalog`] with a manifest read from elsewhere.
pub fn load_catalog_with(dir: &Path, manifest: &Manifest) -> Result<Catalog, CatalogError> {
    let io_err = |source| CatalogError::Io {
        path: dir.to_path_buf(),
        source,
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    files.retain(|p| p.is_file() && matches!(extension(p).as_deref(), Some("csv") | Some("ttl")));
    files.sort();

    let mut catalog = Catalog::new(dir);
    for path in files {
        let name = display_name(&path);
        let entry = manifest.get(&name);
        let dataset = match extension(&path).as_deref() {
            Some("csv") => {
                let entry = entry.ok_or_else(|| CatalogError::MissingManifestEntry { file: name.clone() })?;
                extract_from_csv(&path, &entry.topic, entry.role)?
            }
            _ => {
                let text = std::fs::read_to_string(&path).map_err(|source| CatalogError::Io {
                    path: path.clone(),
                    source,
                })?;
                let (mut d, warnings) = parse_turtle_with_warnings(&text).map_err(|source| CatalogError::Turtle {
                    file: name.clone(),
                    source,
                })?;
                for w in warnings {
                    log::warn!("{name}: {w}");
                }
                if let Some(entry) = entry {
                    d.role = entry.role;
                }
                d
            }
        };
        catalog.insert(dataset, path)?;
    }

    for name in manifest.keys() {
        if !dir.join(name).is_file() {
            log::warn!("{}: manifest lists missing file {name}", dir.display());
        }
    }
    if catalog.is_empty() {
        log::warn!("{}: no datasets found", dir.display());
    }
    for topic in catalog.orphan_query_topics() {
        log::warn!("query topic {topic:?} has no candidates");
    }
    Ok(catalog)
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub title: String,
    pub topic: String,
    pub role: Role,
    pub file: String,
}

/// Write `{id}.ttl` for every dataset plus the `catalog.json` index.
pub fn write_catalog(catalog: &Catalog, dir: &Path, base_iri: &str) -> Result<(), CatalogError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CatalogError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = Vec::with_capacity(catalog.len());
    for d in catalog.iter() {
        let file = format!("{}.ttl", d.id);
        let path = dir.join(&file);
        std::fs::write(&path, serialize_turtle(d, base_iri)).map_err(io_err(&path))?;
        index.push(IndexEntry {
            id: d.id.clone(),
            title: d.title.clone(),
            topic: d.topic.clone(),
            role: d.role,
            file,
        });
    }
    let path = dir.join(INDEX_FILE);
    let mut json = serde_json::to_string_pretty(&index).expect("index serializes");
    json.push('\n');
    std::fs::write(&path, json).map_err(io_err(&path))
}
