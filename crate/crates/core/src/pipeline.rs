//! Run configuration and the end-to-end run: ingest, enrich, split,
//! calibrate, rank and evaluate, with deterministic artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, split_by_topic, CalibrationResult, GroundTruth, SplitSpec, DEFAULT_SPLIT_RATIO};
use crate::catalog::{load_catalog, Catalog, DEFAULT_BASE_IRI};
use crate::embedding::{
    CachedProvider, CompositionConfig, EmbeddingProvider, HttpProvider, LocalEmbedder, Scenario, DEFAULT_DIM, DEFAULT_TOPIC_WEIGHT,
};
use crate::enrichment::{
    enrich_catalog, read_vocabulary, DictionaryAnnotator, EnrichmentMode, EnrichmentOutcome, EnrichmentSettings, HttpSelector,
    PropertySelector, TopCandidateSelector, VocabularyEntry,
};
use crate::evaluation::{evaluate, Evaluation, DEFAULT_K};
use crate::scalar::Scalar;
use crate::search::write_rankings_csv;
use crate::{Error, Result};

pub const SPLIT_FILE: &str = "split.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const RANKINGS_FILE: &str = "rankings.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MAX_BATCH_ENV: &str = "MUS_EMBED_MAX_BATCH";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Local,
    Http,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "local" => Ok(ProviderKind::Local),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!("unknown provider {other:?} (expected local or http)")),
        }
    }
}

/// Settings of one run. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub enrichment: EnrichmentMode,
    pub topic_weight: f64,
    pub k: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub provider: ProviderKind,
    pub endpoint: Option<String>,
    /// Dimension of the local embedder.
    pub dim: usize,
    /// Property selector service; the top-ranked candidate is used when absent.
    pub selector_endpoint: Option<String>,
    pub cross_topic_negatives: bool,
    pub base_iri: String,
    pub catalog: PathBuf,
    pub vocab: Option<PathBuf>,
    pub ground_truth: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Td,
            enrichment: EnrichmentMode::Base,
            topic_weight: DEFAULT_TOPIC_WEIGHT,
            k: DEFAULT_K,
            split_ratio: DEFAULT_SPLIT_RATIO,
            seed: 0,
            provider: ProviderKind::Local,
            endpoint: None,
            dim: DEFAULT_DIM,
            selector_endpoint: None,
            cross_topic_negatives: false,
            base_iri: DEFAULT_BASE_IRI.to_string(),
            catalog: PathBuf::from("catalog"),
            vocab: None,
            ground_truth: PathBuf::from("groundtruth.csv"),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.catalog);
        join(&mut self.ground_truth);
        join(&mut self.out);
        if let Some(v) = self.vocab.as_mut() {
            join(v);
        }
    }

    pub fn composition(&self) -> CompositionConfig {
        match self.scenario {
            Scenario::Td => CompositionConfig::td(),
            Scenario::Tg => CompositionConfig::tg(self.topic_weight),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (self.provider, &self.endpoint) {
            (ProviderKind::Http, None) => return bad("provider http requires an endpoint".into()),
            (ProviderKind::Local, Some(_)) => return bad("endpoint is only valid with provider http".into()),
            _ => {}
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if self.provider == ProviderKind::Local && self.dim < 8 {
            return bad(format!("dim {} below 8", self.dim));
        }
        if self.enrichment.uses_properties() && self.vocab.is_none() {
            return bad(format!("enrichment {} needs a vocab file", self.enrichment.as_str()));
        }
        if !crate::catalog::is_absolute_iri(&self.base_iri) {
            return bad(format!("base_iri {:?} is not an absolute IRI", self.base_iri));
        }
        self.composition().validate().map_err(Error::Config)
    }
}

/// Embedding provider named by the configuration, with a shared text cache.
pub fn build_provider<S: Scalar>(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider<S>>> {
    let inner: Box<dyn EmbeddingProvider<S>> = match cfg.provider {
        ProviderKind::Local => Box::new(LocalEmbedder::new(cfg.dim)?),
        ProviderKind::Http => {
            let endpoint = cfg
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("provider http requires an endpoint".into()))?;
            let mut p = HttpProvider::new(endpoint);
            if let Ok(v) = std::env::var(MAX_BATCH_ENV) {
                let n = v
                    .parse()
                    .map_err(|_| Error::Config(format!("{MAX_BATCH_ENV}={v:?} is not a count")))?;
                p = p.with_max_batch(n);
            }
            Box::new(p)
        }
    };
    Ok(Box::new(CachedProvider::new(inner)))
}

fn build_selector(cfg: &RunConfig) -> Box<dyn PropertySelector> {
    match &cfg.selector_endpoint {
        Some(url) => Box::new(HttpSelector::new(url.clone())),
        None => Box::new(TopCandidateSelector),
    }
}

pub fn load_vocab(cfg: &RunConfig) -> Result<Vec<VocabularyEntry>> {
    match (&cfg.vocab, cfg.enrichment.uses_properties()) {
        (Some(path), true) => Ok(read_vocabulary(path)?),
        _ => Ok(Vec::new()),
    }
}

/// Enrich `cat` under `cfg.enrichment` with the dictionary annotator and the
/// configured property selector.
pub fn enrich<S: Scalar>(cat: &Catalog, cfg: &RunConfig, provider: &dyn EmbeddingProvider<S>) -> Result<EnrichmentOutcome> {
    let vocabulary = load_vocab(cfg)?;
    let annotator = DictionaryAnnotator::default();
    let selector = build_selector(cfg);
    let settings = EnrichmentSettings {
        mode: cfg.enrichment,
        annotator: &annotator,
        selector: selector.as_ref(),
        vocabulary: &vocabulary,
        embedder: provider,
    };
    Ok(enrich_catalog(cat, &settings)?)
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun<S> {
    pub catalog: Catalog,
    pub split: SplitSpec,
    pub calibration: CalibrationResult<S>,
    pub evaluation: Evaluation<S>,
}

pub fn run_pipeline<S: Scalar>(cfg: &RunConfig) -> Result<PipelineRun<S>> {
    cfg.validate()?;
    let provider = build_provider::<S>(cfg)?;
    let raw = load_catalog(&cfg.catalog)?;
    if raw.is_empty() {
        return Err(Error::Config(format!("{}: no datasets", cfg.catalog.display())));
    }
    let gt = GroundTruth::read_csv(&cfg.ground_truth, &raw)?;
    let catalog = enrich(&raw, cfg, provider.as_ref())?.catalog;
    let split = split_by_topic(&catalog, cfg.split_ratio, cfg.seed)?;
    log::info!("split: {} test / {} eval topics", split.test_topics.len(), split.eval_topics.len());
    let comp = cfg.composition();
    let calibration = calibrate(
        &catalog,
        &split,
        &gt,
        &comp,
        cfg.enrichment,
        provider.as_ref(),
        cfg.cross_topic_negatives,
    )?;
    log::info!("threshold {} (J = {})", calibration.threshold, calibration.j_statistic);
    let evaluation = evaluate(
        &catalog,
        &split,
        &gt,
        &calibration,
        &comp,
        cfg.enrichment,
        provider.as_ref(),
        cfg.k,
        cfg.cross_topic_negatives,
    )?;
    Ok(PipelineRun {
        catalog,
        split,
        calibration,
        evaluation,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn write_rankings<S: Scalar>(path: &Path, rankings: &[crate::search::RankedList<S>], threshold: Option<S>) -> Result<()> {
    let mut buf = Vec::new();
    write_rankings_csv(&mut buf, rankings, threshold).map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write split.json, calibration.json, rankings.csv and report.json into `out`.
pub fn write_artifacts<S: Scalar>(run: &PipelineRun<S>, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_json(&out.join(SPLIT_FILE), &run.split)?;
    write_json(&out.join(CALIBRATION_FILE), &run.calibration)?;
    write_rankings(&out.join(RANKINGS_FILE), &run.evaluation.rankings, Some(run.calibration.threshold))?;
    write_json(&out.join(REPORT_FILE), &run.evaluation.report)
}
