//! Topic split, ground truth, and the unionability threshold chosen by
//! maximizing Youden's J = TPR - FPR over the observed scores.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, DatasetMeta};
use crate::embedding::{compose_all, CompositionConfig, DatasetVector, EmbedError, EmbeddingProvider, Scenario};
use crate::enrichment::EnrichmentMode;
use crate::scalar::{ratio, Scalar};
use crate::search::{cosine, SearchError};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.4;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least 2 topics to split, found {0}")]
    TooFewTopics(usize),
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("degenerate calibration set: {positives} positive and {negatives} negative pair(s)")]
    DegenerateCalibration { positives: usize, negatives: usize },
    #[error("non-finite similarity score")]
    NonFiniteScore,
    #[error("{source_name}:{line}: {detail}")]
    GroundTruth { source_name: String, line: usize, detail: String },
    #[error("ground truth names unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl CalibrationError {
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            CalibrationError::DegenerateCalibration { .. } | CalibrationError::TooFewTopics(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Test,
    Eval,
}

/// Topic-level partition: a topic's query and candidates stay together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_topics: BTreeSet<String>,
    pub eval_topics: BTreeSet<String>,
    pub ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn topics(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Test => &self.test_topics,
            Split::Eval => &self.eval_topics,
        }
    }

    pub fn split_of(&self, topic: &str) -> Option<Split> {
        if self.test_topics.contains(topic) {
            Some(Split::Test)
        } else if self.eval_topics.contains(topic) {
            Some(Split::Eval)
        } else {
            None
        }
    }

    pub fn datasets<'a>(&'a self, cat: &'a Catalog, split: Split) -> impl Iterator<Item = &'a DatasetMeta> + 'a {
        let topics = self.topics(split);
        cat.iter().filter(move |d| topics.contains(&d.topic))
    }
}

/// Shuffle the sorted topic list with a seeded ChaCha8 generator and put the
/// first `round(ratio * n)` topics (at least one, at most `n - 1`) in the test split.
pub fn split_by_topic(cat: &Catalog, ratio: f64, seed: u64) -> Result<SplitSpec, CalibrationError> {
    split_topics(cat.topics(), ratio, seed)
}

pub fn split_topics(topics: BTreeSet<String>, ratio: f64, seed: u64) -> Result<SplitSpec, CalibrationError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CalibrationError::InvalidRatio(ratio));
    }
    let n = topics.len();
    if n < 2 {
        return Err(CalibrationError::TooFewTopics(n));
    }
    let mut order: Vec<String> = topics.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let eval_topics = order.split_off(n_test).into_iter().collect();
    Ok(SplitSpec {
        test_topics: order.into_iter().collect(),
        eval_topics,
        ratio,
        seed,
    })
}

/// Binary unionability labels keyed by (query id, candidate id).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: BTreeMap<(String, String), bool>,
}

impl GroundTruth {
    pub fn from_pairs<Q: Into<String>, C: Into<String>>(pairs: impl IntoIterator<Item = (Q, C, bool)>) -> Self {
        GroundTruth {
            labels: pairs.into_iter().map(|(q, c, l)| ((q.into(), c.into()), l)).collect(),
        }
    }

    pub fn label(&self, query: &str, candidate: &str) -> Option<bool> {
        self.labels.get(&(query.to_string(), candidate.to_string())).copied()
    }

    pub fn is_relevant(&self, query: &str, candidate: &str) -> bool {
        self.label(query, candidate) == Some(true)
    }

    /// Labeled pairs of one query, in candidate id order.
    pub fn pairs_for<'a>(&'a self, query: &'a str) -> impl Iterator<Item = (&'a str, bool)> + 'a {
        self.labels
            .range((query.to_string(), String::new())..)
            .take_while(move |((q, _), _)| q == query)
            .map(|((_, c), l)| (c.as_str(), *l))
    }

    pub fn relevant_count(&self, query: &str) -> usize {
        self.pairs_for(query).filter(|(_, l)| *l).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Parse `query_table,candidate_table,label` (header row required).
    /// Table names may be dataset ids or file names; they are resolved
    /// against `cat`.
    pub fn parse_csv(text: &str, source: &str, cat: &Catalog) -> Result<Self, CalibrationError> {
        let err = |line: usize, detail: String| CalibrationError::GroundTruth {
            source_name: source.to_string(),
            line,
            detail,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| err(1, format!("missing column {name:?}")))
        };
        let (qi, ci, li) = (col("query_table")?, col("candidate_table")?, col("label")?);
        let mut labels = BTreeMap::new();
        for (n, record) in reader.records().enumerate() {
            let line = n + 2;
            let record = record.map_err(|e| err(line, e.to_string()))?;
            let field = |i: usize| record.get(i).ok_or_else(|| err(line, "short row".into()));
            let resolve = |name: &str| {
                cat.resolve(name)
                    .map(|d| d.id.clone())
                    .ok_or_else(|| CalibrationError::UnknownDataset(name.to_string()))
            };
            let label = match field(li)? {
                "1" => true,
                "0" => false,
                other => return Err(err(line, format!("label must be 0 or 1, found {other:?}"))),
            };
            let key = (resolve(field(qi)?)?, resolve(field(ci)?)?);
            if let Some(prev) = labels.insert(key.clone(), label) {
                if prev != label {
                    return Err(err(line, format!("conflicting labels for {} / {}", key.0, key.1)));
                }
            }
        }
        Ok(GroundTruth { labels })
    }

    pub fn read_csv(path: &Path, cat: &Catalog) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text, &path.display().to_string(), cat)
    }
}

/// Confusion counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RocCounts {
    pub tp: usize,
    pub fp: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCounts {
    pub fn tpr<S: Scalar>(&self) -> S {
        ratio(self.tp, self.positives).unwrap_or_else(S::zero)
    }

    pub fn fpr<S: Scalar>(&self) -> S {
        ratio(self.fp, self.negatives).unwrap_or_else(S::zero)
    }

    /// J as the single rounding of the exact rational (tp·N − fp·P) / (P·N),
    /// so equal J values compare equal.
    pub fn j<S: Scalar>(&self) -> S {
        let den = (self.positives * self.negatives) as f64;
        if den == 0.0 {
            return S::zero();
        }
        S::lit(self.j_numerator() as f64) / S::lit(den)
    }

    fn j_numerator(&self) -> i128 {
        self.tp as i128 * self.negatives as i128 - self.fp as i128 * self.positives as i128
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<S> {
    pub threshold: S,
    pub tpr: S,
    pub fpr: S,
    pub j: S,
}

/// The chosen threshold plus the whole ROC sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult<S> {
    pub threshold: S,
    pub j_statistic: S,
    pub counts: RocCounts,
    /// One point per distinct observed score, strictest threshold first.
    pub curve: Vec<RocPoint<S>>,
    pub scenario: Option<Scenario>,
    pub enrichment: Option<EnrichmentMode>,
}

/// Sweep every observed score as an inclusive threshold (`score >= t` is
/// positive) and keep the one with the largest J; among equal J the largest
/// threshold wins.
pub fn youden_threshold<S: Scalar>(scored: &[(S, bool)]) -> Result<CalibrationResult<S>, CalibrationError> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(CalibrationError::NonFiniteScore);
    }
    let positives = scored.iter().filter(|(_, l)| *l).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CalibrationError::DegenerateCalibration { positives, negatives });
    }
    let mut sorted: Vec<(S, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut counts = RocCounts {
        tp: 0,
        fp: 0,
        positives,
        negatives,
    };
    let mut curve = Vec::new();
    let mut best: Option<(S, RocCounts)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                counts.tp += 1;
            } else {
                counts.fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint {
            threshold: t,
            tpr: counts.tpr(),
            fpr: counts.fpr(),
            j: counts.j(),
        });
        if best.is_none_or(|(_, b)| counts.j_numerator() > b.j_numerator()) {
            best = Some((t, counts));
        }
    }
    let (threshold, counts) = best.expect("non-empty input");
    Ok(CalibrationResult {
        threshold,
        j_statistic: counts.j(),
        counts,
        curve,
        scenario: None,
        enrichment: None,
    })
}

/// How labeled pairs are gathered for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingRule {
    pub scenario: Scenario,
    /// Topic guided only: also score every cross-topic (query, candidate)
    /// pair absent from the ground truth as a negative.
    pub cross_topic_negatives: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair<S> {
    pub query_id: String,
    pub candidate_id: String,
    pub score: S,
    pub label: bool,
}

/// Score the labeled pairs whose query and candidate both belong to `topics`.
/// Pairs touching a degenerate or missing vector are skipped with a warning.
pub fn score_pairs<S: Scalar>(
    cat: &Catalog,
    vectors: &BTreeMap<String, DatasetVector<S>>,
    gt: &GroundTruth,
    rule: PairingRule,
    topics: &BTreeSet<String>,
) -> Result<Vec<ScoredPair<S>>, CalibrationError> {
    let in_scope = |id: &str| cat.get(id).filter(|d| topics.contains(&d.topic));
    let mut pairs: BTreeMap<(String, String), bool> = BTreeMap::new();
    for ((q, c), label) in &gt.labels {
        let (Some(qd), Some(cd)) = (in_scope(q), in_scope(c)) else {
            continue;
        };
        if rule.scenario == Scenario::Td && qd.topic != cd.topic {
            continue;
        }
        pairs.insert((q.clone(), c.clone()), *label);
    }
    if rule.scenario == Scenario::Tg && rule.cross_topic_negatives {
        for q in cat.queries().filter(|q| topics.contains(&q.topic)) {
            for c in cat.candidates().filter(|c| topics.contains(&c.topic) && c.topic != q.topic) {
                pairs.entry((q.id.clone(), c.id.clone())).or_insert(false);
            }
        }
    }
    let mut out = Vec::with_capacity(pairs.len());
    for ((q, c), label) in pairs {
        match (vectors.get(&q), vectors.get(&c)) {
            (Some(qv), Some(cv)) if !qv.degenerate && !cv.degenerate => {
                out.push(ScoredPair {
                    score: cosine(&qv.vector, &cv.vector)?,
                    query_id: q,
                    candidate_id: c,
                    label,
                });
            }
            _ => log::warn!("pair {q} / {c}: no usable vector, skipped"),
        }
    }
    Ok(out)
}

/// Compose vectors for one split under the setting's projection.
pub fn compose_split<S: Scalar>(
    cat: &Catalog,
    split: &SplitSpec,
    which: Split,
    cfg: &CompositionConfig,
    mode: EnrichmentMode,
    provider: &dyn EmbeddingProvider<S>,
) -> Result<(Catalog, BTreeMap<String, DatasetVector<S>>), EmbedError> {
    let projected = mode.project_catalog(cat);
    let vectors = compose_all(split.datasets(&projected, which), cfg, provider)?;
    Ok((projected, vectors))
}

/// Threshold for one scenario and enrichment setting, fitted on the test split.
pub fn calibrate<S: Scalar>(
    cat: &Catalog,
    split: &SplitSpec,
    gt: &GroundTruth,
    cfg: &CompositionConfig,
    mode: EnrichmentMode,
    provider: &dyn EmbeddingProvider<S>,
    cross_topic_negatives: bool,
) -> Result<CalibrationResult<S>, CalibrationError> {
    let (projected, vectors) = compose_split(cat, split, Split::Test, cfg, mode, provider)?;
    let rule = PairingRule {
        scenario: cfg.scenario,
        cross_topic_negatives,
    };
    let pairs = score_pairs(&projected, &vectors, gt, rule, &split.test_topics)?;
    let scored: Vec<(S, bool)> = pairs.iter().map(|p| (p.score, p.label)).collect();
    let mut result = youden_threshold(&scored)?;
    result.scenario = Some(cfg.scenario);
    result.enrichment = Some(mode);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{classify_score, Label};
    use proptest::prelude::*;

    fn topics(n: usize) -> BTreeSet<String> {
        (0..n).map(|i| format!("topic{i:02}")).collect()
    }

    #[test]
    fn hand_worked_example() {
        let scored: [(f64, bool); 5] = [(0.9, true), (0.8, true), (0.7, false), (0.6, true), (0.5, false)];
        let r = youden_threshold(&scored).unwrap();
        assert_eq!(r.threshold, 0.8);
        assert!((r.j_statistic - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.curve.len(), 5);
    }

    #[test]
    fn perfect_separation() {
        let r = youden_threshold(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]).unwrap();
        assert_eq!(r.threshold, 0.8);
        assert_eq!(r.j_statistic, 1.0);
    }

    #[test]
    fn ties_prefer_largest_threshold() {
        // t=0.9: J=1/2-0=0.5; t=0.5: J=1-1/2=0.5
        let r = youden_threshold(&[(0.9, true), (0.5, true), (0.5, false), (0.1, false)]).unwrap();
        assert_eq!(r.threshold, 0.9);
    }

    #[test]
    fn one_class_is_degenerate() {
        let err = youden_threshold(&[(0.9, true), (0.3, true)]).unwrap_err();
        assert!(err.to_string().contains("degenerate calibration set"));
        assert!(err.is_degenerate());
        assert!(youden_threshold::<f64>(&[]).is_err());
        assert!(matches!(
            youden_threshold(&[(f64::NAN, true), (0.1, false)]),
            Err(CalibrationError::NonFiniteScore)
        ));
    }

    #[test]
    fn split_geometry() {
        let s = split_topics(topics(50), 0.4, 7).unwrap();
        assert_eq!(s.test_topics.len(), 20);
        assert_eq!(s.eval_topics.len(), 30);
        assert!(s.test_topics.is_disjoint(&s.eval_topics));
        assert_eq!(split_topics(topics(10), 0.5, 1).unwrap().test_topics.len(), 5);
        assert_eq!(split_topics(topics(50), 0.4, 7).unwrap(), s);
        assert_ne!(split_topics(topics(50), 0.4, 8).unwrap().test_topics, s.test_topics);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_topics(topics(1), 0.4, 0), Err(CalibrationError::TooFewTopics(1))));
        assert!(matches!(split_topics(topics(5), 0.0, 0), Err(CalibrationError::InvalidRatio(_))));
        assert!(matches!(split_topics(topics(5), 1.0, 0), Err(CalibrationError::InvalidRatio(_))));
        // rounding to zero still leaves one test topic
        assert_eq!(split_topics(topics(2), 0.1, 0).unwrap().test_topics.len(), 1);
    }

    #[test]
    fn ground_truth_csv() {
        use crate::catalog::{extract_metadata, Role};
        let mk = |t: &str, r| extract_metadata(&["A".to_string()], t, "x", r).unwrap();
        let cat = Catalog::from_datasets([
            mk("Q_1.csv", Role::Query),
            mk("C_1.csv", Role::Candidate),
            mk("C_2.csv", Role::Candidate),
        ])
        .unwrap();
        let gt = GroundTruth::parse_csv("query_table,candidate_table,label\nQ_1.csv,C_1.csv,1\nQ1,C2, 0\n", "gt.csv", &cat).unwrap();
        assert_eq!(gt.label("Q1", "C1"), Some(true));
        assert_eq!(gt.label("Q1", "C2"), Some(false));
        assert_eq!(gt.relevant_count("Q1"), 1);
        assert_eq!(gt.pairs_for("Q1").count(), 2);

        let err = GroundTruth::parse_csv("query_table,candidate_table,label\nQ1,C1,yes\n", "gt.csv", &cat).unwrap_err();
        assert!(err.to_string().contains("gt.csv:2"), "{err}");
        assert!(matches!(
            GroundTruth::parse_csv("query_table,candidate_table,label\nQ1,Nope,1\n", "gt.csv", &cat),
            Err(CalibrationError::UnknownDataset(_))
        ));
        assert!(GroundTruth::parse_csv("q,c,label\n", "gt.csv", &cat).is_err());
    }

    fn scored_set() -> impl Strategy<Value = Vec<(f64, bool)>> {
        proptest::collection::vec(((0u32..40).prop_map(|x| x as f64 / 40.0), any::<bool>()), 2..60)
            .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
    }

    proptest! {
        #[test]
        fn threshold_is_observed_and_j_reproducible(scored in scored_set()) {
            let r = youden_threshold(&scored).unwrap();
            prop_assert!(scored.iter().any(|(s, _)| *s == r.threshold));
            prop_assert!(r.j_statistic >= -1.0 && r.j_statistic <= 1.0);
            let max = r.curve.iter().map(|p| p.j).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(r.j_statistic, max);
            let mut counts = RocCounts { tp: 0, fp: 0, positives: 0, negatives: 0 };
            for (s, l) in &scored {
                let pred = classify_score(*s, r.threshold) == Label::Unionable;
                match (pred, *l) {
                    (true, true) => counts.tp += 1,
                    (true, false) => counts.fp += 1,
                    _ => {}
                }
                if *l { counts.positives += 1 } else { counts.negatives += 1 }
            }
            prop_assert_eq!(counts.j::<f64>(), r.j_statistic);
        }

        #[test]
        fn invariant_under_increasing_maps(scored in scored_set()) {
            let a = youden_threshold(&scored).unwrap();
            let cubed: Vec<(f64, bool)> = scored.iter().map(|(s, l)| (s * s * s, *l)).collect();
            let b = youden_threshold(&cubed).unwrap();
            prop_assert_eq!(a.counts, b.counts);
            prop_assert_eq!(b.threshold, a.threshold * a.threshold * a.threshold);
        }

        #[test]
        fn split_keeps_topics_whole(n in 2usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let s = split_topics(topics(n), ratio, seed).unwrap();
            prop_assert_eq!(s.test_topics.len() + s.eval_topics.len(), n);
            prop_assert!(s.test_topics.is_disjoint(&s.eval_topics));
            let want = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(s.test_topics.len(), want);
        }
    }
}
