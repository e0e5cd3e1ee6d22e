//! Cosine ranking of candidates against a query and threshold classification.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, DatasetMeta};
use crate::embedding::{DatasetVector, EmbeddingVector, Scenario};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cosine of a zero vector ({which})")]
    Degenerate { which: &'static str },
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine<S: Scalar>(a: &EmbeddingVector<S>, b: &EmbeddingVector<S>) -> Result<S, SearchError> {
    if a.dim() != b.dim() {
        return Err(SearchError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na.is_zero() {
        return Err(SearchError::Degenerate { which: "left" });
    }
    if nb.is_zero() {
        return Err(SearchError::Degenerate { which: "right" });
    }
    let c = a.dot(b) / (na * nb);
    Ok(c.max(-S::one()).min(S::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord<S> {
    pub query_id: String,
    pub candidate_id: String,
    pub score: S,
}

/// Candidates of one query, best first; ties by ascending candidate id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList<S> {
    pub query_id: String,
    pub entries: Vec<SimilarityRecord<S>>,
}

impl<S: Scalar> RankedList<S> {
    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.candidate_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores closer than this rank as ties. Mathematically equal cosines can
/// differ in the last bits depending on how the vectors were scaled.
pub const TIE_EPSILON: f64 = 1e-12;

fn by_score_then_id<S: Scalar>(a: &SimilarityRecord<S>, b: &SimilarityRecord<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

/// Sort best first; runs of scores within [`TIE_EPSILON`] of the run's top
/// score are ordered by ascending candidate id.
pub fn sort_ranked<S: Scalar>(entries: &mut [SimilarityRecord<S>]) {
    entries.sort_by(by_score_then_id);
    let eps = S::lit(TIE_EPSILON);
    let mut start = 0;
    while start < entries.len() {
        let top = entries[start].score;
        let end = start + entries[start..].iter().take_while(|e| top - e.score <= eps).count();
        entries[start..end].sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
        start = end;
    }
}

/// Rank `pool` against `query`, keeping the top `k` when given.
///
/// The query itself, duplicates and degenerate candidates are skipped. A
/// degenerate query yields an empty list.
pub fn rank_candidates<S: Scalar>(
    query: &DatasetVector<S>,
    pool: &[&DatasetVector<S>],
    k: Option<usize>,
) -> Result<RankedList<S>, SearchError> {
    let mut list = RankedList {
        query_id: query.dataset_id.clone(),
        entries: Vec::with_capacity(pool.len()),
    };
    if query.degenerate {
        log::warn!("query {}: degenerate vector, nothing ranked", query.dataset_id);
        return Ok(list);
    }
    let mut seen = std::collections::BTreeSet::new();
    for cand in pool {
        if cand.dataset_id == query.dataset_id || !seen.insert(cand.dataset_id.as_str()) {
            continue;
        }
        if cand.degenerate {
            log::warn!("candidate {}: degenerate vector, excluded", cand.dataset_id);
            continue;
        }
        list.entries.push(SimilarityRecord {
            query_id: query.dataset_id.clone(),
            candidate_id: cand.dataset_id.clone(),
            score: cosine(&query.vector, &cand.vector)?,
        });
    }
    sort_ranked(&mut list.entries);
    if let Some(k) = k {
        list.entries.truncate(k);
    }
    Ok(list)
}

/// Candidate ids a query is compared against: same-topic candidates in the
/// topic dependent scenario, every candidate otherwise. `allowed` restricts
/// candidates to a subset of topics (e.g. one split).
pub fn candidate_pool<'a>(
    catalog: &'a Catalog,
    query: &DatasetMeta,
    scenario: Scenario,
    allowed: Option<&std::collections::BTreeSet<String>>,
) -> Vec<&'a DatasetMeta> {
    catalog
        .candidates()
        .filter(|c| c.id != query.id)
        .filter(|c| allowed.is_none_or(|topics| topics.contains(&c.topic)))
        .filter(|c| scenario == Scenario::Tg || c.topic == query.topic)
        .collect()
}

/// Rank every query of `catalog` whose topic is in `topics` (all when `None`).
pub fn rank_all<S: Scalar>(
    catalog: &Catalog,
    vectors: &BTreeMap<String, DatasetVector<S>>,
    scenario: Scenario,
    topics: Option<&std::collections::BTreeSet<String>>,
    k: Option<usize>,
) -> Result<Vec<RankedList<S>>, SearchError> {
    let queries: Vec<&DatasetMeta> = catalog.queries().filter(|q| topics.is_none_or(|t| t.contains(&q.topic))).collect();
    queries
        .par_iter()
        .filter_map(|q| {
            let qv = vectors.get(&q.id)?;
            let pool: Vec<&DatasetVector<S>> = candidate_pool(catalog, q, scenario, topics)
                .into_iter()
                .filter_map(|c| vectors.get(&c.id))
                .collect();
            if pool.is_empty() {
                log::warn!("query {}: empty candidate pool", q.id);
            }
            Some(rank_candidates(qv, &pool, k))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    NotUnionable = 0,
    Unionable = 1,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::Unionable
        } else {
            Label::NotUnionable
        }
    }

    pub fn is_unionable(self) -> bool {
        self == Label::Unionable
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Unionable iff `score >= threshold`.
pub fn classify_score<S: Scalar>(score: S, threshold: S) -> Label {
    Label::from_bool(score >= threshold)
}

pub fn classify<S: Scalar>(records: &[SimilarityRecord<S>], threshold: S) -> Vec<(SimilarityRecord<S>, Label)> {
    records.iter().map(|r| (r.clone(), classify_score(r.score, threshold))).collect()
}

/// Write `query_id,candidate_id,rank,score[,label]` rows; scores with six decimals.
pub fn write_rankings_csv<S: Scalar>(out: &mut impl Write, rankings: &[RankedList<S>], threshold: Option<S>) -> std::io::Result<()> {
    match threshold {
        Some(_) => writeln!(out, "query_id,candidate_id,rank,score,label")?,
        None => writeln!(out, "query_id,candidate_id,rank,score")?,
    }
    for list in rankings {
        for (i, e) in list.entries.iter().enumerate() {
            write!(out, "{},{},{},{:.6}", e.query_id, e.candidate_id, i + 1, e.score.as_f64())?;
            match threshold {
                Some(t) => writeln!(out, ",{}", classify_score(e.score, t).as_u8())?,
                None => writeln!(out)?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dv(id: &str, xs: &[f64]) -> DatasetVector<f64> {
        let vector = EmbeddingVector::new(xs.to_vec()).unwrap();
        DatasetVector {
            dataset_id: id.into(),
            degenerate: vector.is_zero(),
            vector,
            scenario: Scenario::Td,
            config_digest: String::new(),
        }
    }

    #[test]
    fn near_ties_order_by_id() {
        let rec = |id: &str, score: f64| SimilarityRecord {
            query_id: "q".into(),
            candidate_id: id.into(),
            score,
        };
        let mut v = vec![
            rec("b", 0.5),
            rec("c", 0.5 + 1e-16),
            rec("a", 0.5 - 1e-16),
            rec("d", 0.9),
            rec("e", 0.4),
        ];
        sort_ranked(&mut v);
        let ids: Vec<&str> = v.iter().map(|e| e.candidate_id.as_str()).collect();
        assert_eq!(ids, ["d", "a", "b", "c", "e"]);
    }

    #[test]
    fn cosine_examples() {
        let v = |xs: &[f64]| EmbeddingVector::new(xs.to_vec()).unwrap();
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine(&v(&[1.0]), &v(&[1.0, 0.0])), Err(SearchError::DimMismatch { .. })));
        assert!(matches!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(SearchError::Degenerate { .. })
        ));
    }

    #[test]
    fn cosine_is_clamped() {
        let a = EmbeddingVector::new(vec![0.1f64; 7]).unwrap();
        let c = cosine(&a, &a).unwrap();
        assert!(c <= 1.0);
    }

    #[test]
    fn clone_ranks_first() {
        let q = dv("q", &[1.0, 2.0]);
        let clone = dv("clone", &[1.0, 2.0]);
        let orth = dv("orth", &[-2.0, 1.0]);
        let list = rank_candidates(&q, &[&orth, &clone], None).unwrap();
        assert_eq!(list.entries[0].candidate_id, "clone");
        assert!((list.entries[0].score - 1.0).abs() < 1e-12);
        assert_eq!(list.entries[1].score, 0.0);
    }

    #[test]
    fn ties_break_by_id_and_skip_self() {
        let q = dv("q", &[1.0, 0.0]);
        let pool = [
            dv("b", &[1.0, 1.0]),
            dv("a", &[1.0, 1.0]),
            dv("q", &[1.0, 0.0]),
            dv("z", &[0.0, 0.0]),
        ];
        let refs: Vec<_> = pool.iter().collect();
        let list = rank_candidates(&q, &refs, None).unwrap();
        assert_eq!(list.candidate_ids().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn truncation_matches_prefix() {
        let q = dv("q", &[1.0, 0.5, 0.0]);
        let pool: Vec<_> = (0..20)
            .map(|i| dv(&format!("c{i:02}"), &[(i as f64).sin(), (i as f64).cos(), 0.1 * i as f64]))
            .collect();
        let refs: Vec<_> = pool.iter().collect();
        let full = rank_candidates(&q, &refs, None).unwrap();
        let top3 = rank_candidates(&q, &refs, Some(3)).unwrap();
        assert_eq!(top3.entries, full.entries[..3]);
    }

    #[test]
    fn degenerate_query_ranks_nothing() {
        let q = dv("q", &[0.0, 0.0]);
        let c = dv("c", &[1.0, 0.0]);
        assert!(rank_candidates(&q, &[&c], None).unwrap().is_empty());
    }

    #[test]
    fn classification_boundary() {
        let r = |s: f64| SimilarityRecord {
            query_id: "q".into(),
            candidate_id: "c".into(),
            score: s,
        };
        assert_eq!(classify(&[r(0.85)], 0.8)[0].1, Label::Unionable);
        assert_eq!(classify(&[r(0.80)], 0.8)[0].1, Label::Unionable);
        assert_eq!(classify(&[r(0.79)], 0.8)[0].1, Label::NotUnionable);
        assert!(classify(&[r(-1.0), r(0.0), r(1.0)], -1.0).iter().all(|(_, l)| l.is_unionable()));
    }

    #[test]
    fn csv_format() {
        let list = RankedList {
            query_id: "q".into(),
            entries: vec![SimilarityRecord {
                query_id: "q".into(),
                candidate_id: "c".into(),
                score: 0.123_456_789f64,
            }],
        };
        let mut out = Vec::new();
        write_rankings_csv(&mut out, std::slice::from_ref(&list), Some(0.1)).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "query_id,candidate_id,rank,score,label\nq,c,1,0.123457,1\n"
        );
        let mut out = Vec::new();
        write_rankings_csv(&mut out, &[list], None).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "query_id,candidate_id,rank,score\nq,c,1,0.123457\n"
        );
    }

    proptest! {
        #[test]
        fn classify_is_monotone(scores in proptest::collection::vec(-1.0f64..=1.0, 1..40),
                                t1 in -1.0f64..=1.0, t2 in -1.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            for s in scores {
                if classify_score(s, hi).is_unionable() {
                    prop_assert!(classify_score(s, lo).is_unionable());
                }
            }
        }

        #[test]
        fn ranking_ignores_pool_order(xs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 2..30),
                                      seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let q = dv("q", &[0.5, -0.25, 1.0, 0.1]);
            let pool: Vec<_> = xs.iter().enumerate().map(|(i, x)| dv(&format!("c{i}"), x)).collect();
            let mut refs: Vec<_> = pool.iter().collect();
            let a = rank_candidates(&q, &refs, None).unwrap();
            refs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = rank_candidates(&q, &refs, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
