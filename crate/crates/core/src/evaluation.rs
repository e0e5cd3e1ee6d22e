//! Classification metrics at the calibrated threshold and top-k retrieval
//! metrics over ranked lists.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{compose_split, score_pairs, CalibrationError, CalibrationResult, GroundTruth, PairingRule, Split, SplitSpec};
use crate::catalog::Catalog;
use crate::embedding::{CompositionConfig, EmbeddingProvider, Scenario};
use crate::enrichment::EnrichmentMode;
use crate::scalar::{ratio, Scalar};
use crate::search::{classify_score, rank_all, Label, RankedList};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction and gold lists differ in length ({pred} vs {gold})")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("no labeled pairs to evaluate")]
    Empty,
    #[error("k must be positive")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[Label], gold: &[Label]) -> Result<Self, EvalError> {
        if pred.len() != gold.len() {
            return Err(EvalError::LengthMismatch {
                pred: pred.len(),
                gold: gold.len(),
            });
        }
        if pred.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut c = Confusion::default();
        for (p, g) in pred.iter().zip(gold) {
            match (p.is_unionable(), g.is_unionable()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Accuracy and precision for class 1, class 0 and overall. A ratio with a
/// zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics<S> {
    pub counts: Confusion,
    pub accuracy_overall: Option<S>,
    /// Recall of class 1.
    pub accuracy_pos: Option<S>,
    /// Recall of class 0.
    pub accuracy_neg: Option<S>,
    /// Support-weighted mean of the per-class precisions:
    /// `(P * precision_pos + N * precision_neg) / (P + N)`, over classes
    /// with non-zero support.
    pub precision_overall: Option<S>,
    pub precision_pos: Option<S>,
    pub precision_neg: Option<S>,
}

impl<S: Scalar> ClassificationMetrics<S> {
    pub fn from_counts(c: Confusion) -> Self {
        let precision_pos = ratio(c.tp, c.tp + c.fp);
        let precision_neg = ratio(c.tn, c.tn + c.fn_);
        let mut weighted = Some(S::zero());
        for (support, precision) in [(c.positives(), precision_pos), (c.negatives(), precision_neg)] {
            if support > 0 {
                weighted = weighted.zip(precision).map(|(w, p)| w + S::from_count(support) * p);
            }
        }
        ClassificationMetrics {
            counts: c,
            accuracy_overall: ratio(c.tp + c.tn, c.total()),
            accuracy_pos: ratio(c.tp, c.positives()),
            accuracy_neg: ratio(c.tn, c.negatives()),
            precision_overall: weighted.filter(|_| c.total() > 0).map(|w| w / S::from_count(c.total())),
            precision_pos,
            precision_neg,
        }
    }
}

pub fn classification_metrics<S: Scalar>(pred: &[Label], gold: &[Label]) -> Result<ClassificationMetrics<S>, EvalError> {
    Confusion::from_labels(pred, gold).map(ClassificationMetrics::from_counts)
}

fn top_k_relevance<'a, S: Scalar>(ranked: &'a RankedList<S>, gt: &'a GroundTruth, k: usize) -> impl Iterator<Item = bool> + 'a {
    ranked
        .entries
        .iter()
        .take(k)
        .map(move |e| gt.is_relevant(&ranked.query_id, &e.candidate_id))
}

/// Relevant hits among the top `min(k, len)` entries, divided by `k`.
pub fn precision_at_k<S: Scalar>(ranked: &RankedList<S>, gt: &GroundTruth, k: usize) -> S {
    assert!(k > 0, "k must be positive");
    let hits = top_k_relevance(ranked, gt, k).filter(|r| *r).count();
    S::from_count(hits) / S::from_count(k)
}

/// Relevant hits in the top `k` over all relevant candidates of the query;
/// `None` when the query has none.
pub fn recall_at_k<S: Scalar>(ranked: &RankedList<S>, gt: &GroundTruth, k: usize) -> Option<S> {
    assert!(k > 0, "k must be positive");
    let hits = top_k_relevance(ranked, gt, k).filter(|r| *r).count();
    ratio(hits, gt.relevant_count(&ranked.query_id))
}

/// `(sum of P@i over relevant positions i <= k) / min(k, R_q)`, summed in rank order.
pub fn average_precision_at_k<S: Scalar>(ranked: &RankedList<S>, gt: &GroundTruth, k: usize) -> Option<S> {
    assert!(k > 0, "k must be positive");
    let r_q = gt.relevant_count(&ranked.query_id);
    if r_q == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = S::zero();
    for (i, rel) in top_k_relevance(ranked, gt, k).enumerate() {
        if rel {
            hits += 1;
            sum = sum + S::from_count(hits) / S::from_count(i + 1);
        }
    }
    Some(sum / S::from_count(k.min(r_q)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics<S> {
    pub query_id: String,
    pub p_at_k: S,
    pub r_at_k: Option<S>,
    pub ap_at_k: Option<S>,
}

/// Per-query metrics, sorted by query id.
pub fn per_query_metrics<S: Scalar>(rankings: &[RankedList<S>], gt: &GroundTruth, k: usize) -> Vec<QueryMetrics<S>> {
    let mut out: Vec<QueryMetrics<S>> = rankings
        .par_iter()
        .map(|r| QueryMetrics {
            query_id: r.query_id.clone(),
            p_at_k: precision_at_k(r, gt, k),
            r_at_k: recall_at_k(r, gt, k),
            ap_at_k: average_precision_at_k(r, gt, k),
        })
        .collect();
    out.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    for q in out.iter().filter(|q| q.ap_at_k.is_none()) {
        log::warn!("query {}: no relevant candidates, excluded from MAP and recall", q.query_id);
    }
    out
}

/// Mean of the present values in iteration order; `None` when there are none.
pub fn mean_present<S: Scalar>(values: impl IntoIterator<Item = Option<S>>) -> Option<S> {
    let (sum, n) = values.into_iter().flatten().fold((S::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / S::from_count(n))
}

/// Mean AP@k over queries with at least one relevant candidate, summed in
/// query id order.
pub fn map_at_k<S: Scalar>(rankings: &[RankedList<S>], gt: &GroundTruth, k: usize) -> Option<S> {
    mean_present(per_query_metrics(rankings, gt, k).into_iter().map(|q| q.ap_at_k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics<S> {
    pub k: usize,
    pub queries: usize,
    pub map_at_k: Option<S>,
    pub p_at_k: Option<S>,
    pub r_at_k: Option<S>,
}

pub fn retrieval_metrics<S: Scalar>(rankings: &[RankedList<S>], gt: &GroundTruth, k: usize) -> (RetrievalMetrics<S>, Vec<QueryMetrics<S>>) {
    let per_query = per_query_metrics(rankings, gt, k);
    let metrics = RetrievalMetrics {
        k,
        queries: per_query.len(),
        map_at_k: mean_present(per_query.iter().map(|q| q.ap_at_k)),
        p_at_k: mean_present(per_query.iter().map(|q| Some(q.p_at_k))),
        r_at_k: mean_present(per_query.iter().map(|q| q.r_at_k)),
    };
    (metrics, per_query)
}

/// Every metric of one scenario and enrichment setting on the evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<S> {
    pub scenario: Scenario,
    pub enrichment: EnrichmentMode,
    pub threshold: S,
    pub k: usize,
    pub pairs: usize,
    pub counts: Confusion,
    pub accuracy_overall: Option<S>,
    pub accuracy_pos: Option<S>,
    pub accuracy_neg: Option<S>,
    pub precision_overall: Option<S>,
    pub precision_pos: Option<S>,
    pub precision_neg: Option<S>,
    pub queries: usize,
    pub map_at_k: Option<S>,
    pub p_at_k: Option<S>,
    pub r_at_k: Option<S>,
    pub per_query: Vec<QueryMetrics<S>>,
}

impl<S: Scalar> EvalReport<S> {
    pub fn assemble(
        scenario: Scenario,
        enrichment: EnrichmentMode,
        threshold: S,
        cls: ClassificationMetrics<S>,
        ret: RetrievalMetrics<S>,
        per_query: Vec<QueryMetrics<S>>,
    ) -> Self {
        EvalReport {
            scenario,
            enrichment,
            threshold,
            k: ret.k,
            pairs: cls.counts.total(),
            counts: cls.counts,
            accuracy_overall: cls.accuracy_overall,
            accuracy_pos: cls.accuracy_pos,
            accuracy_neg: cls.accuracy_neg,
            precision_overall: cls.precision_overall,
            precision_pos: cls.precision_pos,
            precision_neg: cls.precision_neg,
            queries: ret.queries,
            map_at_k: ret.map_at_k,
            p_at_k: ret.p_at_k,
            r_at_k: ret.r_at_k,
            per_query,
        }
    }

    pub fn classification(&self) -> ClassificationMetrics<S> {
        ClassificationMetrics {
            counts: self.counts,
            accuracy_overall: self.accuracy_overall,
            accuracy_pos: self.accuracy_pos,
            accuracy_neg: self.accuracy_neg,
            precision_overall: self.precision_overall,
            precision_pos: self.precision_pos,
            precision_neg: self.precision_neg,
        }
    }
}

/// Rankings and report of one evaluation run.
#[derive(Debug, Clone)]
pub struct Evaluation<S> {
    pub report: EvalReport<S>,
    pub rankings: Vec<RankedList<S>>,
}

/// Apply the calibrated threshold to the labeled evaluation-split pairs and
/// score top-`k` rankings of the evaluation-split queries.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<S: Scalar>(
    cat: &Catalog,
    split: &SplitSpec,
    gt: &GroundTruth,
    calib: &CalibrationResult<S>,
    cfg: &CompositionConfig,
    mode: EnrichmentMode,
    provider: &dyn EmbeddingProvider<S>,
    k: usize,
    cross_topic_negatives: bool,
) -> Result<Evaluation<S>, crate::Error> {
    if k == 0 {
        return Err(EvalError::ZeroK.into());
    }
    let (projected, vectors) = compose_split(cat, split, Split::Eval, cfg, mode, provider).map_err(CalibrationError::from)?;
    let rule = PairingRule {
        scenario: cfg.scenario,
        cross_topic_negatives,
    };
    let pairs = score_pairs(&projected, &vectors, gt, rule, &split.eval_topics)?;
    let pred: Vec<Label> = pairs.iter().map(|p| classify_score(p.score, calib.threshold)).collect();
    let gold: Vec<Label> = pairs.iter().map(|p| Label::from_bool(p.label)).collect();
    let cls = classification_metrics(&pred, &gold)?;

    let mut rankings = rank_all(&projected, &vectors, cfg.scenario, Some(&split.eval_topics), Some(k))?;
    rankings.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let (ret, per_query) = retrieval_metrics(&rankings, gt, k);
    Ok(Evaluation {
        report: EvalReport::assemble(cfg.scenario, mode, calib.threshold, cls, ret, per_query),
        rankings,
    })
}

fn cell<S: Scalar>(v: Option<S>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.4}", x.as_f64()))
}

/// Fixed-width table: one row per report, classification columns followed
/// by the retrieval columns.
pub fn render_table<S: Scalar>(reports: &[EvalReport<S>]) -> String {
    let k = reports.first().map_or(DEFAULT_K, |r| r.k);
    let header = [
        "setting".to_string(),
        "threshold".into(),
        "acc".into(),
        "acc(1)".into(),
        "acc(0)".into(),
        "prec".into(),
        "prec(1)".into(),
        "prec(0)".into(),
        format!("MAP@{k}"),
        format!("P@{k}"),
        format!("R@{k}"),
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                format!("{} ({})", r.enrichment.as_str(), r.scenario.as_str()),
                format!("{:.4}", r.threshold.as_f64()),
                cell(r.accuracy_overall),
                cell(r.accuracy_pos),
                cell(r.accuracy_neg),
                cell(r.precision_overall),
                cell(r.precision_pos),
                cell(r.precision_neg),
                cell(r.map_at_k),
                cell(r.p_at_k),
                cell(r.r_at_k),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    for row in &rows {
        line(row);
    }
    out
}

/// Machine-readable rows; absent metrics are empty fields.
pub fn render_csv<S: Scalar>(reports: &[EvalReport<S>]) -> String {
    let f = |v: Option<S>| v.map_or_else(String::new, |x| x.as_f64().to_string());
    let mut out = String::from(
        "scenario,enrichment,threshold,k,tp,fp,tn,fn,accuracy_overall,accuracy_pos,accuracy_neg,precision_overall,precision_pos,precision_neg,map_at_k,p_at_k,r_at_k\n",
    );
    for r in reports {
        let c = r.counts;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario.as_str(),
            r.enrichment.as_str(),
            r.threshold.as_f64(),
            r.k,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            f(r.accuracy_overall),
            f(r.accuracy_pos),
            f(r.accuracy_neg),
            f(r.precision_overall),
            f(r.precision_pos),
            f(r.precision_neg),
            f(r.map_at_k),
            f(r.p_at_k),
            f(r.r_at_k),
        );
    }
    out
}
