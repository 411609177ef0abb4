//! Candidate ranking, retrieval metrics (MRR@K, AP@1), classification F1,
//! and the BM25+ -> model re-ranking pipeline.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bm25::{search, Bm25Params, InvertedIndex};
use crate::error::{Error, Result};
use crate::features::PairFeaturizer;
use crate::learn::{softmax, Model};

/// Candidates of one query ordered by descending relevance score.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub q_id: i64,
    pub doc_ids: Vec<i64>,
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Sorts by descending score with ties broken by ascending doc id, and
    /// checks doc-id uniqueness.
    pub fn from_scored(q_id: i64, mut scored: Vec<(i64, f64)>) -> Result<Self> {
        let unique: BTreeSet<i64> = scored.iter().map(|&(d, _)| d).collect();
        if unique.len() != scored.len() {
            return Err(Error::InvalidInput("duplicate doc_id in ranking".into()));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(RankedList {
            q_id,
            doc_ids: scored.iter().map(|&(d, _)| d).collect(),
            scores: scored.iter().map(|&(_, s)| s).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

/// Model score per candidate: pointwise heads (two logits) rank by the
/// softmax probability of the relevant class, pairwise heads (one output)
/// by the raw score.
pub fn candidate_scores(
    model: &Model,
    question: &str,
    candidates: &[(i64, String)],
    featurizer: &PairFeaturizer,
) -> Result<Vec<(i64, f64)>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    let features = featurizer.question_features(question, candidates)?;
    candidates
        .iter()
        .zip(&features)
        .map(|(&(doc_id, _), f)| {
            let logits = model.forward(f)?;
            let score = match logits.len() {
                1 => logits[0],
                2 => softmax(&logits)[1],
                n => {
                    return Err(Error::InvalidInput(format!(
                        "ranking model must emit 1 or 2 outputs, got {n}"
                    )))
                }
            };
            Ok((doc_id, score))
        })
        .collect()
}

/// Score every candidate independently and sort descending.
pub fn rank_candidates(
    model: &Model,
    q_id: i64,
    question: &str,
    candidates: &[(i64, String)],
    featurizer: &PairFeaturizer,
) -> Result<RankedList> {
    RankedList::from_scored(
        q_id,
        candidate_scores(model, question, candidates, featurizer)?,
    )
}

/// `1 / position` of the first relevant document within the top k, else 0.
pub fn reciprocal_rank(ranked: &RankedList, relevant: &BTreeSet<i64>, k: usize) -> f64 {
    for (i, doc_id) in ranked.doc_ids.iter().take(k).enumerate() {
        if relevant.contains(doc_id) {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

/// Mean reciprocal rank at k over all queries.
pub fn mrr(
    rankings: &[RankedList],
    relevance: &BTreeMap<i64, BTreeSet<i64>>,
    k: usize,
) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    static EMPTY: BTreeSet<i64> = BTreeSet::new();
    let total: f64 = rankings
        .iter()
        .map(|r| reciprocal_rank(r, relevance.get(&r.q_id).unwrap_or(&EMPTY), k))
        .sum();
    Ok(total / rankings.len() as f64)
}

/// Fraction of queries whose top-ranked document is relevant.
pub fn ap_at_1(rankings: &[RankedList], relevance: &BTreeMap<i64, BTreeSet<i64>>) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    let hits = rankings
        .iter()
        .filter(|r| {
            r.doc_ids
                .first()
                .is_some_and(|d| relevance.get(&r.q_id).is_some_and(|rel| rel.contains(d)))
        })
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Confusion-matrix precision/recall/F1 per class plus macro and micro
/// averages. Classes with no predictions or no instances score 0.
pub fn f1_report(preds: &[String], golds: &[String], classes: &[String]) -> Result<F1Report> {
    if preds.len() != golds.len() {
        return Err(Error::DimensionMismatch {
            expected: golds.len(),
            got: preds.len(),
        });
    }
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let lookup = |label: &String| -> Result<usize> {
        index
            .get(label.as_str())
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown class label {label}")))
    };
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (p, g) in preds.iter().zip(golds) {
        confusion[lookup(g)?][lookup(p)?] += 1;
    }
    let mut per_class = Vec::with_capacity(n);
    let mut correct = 0usize;
    for c in 0..n {
        let tp = confusion[c][c];
        correct += tp;
        let predicted: usize = (0..n).map(|g| confusion[g][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            0.0
        } else {
            tp as f64 / actual as f64
        };
        per_class.push(ClassScores {
            label: classes[c].clone(),
            precision,
            recall,
            f1: f1(precision, recall),
            support: actual,
        });
    }
    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / n as f64;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / n as f64;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n as f64;
    let micro = if preds.is_empty() {
        0.0
    } else {
        correct as f64 / preds.len() as f64
    };
    Ok(F1Report {
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        micro_precision: micro,
        micro_recall: micro,
        micro_f1: micro,
    })
}

/// Retrieve the BM25+ top-k, rescore with the model, and reorder.
///
/// The sort is stable over the BM25 candidate order, so a constant model
/// leaves the BM25+ ranking unchanged.
pub fn rerank(
    q_id: i64,
    question: &str,
    index: &InvertedIndex,
    params: &Bm25Params,
    model: &Model,
    featurizer: &PairFeaturizer,
    answers: &BTreeMap<i64, String>,
    k: usize,
) -> Result<RankedList> {
    let query_tokens = featurizer.lsa().preprocessor.run(question);
    let first_pass = search(&query_tokens, index, params, k)?;
    let candidates: Vec<(i64, String)> = first_pass
        .iter()
        .map(|&(doc_id, _)| {
            answers
                .get(&doc_id)
                .map(|text| (doc_id, text.clone()))
                .ok_or_else(|| Error::InvalidInput(format!("no text for doc_id {doc_id}")))
        })
        .collect::<Result<_>>()?;
    let mut scored = candidate_scores(model, question, &candidates, featurizer)?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(RankedList {
        q_id,
        doc_ids: scored.iter().map(|&(d, _)| d).collect(),
        scores: scored.iter().map(|&(_, s)| s).collect(),
    })
}
