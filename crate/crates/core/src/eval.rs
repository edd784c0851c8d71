//! Exact-match entity span scoring.
//!
//! A predicted span counts only if type, start and end all equal a gold span
//! in the same sentence. Scores are micro-averaged over all sentences. When
//! both gold and prediction contain no spans, precision, recall and F1 are
//! all 1; when only one side is empty the undefined ratio is 0.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{decode_spans, CorpusError, DataPoint, EntitySpan, LabelSpace};
use crate::datasets::Dataset;
use crate::harvest::render_table;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("gold has {gold} datapoints but predictions have {pred}")]
    CountMismatch { gold: usize, pred: usize },
    #[error("datapoint {index}: gold has {gold} tokens, prediction has {pred}")]
    LengthMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },
    #[error("gold and prediction use different label spaces")]
    SpaceMismatch,
    #[error("datapoint {index}: {source}")]
    Tags {
        index: usize,
        #[source]
        source: CorpusError,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(matched: usize, gold: usize, pred: usize) -> Self {
        if gold == 0 && pred == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(matched, pred);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub matched: usize,
}

impl SpanCounts {
    fn add(&mut self, other: SpanCounts) {
        self.gold_spans += other.gold_spans;
        self.pred_spans += other.pred_spans;
        self.matched += other.matched;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    #[serde(flatten)]
    pub scores: Scores,
    /// Number of gold spans of this type.
    pub support: usize,
    pub counts: SpanCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro: Scores,
    pub per_type: BTreeMap<String, TypeReport>,
    pub counts: SpanCounts,
}

impl EvalReport {
    fn from_type_counts(counts: BTreeMap<String, SpanCounts>) -> Self {
        let mut total = SpanCounts::default();
        let per_type = counts
            .into_iter()
            .map(|(ty, c)| {
                total.add(c);
                let report = TypeReport {
                    scores: Scores::from_counts(c.matched, c.gold_spans, c.pred_spans),
                    support: c.gold_spans,
                    counts: c,
                };
                (ty, report)
            })
            .collect();
        Self {
            micro: Scores::from_counts(total.matched, total.gold_spans, total.pred_spans),
            per_type,
            counts: total,
        }
    }

    /// Aligned plain-text table: one row per type plus a micro row.
    pub fn to_table(&self) -> String {
        let mut rows = vec![[
            "type",
            "precision",
            "recall",
            "f1",
            "support",
            "pred",
            "matched",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
        let row = |name: &str, s: &Scores, c: &SpanCounts| {
            vec![
                name.to_string(),
                format!("{:.4}", s.precision),
                format!("{:.4}", s.recall),
                format!("{:.4}", s.f1),
                c.gold_spans.to_string(),
                c.pred_spans.to_string(),
                c.matched.to_string(),
            ]
        };
        for (ty, r) in &self.per_type {
            rows.push(row(ty, &r.scores, &r.counts));
        }
        rows.push(row("micro", &self.micro, &self.counts));
        render_table(&rows)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanDiff {
    pub matched: Vec<EntitySpan>,
    /// Predicted spans with no exact gold counterpart.
    pub spurious: Vec<EntitySpan>,
    /// Gold spans the prediction did not reproduce.
    pub missed: Vec<EntitySpan>,
}

fn diff_with_index(
    index: usize,
    gold: &DataPoint,
    pred: &DataPoint,
    space: &LabelSpace,
) -> Result<SpanDiff, EvalError> {
    if gold.tags.len() != pred.tags.len() || gold.tokens.len() != pred.tokens.len() {
        return Err(EvalError::LengthMismatch {
            index,
            gold: gold.tokens.len(),
            pred: pred.tokens.len(),
        });
    }
    let tags_err = |source| EvalError::Tags { index, source };
    let gold_spans = decode_spans(&gold.tags, space).map_err(tags_err)?;
    let pred_spans = decode_spans(&pred.tags, space).map_err(tags_err)?;

    // decoded spans never overlap, so each is unique within its sentence
    let gold_set: HashSet<&EntitySpan> = gold_spans.iter().collect();
    let pred_set: HashSet<&EntitySpan> = pred_spans.iter().collect();
    let mut diff = SpanDiff::default();
    for span in &pred_spans {
        if gold_set.contains(span) {
            diff.matched.push(span.clone());
        } else {
            diff.spurious.push(span.clone());
        }
    }
    diff.missed = gold_spans
        .into_iter()
        .filter(|s| !pred_set.contains(s))
        .collect();
    Ok(diff)
}

/// Splits one sentence's spans into matched, spurious and missed.
pub fn diff_spans(
    gold: &DataPoint,
    pred: &DataPoint,
    space: &LabelSpace,
) -> Result<SpanDiff, EvalError> {
    diff_with_index(0, gold, pred, space)
}

/// Scores aligned point lists under one label space.
pub fn evaluate_points(
    gold: &[DataPoint],
    pred: &[DataPoint],
    space: &LabelSpace,
) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts: BTreeMap<String, SpanCounts> = space
        .entity_types()
        .iter()
        .map(|t| (t.clone(), SpanCounts::default()))
        .collect();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        let diff = diff_with_index(index, g, p, space)?;
        for s in &diff.matched {
            let c = counts.entry(s.entity_type.clone()).or_default();
            c.matched += 1;
            c.gold_spans += 1;
            c.pred_spans += 1;
        }
        for s in &diff.spurious {
            counts.entry(s.entity_type.clone()).or_default().pred_spans += 1;
        }
        for s in &diff.missed {
            counts.entry(s.entity_type.clone()).or_default().gold_spans += 1;
        }
    }
    Ok(EvalReport::from_type_counts(counts))
}

pub fn evaluate(gold: &Dataset, pred: &Dataset) -> Result<EvalReport, EvalError> {
    if gold.space != pred.space {
        return Err(EvalError::SpaceMismatch);
    }
    evaluate_points(&gold.points, &pred.points, &gold.space)
}
