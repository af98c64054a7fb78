//! Chunk-level precision, recall and F1, plus prompt-count comparison with
//! span-enumeration prompting.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::decoding::GenerationResult;
use crate::error::{Error, Result};
use crate::labeling::{chunks_from_bio, BioSequence};
use crate::prompting::{span_count, LabelMapping, Sentence};

/// Score assigned when there are neither gold nor predicted chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyScore {
    /// P = R = F = 1.
    #[default]
    Perfect,
    /// P = R = F = 0, as conlleval prints.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_chunks: usize,
    pub pred_chunks: usize,
    pub correct_chunks: usize,
}

impl EvalReport {
    pub fn from_counts(gold: usize, pred: usize, correct: usize, empty: EmptyScore) -> Self {
        if gold == 0 && pred == 0 {
            let v = match empty {
                EmptyScore::Perfect => 1.0,
                EmptyScore::Zero => 0.0,
            };
            return Self {
                precision: v,
                recall: v,
                f1: v,
                gold_chunks: 0,
                pred_chunks: 0,
                correct_chunks: 0,
            };
        }
        let precision = if pred == 0 { 0.0 } else { correct as f64 / pred as f64 };
        let recall = if gold == 0 { 0.0 } else { correct as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            gold_chunks: gold,
            pred_chunks: pred,
            correct_chunks: correct,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10}", "metric", "value")?;
        writeln!(f, "{:<10} {:>10.4}", "precision", self.precision)?;
        writeln!(f, "{:<10} {:>10.4}", "recall", self.recall)?;
        writeln!(f, "{:<10} {:>10.4}", "f1", self.f1)?;
        writeln!(f, "{:<10} {:>10}", "gold", self.gold_chunks)?;
        writeln!(f, "{:<10} {:>10}", "predicted", self.pred_chunks)?;
        write!(f, "{:<10} {:>10}", "correct", self.correct_chunks)
    }
}

/// Micro-averaged chunk F1 over parallel sequences.
pub fn chunk_f1(gold: &[BioSequence], pred: &[BioSequence]) -> Result<EvalReport> {
    chunk_f1_with(gold, pred, EmptyScore::default())
}

pub fn chunk_f1_with(
    gold: &[BioSequence],
    pred: &[BioSequence],
    empty: EmptyScore,
) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    let (mut n_gold, mut n_pred, mut n_correct) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                found: p.len(),
            });
        }
        let gold_chunks: HashSet<_> = chunks_from_bio(g).into_iter().collect();
        let pred_chunks = chunks_from_bio(p);
        n_gold += gold_chunks.len();
        n_pred += pred_chunks.len();
        n_correct += pred_chunks.iter().filter(|c| gold_chunks.contains(c)).count();
    }
    Ok(EvalReport::from_counts(n_gold, n_pred, n_correct, empty))
}

/// Scores predictions for the query set of an episode; the support set is
/// not evaluated.
pub fn evaluate_episode(episode: &Episode, predictions: &[BioSequence]) -> Result<EvalReport> {
    if predictions.len() < episode.query.len() {
        return Err(Error::MissingPrediction(predictions.len()));
    }
    let gold: Vec<BioSequence> = episode.query.iter().map(|ex| ex.tags.clone()).collect();
    chunk_f1(&gold, &predictions[..episode.query.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Unweighted mean over reports (episodes or sampled support sets).
pub fn aggregate(reports: &[EvalReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        count: reports.len(),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
    })
}

pub const NORMAL_COMPLEXITY: &str = "O(n^2*m)";
pub const INVERSE_COMPLEXITY: &str = "O(n*m)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n: usize,
    pub m: usize,
    /// n-gram spans of the sentence, n(n+1)/2.
    pub normal_span_count: usize,
    /// Span prompts crossed with labels.
    pub normal_prompt_count: usize,
    pub inverse_prompt_count: usize,
    /// Upper bound including the revision round.
    pub inverse_prompt_max: usize,
    pub normal_complexity_class: String,
    pub inverse_complexity_class: String,
    /// Total generated tokens, when a decode trace was supplied.
    pub decode_steps: Option<usize>,
}

impl EfficiencyReport {
    pub fn from_counts(n: usize, m: usize, iterative: bool) -> Self {
        let spans = span_count(n);
        Self {
            n,
            m,
            normal_span_count: spans,
            normal_prompt_count: spans * m,
            inverse_prompt_count: m,
            inverse_prompt_max: if iterative { 2 * m } else { m },
            normal_complexity_class: NORMAL_COMPLEXITY.to_string(),
            inverse_complexity_class: INVERSE_COMPLEXITY.to_string(),
            decode_steps: None,
        }
    }

    pub fn with_trace<'a>(mut self, trace: impl IntoIterator<Item = &'a GenerationResult>) -> Self {
        self.decode_steps = Some(trace.into_iter().map(|r| r.steps_used).sum());
        self
    }

    /// Normal prompts per inverse prompt; `None` when there are no labels.
    pub fn ratio(&self) -> Option<usize> {
        (self.inverse_prompt_count > 0).then(|| self.normal_prompt_count / self.inverse_prompt_count)
    }
}

pub fn efficiency_report(
    sentence: &Sentence,
    mapping: &LabelMapping,
    iterative: bool,
) -> EfficiencyReport {
    EfficiencyReport::from_counts(sentence.len(), mapping.len(), iterative)
}
