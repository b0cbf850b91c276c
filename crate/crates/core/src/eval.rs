//! Exact-match token accuracy and tag-level F1.
//!
//! F1 ignores NULL agreement: a true positive is a predicted label equal to a
//! non-NULL gold label. Accuracy compares the full assignment, NULLs included.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Corpus, TagAssignment, TagSchema, NULL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagScore {
    pub tag: String,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Tokens whose gold label for this tag is not NULL.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub per_tag: Vec<TagScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub token_accuracy: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub per_tag: Vec<TagScore>,
    pub tokens: usize,
    pub sentences: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_lengths(pred: &[Vec<TagAssignment>], gold: &[Vec<TagAssignment>]) -> Result<usize> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut tokens = 0;
    for (p, g) in pred.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                pred: p.len(),
                gold: g.len(),
            });
        }
        tokens += g.len();
    }
    if tokens == 0 {
        return Err(Error::NoTokens);
    }
    Ok(tokens)
}

fn tokens<'a>(
    pred: &'a [Vec<TagAssignment>],
    gold: &'a [Vec<TagAssignment>],
) -> impl Iterator<Item = (&'a TagAssignment, &'a TagAssignment)> {
    pred.iter().zip(gold).flat_map(|(p, g)| p.iter().zip(g))
}

/// Fraction of tokens whose predicted assignment equals gold on every tag.
pub fn token_accuracy(pred: &[Vec<TagAssignment>], gold: &[Vec<TagAssignment>]) -> Result<f64> {
    let total = check_lengths(pred, gold)?;
    let correct = tokens(pred, gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / total as f64)
}

pub fn f1_scores(pred: &[Vec<TagAssignment>], gold: &[Vec<TagAssignment>], schema: &TagSchema) -> Result<F1Scores> {
    check_lengths(pred, gold)?;
    let m = schema.num_tags();
    let mut tp = vec![0usize; m];
    let mut fp = vec![0usize; m];
    let mut fneg = vec![0usize; m];
    let mut support = vec![0usize; m];
    for (p, g) in tokens(pred, gold) {
        if p.labels.len() != m || g.labels.len() != m {
            return Err(Error::Shape(format!(
                "assignments must have {m} labels, found {} and {}",
                p.labels.len(),
                g.labels.len()
            )));
        }
        for k in 0..m {
            let (pl, gl) = (p.labels[k], g.labels[k]);
            if gl != NULL {
                support[k] += 1;
            }
            if pl == gl {
                if gl != NULL {
                    tp[k] += 1;
                }
            } else {
                if pl != NULL {
                    fp[k] += 1;
                }
                if gl != NULL {
                    fneg[k] += 1;
                }
            }
        }
    }
    let per_tag: Vec<TagScore> = (0..m)
        .map(|k| {
            let precision = ratio(tp[k], tp[k] + fp[k]);
            let recall = ratio(tp[k], tp[k] + fneg[k]);
            TagScore {
                tag: schema.tag(k).name.clone(),
                true_positives: tp[k],
                false_positives: fp[k],
                false_negatives: fneg[k],
                precision,
                recall,
                f1: f1(precision, recall),
                support: support[k],
            }
        })
        .collect();
    let (tp_all, fp_all, fn_all) = (tp.iter().sum(), fp.iter().sum::<usize>(), fneg.iter().sum::<usize>());
    let precision_micro = ratio(tp_all, tp_all + fp_all);
    let recall_micro = ratio(tp_all, tp_all + fn_all);
    let present: Vec<f64> = per_tag.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    let f1_macro = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(F1Scores {
        f1_macro,
        f1_micro: f1(precision_micro, recall_micro),
        precision_micro,
        recall_micro,
        per_tag,
    })
}

pub fn evaluate(pred: &[Vec<TagAssignment>], gold: &[Vec<TagAssignment>], schema: &TagSchema) -> Result<EvalReport> {
    let tokens = check_lengths(pred, gold)?;
    let scores = f1_scores(pred, gold, schema)?;
    Ok(EvalReport {
        token_accuracy: token_accuracy(pred, gold)?,
        f1_macro: scores.f1_macro,
        f1_micro: scores.f1_micro,
        precision_micro: scores.precision_micro,
        recall_micro: scores.recall_micro,
        per_tag: scores.per_tag,
        tokens,
        sentences: gold.len(),
    })
}

/// Scores predictions over `schema` against the annotations of `gold`, which
/// may contain tag types or labels the schema lacks. Those count as misses.
pub fn evaluate_corpus(pred: &[Vec<TagAssignment>], gold: &Corpus, schema: &TagSchema) -> Result<EvalReport> {
    let extended = schema.extended_with(gold);
    let gold = extended.complete_corpus(gold)?;
    let m = extended.num_tags();
    let pred: Vec<Vec<TagAssignment>> = pred
        .iter()
        .map(|s| {
            s.iter()
                .map(|a| {
                    let mut labels = a.labels.clone();
                    labels.resize(m, NULL);
                    TagAssignment { labels }
                })
                .collect()
        })
        .collect();
    evaluate(&pred, &gold, &extended)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences       {}", self.sentences)?;
        writeln!(f, "tokens          {}", self.tokens)?;
        writeln!(f, "token accuracy  {:.4}", self.token_accuracy)?;
        writeln!(f, "F1 micro        {:.4}", self.f1_micro)?;
        writeln!(f, "F1 macro        {:.4}", self.f1_macro)?;
        let width = self
            .per_tag
            .iter()
            .map(|s| s.tag.chars().count())
            .max()
            .unwrap_or(3)
            .max(3);
        writeln!(f)?;
        writeln!(
            f,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "tag", "precision", "recall", "F1", "support"
        )?;
        for s in &self.per_tag {
            writeln!(
                f,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                s.tag, s.precision, s.recall, s.f1, s.support
            )?;
        }
        Ok(())
    }
}
