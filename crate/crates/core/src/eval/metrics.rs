//! Accuracy and macro-averaged precision, recall and F1.
//!
//! A zero denominator yields 0 for that family's precision, recall or F1, and
//! macro values average over all families, including those with no support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_family: Vec<FamilyMetrics>,
}

/// `confusion[t][p]` counts rows with truth `t` predicted as `p`.
pub fn confusion_matrix(preds: &[usize], truths: &[usize], families: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != truths.len() {
        return Err(Error::dim("predictions", truths.len(), preds.len()));
    }
    let mut m = vec![vec![0usize; families]; families];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= families || t >= families {
            return Err(Error::dim("family id bound", families, p.max(t)));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(preds: &[usize], truths: &[usize], families: usize) -> Result<MetricsReport> {
    if truths.is_empty() {
        return Err(Error::EmptyInput("evaluation rows"));
    }
    let m = confusion_matrix(preds, truths, families)?;
    let correct: usize = (0..families).map(|c| m[c][c]).sum();
    let per_family: Vec<FamilyMetrics> = (0..families)
        .map(|c| {
            let tp = m[c][c];
            let support: usize = m[c].iter().sum();
            let predicted: usize = m.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            FamilyMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&FamilyMetrics) -> f64| per_family.iter().map(f).sum::<f64>() / families.max(1) as f64;
    Ok(MetricsReport {
        accuracy: correct as f64 / truths.len() as f64,
        precision_macro: mean(|f| f.precision),
        recall_macro: mean(|f| f.recall),
        f1_macro: mean(|f| f.f1),
        per_family,
    })
}
