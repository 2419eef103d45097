//! CSV run tables and JSON summaries.
//!
//! Floats are written in shortest round-trip form, so identical runs give
//! identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::experiments::RunRecord;

pub const RUNS_HEADER: &str =
    "experiment,variant,setting,fraction,seed,n_train,n_labeled,n_test,accuracy,precision_macro,recall_macro,f1_macro";

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Aggregate over seeds of one (experiment, variant, setting, fraction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub variant: String,
    pub setting: String,
    pub fraction: f64,
    pub seeds: Vec<u64>,
    pub accuracy: MeanStd,
    pub precision_macro: MeanStd,
    pub recall_macro: MeanStd,
    pub f1_macro: MeanStd,
}

/// Groups records in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(&RunRecord, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = |a: &RunRecord| {
            a.experiment == r.experiment
                && a.variant == r.variant
                && a.setting == r.setting
                && a.fraction.to_bits() == r.fraction.to_bits()
        };
        match groups.iter_mut().find(|(k, _)| key(k)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(k, m)| {
            let stat = |f: fn(&RunRecord) -> f64| MeanStd::of(&m.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                experiment: k.experiment.clone(),
                variant: k.variant.clone(),
                setting: k.setting.clone(),
                fraction: k.fraction,
                seeds: m.iter().map(|r| r.seed).collect(),
                accuracy: stat(|r| r.metrics.accuracy),
                precision_macro: stat(|r| r.metrics.precision_macro),
                recall_macro: stat(|r| r.metrics.recall_macro),
                f1_macro: stat(|r| r.metrics.f1_macro),
            }
        })
        .collect()
}

/// Mean accuracy of one variant and setting, if present.
pub fn mean_accuracy(summary: &[SummaryRow], variant: &str, setting: &str) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.variant == variant && s.setting == setting)
        .map(|s| s.accuracy.mean)
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains([',', '"', '\n']) {
        Err(Error::InvalidConfig(format!("report field {s:?} contains a CSV delimiter")))
    } else {
        Ok(s)
    }
}

pub fn runs_csv(records: &[RunRecord]) -> Result<String> {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in records {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            check_field(&r.experiment)?,
            check_field(&r.variant)?,
            check_field(&r.setting)?,
            r.fraction,
            r.seed,
            r.n_train,
            r.n_labeled,
            r.n_test,
            m.accuracy,
            m.precision_macro,
            m.recall_macro,
            m.f1_macro
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// Per-family precision, recall, F1 and support of every run.
pub fn per_family_csv(records: &[RunRecord], families: &[String]) -> Result<String> {
    let mut out = String::from("experiment,variant,setting,fraction,seed,family,precision,recall,f1,support\n");
    for r in records {
        if r.metrics.per_family.len() != families.len() {
            return Err(Error::dim("per-family table", families.len(), r.metrics.per_family.len()));
        }
        for (name, f) in families.iter().zip(&r.metrics.per_family) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                check_field(&r.experiment)?,
                check_field(&r.variant)?,
                check_field(&r.setting)?,
                r.fraction,
                r.seed,
                check_field(name)?,
                f.precision,
                f.recall,
                f.f1,
                f.support
            )
            .expect("writing to a String");
        }
    }
    Ok(out)
}

/// `{experiment}[_{tag}]` joined with an extension, e.g. `ablation_f0.01_s17-21`.
pub fn report_stem(experiment: &str, fractions: &[f64], seeds: &[u64]) -> String {
    let mut stem = experiment.to_string();
    if !fractions.is_empty() {
        let f: Vec<String> = fractions.iter().map(|f| f.to_string()).collect();
        stem.push_str(&format!("_f{}", f.join("+")));
    }
    match seeds {
        [] => {}
        [s] => stem.push_str(&format!("_s{s}")),
        _ if seeds.windows(2).all(|w| w[1] == w[0] + 1) => {
            stem.push_str(&format!("_s{}-{}", seeds[0], seeds[seeds.len() - 1]))
        }
        _ => {
            let s: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
            stem.push_str(&format!("_s{}", s.join("+")));
        }
    }
    stem
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub runs: PathBuf,
    pub per_family: PathBuf,
    pub summary: PathBuf,
}

/// Writes `{stem}_runs.csv`, `{stem}_per_family.csv` and `{stem}_summary.json`.
pub fn write_report(dir: &Path, stem: &str, records: &[RunRecord], families: &[String]) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        runs: dir.join(format!("{stem}_runs.csv")),
        per_family: dir.join(format!("{stem}_per_family.csv")),
        summary: dir.join(format!("{stem}_summary.json")),
    };
    let write = |p: &Path, s: String| std::fs::write(p, s).map_err(|e| Error::io(p, e));
    write(&files.runs, runs_csv(records)?)?;
    write(&files.per_family, per_family_csv(records, families)?)?;
    let summary = serde_json::to_string_pretty(&summarize(records)).map_err(|e| Error::json(&files.summary, e))?;
    write(&files.summary, summary + "\n")?;
    Ok(files)
}
