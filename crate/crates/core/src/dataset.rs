//! Feature-matrix datasets: ingestion, persistence, z-score standardization,
//! and labeled-subset selection.
//!
//! The on-disk layout is a headerless row-major little-endian `f32` file of
//! `n·dim` values plus a JSON metadata file:
//!
//! ```json
//! {"n": 3, "dim": 4, "families": ["a", "b"], "labels": [0, 1, -1],
//!  "timestamps": ["2019-08-29T00:00:00", "2019-09-01", "2020-01-05T12:00:00"]}
//! ```
//!
//! `-1` marks an unlabeled row. Labels may also be given as family names.

use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{read_f32_file, write_f32_file};
use crate::rng::{rng_for, stream};
use crate::schema::FeatureSchema;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f32>,
    /// `None` marks an unlabeled row.
    pub labels: Vec<Option<usize>>,
    pub families: Vec<String>,
    pub timestamps: Option<Vec<NaiveDateTime>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum LabelEntry {
    Id(i64),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaFile {
    n: usize,
    dim: usize,
    families: Vec<String>,
    #[serde(default)]
    labels: Option<Vec<LabelEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<String>>,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in [TIMESTAMP_FORMAT, "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
        .map_err(|_| Error::Timestamp(format!("cannot parse {s:?} as ISO-8601")))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

impl Dataset {
    pub fn new(
        features: Array2<f32>,
        labels: Vec<Option<usize>>,
        families: Vec<String>,
        timestamps: Option<Vec<NaiveDateTime>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::dim("label count", n, labels.len()));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(Error::dim("timestamp count", n, ts.len()));
            }
        }
        for (row, l) in labels.iter().enumerate() {
            if let Some(id) = *l {
                if id >= families.len() {
                    return Err(Error::LabelOutOfRange {
                        row,
                        id: id as i64,
                        families: families.len(),
                    });
                }
            }
        }
        check_finite(&features.view())?;
        Ok(Self {
            features,
            labels,
            families,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_families(&self) -> usize {
        self.families.len()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Rows in the given order, carrying labels and timestamps along.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            families: self.families.clone(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| rows.iter().map(|&r| ts[r]).collect()),
        }
    }

    /// Row count per family over labeled rows.
    pub fn family_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.families.len()];
        for l in self.labels.iter().flatten() {
            counts[*l] += 1;
        }
        counts
    }

    pub fn save(&self, features_path: &Path, meta_path: &Path) -> Result<()> {
        let flat: Vec<f32> = self.features.iter().copied().collect();
        write_f32_file(features_path, &flat)?;
        let meta = MetaFile {
            n: self.len(),
            dim: self.dim(),
            families: self.families.clone(),
            labels: Some(
                self.labels
                    .iter()
                    .map(|l| LabelEntry::Id(l.map_or(-1, |v| v as i64)))
                    .collect(),
            ),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| ts.iter().map(format_timestamp).collect()),
        };
        let text = serde_json::to_string(&meta).map_err(|e| Error::json(meta_path, e))?;
        fs::write(meta_path, text).map_err(|e| Error::io(meta_path, e))
    }
}

fn check_finite(x: &ArrayView2<f32>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row, col });
        }
    }
    Ok(())
}

/// Reads a dataset in the binary-plus-JSON layout. Features are returned raw.
pub fn load_dataset(features_path: &Path, meta_path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: MetaFile = serde_json::from_str(&text).map_err(|e| Error::json(meta_path, e))?;
    if meta.dim != schema.dim() {
        return Err(Error::dim("metadata dim vs schema dim", schema.dim(), meta.dim));
    }
    let values = read_f32_file(features_path)?;
    if values.len() != meta.n * meta.dim {
        return Err(Error::dim(
            format!("feature file {} values (n·dim)", features_path.display()),
            meta.n * meta.dim,
            values.len(),
        ));
    }
    let features = Array2::from_shape_vec((meta.n, meta.dim), values)
        .map_err(|e| Error::MalformedMetadata(e.to_string()))?;

    let labels = match meta.labels {
        None => vec![None; meta.n],
        Some(entries) => {
            if entries.len() != meta.n {
                return Err(Error::MalformedMetadata(format!(
                    "{} labels for n = {}",
                    entries.len(),
                    meta.n
                )));
            }
            entries
                .into_iter()
                .enumerate()
                .map(|(row, e)| match e {
                    LabelEntry::Id(-1) => Ok(None),
                    LabelEntry::Id(id) if id >= 0 && (id as usize) < meta.families.len() => {
                        Ok(Some(id as usize))
                    }
                    LabelEntry::Id(id) => Err(Error::LabelOutOfRange {
                        row,
                        id,
                        families: meta.families.len(),
                    }),
                    LabelEntry::Name(name) => meta
                        .families
                        .iter()
                        .position(|f| *f == name)
                        .map(Some)
                        .ok_or(Error::UnknownFamily(name)),
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let timestamps = match meta.timestamps {
        None => None,
        Some(ts) => {
            if ts.len() != meta.n {
                return Err(Error::MalformedMetadata(format!(
                    "{} timestamps for n = {}",
                    ts.len(),
                    meta.n
                )));
            }
            Some(ts.iter().map(|s| parse_timestamp(s)).collect::<Result<Vec<_>>>()?)
        }
    };

    Dataset::new(features, labels, meta.families, timestamps)
}

/// Per-column z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl StandardizationParams {
    /// Population mean and standard deviation over `fit_rows`; zero-variance
    /// columns get `std = 1`.
    pub fn fit(features: &ArrayView2<f32>, fit_rows: &[usize]) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::EmptyInput("standardizer fit rows"));
        }
        let dim = features.ncols();
        let n = fit_rows.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for &r in fit_rows {
            for (m, &v) in mean.iter_mut().zip(features.row(r)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; dim];
        for &r in fit_rows {
            for ((s, &v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt() as f32;
                if sd == 0.0 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &ArrayView2<f32>) -> Result<Array2<f32>> {
        if features.ncols() != self.dim() {
            return Err(Error::dim("standardizer columns", self.dim(), features.ncols()));
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, features: &ArrayView2<f32>) -> Result<Array2<f32>> {
        if features.ncols() != self.dim() {
            return Err(Error::dim("standardizer columns", self.dim(), features.ncols()));
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}

/// Chooses `ceil(fraction·n)` rows to label, guaranteeing one per family.
///
/// One uniformly random row is taken from each family first; the rest are
/// drawn uniformly without replacement from the remaining rows.
pub fn select_labeled_subset(
    labels: &[Option<usize>],
    num_families: usize,
    fraction: f64,
    seed: u64,
) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("label fraction {fraction} outside (0, 1]")));
    }
    let n = labels.len();
    let requested = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if requested < num_families {
        return Err(Error::TooFewLabels {
            requested,
            families: num_families,
        });
    }
    let mut by_family: Vec<Vec<usize>> = vec![Vec::new(); num_families];
    for (row, l) in labels.iter().enumerate() {
        match l {
            Some(f) if *f < num_families => by_family[*f].push(row),
            Some(f) => {
                return Err(Error::LabelOutOfRange {
                    row,
                    id: *f as i64,
                    families: num_families,
                })
            }
            None => return Err(Error::MalformedMetadata(format!("row {row} is unlabeled"))),
        }
    }
    let mut rng = rng_for(seed, stream::LABELS);
    let mut mask = vec![false; n];
    for (f, rows) in by_family.iter().enumerate() {
        let pick = rows
            .choose(&mut rng)
            .ok_or_else(|| Error::MissingFamily(format!("family id {f}")))?;
        mask[*pick] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&r| !mask[r]).collect();
    let extra = requested - num_families;
    let (chosen, _) = rest.partial_shuffle(&mut rng, extra);
    for &r in chosen.iter() {
        mask[r] = true;
    }
    Ok(mask)
}
