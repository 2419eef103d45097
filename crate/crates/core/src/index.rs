//! Exact exhaustive L2 search.
//!
//! Distances are squared L2 accumulated in `f64`. Rankings sort by
//! `(distance, id)`, so ties always resolve to the smaller id.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{read_f32_file, write_f32_file};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    /// Squared L2 distance.
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Index {
    vectors: Array2<f32>,
    ids: Vec<usize>,
    rows: HashMap<usize, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexManifest {
    kind: String,
    rows: usize,
    dim: usize,
    ids: Vec<usize>,
    vectors: String,
}

pub fn squared_l2(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn by_dist_then_id(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))
}

impl L2Index {
    pub fn build(vectors: Array2<f32>, ids: Vec<usize>) -> Result<Self> {
        if vectors.nrows() == 0 {
            return Err(Error::EmptyInput("index vectors"));
        }
        if vectors.nrows() != ids.len() {
            return Err(Error::dim("index ids", vectors.nrows(), ids.len()));
        }
        let mut rows = HashMap::with_capacity(ids.len());
        for (r, &id) in ids.iter().enumerate() {
            if rows.insert(id, r).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { vectors, ids, rows })
    }

    /// Index over `vectors` with ids `0..n`.
    pub fn from_rows(vectors: Array2<f32>) -> Result<Self> {
        let ids = (0..vectors.nrows()).collect();
        Self::build(vectors, ids)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn vectors(&self) -> ArrayView2<'_, f32> {
        self.vectors.view()
    }

    pub fn vector(&self, id: usize) -> Option<ArrayView1<'_, f32>> {
        self.rows.get(&id).map(|&r| self.vectors.row(r))
    }

    pub fn contains(&self, id: usize) -> bool {
        self.rows.contains_key(&id)
    }

    /// The `k` nearest stored vectors to `q`, never returning `exclude`.
    pub fn query_topk(&self, q: ArrayView1<f32>, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim() {
            return Err(Error::dim("query vector", self.dim(), q.len()));
        }
        let available = self.len() - exclude.map_or(0, |id| self.contains(id) as usize);
        if k == 0 || k > available {
            return Err(Error::KTooLarge { k, available });
        }
        let mut all: Vec<Neighbor> = self
            .vectors
            .outer_iter()
            .zip(&self.ids)
            .filter(|(_, &id)| Some(id) != exclude)
            .map(|(row, &id)| Neighbor {
                id,
                dist: squared_l2(row, q),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_dist_then_id);
            all.truncate(k);
        }
        all.sort_unstable_by(by_dist_then_id);
        Ok(all)
    }

    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("index");
        let bin = format!("{stem}.bin");
        let manifest = IndexManifest {
            kind: "l2_index".into(),
            rows: self.len(),
            dim: self.dim(),
            ids: self.ids.clone(),
            vectors: bin.clone(),
        };
        let text = serde_json::to_string(&manifest).map_err(|e| Error::json(manifest_path, e))?;
        fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        let flat: Vec<f32> = self.vectors.iter().copied().collect();
        write_f32_file(&dir.join(bin), &flat)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let m: IndexManifest = serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
        if m.kind != "l2_index" {
            return Err(Error::MalformedMetadata(format!(
                "{} holds a {:?}, not an index",
                manifest_path.display(),
                m.kind
            )));
        }
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        let flat = read_f32_file(&dir.join(&m.vectors))?;
        if flat.len() != m.rows * m.dim {
            return Err(Error::dim("index vector file", m.rows * m.dim, flat.len()));
        }
        let vectors = Array2::from_shape_vec((m.rows, m.dim), flat).expect("shape checked");
        Self::build(vectors, m.ids)
    }
}

/// For every row, its `k` nearest other rows (self excluded), in rank order.
pub fn knn_graph(vectors: &ArrayView2<f32>, ids: &[usize], k: usize) -> Result<Vec<Vec<Neighbor>>> {
    if vectors.nrows() <= k {
        return Err(Error::KTooLarge {
            k,
            available: vectors.nrows().saturating_sub(1),
        });
    }
    let index = L2Index::build(vectors.to_owned(), ids.to_vec())?;
    (0..index.len())
        .into_par_iter()
        .map(|r| index.query_topk(index.vectors.row(r), k, Some(index.ids[r])))
        .collect()
}
