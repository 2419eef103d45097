//! Clustered synthetic data with interpolatable and codebook coordinates.
//!
//! Family `c` has mean `μ_c = r q_c` on orthonormal directions `q_c`, with
//! `r = separation σ / √2` so that every pair of means is `separation σ`
//! apart. Each family owns `codes_per_family` variants. A variant carries an
//! interpolatable offset restricted to the directions orthogonal to all
//! family means (sub-cluster structure that leaves the nearest family mean
//! unchanged), and a code vector drawn around the family's code centre
//! (the non-interpolatable block, like a hashed field). Rows add `N(0, σ²)`
//! noise to the interpolatable block and a small jitter to the code so that
//! no two rows coincide.

use std::f64::consts::SQRT_2;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub families: usize,
    pub samples_per_family: usize,
    pub interp_dims: usize,
    pub code_dims: usize,
    pub codes_per_family: usize,
    /// Pairwise distance between family means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    /// Per-direction scale of variant offsets, in units of `sigma`.
    pub variant_spread: f64,
    /// Scale of each row's position along its family's own nuisance axis,
    /// in units of `sigma` (within-family variation correlated across
    /// coordinates).
    pub elongation: f64,
    /// Scale of family code centres.
    pub code_center_spread: f64,
    /// Scale of codes around their family centre.
    pub code_spread: f64,
    /// Per-row noise on codes.
    pub code_jitter: f64,
    /// Length of each family's mean shift over the time span, in units of
    /// `sigma`; zero disables drift.
    pub drift: f64,
    pub start_date: String,
    pub span_days: i64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            families: 5,
            samples_per_family: 500,
            interp_dims: 16,
            code_dims: 8,
            codes_per_family: 8,
            separation: 6.0,
            sigma: 1.0,
            variant_spread: 2.0,
            elongation: 0.0,
            code_center_spread: 1.0,
            code_spread: 1.0,
            code_jitter: 0.05,
            drift: 0.0,
            start_date: "2019-01-01".into(),
            span_days: 730,
            seed: 17,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families < 2 || self.samples_per_family == 0 || self.codes_per_family == 0 {
            return Err(Error::InvalidConfig(
                "synthetic data needs ≥ 2 families, ≥ 1 sample and ≥ 1 code per family".into(),
            ));
        }
        if self.interp_dims < self.families || self.code_dims == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} interpolatable dims cannot hold {} orthogonal family means",
                self.interp_dims, self.families
            )));
        }
        if !(self.sigma > 0.0 && self.separation >= 0.0) {
            return Err(Error::InvalidConfig("sigma must be positive and separation non-negative".into()));
        }
        if self.span_days <= 0 {
            return Err(Error::InvalidConfig("span_days must be positive".into()));
        }
        self.start()?;
        Ok(())
    }

    fn start(&self) -> Result<NaiveDateTime> {
        NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
            .map_err(|e| Error::Timestamp(format!("{}: {e}", self.start_date)))
    }

    pub fn dim(&self) -> usize {
        self.interp_dims + self.code_dims
    }

    /// Feature positions holding code coordinates, spread evenly.
    pub fn code_positions(&self) -> Vec<usize> {
        let d = self.dim();
        (0..self.code_dims).map(|k| (k + 1) * d / self.code_dims - 1).collect()
    }

    pub fn schema(&self) -> FeatureSchema {
        let codes = self.code_positions();
        let interp = (0..self.dim()).filter(|j| !codes.contains(j));
        FeatureSchema::new(self.dim(), interp).expect("generator layout is a valid partition")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub schema: FeatureSchema,
    /// `F × d` family centres (mean interpolatable block at the start of the
    /// time span, code centre for the code block), in raw feature space.
    pub centroids: Array2<f32>,
    /// Variant index of every row.
    pub variant: Vec<usize>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Orthonormal basis of `R^n` by Gram-Schmidt on Gaussian vectors.
fn random_orthonormal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v = Array1::from_shape_fn(n, |_| normal(rng));
        for b in &basis {
            let p = v.dot(b);
            v.scaled_add(-p, b);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    basis
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, stream::SYNTHETIC);
    let (f, di, dc) = (spec.families, spec.interp_dims, spec.code_dims);
    let basis = random_orthonormal(di, &mut rng);
    let radius = spec.separation * spec.sigma / SQRT_2;
    let means: Vec<Array1<f64>> = (0..f).map(|c| &basis[c] * radius).collect();
    let nuisance = &basis[f..];

    // Drift directions mix the family's own axis with nuisance axes.
    let drifts: Vec<Array1<f64>> = (0..f)
        .map(|_| {
            let mut v = Array1::from_shape_fn(di, |_| normal(&mut rng));
            let n = v.dot(&v).sqrt().max(1e-12);
            v *= spec.drift * spec.sigma / n;
            v
        })
        .collect();

    let axes: Vec<Array1<f64>> = (0..f)
        .map(|_| {
            let mut v = Array1::<f64>::zeros(di);
            for q in nuisance {
                v.scaled_add(normal(&mut rng), q);
            }
            let n = v.dot(&v).sqrt();
            if n > 0.0 {
                v / n
            } else {
                v
            }
        })
        .collect();

    let code_centres: Vec<Array1<f64>> =
        (0..f).map(|_| Array1::from_shape_fn(dc, |_| spec.code_center_spread * normal(&mut rng))).collect();
    let mut offsets = Vec::with_capacity(f);
    let mut codes = Vec::with_capacity(f);
    for c in 0..f {
        let mut fo = Vec::with_capacity(spec.codes_per_family);
        let mut fc = Vec::with_capacity(spec.codes_per_family);
        for _ in 0..spec.codes_per_family {
            let mut o = Array1::<f64>::zeros(di);
            for q in nuisance {
                o.scaled_add(spec.variant_spread * spec.sigma * normal(&mut rng), q);
            }
            fo.push(o);
            fc.push(&code_centres[c] + &Array1::from_shape_fn(dc, |_| spec.code_spread * normal(&mut rng)));
        }
        offsets.push(fo);
        codes.push(fc);
    }

    let schema = spec.schema();
    let n = f * spec.samples_per_family;
    let start = spec.start()?;
    let span_secs = spec.span_days * 86_400;
    let mut features = Array2::<f32>::zeros((n, spec.dim()));
    let mut labels = Vec::with_capacity(n);
    let mut variant = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for c in 0..f {
        for i in 0..spec.samples_per_family {
            let r = c * spec.samples_per_family + i;
            let v = i % spec.codes_per_family;
            let t: f64 = rng.random();
            let along = spec.elongation * spec.sigma * normal(&mut rng);
            let mut s_i = &means[c] + &offsets[c][v] + &(&drifts[c] * t) + &(&axes[c] * along);
            s_i.mapv_inplace(|x| x + spec.sigma * normal(&mut rng));
            let s_n: Vec<f32> = codes[c][v]
                .iter()
                .map(|&x| (x + spec.code_jitter * normal(&mut rng)) as f32)
                .collect();
            let s_i: Vec<f32> = s_i.iter().map(|&x| x as f32).collect();
            let row = schema.join(&s_i, &s_n)?;
            features.row_mut(r).assign(&Array1::from(row));
            labels.push(Some(c));
            variant.push(v);
            timestamps.push(start + Duration::seconds((t * span_secs as f64) as i64));
        }
    }

    let mut centroids = Array2::<f32>::zeros((f, spec.dim()));
    for c in 0..f {
        let s_i: Vec<f32> = means[c].iter().map(|&x| x as f32).collect();
        let s_n: Vec<f32> = code_centres[c].iter().map(|&x| x as f32).collect();
        centroids.row_mut(c).assign(&Array1::from(schema.join(&s_i, &s_n)?));
    }
    let families = (0..f).map(|c| format!("family_{c}")).collect();
    let dataset = Dataset::new(features, labels, families, Some(timestamps))?;
    Ok(SyntheticData {
        dataset,
        schema,
        centroids,
        variant,
    })
}

/// Index of the nearest centroid; ties to the smaller index.
pub fn nearest_centroid(x: &[f32], centroids: &Array2<f32>) -> usize {
    let x = ndarray::ArrayView1::from(x);
    let mut best = (f64::INFINITY, 0);
    for (c, m) in centroids.outer_iter().enumerate() {
        let d = crate::index::squared_l2(x, m);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}
