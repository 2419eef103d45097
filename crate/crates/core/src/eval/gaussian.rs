//! Gaussian-noise augmentation with per-family, per-coordinate scales.
//!
//! The scales are the population standard deviations of each family's
//! labeled rows. Unlabeled rows borrow the statistics of the labeled family
//! whose mean is nearest.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::augment::{Augmented, Augmenter, Provenance};
use crate::error::{Error, Result};
use crate::index::squared_l2;

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyStats {
    /// `F × d` family means over labeled rows.
    pub mean: Array2<f32>,
    /// `F × d` population standard deviations over labeled rows.
    pub std: Array2<f32>,
}

impl FamilyStats {
    pub fn fit(features: &ArrayView2<f32>, labels: &[Option<usize>], families: usize) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::dim("labels", features.nrows(), labels.len()));
        }
        let d = features.ncols();
        let mut sum = Array2::<f64>::zeros((families, d));
        let mut sq = Array2::<f64>::zeros((families, d));
        let mut count = vec![0usize; families];
        for (row, label) in features.outer_iter().zip(labels) {
            let Some(c) = *label else { continue };
            if c >= families {
                return Err(Error::dim("family id bound", families, c));
            }
            count[c] += 1;
            for (j, &v) in row.iter().enumerate() {
                sum[[c, j]] += v as f64;
                sq[[c, j]] += (v as f64) * (v as f64);
            }
        }
        if let Some(c) = count.iter().position(|&n| n == 0) {
            return Err(Error::MissingFamily(format!("family {c} has no labeled row")));
        }
        let mut mean = Array2::zeros((families, d));
        let mut std = Array2::zeros((families, d));
        for c in 0..families {
            let n = count[c] as f64;
            for j in 0..d {
                let m = sum[[c, j]] / n;
                mean[[c, j]] = m as f32;
                std[[c, j]] = (sq[[c, j]] / n - m * m).max(0.0).sqrt() as f32;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn families(&self) -> usize {
        self.mean.nrows()
    }

    /// Labeled family whose mean is nearest to `x`; ties to the smaller id.
    pub fn nearest_family(&self, x: &[f32]) -> usize {
        let x = ndarray::ArrayView1::from(x);
        let mut best = (f64::INFINITY, 0);
        for (c, m) in self.mean.outer_iter().enumerate() {
            let d = squared_l2(x, m);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }
}

/// `x + ε` with `ε_j ~ N(0, std_j²)`.
pub fn gaussian_augment(x: &[f32], std: &[f32], rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    if x.len() != std.len() {
        return Err(Error::dim("noise scales", x.len(), std.len()));
    }
    Ok(x.iter()
        .zip(std)
        .map(|(&v, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            if s == 0.0 {
                v
            } else {
                (v as f64 + s as f64 * z) as f32
            }
        })
        .collect())
}

pub struct GaussianAugmenter<'a> {
    features: ArrayView2<'a, f32>,
    family: Vec<usize>,
    stats: FamilyStats,
}

impl<'a> GaussianAugmenter<'a> {
    pub fn new(features: ArrayView2<'a, f32>, labels: &[Option<usize>], families: usize) -> Result<Self> {
        let stats = FamilyStats::fit(&features, labels, families)?;
        let family = features
            .outer_iter()
            .zip(labels)
            .map(|(row, l)| l.unwrap_or_else(|| stats.nearest_family(&row.to_vec())))
            .collect();
        Ok(Self {
            features,
            family,
            stats,
        })
    }

    pub fn family_of(&self, row: usize) -> usize {
        self.family[row]
    }
}

impl Augmenter for GaussianAugmenter<'_> {
    fn num_rows(&self) -> usize {
        self.features.nrows()
    }

    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn augment(&self, row: usize, rng: &mut ChaCha8Rng) -> Result<Augmented> {
        if row >= self.num_rows() {
            return Err(Error::dim("row id bound", self.num_rows(), row));
        }
        let x = self.features.row(row).to_vec();
        let std = self.stats.std.row(self.family[row]).to_vec();
        Ok(Augmented {
            features: gaussian_augment(&x, &std, rng)?,
            provenance: Provenance::identity(row),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, stream};
    use ndarray::array;

    #[test]
    fn zero_variance_leaves_input() {
        let mut rng = rng_for(1, stream::AUGMENT);
        assert_eq!(gaussian_augment(&[1.0, -2.0], &[0.0, 0.0], &mut rng).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn empirical_std_matches_target() {
        let mut rng = rng_for(2, stream::AUGMENT);
        let std = [0.5f32, 2.0, 0.1];
        let mut acc = [0.0f64; 3];
        let n = 10_000;
        for _ in 0..n {
            let y = gaussian_augment(&[0.0; 3], &std, &mut rng).unwrap();
            for j in 0..3 {
                acc[j] += (y[j] as f64).powi(2);
            }
        }
        for j in 0..3 {
            let s = (acc[j] / n as f64).sqrt();
            assert!((s / std[j] as f64 - 1.0).abs() < 0.05, "coordinate {j}: {s}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let x = [0.3f32, 0.7];
        let a = gaussian_augment(&x, &[1.0, 1.0], &mut rng_for(3, stream::AUGMENT)).unwrap();
        let b = gaussian_augment(&x, &[1.0, 1.0], &mut rng_for(3, stream::AUGMENT)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn family_stats_and_pseudo_families() {
        let f = array![[0.0f32, 0.0], [2.0, 0.0], [10.0, 10.0], [10.0, 14.0], [9.0, 11.0]];
        let labels = [Some(0), Some(0), Some(1), Some(1), None];
        let aug = GaussianAugmenter::new(f.view(), &labels, 2).unwrap();
        assert_eq!(aug.stats.mean.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(aug.stats.std.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(aug.stats.std.row(1).to_vec(), vec![0.0, 2.0]);
        assert_eq!(aug.family_of(4), 1);
        assert!(GaussianAugmenter::new(f.view(), &[Some(0), None, None, None, None], 2).is_err());
    }
}
