//! Retrieval-augmented pseudo-sample generation.
//!
//! For a row `s = s_i ⊕ s_n`:
//!
//! 1. pick `s'` uniformly among its `k_neighbors` nearest rows in feature space;
//! 2. draw one `α ~ U(0, 1)` and mix `s̃_i = α s_i + (1−α) s'_i` and
//!    `h̃_n = α h_n + (1−α) h'_n`;
//! 3. retrieve the `k_candidates` rows of `H_n` nearest to `h̃_n`;
//! 4. keep the candidate `j` whose `H_n_sim` row is nearest to the sim half
//!    of `φ_i(s̃_i)`, and return `s̃_i ⊕ S_n[j]`.
//!
//! The non-interpolatable block of every output is therefore a stored row.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{build_embeddings, EmbeddingTables, InvarianceModel};
use crate::error::{Error, Result};
use crate::index::{knn_graph, squared_l2, L2Index, Neighbor};
use crate::rng::{row_rng, stream};
use crate::schema::FeatureSchema;

/// How the replacement non-interpolatable block is chosen among candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSelection {
    /// Nearest candidate in the sim embedding to `φ_i(s̃_i)`.
    #[default]
    Aligned,
    /// Top retrieval hit, skipping the alignment step.
    FirstCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub k_neighbors: usize,
    pub k_candidates: usize,
    /// `None` draws `α ~ U(0, 1)` per augmentation.
    pub fixed_alpha: Option<f64>,
    pub selection: CandidateSelection,
    pub pool_variants: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            k_candidates: 5,
            fixed_alpha: None,
            selection: CandidateSelection::Aligned,
            pool_variants: 4,
            seed: 17,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 || self.k_candidates == 0 {
            return Err(Error::InvalidConfig("k_neighbors and k_candidates must be at least 1".into()));
        }
        if let Some(a) = self.fixed_alpha {
            check_alpha(a)?;
        }
        Ok(())
    }

    fn draw_alpha(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.fixed_alpha.unwrap_or_else(|| rng.random::<f64>())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// `α a + (1−α) b` per coordinate, computed in `f64`. Coordinates where
/// `a == b` are returned unchanged.
pub fn lerp(a: &[f32], b: &[f32], alpha: f64) -> Result<Vec<f32>> {
    if a.len() != b.len() {
        return Err(Error::dim("mix operands", a.len(), b.len()));
    }
    check_alpha(alpha)?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == y {
                x
            } else {
                (alpha * x as f64 + (1.0 - alpha) * y as f64) as f32
            }
        })
        .collect())
}

/// Mixes two interpolatable blocks.
pub fn mix_interpolatable(s_i: &[f32], s_i_prime: &[f32], alpha: f64) -> Result<Vec<f32>> {
    lerp(s_i, s_i_prime, alpha)
}

/// Mixes two retrieval embeddings; must receive the `α` used for the
/// interpolatable block.
pub fn mix_embedding(h_n: &[f32], h_n_prime: &[f32], alpha: f64) -> Result<Vec<f32>> {
    lerp(h_n, h_n_prime, alpha)
}

/// Where an augmented row came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: usize,
    pub neighbor: Option<usize>,
    pub alpha: Option<f64>,
    pub chosen: Option<usize>,
}

impl Provenance {
    pub fn identity(source: usize) -> Self {
        Self {
            source,
            neighbor: None,
            alpha: None,
            chosen: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub features: Vec<f32>,
    pub provenance: Provenance,
}

/// Anything that turns a stored row into a pseudo-sample.
pub trait Augmenter: Sync {
    fn num_rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn augment(&self, row: usize, rng: &mut ChaCha8Rng) -> Result<Augmented>;
}

/// Frozen state shared by every augmentation of one dataset snapshot.
#[derive(Debug, Clone)]
pub struct AugmentationContext {
    features: Array2<f32>,
    schema: FeatureSchema,
    model: InvarianceModel,
    tables: EmbeddingTables,
    s_i: Array2<f32>,
    s_n: Array2<f32>,
    neighbors: Vec<Vec<usize>>,
    hn_index: L2Index,
}

impl AugmentationContext {
    /// Builds embeddings, the feature-space k-NN graph and the `H_n` index
    /// over all rows of standardized `features`.
    pub fn build(
        features: Array2<f32>,
        schema: &FeatureSchema,
        model: InvarianceModel,
        k_neighbors: usize,
    ) -> Result<Self> {
        if !model.is_frozen() {
            return Err(Error::NotFrozen);
        }
        if features.ncols() != schema.dim() {
            return Err(Error::dim("augmentation features", schema.dim(), features.ncols()));
        }
        if model.dim_i() != schema.interpolatable_dim() || model.dim_n() != schema.non_interpolatable_dim() {
            return Err(Error::InvalidConfig(format!(
                "encoder expects blocks of {}+{}, schema has {}+{}",
                model.dim_i(),
                model.dim_n(),
                schema.interpolatable_dim(),
                schema.non_interpolatable_dim()
            )));
        }
        let tables = build_embeddings(&features.view(), schema, &model)?;
        let ids: Vec<usize> = (0..features.nrows()).collect();
        let neighbors = knn_graph(&features.view(), &ids, k_neighbors)?
            .into_iter()
            .map(|r| r.into_iter().map(|n| n.id).collect())
            .collect();
        let hn_index = L2Index::build(tables.h_n.clone(), ids)?;
        let (s_i, s_n) = schema.split_matrix(&features.view())?;
        Ok(Self {
            features,
            schema: schema.clone(),
            model,
            tables,
            s_i,
            s_n,
            neighbors,
            hn_index,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        self.features.view()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn model(&self) -> &InvarianceModel {
        &self.model
    }

    pub fn tables(&self) -> &EmbeddingTables {
        &self.tables
    }

    pub fn s_n(&self) -> ArrayView2<'_, f32> {
        self.s_n.view()
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.neighbors[row]
    }

    pub fn hn_index(&self) -> &L2Index {
        &self.hn_index
    }

    /// Top `k` rows of `H_n` nearest to `h` (the source row is not excluded).
    pub fn retrieve_candidates(&self, h: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.hn_index.query_topk(ArrayView1::from(h), k, None)
    }

    /// Candidate whose `H_n_sim` row is nearest to the sim half of `φ_i(s̃_i)`.
    pub fn align_select(&self, tilde_s_i: &[f32], candidates: &[usize]) -> Result<usize> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput("alignment candidates"));
        }
        let h = self.model.encode_i(tilde_s_i)?;
        let sim = ArrayView1::from(&h[..self.model.sim_dim()]);
        let mut best: Option<(f64, usize)> = None;
        for &c in candidates {
            if c >= self.len() {
                return Err(Error::dim("candidate id bound", self.len(), c));
            }
            let d = squared_l2(sim, self.tables.h_n_sim.row(c));
            if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                best = Some((d, c));
            }
        }
        Ok(best.expect("non-empty").1)
    }

    pub fn augment_sample(&self, row: usize, config: &AugmentationConfig, rng: &mut ChaCha8Rng) -> Result<Augmented> {
        if row >= self.len() {
            return Err(Error::dim("row id bound", self.len(), row));
        }
        let pool = &self.neighbors[row][..config.k_neighbors.min(self.neighbors[row].len())];
        let neighbor = *pool.choose(rng).ok_or(Error::EmptyInput("neighbor list"))?;
        let alpha = config.draw_alpha(rng);
        let tilde_s_i = mix_interpolatable(
            self.s_i.row(row).as_slice().expect("standard layout"),
            self.s_i.row(neighbor).as_slice().expect("standard layout"),
            alpha,
        )?;
        let tilde_h_n = mix_embedding(
            self.tables.h_n.row(row).as_slice().expect("standard layout"),
            self.tables.h_n.row(neighbor).as_slice().expect("standard layout"),
            alpha,
        )?;
        let candidates: Vec<usize> = self
            .retrieve_candidates(&tilde_h_n, config.k_candidates)?
            .into_iter()
            .map(|n| n.id)
            .collect();
        let chosen = match config.selection {
            CandidateSelection::Aligned => self.align_select(&tilde_s_i, &candidates)?,
            CandidateSelection::FirstCandidate => candidates[0],
        };
        let features = self
            .schema
            .join(&tilde_s_i, self.s_n.row(chosen).as_slice().expect("standard layout"))?;
        Ok(Augmented {
            features,
            provenance: Provenance {
                source: row,
                neighbor: Some(neighbor),
                alpha: Some(alpha),
                chosen: Some(chosen),
            },
        })
    }

    pub fn augmenter<'a>(&'a self, config: &'a AugmentationConfig) -> RetrievalAugmenter<'a> {
        RetrievalAugmenter { ctx: self, config }
    }
}

/// The full retrieval pipeline (or its first-candidate ablation).
pub struct RetrievalAugmenter<'a> {
    ctx: &'a AugmentationContext,
    config: &'a AugmentationConfig,
}

impl Augmenter for RetrievalAugmenter<'_> {
    fn num_rows(&self) -> usize {
        self.ctx.len()
    }

    fn dim(&self) -> usize {
        self.ctx.features.ncols()
    }

    fn augment(&self, row: usize, rng: &mut ChaCha8Rng) -> Result<Augmented> {
        self.ctx.augment_sample(row, self.config, rng)
    }
}

/// Interpolates every coordinate between a row and a graph neighbor.
pub struct DirectMixAugmenter<'a> {
    pub ctx: &'a AugmentationContext,
    pub config: &'a AugmentationConfig,
}

impl Augmenter for DirectMixAugmenter<'_> {
    fn num_rows(&self) -> usize {
        self.ctx.len()
    }

    fn dim(&self) -> usize {
        self.ctx.features.ncols()
    }

    fn augment(&self, row: usize, rng: &mut ChaCha8Rng) -> Result<Augmented> {
        let nb = self.ctx.neighbors(row);
        let pool = &nb[..self.config.k_neighbors.min(nb.len())];
        let neighbor = *pool.choose(rng).ok_or(Error::EmptyInput("neighbor list"))?;
        let alpha = self.config.draw_alpha(rng);
        let f = &self.ctx.features;
        let features = lerp(
            f.row(row).as_slice().expect("standard layout"),
            f.row(neighbor).as_slice().expect("standard layout"),
            alpha,
        )?;
        Ok(Augmented {
            features,
            provenance: Provenance {
                source: row,
                neighbor: Some(neighbor),
                alpha: Some(alpha),
                chosen: None,
            },
        })
    }
}

/// Returns rows unchanged.
pub struct IdentityAugmenter<'a> {
    pub features: ArrayView2<'a, f32>,
}

impl Augmenter for IdentityAugmenter<'_> {
    fn num_rows(&self) -> usize {
        self.features.nrows()
    }

    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn augment(&self, row: usize, _rng: &mut ChaCha8Rng) -> Result<Augmented> {
        if row >= self.num_rows() {
            return Err(Error::dim("row id bound", self.num_rows(), row));
        }
        Ok(Augmented {
            features: self.features.row(row).to_vec(),
            provenance: Provenance::identity(row),
        })
    }
}

/// `variants` augmentations per row. Variant `v` of row `r` is stored at
/// `r * variants + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPool {
    pub variants: usize,
    pub rows: Array2<f32>,
    pub provenance: Vec<Provenance>,
}

impl AugmentedPool {
    pub fn num_sources(&self) -> usize {
        if self.variants == 0 {
            0
        } else {
            self.rows.nrows() / self.variants
        }
    }

    pub fn variant(&self, row: usize, v: usize) -> ArrayView1<'_, f32> {
        self.rows.row(row * self.variants + v)
    }

    /// Every variant of `row`.
    pub fn variants_of(&self, row: usize) -> ArrayView2<'_, f32> {
        self.rows.slice(s![row * self.variants..(row + 1) * self.variants, ..])
    }

    /// Pool restricted to `rows`, renumbered in the given order.
    pub fn subset(&self, rows: &[usize]) -> AugmentedPool {
        let idx: Vec<usize> = rows
            .iter()
            .flat_map(|&r| (0..self.variants).map(move |v| r * self.variants + v))
            .collect();
        AugmentedPool {
            variants: self.variants,
            rows: self.rows.select(Axis(0), &idx),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    pub fn save(&self, features_path: &std::path::Path, provenance_path: &std::path::Path) -> Result<()> {
        let flat: Vec<f32> = self.rows.iter().copied().collect();
        crate::nn::write_f32_file(features_path, &flat)?;
        let record = PoolRecord {
            variants: self.variants,
            rows: self.rows.nrows(),
            dim: self.rows.ncols(),
            provenance: self.provenance.clone(),
        };
        let text = serde_json::to_string(&record).map_err(|e| Error::json(provenance_path, e))?;
        std::fs::write(provenance_path, text).map_err(|e| Error::io(provenance_path, e))
    }

    pub fn load(features_path: &std::path::Path, provenance_path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(provenance_path).map_err(|e| Error::io(provenance_path, e))?;
        let record: PoolRecord = serde_json::from_str(&text).map_err(|e| Error::json(provenance_path, e))?;
        let flat = crate::nn::read_f32_file(features_path)?;
        if flat.len() != record.rows * record.dim || record.provenance.len() != record.rows {
            return Err(Error::dim("pool file", record.rows * record.dim, flat.len()));
        }
        Ok(Self {
            variants: record.variants,
            rows: Array2::from_shape_vec((record.rows, record.dim), flat).expect("shape checked"),
            provenance: record.provenance,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PoolRecord {
    variants: usize,
    rows: usize,
    dim: usize,
    provenance: Vec<Provenance>,
}

/// Builds a pool with one generator per row derived from `(seed, row)`, so
/// rows are independent and the pool does not depend on thread count.
pub fn build_pool<A: Augmenter + ?Sized>(augmenter: &A, variants: usize, seed: u64) -> Result<AugmentedPool> {
    let n = augmenter.num_rows();
    let dim = augmenter.dim();
    let per_row: Vec<Vec<Augmented>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = row_rng(seed, stream::AUGMENT, r);
            (0..variants).map(|_| augmenter.augment(r, &mut rng)).collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Array2::zeros((n * variants, dim));
    let mut provenance = Vec::with_capacity(n * variants);
    for (i, a) in per_row.into_iter().flatten().enumerate() {
        rows.row_mut(i).assign(&ArrayView1::from(&a.features));
        provenance.push(a.provenance);
    }
    Ok(AugmentedPool {
        variants,
        rows,
        provenance,
    })
}

/// Pool of the retrieval pipeline under `config`.
pub fn augment_pool(ctx: &AugmentationContext, config: &AugmentationConfig, variants: usize) -> Result<AugmentedPool> {
    config.validate()?;
    build_pool(&ctx.augmenter(config), variants, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{train_invariance_model, EncoderConfig, InvarianceNets};
    use crate::nn::{Linear, Mlp};
    use crate::rng::rng_for;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn single(layer: Linear<f32>) -> Mlp<f32> {
        Mlp {
            layers: vec![layer],
            negative_slope: 0.01,
        }
    }

    fn identity_config() -> EncoderConfig {
        EncoderConfig {
            phi_i_layers: vec![2],
            phi_n_layers: vec![2],
            hidden_dim: 2,
            sim_dim: 1,
            dis_dim: 1,
            ..EncoderConfig::default()
        }
    }

    /// Four features, two per block, identity encoders: `H_n = S_n` and the
    /// sim halves are the first coordinate of each block.
    fn identity_context(features: Array2<f32>) -> AugmentationContext {
        let schema = FeatureSchema::new(4, [0, 2]).unwrap();
        let nets = InvarianceNets {
            phi_i: single(Linear::identity(2)),
            psi_i: single(Linear::identity(2)),
            phi_n: single(Linear::identity(2)),
            psi_n: single(Linear::identity(2)),
        };
        let mut model = InvarianceModel::from_nets(nets, identity_config()).unwrap();
        model.freeze();
        AugmentationContext::build(features, &schema, model, 2).unwrap()
    }

    fn grid() -> Array2<f32> {
        Array2::from_shape_fn((12, 4), |(r, c)| (r as f32 * 1.37 + c as f32 * 0.61).sin() * 3.0 + r as f32 * 0.01 * c as f32)
    }

    #[test]
    fn mix_hand_values_and_endpoints() {
        let m = mix_interpolatable(&[1.0, 2.0], &[3.0, 4.0], 0.3).unwrap();
        assert!((m[0] - 2.4).abs() < 1e-6 && (m[1] - 3.4).abs() < 1e-6);
        assert_eq!(mix_interpolatable(&[1.5, -2.0], &[9.0, 4.0], 1.0).unwrap(), vec![1.5, -2.0]);
        assert_eq!(mix_embedding(&[1.5, -2.0], &[9.0, 4.0], 0.0).unwrap(), vec![9.0, 4.0]);
        assert_eq!(mix_embedding(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(mix_interpolatable(&[1.0], &[1.0, 2.0], 0.5), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(mix_interpolatable(&[1.0], &[2.0], 1.5), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn single_candidate_is_chosen_and_nearest_sim_wins() {
        // Row 0: s_n = [0, *], row 1: s_n = [10, *]; sim half of H_n is the
        // first non-interpolatable coordinate.
        let f = array![
            [1.0f32, 0.0, 1.0, 0.0],
            [0.0, 10.0, 0.0, 10.0],
            [5.0, 5.0, 5.0, 5.0]
        ];
        let ctx = identity_context(f);
        assert_eq!(ctx.align_select(&[100.0, 100.0], &[1]).unwrap(), 1);
        // φ_i(s̃_i) sim half = s̃_i[0] = 1 → nearer [0] than [10].
        assert_eq!(ctx.align_select(&[1.0, 1.0], &[0, 1]).unwrap(), 0);
        assert_eq!(ctx.align_select(&[1.0, 1.0], &[1, 0]).unwrap(), 0);
        assert!(ctx.align_select(&[1.0, 1.0], &[]).is_err());
    }

    #[test]
    fn align_select_matches_exhaustive_oracle() {
        let ctx = identity_context(grid());
        let mut rng = rng_for(5, stream::SHUFFLE);
        for _ in 0..200 {
            let k = rng.random_range(1..=12);
            let mut cands: Vec<usize> = (0..12).collect();
            rand::seq::SliceRandom::shuffle(&mut cands[..], &mut rng);
            cands.truncate(k);
            let q = [rng.random_range(-4.0f32..4.0), rng.random_range(-4.0f32..4.0)];
            let want = *cands
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (q[0] as f64 - ctx.s_n[[a, 0]] as f64).powi(2);
                    let db = (q[0] as f64 - ctx.s_n[[b, 0]] as f64).powi(2);
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(ctx.align_select(&q, &cands).unwrap(), want);
        }
    }

    #[test]
    fn stored_embedding_is_first_candidate() {
        let ctx = identity_context(grid());
        let h = ctx.tables().h_n.row(7).to_vec();
        let c = ctx.retrieve_candidates(&h, 1).unwrap();
        assert_eq!(c, vec![Neighbor { id: 7, dist: 0.0 }]);
        assert!(ctx.retrieve_candidates(&h, 13).is_err());
    }

    /// Grid whose two sim coordinates agree on every row, as after training
    /// with a vanishing similarity loss.
    fn aligned_grid() -> Array2<f32> {
        let mut g = grid();
        for mut row in g.outer_iter_mut() {
            row[1] = row[0];
        }
        g
    }

    #[test]
    fn alpha_one_returns_the_source_row() {
        let ctx = identity_context(aligned_grid());
        let config = AugmentationConfig {
            fixed_alpha: Some(1.0),
            k_neighbors: 2,
            ..AugmentationConfig::default()
        };
        let pool = augment_pool(&ctx, &config, 2).unwrap();
        for r in 0..ctx.len() {
            for v in 0..2 {
                assert_eq!(pool.variant(r, v), ctx.features().row(r));
                assert_eq!(pool.provenance[r * 2 + v].chosen, Some(r));
            }
        }
    }

    #[test]
    fn alpha_zero_takes_neighbor_interpolatable_block() {
        let ctx = identity_context(grid());
        let config = AugmentationConfig {
            fixed_alpha: Some(0.0),
            k_neighbors: 2,
            ..AugmentationConfig::default()
        };
        let mut rng = rng_for(1, stream::AUGMENT);
        let a = ctx.augment_sample(3, &config, &mut rng).unwrap();
        let nb = a.provenance.neighbor.unwrap();
        assert!(ctx.neighbors(3).contains(&nb));
        let (s_i, _) = ctx.schema().split(&a.features).unwrap();
        let (want, _) = ctx.schema().split(ctx.features().row(nb).as_slice().unwrap()).unwrap();
        assert_eq!(s_i, want);
    }

    #[test]
    fn pool_contracts() {
        let ctx = identity_context(grid());
        let config = AugmentationConfig {
            k_neighbors: 2,
            ..AugmentationConfig::default()
        };
        let empty = augment_pool(&ctx, &config, 0).unwrap();
        assert_eq!(empty.rows.dim(), (0, 4));
        let a = augment_pool(&ctx, &config, 3).unwrap();
        assert_eq!(a, augment_pool(&ctx, &config, 3).unwrap());
        // Recompute every entry from its row generator.
        for r in 0..ctx.len() {
            let mut rng = row_rng(config.seed, stream::AUGMENT, r);
            for v in 0..3 {
                let again = ctx.augment_sample(r, &config, &mut rng).unwrap();
                assert_eq!(a.variant(r, v).to_vec(), again.features);
                assert_eq!(a.provenance[r * 3 + v], again.provenance);
            }
        }
        let sub = a.subset(&[4, 1]);
        assert_eq!(sub.variants_of(0), a.variants_of(4));
        assert_eq!(sub.num_sources(), 2);
    }

    #[test]
    fn pool_persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = identity_context(grid());
        let config = AugmentationConfig {
            k_neighbors: 2,
            ..AugmentationConfig::default()
        };
        let pool = augment_pool(&ctx, &config, 2).unwrap();
        let (f, p) = (dir.path().join("pool.f32"), dir.path().join("pool.json"));
        pool.save(&f, &p).unwrap();
        assert_eq!(AugmentedPool::load(&f, &p).unwrap(), pool);
    }

    #[test]
    fn direct_mix_and_identity_variants() {
        let ctx = identity_context(grid());
        let config = AugmentationConfig {
            k_neighbors: 2,
            fixed_alpha: Some(0.5),
            ..AugmentationConfig::default()
        };
        let mut rng = rng_for(2, stream::AUGMENT);
        let a = DirectMixAugmenter { ctx: &ctx, config: &config }.augment(0, &mut rng).unwrap();
        let nb = a.provenance.neighbor.unwrap();
        for j in 0..4 {
            let want = 0.5 * ctx.features()[[0, j]] as f64 + 0.5 * ctx.features()[[nb, j]] as f64;
            assert!((a.features[j] as f64 - want).abs() < 1e-6);
        }
        let id = IdentityAugmenter { features: ctx.features() };
        assert_eq!(id.augment(5, &mut rng).unwrap().features, ctx.features().row(5).to_vec());
    }

    #[test]
    fn unfrozen_model_is_rejected() {
        let schema = FeatureSchema::new(4, [0, 2]).unwrap();
        let model = InvarianceModel::new(2, 2, identity_config()).unwrap();
        assert!(matches!(
            AugmentationContext::build(grid(), &schema, model, 2),
            Err(Error::NotFrozen)
        ));
    }

    #[test]
    fn trained_context_keeps_real_non_interpolatable_blocks() {
        let schema = FeatureSchema::new(4, [0, 2]).unwrap();
        let f = grid();
        let cfg = EncoderConfig {
            phi_i_layers: vec![8, 4],
            phi_n_layers: vec![8, 4],
            hidden_dim: 4,
            sim_dim: 2,
            dis_dim: 2,
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            ..EncoderConfig::default()
        };
        let model = train_invariance_model(&f.view(), &schema, &cfg).unwrap().model;
        let ctx = AugmentationContext::build(f, &schema, model, 3).unwrap();
        let pool = augment_pool(&ctx, &AugmentationConfig::default().clone_with_k(3), 4).unwrap();
        let stored: Vec<Vec<u32>> = ctx.s_n().outer_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        for row in pool.rows.outer_iter() {
            let (_, s_n) = schema.split(row.as_slice().unwrap()).unwrap();
            let bits: Vec<u32> = s_n.iter().map(|v| v.to_bits()).collect();
            assert!(stored.contains(&bits));
        }
    }

    impl AugmentationConfig {
        fn clone_with_k(&self, k: usize) -> Self {
            Self {
                k_neighbors: k,
                ..self.clone()
            }
        }
    }

    proptest! {
        #[test]
        fn mix_is_linear_and_fixes_shared_coordinates(
            a in prop::collection::vec(-100.0f32..100.0, 1..20),
            alpha in 0.0f64..=1.0,
        ) {
            let b: Vec<f32> = a.iter().enumerate().map(|(i, &x)| if i % 2 == 0 { x } else { -x + 1.0 }).collect();
            let ab = lerp(&a, &b, alpha).unwrap();
            let ba = lerp(&b, &a, alpha).unwrap();
            for i in 0..a.len() {
                prop_assert!(((ab[i] + ba[i]) - (a[i] + b[i])).abs() <= 1e-4 * (1.0 + a[i].abs() + b[i].abs()));
                if i % 2 == 0 {
                    prop_assert_eq!(ab[i].to_bits(), a[i].to_bits());
                }
            }
        }
    }
}
