//! Paired encoder-decoders for the interpolatable (`φ_i`, `ψ_i`) and
//! non-interpolatable (`φ_n`, `ψ_n`) blocks.
//!
//! Each encoder output `h` is split as `h = h_sim ⊕ h_dis`, with the first
//! `sim_dim` entries forming `h_sim`. Training minimizes
//!
//! ```text
//! L_R = mean ‖s_i − ψ_i(φ_i(s_i))‖² + ‖s_n − ψ_n(φ_n(s_n))‖²
//! L_S = mean ‖h_i_sim − h_n_sim‖²
//! L_D = mean max(0, margin − ‖h_i_dis − h_n_dis‖²)
//! ```
//!
//! After training both encoders are frozen and used to build the retrieval
//! table `H_n = φ_n(S_n)` and the alignment tables `H_i_sim`, `H_n_sim`.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{fill_params, join_name, load_params, real, save_params, AdamConfig, AdamW};
use crate::nn::{Mlp, Params, Real, TensorRef};
use crate::rng::{rng_for, stream};
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub phi_i_layers: Vec<usize>,
    pub phi_n_layers: Vec<usize>,
    pub hidden_dim: usize,
    pub sim_dim: usize,
    pub dis_dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub negative_slope: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            phi_i_layers: vec![512, 512, 512],
            phi_n_layers: vec![1024, 1024, 512, 512, 512],
            hidden_dim: 512,
            sim_dim: 256,
            dis_dim: 256,
            margin: 5.0,
            epochs: 50,
            batch_size: 256,
            learning_rate: 5e-5,
            weight_decay: 1e-5,
            negative_slope: 0.01,
            seed: 17,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sim_dim + self.dis_dim != self.hidden_dim {
            return Err(Error::InvalidConfig(format!(
                "sim_dim {} + dis_dim {} != hidden_dim {}",
                self.sim_dim, self.dis_dim, self.hidden_dim
            )));
        }
        if self.sim_dim == 0 || self.dis_dim == 0 {
            return Err(Error::InvalidConfig("sim_dim and dis_dim must be positive".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidConfig(format!("margin {} must be positive", self.margin)));
        }
        for (name, layers) in [("phi_i_layers", &self.phi_i_layers), ("phi_n_layers", &self.phi_n_layers)] {
            match layers.last() {
                None => return Err(Error::InvalidConfig(format!("{name} is empty"))),
                Some(&w) if w != self.hidden_dim => {
                    return Err(Error::InvalidConfig(format!(
                        "{name} ends at width {w}, expected hidden_dim {}",
                        self.hidden_dim
                    )))
                }
                _ => {}
            }
            if layers.contains(&0) {
                return Err(Error::InvalidConfig(format!("{name} contains a zero width")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Relative weights of the three loss terms; all ones in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub similarity: f64,
    pub dissimilarity: f64,
}

impl LossWeights {
    pub const ALL: LossWeights = LossWeights {
        reconstruction: 1.0,
        similarity: 1.0,
        dissimilarity: 1.0,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub similarity: f64,
    pub dissimilarity: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.similarity + self.dissimilarity
    }

    pub fn weighted(&self, w: LossWeights) -> f64 {
        w.reconstruction * self.reconstruction + w.similarity * self.similarity + w.dissimilarity * self.dissimilarity
    }

    fn is_finite(&self) -> bool {
        self.reconstruction.is_finite() && self.similarity.is_finite() && self.dissimilarity.is_finite()
    }
}

/// The four networks, generic over precision.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceNets<T> {
    pub phi_i: Mlp<T>,
    pub psi_i: Mlp<T>,
    pub phi_n: Mlp<T>,
    pub psi_n: Mlp<T>,
}

impl<T: Real> InvarianceNets<T> {
    pub fn init(dim_i: usize, dim_n: usize, config: &EncoderConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::INIT);
        let enc_i: Vec<usize> = std::iter::once(dim_i).chain(config.phi_i_layers.iter().copied()).collect();
        let enc_n: Vec<usize> = std::iter::once(dim_n).chain(config.phi_n_layers.iter().copied()).collect();
        let dec_i: Vec<usize> = enc_i.iter().rev().copied().collect();
        let dec_n: Vec<usize> = enc_n.iter().rev().copied().collect();
        let slope = config.negative_slope;
        Self {
            phi_i: Mlp::init(&enc_i, slope, &mut rng),
            psi_i: Mlp::init(&dec_i, slope, &mut rng),
            phi_n: Mlp::init(&enc_n, slope, &mut rng),
            psi_n: Mlp::init(&dec_n, slope, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            phi_i: self.phi_i.zeros_like(),
            psi_i: self.psi_i.zeros_like(),
            phi_n: self.phi_n.zeros_like(),
            psi_n: self.psi_n.zeros_like(),
        }
    }

    /// Forward-only loss evaluation.
    pub fn losses(&self, s_i: &ArrayView2<T>, s_n: &ArrayView2<T>, sim_dim: usize, margin: f64) -> LossTerms {
        let h_i = self.phi_i.forward(s_i);
        let h_n = self.phi_n.forward(s_n);
        let r_i = self.psi_i.forward(&h_i.view());
        let r_n = self.psi_n.forward(&h_n.view());
        let n = s_i.nrows().max(1) as f64;
        let reconstruction = (sq_dist_rows(&r_i.view(), s_i).iter().sum::<f64>()
            + sq_dist_rows(&r_n.view(), s_n).iter().sum::<f64>())
            / n;
        let (sim, dis) = sim_dis_sq(&h_i, &h_n, sim_dim);
        LossTerms {
            reconstruction,
            similarity: sim.iter().sum::<f64>() / n,
            dissimilarity: dis.iter().map(|d| (margin - d).max(0.0)).sum::<f64>() / n,
        }
    }

    /// Loss terms and the gradient of `weights`-weighted total loss.
    pub fn loss_and_grad(
        &self,
        s_i: &ArrayView2<T>,
        s_n: &ArrayView2<T>,
        sim_dim: usize,
        margin: f64,
        weights: LossWeights,
    ) -> (LossTerms, InvarianceNets<T>) {
        let n = s_i.nrows().max(1) as f64;
        let enc_i = self.phi_i.forward_trace(s_i);
        let enc_n = self.phi_n.forward_trace(s_n);
        let dec_i = self.psi_i.forward_trace(&enc_i.output.view());
        let dec_n = self.psi_n.forward_trace(&enc_n.output.view());
        let h_i = &enc_i.output;
        let h_n = &enc_n.output;

        let rec_i = sq_dist_rows(&dec_i.output.view(), s_i);
        let rec_n = sq_dist_rows(&dec_n.output.view(), s_n);
        let (sim, dis) = sim_dis_sq(h_i, h_n, sim_dim);
        let terms = LossTerms {
            reconstruction: (rec_i.iter().sum::<f64>() + rec_n.iter().sum::<f64>()) / n,
            similarity: sim.iter().sum::<f64>() / n,
            dissimilarity: dis.iter().map(|d| (margin - d).max(0.0)).sum::<f64>() / n,
        };

        let mut grads = self.zeros_like();
        let rec_scale = real::<T>(2.0 * weights.reconstruction / n);
        let dr_i = (&dec_i.output - s_i) * rec_scale;
        let dr_n = (&dec_n.output - s_n) * rec_scale;
        let mut dh_i = self.psi_i.backward(&dec_i, dr_i, &mut grads.psi_i);
        let mut dh_n = self.psi_n.backward(&dec_n, dr_n, &mut grads.psi_n);

        let sim_scale = real::<T>(2.0 * weights.similarity / n);
        let delta_sim = &h_i.slice(s![.., ..sim_dim]) - &h_n.slice(s![.., ..sim_dim]);
        let g_sim = delta_sim * sim_scale;
        {
            let mut a = dh_i.slice_mut(s![.., ..sim_dim]);
            a += &g_sim;
        }
        {
            let mut b = dh_n.slice_mut(s![.., ..sim_dim]);
            b -= &g_sim;
        }

        let dis_scale = real::<T>(2.0 * weights.dissimilarity / n);
        let delta_dis = &h_i.slice(s![.., sim_dim..]) - &h_n.slice(s![.., sim_dim..]);
        for (r, d2) in dis.iter().enumerate() {
            if margin - d2 > 0.0 {
                let g = delta_dis.row(r).mapv(|v| v * dis_scale);
                {
                    let mut a = dh_i.slice_mut(s![r, sim_dim..]);
                    a -= &g;
                }
                let mut b = dh_n.slice_mut(s![r, sim_dim..]);
                b += &g;
            }
        }

        self.phi_i.backward(&enc_i, dh_i, &mut grads.phi_i);
        self.phi_n.backward(&enc_n, dh_n, &mut grads.phi_n);
        (terms, grads)
    }
}

fn sq_dist_rows<T: Real>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Vec<f64> {
    a.outer_iter()
        .zip(b.outer_iter())
        .map(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(&p, &q)| {
                    let d = p.to_f64().unwrap_or(f64::NAN) - q.to_f64().unwrap_or(f64::NAN);
                    d * d
                })
                .sum()
        })
        .collect()
}

fn sim_dis_sq<T: Real>(h_i: &Array2<T>, h_n: &Array2<T>, sim_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let sim = sq_dist_rows(&h_i.slice(s![.., ..sim_dim]), &h_n.slice(s![.., ..sim_dim]));
    let dis = sq_dist_rows(&h_i.slice(s![.., sim_dim..]), &h_n.slice(s![.., sim_dim..]));
    (sim, dis)
}

impl<T: Real> Params<T> for InvarianceNets<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a, T>>) {
        self.phi_i.collect(&join_name(prefix, "phi_i"), out);
        self.psi_i.collect(&join_name(prefix, "psi_i"), out);
        self.phi_n.collect(&join_name(prefix, "phi_n"), out);
        self.psi_n.collect(&join_name(prefix, "psi_n"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [T]>) {
        self.phi_i.collect_mut(out);
        self.psi_i.collect_mut(out);
        self.phi_n.collect_mut(out);
        self.psi_n.collect_mut(out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    dim_i: usize,
    dim_n: usize,
    encoder: EncoderConfig,
}

/// Trained encoder-decoder pair with a freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceModel {
    nets: InvarianceNets<f32>,
    config: EncoderConfig,
    dim_i: usize,
    dim_n: usize,
    frozen: bool,
}

impl InvarianceModel {
    pub fn new(dim_i: usize, dim_n: usize, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        if dim_i == 0 || dim_n == 0 {
            return Err(Error::EmptyInput("encoder input block"));
        }
        Ok(Self {
            nets: InvarianceNets::init(dim_i, dim_n, &config, config.seed),
            config,
            dim_i,
            dim_n,
            frozen: false,
        })
    }

    /// Wraps explicit networks, e.g. hand-built toy models.
    pub fn from_nets(nets: InvarianceNets<f32>, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let dim_i = nets.phi_i.input_dim();
        let dim_n = nets.phi_n.input_dim();
        for (name, net, width) in [
            ("phi_i", &nets.phi_i, config.hidden_dim),
            ("phi_n", &nets.phi_n, config.hidden_dim),
            ("psi_i", &nets.psi_i, dim_i),
            ("psi_n", &nets.psi_n, dim_n),
        ] {
            if net.output_dim() != width {
                return Err(Error::dim(format!("{name} output width"), width, net.output_dim()));
            }
        }
        Ok(Self {
            nets,
            config,
            dim_i,
            dim_n,
            frozen: false,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn nets(&self) -> &InvarianceNets<f32> {
        &self.nets
    }

    /// Mutable access to the parameters; fails once frozen.
    pub fn nets_mut(&mut self) -> Result<&mut InvarianceNets<f32>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.nets)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim_i(&self) -> usize {
        self.dim_i
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn sim_dim(&self) -> usize {
        self.config.sim_dim
    }

    pub fn encode_i(&self, s_i: &[f32]) -> Result<Vec<f32>> {
        let x = ArrayView2::from_shape((1, s_i.len()), s_i).expect("row view");
        Ok(self.encode_i_batch(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn encode_n(&self, s_n: &[f32]) -> Result<Vec<f32>> {
        let x = ArrayView2::from_shape((1, s_n.len()), s_n).expect("row view");
        Ok(self.encode_n_batch(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn encode_i_batch(&self, s_i: &ArrayView2<f32>) -> Result<Array2<f32>> {
        if s_i.ncols() != self.dim_i {
            return Err(Error::dim("interpolatable block", self.dim_i, s_i.ncols()));
        }
        Ok(self.nets.phi_i.forward(s_i))
    }

    pub fn encode_n_batch(&self, s_n: &ArrayView2<f32>) -> Result<Array2<f32>> {
        if s_n.ncols() != self.dim_n {
            return Err(Error::dim("non-interpolatable block", self.dim_n, s_n.ncols()));
        }
        Ok(self.nets.phi_n.forward(s_n))
    }

    fn check_batch(&self, s_i: &ArrayView2<f32>, s_n: &ArrayView2<f32>) -> Result<()> {
        if s_i.nrows() == 0 {
            return Err(Error::EmptyInput("loss batch"));
        }
        if s_i.nrows() != s_n.nrows() {
            return Err(Error::dim("batch rows", s_i.nrows(), s_n.nrows()));
        }
        if s_i.ncols() != self.dim_i {
            return Err(Error::dim("interpolatable block", self.dim_i, s_i.ncols()));
        }
        if s_n.ncols() != self.dim_n {
            return Err(Error::dim("non-interpolatable block", self.dim_n, s_n.ncols()));
        }
        Ok(())
    }

    pub fn losses(&self, s_i: &ArrayView2<f32>, s_n: &ArrayView2<f32>) -> Result<LossTerms> {
        self.check_batch(s_i, s_n)?;
        Ok(self.nets.losses(s_i, s_n, self.config.sim_dim, self.config.margin))
    }

    pub fn reconstruction_loss(&self, s_i: &ArrayView2<f32>, s_n: &ArrayView2<f32>) -> Result<f64> {
        Ok(self.losses(s_i, s_n)?.reconstruction)
    }

    pub fn similarity_loss(&self, s_i: &ArrayView2<f32>, s_n: &ArrayView2<f32>) -> Result<f64> {
        Ok(self.losses(s_i, s_n)?.similarity)
    }

    pub fn dissimilarity_loss(&self, s_i: &ArrayView2<f32>, s_n: &ArrayView2<f32>) -> Result<f64> {
        Ok(self.losses(s_i, s_n)?.dissimilarity)
    }

    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let header = ModelHeader {
            dim_i: self.dim_i,
            dim_n: self.dim_n,
            encoder: self.config.clone(),
        };
        save_params(manifest_path, "invariance_model", &header, self.frozen, &self.nets)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let (manifest, data) = load_params(manifest_path)?;
        if manifest.kind != "invariance_model" {
            return Err(Error::MalformedMetadata(format!(
                "{} holds a {:?}, not an invariance model",
                manifest_path.display(),
                manifest.kind
            )));
        }
        let header: ModelHeader =
            serde_json::from_value(manifest.config.clone()).map_err(|e| Error::json(manifest_path, e))?;
        let mut model = Self::new(header.dim_i, header.dim_n, header.encoder)?;
        fill_params(&mut model.nets, &manifest, &data)?;
        model.frozen = manifest.frozen;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderEpoch {
    pub epoch: usize,
    pub reconstruction: f64,
    pub similarity: f64,
    pub dissimilarity: f64,
    pub total: f64,
}

impl EncoderEpoch {
    fn new(epoch: usize, t: LossTerms) -> Self {
        Self {
            epoch,
            reconstruction: t.reconstruction,
            similarity: t.similarity,
            dissimilarity: t.dissimilarity,
            total: t.total(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub model: InvarianceModel,
    /// Entry 0 is the full-data loss before any update; entry `e` is the mean
    /// mini-batch loss of epoch `e`.
    pub curve: Vec<EncoderEpoch>,
}

/// Trains the encoder-decoders on standardized rows and returns the frozen
/// model with its loss curve.
pub fn train_invariance_model(
    features: &ArrayView2<f32>,
    schema: &FeatureSchema,
    config: &EncoderConfig,
) -> Result<TrainedEncoder> {
    config.validate()?;
    let (s_i, s_n) = schema.split_matrix(features)?;
    let n = features.nrows();
    if n < config.batch_size {
        return Err(Error::InvalidConfig(format!(
            "{n} rows is smaller than one batch of {}",
            config.batch_size
        )));
    }
    let mut model = InvarianceModel::new(s_i.ncols(), s_n.ncols(), config.clone())?;
    let mut curve = Vec::with_capacity(config.epochs + 1);
    let initial = model.nets.losses(&s_i.view(), &s_n.view(), config.sim_dim, config.margin);
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            detail: format!("{initial:?}"),
        });
    }
    curve.push(EncoderEpoch::new(0, initial));

    let mut optimizer = AdamW::new(&model.nets, config.adam());
    let mut rng = rng_for(config.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let bi = s_i.select(Axis(0), rows);
            let bn = s_n.select(Axis(0), rows);
            let (terms, grads) =
                model
                    .nets
                    .loss_and_grad(&bi.view(), &bn.view(), config.sim_dim, config.margin, LossWeights::ALL);
            if !terms.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: format!("{terms:?}"),
                });
            }
            optimizer.step(model.nets_mut()?, &grads)?;
            let w = rows.len() as f64;
            sum.reconstruction += terms.reconstruction * w;
            sum.similarity += terms.similarity * w;
            sum.dissimilarity += terms.dissimilarity * w;
        }
        let n = n as f64;
        curve.push(EncoderEpoch::new(
            epoch,
            LossTerms {
                reconstruction: sum.reconstruction / n,
                similarity: sum.similarity / n,
                dissimilarity: sum.dissimilarity / n,
            },
        ));
    }
    model.freeze();
    Ok(TrainedEncoder { model, curve })
}

/// Embedding tables aligned row-for-row with the dataset they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    /// N-retrieval embedding `φ_n(s_n)`, `n × hidden_dim`.
    pub h_n: Array2<f32>,
    /// Sim halves of `φ_i(s_i)`, `n × sim_dim`.
    pub h_i_sim: Array2<f32>,
    /// Sim halves of `φ_n(s_n)`, `n × sim_dim`.
    pub h_n_sim: Array2<f32>,
}

impl EmbeddingTables {
    pub fn len(&self) -> usize {
        self.h_n.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_embeddings(
    features: &ArrayView2<f32>,
    schema: &FeatureSchema,
    model: &InvarianceModel,
) -> Result<EmbeddingTables> {
    if !model.is_frozen() {
        return Err(Error::NotFrozen);
    }
    let (s_i, s_n) = schema.split_matrix(features)?;
    let sim = model.sim_dim();
    let h_i = model.encode_i_batch(&s_i.view())?;
    let h_n = model.encode_n_batch(&s_n.view())?;
    Ok(EmbeddingTables {
        h_i_sim: h_i.slice(s![.., ..sim]).to_owned(),
        h_n_sim: h_n.slice(s![.., ..sim]).to_owned(),
        h_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use ndarray::{array, Array1};

    fn toy_config(hidden: usize) -> EncoderConfig {
        EncoderConfig {
            phi_i_layers: vec![hidden],
            phi_n_layers: vec![hidden],
            hidden_dim: hidden,
            sim_dim: hidden / 2,
            dis_dim: hidden - hidden / 2,
            epochs: 3,
            batch_size: 4,
            ..EncoderConfig::default()
        }
    }

    fn single(layer: Linear<f32>) -> Mlp<f32> {
        Mlp {
            layers: vec![layer],
            negative_slope: 0.01,
        }
    }

    /// Identity encoders and decoders on 2-dim blocks.
    fn identity_model() -> InvarianceModel {
        let nets = InvarianceNets {
            phi_i: single(Linear::identity(2)),
            psi_i: single(Linear::identity(2)),
            phi_n: single(Linear::identity(2)),
            psi_n: single(Linear::identity(2)),
        };
        InvarianceModel::from_nets(nets, toy_config(2)).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        use crate::nn::gradcheck::{flatten, max_relative_error, numerical_gradient};
        use rand::Rng;
        let cfg = EncoderConfig {
            phi_i_layers: vec![5, 4],
            phi_n_layers: vec![6, 4],
            ..toy_config(4)
        };
        let nets = InvarianceNets::<f64>::init(3, 2, &cfg, 5);
        let mut rng = rng_for(9, stream::SHUFFLE);
        let s_i = Array2::from_shape_fn((4, 3), |_| rng.random_range(-2.0..2.0));
        let s_n = Array2::from_shape_fn((4, 2), |_| rng.random_range(-2.0..2.0));
        // One margin where every hinge is active, one set at the median
        // squared distance so some rows drop out.
        let (_, dis) = sim_dis_sq(&nets.phi_i.forward(&s_i.view()), &nets.phi_n.forward(&s_n.view()), 2);
        let mut sorted = dis.clone();
        sorted.sort_by(f64::total_cmp);
        let median = 0.5 * (sorted[1] + sorted[2]);
        let weights = LossWeights {
            reconstruction: 0.7,
            similarity: 1.3,
            dissimilarity: 2.0,
        };
        for margin in [5.0, median] {
            let (_, grads) = nets.loss_and_grad(&s_i.view(), &s_n.view(), 2, margin, weights);
            let numeric = numerical_gradient(&nets, 1e-6, |m| {
                m.losses(&s_i.view(), &s_n.view(), 2, margin).weighted(weights)
            });
            let err = max_relative_error(&flatten(&grads), &numeric, 1e-6);
            assert!(err < 1e-5, "margin {margin}: relative error {err}");
        }
    }

    #[test]
    fn zero_parameters_encode_to_zero() {
        let mut model = InvarianceModel::new(3, 2, toy_config(4)).unwrap();
        for t in model.nets_mut().unwrap().params_mut() {
            t.fill(0.0);
        }
        assert_eq!(model.encode_i(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(model.encode_n(&[5.0, 5.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_encoder_returns_input() {
        let model = identity_model();
        assert_eq!(model.encode_i(&[0.25, -1.5]).unwrap(), vec![0.25, -1.5]);
        assert!(matches!(model.encode_i(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reconstruction_hand_values() {
        let model = identity_model();
        let s_i = array![[1.0f32, 2.0], [3.0, -1.0]];
        let s_n = array![[0.5f32, 0.5], [2.0, 0.0]];
        assert_eq!(model.reconstruction_loss(&s_i.view(), &s_n.view()).unwrap(), 0.0);

        // Shift ψ_i's bias so s_i' = s_i + e_0; batch of one → loss 1.
        let mut shifted = model.clone();
        shifted.nets_mut().unwrap().psi_i.layers[0].bias = Some(Array1::from(vec![1.0, 0.0]));
        let one_i = array![[1.0f32, 2.0]];
        let one_n = array![[0.5f32, 0.5]];
        let loss = shifted.reconstruction_loss(&one_i.view(), &one_n.view()).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);

        let empty = Array2::<f32>::zeros((0, 2));
        assert!(matches!(
            model.reconstruction_loss(&empty.view(), &empty.view()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn losses_ignore_batch_order() {
        let model = InvarianceModel::new(3, 2, toy_config(4)).unwrap();
        let s_i = array![[1.0f32, 2.0, 0.0], [3.0, -1.0, 1.0], [0.1, 0.2, 0.3]];
        let s_n = array![[0.5f32, 0.5], [2.0, 0.0], [-1.0, 1.0]];
        let rev: Vec<usize> = vec![2, 0, 1];
        let a = model.losses(&s_i.view(), &s_n.view()).unwrap();
        let b = model
            .losses(&s_i.select(Axis(0), &rev).view(), &s_n.select(Axis(0), &rev).view())
            .unwrap();
        assert!((a.total() - b.total()).abs() < 1e-9);
    }

    #[test]
    fn dissimilarity_hinge_hand_values() {
        // 2-dim hidden, sim = entry 0, dis = entry 1. Identity encoders, so
        // h_dis difference is s_i[1] − s_n[1].
        let model = identity_model();
        let cases = [(0.0f32, 5.0), (3.0, 0.0), (3.0f32.sqrt(), 2.0)];
        for (gap, expected) in cases {
            let s_i = array![[0.0f32, gap]];
            let s_n = array![[0.0f32, 0.0]];
            let d = model.dissimilarity_loss(&s_i.view(), &s_n.view()).unwrap();
            assert!((d - expected).abs() < 1e-6, "gap {gap}: {d}");
        }
        let s_i = array![[1.0f32, 0.0]];
        let s_n = array![[1.0f32, 7.0]];
        assert_eq!(model.similarity_loss(&s_i.view(), &s_n.view()).unwrap(), 0.0);
    }

    #[test]
    fn decoders_mirror_encoders() {
        let model = InvarianceModel::new(7, 5, EncoderConfig::default()).unwrap();
        let nets = model.nets();
        let rev = |v: Vec<usize>| v.into_iter().rev().collect::<Vec<_>>();
        assert_eq!(nets.psi_i.dims(), rev(nets.phi_i.dims()));
        assert_eq!(nets.psi_n.dims(), rev(nets.phi_n.dims()));
        assert_eq!(nets.phi_n.dims(), vec![5, 1024, 1024, 512, 512, 512]);
        assert_eq!(nets.phi_i.dims(), vec![7, 512, 512, 512]);
    }

    #[test]
    fn config_invariants() {
        let mut c = EncoderConfig::default();
        c.sim_dim = 200;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.margin = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frozen_model_rejects_mutation_and_unfrozen_rejects_tables() {
        let schema = FeatureSchema::new(4, [0, 1]).unwrap();
        let mut model = InvarianceModel::new(2, 2, toy_config(4)).unwrap();
        let x = Array2::<f32>::zeros((3, 4));
        assert!(matches!(build_embeddings(&x.view(), &schema, &model), Err(Error::NotFrozen)));
        model.freeze();
        assert!(matches!(model.nets_mut(), Err(Error::Frozen)));
        let empty = Array2::<f32>::zeros((0, 4));
        let tables = build_embeddings(&empty.view(), &schema, &model).unwrap();
        assert!(tables.is_empty());
        assert_eq!(tables.h_n.ncols(), 4);
    }

    #[test]
    fn too_small_dataset_is_rejected() {
        let schema = FeatureSchema::new(4, [0, 1]).unwrap();
        let x = Array2::<f32>::zeros((3, 4));
        assert!(train_invariance_model(&x.view(), &schema, &toy_config(4)).is_err());
    }

    #[test]
    fn persistence_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = InvarianceModel::new(3, 2, toy_config(4)).unwrap();
        model.freeze();
        let path = dir.path().join("encoder.json");
        model.save(&path).unwrap();
        let back = InvarianceModel::load(&path).unwrap();
        assert!(back.is_frozen());
        let bits = |m: &InvarianceModel| -> Vec<u32> {
            m.nets().params().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&model), bits(&back));
    }
}
