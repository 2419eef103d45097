//! Semi-supervised training of the classifier with label guessing,
//! sharpening and MixUp.
//!
//! Each step takes a labeled batch `X` and an unlabeled batch `U`, pairs every
//! row with one augmented variant drawn from the precomputed pool, guesses
//! sharpened labels for `U ∪ A(U)`, mixes `X′` and `U′` with shuffled copies of
//! themselves, and minimizes `L_X′ + λ(step) · L_U′`.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedPool;
use crate::classifier::{argmax, softmax, FcResNet, FcResNetConfig};
use crate::error::{Error, Result};
use crate::nn::{real, AdamConfig, AdamW, Real};
use crate::rng::{rng_for, stream};

const SIMPLEX_TOL: f64 = 1e-6;

/// A probability vector over families.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("{probs:?} has a negative or non-finite entry")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(format!("{probs:?} sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(class: usize, classes: usize) -> Self {
        let mut p = vec![0.0; classes];
        p[class] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(self.0.iter().copied())
    }
}

/// `(p_u + p_aug) / 2`.
pub fn guess_labels(p_u: &LabelDistribution, p_aug: &LabelDistribution) -> Result<LabelDistribution> {
    if p_u.0.len() != p_aug.0.len() {
        return Err(Error::dim("guessed distributions", p_u.0.len(), p_aug.0.len()));
    }
    Ok(LabelDistribution(p_u.0.iter().zip(&p_aug.0).map(|(a, b)| 0.5 * (a + b)).collect()))
}

/// `y_i² / Σ_j y_j²`.
pub fn sharpen(y: &LabelDistribution) -> LabelDistribution {
    let mut p = y.0.clone();
    sharpen_in_place(&mut p);
    LabelDistribution(p)
}

fn sharpen_in_place<T: Real>(row: &mut [T]) {
    let mut norm = T::zero();
    for v in row.iter_mut() {
        *v = *v * *v;
        norm += *v;
    }
    for v in row.iter_mut() {
        *v = *v / norm;
    }
}

/// `(lam x1 + (1−lam) x2, lam y1 + (1−lam) y2)`.
pub fn mixup(
    x1: &[f32],
    y1: &LabelDistribution,
    x2: &[f32],
    y2: &LabelDistribution,
    lam: f64,
) -> Result<(Vec<f32>, LabelDistribution)> {
    if x1.len() != x2.len() {
        return Err(Error::dim("mixup features", x1.len(), x2.len()));
    }
    if y1.0.len() != y2.0.len() {
        return Err(Error::dim("mixup labels", y1.0.len(), y2.0.len()));
    }
    let x = x1
        .iter()
        .zip(x2)
        .map(|(&a, &b)| (lam * a as f64 + (1.0 - lam) * b as f64) as f32)
        .collect();
    let y = y1.0.iter().zip(&y2.0).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
    Ok((x, LabelDistribution(y)))
}

/// `−Σ_c y_c ln p_c`.
pub fn cross_entropy(y: &LabelDistribution, p: &LabelDistribution) -> f64 {
    y.0.iter()
        .zip(&p.0)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| -t * q.ln())
        .sum()
}

/// `‖y − p‖²`.
pub fn squared_error(y: &LabelDistribution, p: &LabelDistribution) -> f64 {
    y.0.iter().zip(&p.0).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Mean soft-target cross-entropy of `softmax(logits)` and its gradient
/// with respect to the logits.
pub fn supervised_loss<T: Real>(logits: &ArrayView2<T>, targets: &ArrayView2<T>) -> (f64, Array2<T>) {
    let n = logits.nrows().max(1);
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((z, y), mut g) in logits.outer_iter().zip(targets.outer_iter()).zip(grad.outer_iter_mut()) {
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).fold(T::zero(), |a, b| a + b).ln();
        let ysum = y.iter().copied().fold(T::zero(), |a, b| a + b);
        for c in 0..z.len() {
            let logp = z[c] - lse;
            if y[c] > T::zero() {
                loss -= (y[c] * logp).to_f64().unwrap_or(f64::NAN);
            }
            g[c] = (logp.exp() * ysum - y[c]) / real::<T>(n as f64);
        }
    }
    (loss / n as f64, grad)
}

/// Mean squared L2 distance between targets and `softmax(logits)`, with the
/// gradient taken through the softmax.
pub fn unsupervised_loss<T: Real>(logits: &ArrayView2<T>, targets: &ArrayView2<T>) -> (f64, Array2<T>) {
    let n = logits.nrows().max(1);
    let p = softmax(&logits.to_owned());
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    let scale = real::<T>(2.0 / n as f64);
    for ((p, y), mut g) in p.outer_iter().zip(targets.outer_iter()).zip(grad.outer_iter_mut()) {
        let d: Vec<T> = p.iter().zip(y.iter()).map(|(&a, &b)| a - b).collect();
        loss += d.iter().map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2)).sum::<f64>();
        let dot = d.iter().zip(p.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for c in 0..d.len() {
            g[c] = scale * p[c] * (d[c] - dot);
        }
    }
    (loss / n as f64, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Full semi-supervised objective over labeled and unlabeled rows.
    #[default]
    MixMatch,
    /// Cross-entropy on labeled rows only; no augmentation, no MixUp.
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslConfig {
    pub epochs: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub lambda_max: f64,
    pub ramp_fraction: f64,
    pub mixup_beta: f64,
    pub pool_variants: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub upsample: bool,
    pub mode: TrainingMode,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            labeled_batch: 64,
            unlabeled_batch: 64,
            lambda_max: 10.0,
            ramp_fraction: 0.25,
            mixup_beta: 0.75,
            pool_variants: 4,
            learning_rate: 5e-5,
            weight_decay: 1e-5,
            upsample: true,
            mode: TrainingMode::MixMatch,
            seed: 17,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda_max {} must be ≥ 0", self.lambda_max)));
        }
        if !(self.mixup_beta > 0.0) {
            return Err(Error::InvalidConfig(format!("mixup_beta {} must be > 0", self.mixup_beta)));
        }
        if !(0.0..=1.0).contains(&self.ramp_fraction) {
            return Err(Error::InvalidConfig(format!("ramp_fraction {} outside [0, 1]", self.ramp_fraction)));
        }
        if self.labeled_batch == 0 || self.unlabeled_batch == 0 {
            return Err(Error::InvalidConfig("batch sizes must be positive".into()));
        }
        Ok(())
    }

    /// Unsupervised weight at `step` of `total_steps`.
    pub fn lambda(&self, step: usize, total_steps: usize) -> f64 {
        let ramp = self.ramp_fraction * total_steps as f64;
        if ramp <= 0.0 {
            return self.lambda_max;
        }
        self.lambda_max * (step as f64 / ramp).min(1.0)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// `L_X′ + λ(step) · L_U′`.
pub fn total_loss(loss_x: f64, loss_u: f64, step: usize, total_steps: usize, config: &SslConfig) -> f64 {
    loss_x + config.lambda(step, total_steps) * loss_u
}

/// One entry of the (possibly upsampled) labeled set: a stored row, or a
/// pool variant of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledItem {
    pub row: usize,
    pub variant: Option<usize>,
    pub label: usize,
}

/// Balances families by adding pool variants of each family's labeled rows,
/// drawn with replacement, until every family matches the largest one.
pub fn upsample_labeled(
    rows: &[usize],
    labels: &[usize],
    num_classes: usize,
    variants: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LabeledItem>> {
    if rows.len() != labels.len() {
        return Err(Error::dim("labeled rows", rows.len(), labels.len()));
    }
    let mut by_family: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (&r, &y) in rows.iter().zip(labels) {
        if y >= num_classes {
            return Err(Error::dim("label bound", num_classes, y));
        }
        by_family[y].push(r);
    }
    let mut items: Vec<LabeledItem> = rows
        .iter()
        .zip(labels)
        .map(|(&row, &label)| LabeledItem {
            row,
            variant: None,
            label,
        })
        .collect();
    let target = by_family.iter().map(Vec::len).max().unwrap_or(0);
    for (label, members) in by_family.iter().enumerate() {
        let deficit = target - members.len();
        if deficit == 0 || members.is_empty() {
            continue;
        }
        if variants == 0 {
            return Err(Error::InvalidConfig("upsampling needs a non-empty augmentation pool".into()));
        }
        for _ in 0..deficit {
            let row = *members.choose(rng).expect("non-empty");
            items.push(LabeledItem {
                row,
                variant: Some(rng.random_range(0..variants)),
                label,
            });
        }
    }
    Ok(items)
}

/// Mixed training sets for one step.
#[derive(Debug, Clone)]
pub struct MixedSets {
    pub x: Array2<f32>,
    pub y: Array2<f32>,
    pub u: Array2<f32>,
    pub q: Array2<f32>,
}

fn one_hot_rows(labels: &[usize], classes: usize) -> Array2<f32> {
    let mut y = Array2::zeros((labels.len(), classes));
    for (r, &c) in labels.iter().enumerate() {
        y[[r, c]] = 1.0;
    }
    y
}

fn mix_with_permutation(x: &Array2<f32>, y: &Array2<f32>, lam: f64, rng: &mut ChaCha8Rng) -> (Array2<f32>, Array2<f32>) {
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    perm.shuffle(rng);
    let lam32 = lam as f32;
    let mx = x * lam32 + &(x.select(Axis(0), &perm) * (1.0 - lam32));
    let my = y * lam32 + &(y.select(Axis(0), &perm) * (1.0 - lam32));
    (mx, my)
}

/// Draws `lam = max(λ, 1−λ)` with `λ ~ Beta(β, β)`.
pub fn draw_lambda(beta: &Beta<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let l = beta.sample(rng);
    l.max(1.0 - l)
}

/// Builds `X′ = X ∪ A(X)` and `U′ = U ∪ A(U)` with shared sharpened guesses,
/// then mixes each with a shuffled copy of itself.
#[allow(clippy::too_many_arguments)]
pub fn build_mixed_sets(
    model: &FcResNet<f32>,
    x: &ArrayView2<f32>,
    x_aug: &ArrayView2<f32>,
    labels: &[usize],
    u: &ArrayView2<f32>,
    u_aug: &ArrayView2<f32>,
    lam_x: f64,
    lam_u: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MixedSets> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("labeled batch"));
    }
    let classes = model.num_classes();
    let y = one_hot_rows(labels, classes);
    let xs = ndarray::concatenate(Axis(0), &[*x, *x_aug]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let ys = ndarray::concatenate(Axis(0), &[y.view(), y.view()]).expect("same shape");
    let (mx, my) = mix_with_permutation(&xs, &ys, lam_x, rng);
    let (mu, mq) = if u.nrows() == 0 {
        (Array2::zeros((0, x.ncols())), Array2::zeros((0, classes)))
    } else {
        let mut q = (model.predict_proba(u)? + model.predict_proba(u_aug)?) * 0.5;
        for mut row in q.outer_iter_mut() {
            sharpen_in_place(row.as_slice_mut().expect("standard layout"));
        }
        let us = ndarray::concatenate(Axis(0), &[*u, *u_aug]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let qs = ndarray::concatenate(Axis(0), &[q.view(), q.view()]).expect("same shape");
        mix_with_permutation(&us, &qs, lam_u, rng)
    };
    Ok(MixedSets {
        x: mx,
        y: my,
        u: mu,
        q: mq,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_x: f64,
    pub loss_u: f64,
    pub lambda: f64,
    pub train_acc: f64,
}

pub fn write_epoch_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = Vec::new();
    for e in log {
        serde_json::to_writer(&mut out, e).map_err(|err| Error::json(path, err))?;
        out.write_all(b"\n").map_err(|err| Error::io(path, err))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: FcResNet<f32>,
    pub log: Vec<EpochLog>,
}

/// Training rows, their (masked) labels and the augmentation pool built
/// over the same rows.
pub struct SslInputs<'a> {
    pub features: ArrayView2<'a, f32>,
    pub labels: &'a [Option<usize>],
    pub pool: &'a AugmentedPool,
    pub num_classes: usize,
}

fn gather(features: &ArrayView2<f32>, pool: &AugmentedPool, items: &[(usize, Option<usize>)]) -> Array2<f32> {
    let mut out = Array2::zeros((items.len(), features.ncols()));
    for (mut dst, &(row, variant)) in out.outer_iter_mut().zip(items) {
        match variant {
            Some(v) => dst.assign(&pool.variant(row, v)),
            None => dst.assign(&features.row(row)),
        }
    }
    out
}

/// Cycles through a reshuffled order of `0..len`.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
            pos: len,
        }
    }

    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.order.len();
        let size = size.min(n);
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos >= n {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

pub fn train(inputs: &SslInputs<'_>, classifier: &FcResNetConfig, config: &SslConfig) -> Result<TrainedClassifier> {
    config.validate()?;
    let n = inputs.features.nrows();
    if inputs.labels.len() != n {
        return Err(Error::dim("training labels", n, inputs.labels.len()));
    }
    let classes = inputs.num_classes;
    let mut labeled_rows = Vec::new();
    let mut labeled_y = Vec::new();
    let mut unlabeled = Vec::new();
    for (r, l) in inputs.labels.iter().enumerate() {
        match l {
            Some(y) if *y < classes => {
                labeled_rows.push(r);
                labeled_y.push(*y);
            }
            Some(y) => return Err(Error::dim("label bound", classes, *y)),
            None => unlabeled.push(r),
        }
    }
    if labeled_rows.is_empty() {
        return Err(Error::EmptyInput("labeled set"));
    }
    let mut seen = vec![false; classes];
    for &y in &labeled_y {
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingFamily(format!("family {missing} has no labeled row")));
    }
    let mixmatch = config.mode == TrainingMode::MixMatch;
    let variants = inputs.pool.variants;
    if mixmatch && (variants == 0 || inputs.pool.num_sources() != n) {
        return Err(Error::InvalidConfig(format!(
            "pool covers {} rows with {} variants; training needs {n} rows with at least one",
            inputs.pool.num_sources(),
            variants
        )));
    }

    let mut rng = rng_for(config.seed, stream::SSL);
    let items = if mixmatch && config.upsample {
        let mut up = rng_for(config.seed, stream::UPSAMPLE);
        upsample_labeled(&labeled_rows, &labeled_y, classes, variants, &mut up)?
    } else {
        labeled_rows
            .iter()
            .zip(&labeled_y)
            .map(|(&row, &label)| LabeledItem {
                row,
                variant: None,
                label,
            })
            .collect()
    };

    let net_config = FcResNetConfig {
        input_dim: inputs.features.ncols(),
        num_classes: classes,
        ..classifier.clone()
    };
    let mut model = FcResNet::<f32>::new(net_config)?;
    let mut optimizer = AdamW::new(&model, config.adam());
    let beta = Beta::new(config.mixup_beta, config.mixup_beta)
        .map_err(|e| Error::InvalidConfig(format!("mixup_beta: {e}")))?;

    let steps_per_epoch = unlabeled
        .len()
        .div_ceil(config.unlabeled_batch)
        .max(items.len().div_ceil(config.labeled_batch))
        .max(1);
    let total_steps = steps_per_epoch * config.epochs;
    let mut x_sampler = Sampler::new(items.len());
    let mut u_sampler = Sampler::new(unlabeled.len());
    let labeled_x = inputs.features.select(Axis(0), &labeled_rows);
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        let (mut sum_x, mut sum_u, mut lam_last) = (0.0, 0.0, 0.0);
        for batch in 0..steps_per_epoch {
            let lam_step = config.lambda(step, total_steps);
            let xb: Vec<LabeledItem> = x_sampler
                .next_batch(config.labeled_batch, &mut rng)
                .into_iter()
                .map(|i| items[i])
                .collect();
            let ys: Vec<usize> = xb.iter().map(|i| i.label).collect();
            let x_src: Vec<(usize, Option<usize>)> = xb.iter().map(|i| (i.row, i.variant)).collect();
            let x = gather(&inputs.features, inputs.pool, &x_src);

            let (loss_x, loss_u, grads) = if mixmatch {
                // A(x) of a pool variant is another variant of its source row.
                let x_aug_src: Vec<(usize, Option<usize>)> =
                    xb.iter().map(|i| (i.row, Some(rng.random_range(0..variants)))).collect();
                let x_aug = gather(&inputs.features, inputs.pool, &x_aug_src);
                let ub: Vec<usize> = u_sampler
                    .next_batch(config.unlabeled_batch, &mut rng)
                    .into_iter()
                    .map(|i| unlabeled[i])
                    .collect();
                let u_src: Vec<(usize, Option<usize>)> = ub.iter().map(|&r| (r, None)).collect();
                let u_aug_src: Vec<(usize, Option<usize>)> =
                    ub.iter().map(|&r| (r, Some(rng.random_range(0..variants)))).collect();
                let u = gather(&inputs.features, inputs.pool, &u_src);
                let u_aug = gather(&inputs.features, inputs.pool, &u_aug_src);
                let lam_x = draw_lambda(&beta, &mut rng);
                let lam_u = draw_lambda(&beta, &mut rng);
                let sets = build_mixed_sets(
                    &model,
                    &x.view(),
                    &x_aug.view(),
                    &ys,
                    &u.view(),
                    &u_aug.view(),
                    lam_x,
                    lam_u,
                    &mut rng,
                )?;
                let nx = sets.x.nrows();
                let all = ndarray::concatenate(Axis(0), &[sets.x.view(), sets.u.view()]).expect("same width");
                let trace = model.forward_trace(&all.view())?;
                let (lx, gx) = supervised_loss(&trace.logits.slice(s![..nx, ..]), &sets.y.view());
                let (lu, mut gu) = if sets.u.nrows() > 0 {
                    unsupervised_loss(&trace.logits.slice(s![nx.., ..]), &sets.q.view())
                } else {
                    (0.0, Array2::zeros((0, classes)))
                };
                gu *= lam_step as f32;
                let dlogits = ndarray::concatenate(Axis(0), &[gx.view(), gu.view()]).expect("same width");
                let mut grads = model.zeros_like();
                model.backward(&trace, &dlogits.view(), &mut grads);
                (lx, lu, grads)
            } else {
                let trace = model.forward_trace(&x.view())?;
                let (lx, gx) = supervised_loss(&trace.logits.view(), &one_hot_rows(&ys, classes).view());
                let mut grads = model.zeros_like();
                model.backward(&trace, &gx.view(), &mut grads);
                (lx, 0.0, grads)
            };
            let total = loss_x + lam_step * loss_u;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: format!("L_X′ = {loss_x}, L_U′ = {loss_u}"),
                });
            }
            optimizer.step(&mut model, &grads)?;
            sum_x += loss_x;
            sum_u += loss_u;
            lam_last = lam_step;
            step += 1;
        }
        let preds = predict(&model, &labeled_x.view())?;
        let correct = preds.iter().zip(&labeled_y).filter(|(p, y)| p == y).count();
        log.push(EpochLog {
            epoch,
            loss_x: sum_x / steps_per_epoch as f64,
            loss_u: sum_u / steps_per_epoch as f64,
            lambda: lam_last,
            train_acc: correct as f64 / labeled_y.len() as f64,
        });
    }
    Ok(TrainedClassifier { model, log })
}

/// Argmax family per row; ties go to the smaller id.
pub fn predict(model: &FcResNet<f32>, x: &ArrayView2<f32>) -> Result<Vec<usize>> {
    let logits = model.forward(x)?;
    Ok(logits.outer_iter().map(|r| argmax(r.iter().copied())).collect())
}
