//! Fully connected residual network over feature vectors.
//!
//! Layout: a stem `input_dim → stem_dim` with no activation, then
//! `group_dims.len()` groups of `blocks_per_group` residual blocks, then a
//! linear head to `num_classes` logits. A block computes
//! `act(L2(act(L1(x)))) + proj(x)`, where `proj` is the identity unless the
//! block changes width, in which case it is a bias-free linear map. There are
//! no normalization layers.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{fill_params, join_name, leaky_relu, leaky_relu_backward, load_params, real, save_params};
use crate::nn::{Linear, Params, Real, TensorRef};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcResNetConfig {
    pub input_dim: usize,
    pub stem_dim: usize,
    pub group_dims: Vec<usize>,
    pub blocks_per_group: usize,
    pub negative_slope: f64,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for FcResNetConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            stem_dim: 1024,
            group_dims: vec![1024, 512, 256, 128],
            blocks_per_group: 3,
            negative_slope: 0.01,
            num_classes: 0,
            seed: 17,
        }
    }
}

impl FcResNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.stem_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(
                "input_dim, stem_dim and num_classes must be positive".into(),
            ));
        }
        if self.group_dims.is_empty() || self.group_dims.contains(&0) {
            return Err(Error::InvalidConfig("group_dims must be non-empty and positive".into()));
        }
        if self.group_dims.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(format!(
                "group_dims {:?} must be non-increasing",
                self.group_dims
            )));
        }
        if self.blocks_per_group == 0 {
            return Err(Error::InvalidConfig("blocks_per_group must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub downsample: Option<Linear<T>>,
}

struct BlockTrace<T> {
    input: Array2<T>,
    z1: Array2<T>,
    a1: Array2<T>,
    z2: Array2<T>,
}

impl<T: Real> ResidualBlock<T> {
    fn forward(&self, x: &ArrayView2<T>, slope: T) -> Array2<T> {
        let a1 = leaky_relu(&self.fc1.forward(x), slope);
        let mut out = leaky_relu(&self.fc2.forward(&a1.view()), slope);
        match &self.downsample {
            Some(p) => out += &p.forward(x),
            None => out += x,
        }
        out
    }

    fn forward_trace(&self, x: Array2<T>, slope: T) -> (BlockTrace<T>, Array2<T>) {
        let z1 = self.fc1.forward(&x.view());
        let a1 = leaky_relu(&z1, slope);
        let z2 = self.fc2.forward(&a1.view());
        let mut out = leaky_relu(&z2, slope);
        match &self.downsample {
            Some(p) => out += &p.forward(&x.view()),
            None => out += &x,
        }
        (BlockTrace { input: x, z1, a1, z2 }, out)
    }

    fn backward(&self, t: &BlockTrace<T>, dout: Array2<T>, slope: T, grad: &mut ResidualBlock<T>) -> Array2<T> {
        let mut dz2 = dout.clone();
        leaky_relu_backward(&mut dz2, &t.z2, slope);
        let mut dz1 = self.fc2.backward(&t.a1.view(), &dz2.view(), &mut grad.fc2);
        leaky_relu_backward(&mut dz1, &t.z1, slope);
        let mut dx = self.fc1.backward(&t.input.view(), &dz1.view(), &mut grad.fc1);
        match (&self.downsample, &mut grad.downsample) {
            (Some(p), Some(gp)) => dx += &p.backward(&t.input.view(), &dout.view(), gp),
            _ => dx += &dout,
        }
        dx
    }

    fn zeros_like(&self) -> Self {
        Self {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            downsample: self.downsample.as_ref().map(Linear::zeros_like),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcResNet<T> {
    pub stem: Linear<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: Linear<T>,
    config: FcResNetConfig,
}

/// Activations saved by [`FcResNet::forward_trace`].
pub struct ResNetTrace<T> {
    input: Array2<T>,
    blocks: Vec<BlockTrace<T>>,
    features: Array2<T>,
    pub logits: Array2<T>,
}

impl<T: Real> FcResNet<T> {
    pub fn new(config: FcResNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, stream::INIT);
        let stem = Linear::init(config.input_dim, config.stem_dim, true, &mut rng);
        let mut blocks = Vec::new();
        let mut width = config.stem_dim;
        for &g in &config.group_dims {
            for _ in 0..config.blocks_per_group {
                let fc1 = Linear::init(width, g, true, &mut rng);
                let fc2 = Linear::init(g, g, true, &mut rng);
                let downsample = (width != g).then(|| Linear::init(width, g, false, &mut rng));
                blocks.push(ResidualBlock { fc1, fc2, downsample });
                width = g;
            }
        }
        let head = Linear::init(width, config.num_classes, true, &mut rng);
        Ok(Self {
            stem,
            blocks,
            head,
            config,
        })
    }

    pub fn config(&self) -> &FcResNetConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            stem: self.stem.zeros_like(),
            blocks: self.blocks.iter().map(ResidualBlock::zeros_like).collect(),
            head: self.head.zeros_like(),
            config: self.config.clone(),
        }
    }

    fn check_width(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::dim("classifier input", self.config.input_dim, x.ncols()));
        }
        Ok(())
    }

    fn slope(&self) -> T {
        real(self.config.negative_slope)
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Result<Array2<T>> {
        self.check_width(x)?;
        let slope = self.slope();
        let mut h = self.stem.forward(x);
        for b in &self.blocks {
            h = b.forward(&h.view(), slope);
        }
        Ok(self.head.forward(&h.view()))
    }

    pub fn forward_trace(&self, x: &ArrayView2<T>) -> Result<ResNetTrace<T>> {
        self.check_width(x)?;
        let slope = self.slope();
        let mut h = self.stem.forward(x);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (t, out) = b.forward_trace(h, slope);
            traces.push(t);
            h = out;
        }
        let logits = self.head.forward(&h.view());
        Ok(ResNetTrace {
            input: x.to_owned(),
            blocks: traces,
            features: h,
            logits,
        })
    }

    /// Accumulates parameter gradients for `dL/dlogits` into `grad`.
    pub fn backward(&self, trace: &ResNetTrace<T>, dlogits: &ArrayView2<T>, grad: &mut FcResNet<T>) {
        let slope = self.slope();
        let mut d = self.head.backward(&trace.features.view(), dlogits, &mut grad.head);
        for ((b, t), g) in self.blocks.iter().zip(&trace.blocks).zip(&mut grad.blocks).rev() {
            d = b.backward(t, d, slope, g);
        }
        self.stem.backward(&trace.input.view(), &d.view(), &mut grad.stem);
    }

    pub fn predict_proba(&self, x: &ArrayView2<T>) -> Result<Array2<T>> {
        Ok(softmax(&self.forward(x)?))
    }

    pub fn cast<U: Real>(&self) -> FcResNet<U> {
        FcResNet {
            stem: self.stem.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResidualBlock {
                    fc1: b.fc1.cast(),
                    fc2: b.fc2.cast(),
                    downsample: b.downsample.as_ref().map(Linear::cast),
                })
                .collect(),
            head: self.head.cast(),
            config: self.config.clone(),
        }
    }
}

impl FcResNet<f32> {
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        save_params(manifest_path, "fc_resnet", &self.config, true, self)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let (manifest, data) = load_params(manifest_path)?;
        if manifest.kind != "fc_resnet" {
            return Err(Error::MalformedMetadata(format!(
                "{} holds a {:?}, not a classifier",
                manifest_path.display(),
                manifest.kind
            )));
        }
        let config: FcResNetConfig =
            serde_json::from_value(manifest.config.clone()).map_err(|e| Error::json(manifest_path, e))?;
        let mut model = Self::new(config)?;
        fill_params(&mut model, &manifest, &data)?;
        Ok(model)
    }
}

impl<T: Real> Params<T> for FcResNet<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a, T>>) {
        self.stem.collect(&join_name(prefix, "stem"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join_name(prefix, &format!("block{i}"));
            b.fc1.collect(&join_name(&p, "fc1"), out);
            b.fc2.collect(&join_name(&p, "fc2"), out);
            if let Some(d) = &b.downsample {
                d.collect(&join_name(&p, "downsample"), out);
            }
        }
        self.head.collect(&join_name(prefix, "head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [T]>) {
        self.stem.collect_mut(out);
        for b in &mut self.blocks {
            b.fc1.collect_mut(out);
            b.fc2.collect_mut(out);
            if let Some(d) = &mut b.downsample {
                d.collect_mut(out);
            }
        }
        self.head.collect_mut(out);
    }
}

/// Row-wise softmax, computed after subtracting each row's maximum.
pub fn softmax<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|z| (z - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Index of the largest entry; ties go to the smaller index.
pub fn argmax<T: PartialOrd + Copy>(row: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in row.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}
