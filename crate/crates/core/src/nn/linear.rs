use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{join_name, real, Params, Real, TensorRef};

/// Dense affine map `y = x W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Option<Array1<T>>,
}

impl<T: Real> Linear<T> {
    /// Fan-in scaled uniform initialization on `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            real(rng.random_range(-bound..=bound))
        });
        let bias = bias.then(|| Array1::from_shape_fn(outputs, |_| real(rng.random_range(-bound..=bound))));
        Self { weight, bias }
    }

    pub fn zeros(inputs: usize, outputs: usize, bias: bool) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn identity(width: usize) -> Self {
        Self {
            weight: Array2::eye(width),
            bias: Some(Array1::zeros(width)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let (i, o) = self.weight.dim();
        Self::zeros(i, o, self.bias.is_some())
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &ArrayView2<T>, dy: &ArrayView2<T>, grad: &mut Linear<T>) -> Array2<T> {
        grad.weight += &x.t().dot(dy);
        if let Some(gb) = &mut grad.bias {
            *gb += &dy.sum_axis(Axis(0));
        }
        dy.dot(&self.weight.t())
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.mapv(|v| real(v.to_f64().unwrap_or(0.0))),
            bias: self.bias.as_ref().map(|b| b.mapv(|v| real(v.to_f64().unwrap_or(0.0)))),
        }
    }
}

impl<T: Real> Params<T> for Linear<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a, T>>) {
        out.push(TensorRef {
            name: join_name(prefix, "weight"),
            shape: self.weight.shape().to_vec(),
            data: self.weight.as_slice().expect("standard layout"),
        });
        if let Some(b) = &self.bias {
            out.push(TensorRef {
                name: join_name(prefix, "bias"),
                shape: b.shape().to_vec(),
                data: b.as_slice().expect("standard layout"),
            });
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [T]>) {
        out.push(self.weight.as_slice_mut().expect("standard layout"));
        if let Some(b) = &mut self.bias {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
    }
}

pub fn leaky_relu<T: Real>(z: &Array2<T>, slope: T) -> Array2<T> {
    z.mapv(|v| if v > T::zero() { v } else { v * slope })
}

/// Multiplies `grad` in place by the leaky-ReLU derivative at `z`.
pub fn leaky_relu_backward<T: Real>(grad: &mut Array2<T>, z: &Array2<T>, slope: T) {
    Zip::from(grad).and(z).for_each(|g, &v| {
        if v <= T::zero() {
            *g = *g * slope;
        }
    });
}

/// Stack of linear layers with leaky-ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub negative_slope: f64,
}

/// Intermediate values of an [`Mlp`] forward pass needed by `backward`.
#[derive(Debug)]
pub struct MlpTrace<T> {
    inputs: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
    pub output: Array2<T>,
}

impl<T: Real> Mlp<T> {
    /// `dims = [in, w1, ..., wk]` yields `k` layers.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], negative_slope: f64, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], true, rng))
            .collect();
        Self {
            layers,
            negative_slope,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
            negative_slope: self.negative_slope,
        }
    }

    /// Layer widths including the input width.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.inputs());
        }
        dims.extend(self.layers.iter().map(Linear::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::outputs)
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        let slope = real::<T>(self.negative_slope);
        let last = self.layers.len().saturating_sub(1);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h.view());
            h = if i < last { leaky_relu(&z, slope) } else { z };
        }
        h
    }

    pub fn forward_trace(&self, x: &ArrayView2<T>) -> MlpTrace<T> {
        let slope = real::<T>(self.negative_slope);
        let last = self.layers.len().saturating_sub(1);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h.view());
            inputs.push(h);
            h = if i < last {
                let a = leaky_relu(&z, slope);
                pre.push(z);
                a
            } else {
                z
            };
        }
        MlpTrace {
            inputs,
            pre,
            output: h,
        }
    }

    /// Accumulates gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, trace: &MlpTrace<T>, dout: Array2<T>, grad: &mut Mlp<T>) -> Array2<T> {
        let slope = real::<T>(self.negative_slope);
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                leaky_relu_backward(&mut d, &trace.pre[i], slope);
            }
            d = self.layers[i].backward(&trace.inputs[i].view(), &d.view(), &mut grad.layers[i]);
        }
        d
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(Linear::cast).collect(),
            negative_slope: self.negative_slope,
        }
    }
}

impl<T: Real> Params<T> for Mlp<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a, T>>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect(&join_name(prefix, &format!("layer{i}")), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [T]>) {
        for layer in &mut self.layers {
            layer.collect_mut(out);
        }
    }
}
