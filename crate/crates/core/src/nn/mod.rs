//! Minimal dense building blocks shared by the invariance encoder and the
//! FC-ResNet classifier: linear layers, leaky-ReLU MLP stacks, an
//! adaptive-moment optimizer, and flat weight persistence.
//!
//! Everything is generic over [`Real`] so that production training runs in
//! `f32` while gradient checks run the same code in `f64`.

pub mod gradcheck;
mod linear;
mod optim;
mod persist;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

pub use linear::{leaky_relu, leaky_relu_backward, Linear, Mlp, MlpTrace};
pub use optim::{AdamConfig, AdamW};
pub(crate) use persist::fill_params;
pub use persist::{load_params, read_f32_file, save_params, write_f32_file, Manifest, TensorEntry};

pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite constant")
}

/// Borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

/// A structure holding trainable tensors in a fixed, documented order.
///
/// `collect` and `collect_mut` must enumerate tensors in the same order; that
/// order is also the on-disk order of the flat weight file.
pub trait Params<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a, T>>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [T]>);

    fn params(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.data.len()).sum()
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
