//! Few-shot malware family classification with retrieval-augmented data
//! augmentation over static tabular features.
//!
//! The pipeline is:
//!
//! 1. [`schema`] splits each feature vector into interpolatable and
//!    non-interpolatable blocks; [`dataset`] loads and standardizes data.
//! 2. [`encoder`] trains paired encoder-decoders whose hidden codes yield the
//!    retrieval embedding (`H_n`) and the alignment embedding (sim halves).
//! 3. [`index`] provides exact L2 search for the feature-space k-NN graph and
//!    embedding retrieval; [`augment`] mixes a row with a neighbor and swaps
//!    in a real, best-aligned non-interpolatable block.
//! 4. [`ssl`] trains the [`classifier`] (FC-ResNet) with label guessing,
//!    sharpening and MixUp over the augmented pool.
//! 5. [`eval`] computes macro metrics and drives saturation, temporal,
//!    leave-out and ablation experiments, including a synthetic benchmark.

pub mod augment;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod nn;
pub mod rng;
pub mod schema;
pub mod ssl;

pub use error::{Error, Result};
