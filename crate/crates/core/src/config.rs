//! Run configuration: JSON files plus dotted-key overrides.
//!
//! ```json
//! {"seed": 17, "labels_fraction": 0.01, "variant": "full",
//!  "paths": {"dataset": "bundle", "schema": "schema.json", "out": "out"},
//!  "pipeline": {"ssl": {"epochs": 30}},
//!  "experiment": {"seeds": [17, 18, 19, 20, 21], "fractions": [0.01, 0.1, 0.5]}}
//! ```
//!
//! Missing fields take their defaults. An override such as
//! `pipeline.ssl.epochs=40` replaces one leaf; the value is parsed as JSON
//! and falls back to a plain string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::experiments::{PipelineConfig, Variant};
use crate::eval::synthetic::SyntheticSpec;

/// Desk-scale configuration for the packaged synthetic benchmark.
pub const SYNTHETIC_BENCH_JSON: &str = include_str!("../configs/synthetic_bench.json");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory written by `ingest` (features, metadata and schema).
    pub dataset: Option<PathBuf>,
    /// Overrides the bundle's schema.
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Temporal driver: first excluded training date and later period edges.
    pub cutoff: String,
    pub boundaries: Vec<String>,
    /// Leave-out driver.
    pub n_families: usize,
    pub unidentified: usize,
    /// Data for the synthetic drivers.
    pub synthetic: SyntheticSpec,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            fractions: vec![0.01, 0.1, 0.5],
            seeds: vec![17, 18, 19, 20, 21],
            variants: vec![
                Variant::Full,
                Variant::NoAlignment,
                Variant::DirectMix,
                Variant::GaussianOnly,
                Variant::Supervised,
            ],
            cutoff: "2020-01-01".into(),
            boundaries: Vec::new(),
            n_families: 6,
            unidentified: 1,
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every component of single runs.
    pub seed: u64,
    pub labels_fraction: f64,
    pub variant: Variant,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub experiment: ExperimentParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 17,
            labels_fraction: 0.01,
            variant: Variant::Full,
            paths: Paths::default(),
            pipeline: PipelineConfig::default(),
            experiment: ExperimentParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// The packaged desk-scale synthetic configuration.
    pub fn synthetic_bench() -> Self {
        Self::from_json(SYNTHETIC_BENCH_JSON, Path::new("configs/synthetic_bench.json"))
            .expect("packaged config parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not key=value")))?;
            set_path(&mut tree, key.trim(), parse_value(raw.trim()))?;
        }
        serde_json::from_value(tree).map_err(|e| Error::InvalidConfig(format!("after overrides: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if !(self.labels_fraction > 0.0 && self.labels_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "labels_fraction {} outside (0, 1]",
                self.labels_fraction
            )));
        }
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(Error::InvalidConfig("experiment.seeds is empty".into()));
        }
        if e.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::InvalidConfig("experiment.fractions must lie in (0, 1]".into()));
        }
        e.synthetic.validate()
    }

    /// Pipeline with every component seeded by the global seed.
    pub fn seeded_pipeline(&self) -> PipelineConfig {
        self.pipeline.with_seed(self.seed)
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{key}: {} is not an object", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown config key {key:?}")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::InvalidConfig("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 3, "pipeline": {"ssl": {"epochs": 2}}}"#, Path::new("x")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.pipeline.ssl.epochs, 2);
        assert_eq!(c.pipeline.ssl.lambda_max, 10.0);
        assert_eq!(c.pipeline.encoder.margin, 5.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 3}"#, Path::new("x")).is_err());
        assert!(RunConfig::default().with_overrides(&["pipeline.ssl.epoch=3"]).is_err());
        assert!(RunConfig::default().with_overrides(&["seed"]).is_err());
    }

    #[test]
    fn overrides_replace_leaves() {
        let c = RunConfig::default()
            .with_overrides(&[
                "pipeline.ssl.epochs=4",
                "variant=supervised",
                "paths.out=/tmp/x",
                "experiment.seeds=[1,2]",
            ])
            .unwrap();
        assert_eq!(c.pipeline.ssl.epochs, 4);
        assert_eq!(c.variant, Variant::Supervised);
        assert_eq!(c.paths.out.as_deref(), Some(Path::new("/tmp/x")));
        assert_eq!(c.experiment.seeds, vec![1, 2]);
        assert!(RunConfig::default().with_overrides(&["pipeline.ssl.epochs=many"]).is_err());
    }

    #[test]
    fn global_seed_reaches_every_component() {
        let c = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        let p = c.seeded_pipeline();
        assert_eq!(
            (p.encoder.seed, p.augmentation.seed, p.classifier.seed, p.ssl.seed),
            (99, 99, 99, 99)
        );
    }

    #[test]
    fn packaged_config_is_valid_and_round_trips() {
        let c = RunConfig::synthetic_bench();
        c.validate().unwrap();
        let back = RunConfig::from_json(&c.to_json(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_fraction_fails_validation() {
        let c = RunConfig {
            labels_fraction: 0.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
