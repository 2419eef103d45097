//! `malmixer` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error (bad flags, unreadable config, schema or dataset).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use malmixer::augment::{AugmentationContext, AugmentedPool};
use malmixer::classifier::FcResNet;
use malmixer::config::RunConfig;
use malmixer::dataset::{load_dataset, Dataset, StandardizationParams};
use malmixer::encoder::{train_invariance_model, InvarianceModel};
use malmixer::eval::experiments::{masked_labels, stratified_split, train_variant, variant_pool, Split, Variant};
use malmixer::eval::metrics::compute_metrics;
use malmixer::eval::runner::{run_experiment, synthetic_for, ExperimentKind};
use malmixer::nn::{read_f32_file, write_f32_file};
use malmixer::schema::FeatureSchema;
use malmixer::ssl::{predict, write_epoch_log};

const FEATURES: &str = "features.f32";
const META: &str = "meta.json";
const SCHEMA: &str = "schema.json";

#[derive(Parser)]
#[command(name = "malmixer", version, about = "Few-shot malware family classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; for multi-seed experiments it replaces the seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset bundle directory written by `ingest`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long = "labels-fraction")]
    labels_fraction: Option<f64>,
    #[arg(long)]
    variant: Option<String>,
    /// Dotted-key override such as `pipeline.ssl.epochs=40`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw features and metadata and write a dataset bundle.
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Split, standardize, pick labels and train the encoder-decoders.
    TrainEncoder {
        #[command(flatten)]
        common: Common,
    },
    /// Build embeddings, the retrieval index and the augmentation pool.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier and score the held-out split.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Write per-row family predictions and probabilities as CSV.
    Predict {
        /// Run directory holding the trained classifier.
        #[arg(long)]
        model: PathBuf,
        /// Raw little-endian f32 feature rows.
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment driver and write its reports.
    Experiment {
        #[arg(long)]
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| dispatch(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error[config]: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error[runtime]: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn init_threads() -> Outcome<()> {
    let threads = match std::env::var("MALMIXER_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| anyhow!("MALMIXER_THREADS must be a positive integer, got {v:?}"))
            .usage()?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().runtime()
}

fn dispatch(command: Command) -> Outcome<()> {
    match command {
        Command::Ingest { features, meta, common } => ingest(&features, &meta, &common),
        Command::TrainEncoder { common } => train_encoder(&resolve(&common, RunConfig::default(), false)?),
        Command::Build { common } => build(&resolve(&common, RunConfig::default(), false)?),
        Command::Train { common } => train(&resolve(&common, RunConfig::default(), false)?),
        Command::Predict { model, features, common } => predict_cmd(&model, &features, common.out.as_deref()),
        Command::Experiment { experiment, common } => {
            let kind = ExperimentKind::parse(&experiment).usage()?;
            let default = if common.dataset.is_some() {
                RunConfig::default()
            } else {
                RunConfig::synthetic_bench()
            };
            experiment_cmd(kind, &resolve(&common, default, true)?)
        }
    }
}

/// File config (or `default`), then `--set` overrides, then flags.
fn resolve(common: &Common, default: RunConfig, multi_seed: bool) -> Outcome<RunConfig> {
    let base = match &common.config {
        Some(p) => RunConfig::load(p).usage()?,
        None => default,
    };
    let mut cfg = base.with_overrides(&common.set).usage()?;
    if let Some(s) = common.seed {
        cfg.seed = s;
        if multi_seed {
            cfg.experiment.seeds = vec![s];
        }
    }
    if let Some(o) = &common.out {
        cfg.paths.out = Some(o.clone());
    }
    if let Some(d) = &common.dataset {
        cfg.paths.dataset = Some(d.clone());
    }
    if let Some(s) = &common.schema {
        cfg.paths.schema = Some(s.clone());
    }
    if let Some(f) = common.labels_fraction {
        cfg.labels_fraction = f;
    }
    if let Some(v) = &common.variant {
        cfg.variant = Variant::parse(v).usage()?;
    }
    cfg.validate().usage()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn ensure_dir(dir: &Path) -> Outcome<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .usage()
}

fn load_schema(path: &Path) -> Outcome<FeatureSchema> {
    FeatureSchema::load(path)
        .with_context(|| format!("cannot load schema {}", path.display()))
        .usage()
}

fn load_bundle(cfg: &RunConfig) -> Outcome<(Dataset, FeatureSchema)> {
    let dir = cfg
        .paths
        .dataset
        .as_ref()
        .ok_or_else(|| anyhow!("--dataset (or paths.dataset) is required"))
        .usage()?;
    let schema_path = cfg.paths.schema.clone().unwrap_or_else(|| dir.join(SCHEMA));
    let schema = load_schema(&schema_path)?;
    let dataset = load_dataset(&dir.join(FEATURES), &dir.join(META), &schema)
        .with_context(|| format!("cannot load dataset bundle {}", dir.display()))
        .usage()?;
    Ok((dataset, schema))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).runtime()?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .usage()?;
    serde_json::from_str(&text)
        .with_context(|| format!("malformed {}", path.display()))
        .usage()
}

fn ingest(features: &Path, meta: &Path, common: &Common) -> Outcome<()> {
    let schema = match &common.schema {
        Some(p) => load_schema(p)?,
        None => FeatureSchema::ember_v2(),
    };
    let dataset = load_dataset(features, meta, &schema)
        .with_context(|| format!("cannot ingest {} with {}", features.display(), meta.display()))
        .usage()?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("dataset"));
    ensure_dir(&out)?;
    dataset.save(&out.join(FEATURES), &out.join(META)).runtime()?;
    schema.save(&out.join(SCHEMA)).runtime()?;
    let labeled = dataset.labels.iter().flatten().count();
    println!(
        "ingested {} rows × {} features, {} families, {} labeled -> {}",
        dataset.len(),
        dataset.dim(),
        dataset.num_families(),
        labeled,
        out.display()
    );
    Ok(())
}

/// Held-out rows come from labeled rows only; unlabeled rows always train.
/// Fully labeled data is masked to `labels_fraction`; otherwise the given
/// labels of the training rows are used.
fn single_split(dataset: &Dataset, cfg: &RunConfig) -> malmixer::Result<(Split, Vec<Option<usize>>)> {
    let labeled: Vec<usize> = (0..dataset.len()).filter(|&r| dataset.labels[r].is_some()).collect();
    let truth: Vec<usize> = dataset.labels.iter().map(|l| l.unwrap_or(0)).collect();
    let f = dataset.num_families();
    let mut split = stratified_split(&labeled, &truth, f, cfg.pipeline.test_fraction, cfg.seed)?;
    split.train.extend((0..dataset.len()).filter(|&r| dataset.labels[r].is_none()));
    split.train.sort_unstable();
    let labels = if dataset.is_fully_labeled() {
        let train_truth: Vec<usize> = split.train.iter().map(|&r| truth[r]).collect();
        masked_labels(&train_truth, f, cfg.labels_fraction, cfg.seed)?
    } else {
        split.train.iter().map(|&r| dataset.labels[r]).collect()
    };
    Ok((split, labels))
}

/// Artifacts of `train-encoder` reloaded for later stages.
struct RunState {
    dataset: Dataset,
    schema: FeatureSchema,
    split: Split,
    standardization: StandardizationParams,
    labels: Vec<Option<usize>>,
    train_x: Array2<f32>,
}

fn load_state(cfg: &RunConfig) -> Outcome<RunState> {
    let (dataset, schema) = load_bundle(cfg)?;
    let out = out_dir(cfg);
    let split: Split = read_json(&out.join("split.json"))?;
    let standardization: StandardizationParams = read_json(&out.join("standardization.json"))?;
    let labels: Vec<Option<usize>> = read_json(&out.join("labels.json"))?;
    if labels.len() != split.train.len() || split.train.iter().chain(&split.test).any(|&r| r >= dataset.len()) {
        return Err(Failure::Usage(anyhow!(
            "run directory {} does not match dataset {}",
            out.display(),
            cfg.paths.dataset.as_deref().unwrap_or(Path::new("?")).display()
        )));
    }
    let train_x = standardization
        .apply(&dataset.features.select(ndarray::Axis(0), &split.train).view())
        .runtime()?;
    Ok(RunState {
        dataset,
        schema,
        split,
        standardization,
        labels,
        train_x,
    })
}

fn train_encoder(cfg: &RunConfig) -> Outcome<()> {
    let (dataset, schema) = load_bundle(cfg)?;
    let out = out_dir(cfg);
    ensure_dir(&out)?;
    let pipeline = cfg.seeded_pipeline();
    let (split, labels) = single_split(&dataset, cfg).runtime()?;
    let standardization = StandardizationParams::fit(&dataset.features.view(), &split.train).runtime()?;
    let train_x = standardization
        .apply(&dataset.features.select(ndarray::Axis(0), &split.train).view())
        .runtime()?;
    let trained = train_invariance_model(&train_x.view(), &schema, &pipeline.encoder).runtime()?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("standardization.json"), &standardization)?;
    write_json(&out.join("labels.json"), &labels)?;
    write_json(&out.join("encoder_curve.json"), &trained.curve)?;
    write_json(&out.join("config.json"), cfg)?;
    trained.model.save(&out.join("encoder.json")).runtime()?;
    let last = trained.curve.last().expect("curve has the initial entry");
    println!(
        "encoder trained on {} rows: L_R {:.6} L_S {:.6} L_D {:.6} -> {}",
        split.train.len(),
        last.reconstruction,
        last.similarity,
        last.dissimilarity,
        out.display()
    );
    Ok(())
}

fn build(cfg: &RunConfig) -> Outcome<()> {
    let state = load_state(cfg)?;
    let out = out_dir(cfg);
    let pipeline = cfg.seeded_pipeline();
    let encoder = InvarianceModel::load(&out.join("encoder.json")).usage()?;
    let ctx = AugmentationContext::build(state.train_x.clone(), &state.schema, encoder, pipeline.augmentation.k_neighbors)
        .runtime()?;
    let emb = out.join("embeddings");
    ensure_dir(&emb)?;
    let t = ctx.tables();
    for (name, m) in [("h_n", &t.h_n), ("h_i_sim", &t.h_i_sim), ("h_n_sim", &t.h_n_sim)] {
        let flat: Vec<f32> = m.iter().copied().collect();
        write_f32_file(&emb.join(format!("{name}.f32")), &flat).runtime()?;
    }
    write_json(
        &emb.join("shapes.json"),
        &serde_json::json!({
            "h_n": [t.h_n.nrows(), t.h_n.ncols()],
            "h_i_sim": [t.h_i_sim.nrows(), t.h_i_sim.ncols()],
            "h_n_sim": [t.h_n_sim.nrows(), t.h_n_sim.ncols()],
        }),
    )?;
    ctx.hn_index().save(&out.join("hn_index.json")).runtime()?;
    let f = state.dataset.num_families();
    let pool = variant_pool(&state.train_x.view(), Some(&ctx), &state.labels, f, cfg.variant, &pipeline).runtime()?;
    pool.save(&out.join("pool.f32"), &out.join("pool_provenance.json")).runtime()?;
    println!(
        "built {} pool rows ({} per source) for variant {} -> {}",
        pool.rows.nrows(),
        pool.variants,
        cfg.variant.name(),
        out.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Outcome<()> {
    let state = load_state(cfg)?;
    let out = out_dir(cfg);
    let pipeline = cfg.seeded_pipeline();
    let f = state.dataset.num_families();
    let pool = if cfg.variant == Variant::Supervised {
        AugmentedPool {
            variants: 0,
            rows: Array2::zeros((0, state.dataset.dim())),
            provenance: Vec::new(),
        }
    } else {
        AugmentedPool::load(&out.join("pool.f32"), &out.join("pool_provenance.json"))
            .context("augmentation pool missing; run `build` first")
            .usage()?
    };
    let trained = train_variant(&state.train_x.view(), &pool, &state.labels, f, cfg.variant, &pipeline).runtime()?;
    trained.model.save(&out.join("classifier.json")).runtime()?;
    write_epoch_log(&out.join("train_log.jsonl"), &trained.log).runtime()?;
    write_json(&out.join("families.json"), &state.dataset.families)?;
    if !state.split.test.is_empty() {
        let test_x = state
            .standardization
            .apply(&state.dataset.features.select(ndarray::Axis(0), &state.split.test).view())
            .runtime()?;
        let preds = predict(&trained.model, &test_x.view()).runtime()?;
        let truths: Vec<usize> = state
            .split
            .test
            .iter()
            .map(|&r| state.dataset.labels[r].expect("test rows are labeled"))
            .collect();
        let metrics = compute_metrics(&preds, &truths, f).runtime()?;
        write_json(&out.join("metrics.json"), &metrics)?;
        println!(
            "variant {}: test accuracy {:.4}, macro F1 {:.4} on {} rows",
            cfg.variant.name(),
            metrics.accuracy,
            metrics.f1_macro,
            truths.len()
        );
    }
    Ok(())
}

fn predict_cmd(run: &Path, features: &Path, out: Option<&Path>) -> Outcome<()> {
    let standardization: StandardizationParams = read_json(&run.join("standardization.json"))?;
    let families: Vec<String> = read_json(&run.join("families.json"))?;
    let model = FcResNet::<f32>::load(&run.join("classifier.json"))
        .with_context(|| format!("cannot load classifier from {}", run.display()))
        .usage()?;
    let values = read_f32_file(features)
        .with_context(|| format!("cannot read features {}", features.display()))
        .usage()?;
    let dim = standardization.dim();
    if values.len() % dim != 0 {
        return Err(Failure::Usage(anyhow!(
            "{} holds {} values, not a multiple of the feature width {dim}",
            features.display(),
            values.len()
        )));
    }
    let x = Array2::from_shape_vec((values.len() / dim, dim), values).runtime()?;
    let x = standardization.apply(&x.view()).runtime()?;
    let probs = model.predict_proba(&x.view()).runtime()?;
    let mut csv = String::from("row,family");
    for name in &families {
        write!(csv, ",p_{name}").expect("writing to a String");
    }
    csv.push('\n');
    for (r, p) in probs.outer_iter().enumerate() {
        let best = malmixer::classifier::argmax(p.iter().copied());
        write!(csv, "{r},{}", families[best]).expect("writing to a String");
        for v in p {
            write!(csv, ",{v}").expect("writing to a String");
        }
        csv.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("cannot write {}", path.display()))
            .runtime(),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn experiment_cmd(kind: ExperimentKind, cfg: &RunConfig) -> Outcome<()> {
    let (dataset, schema) = match cfg.paths.dataset {
        Some(_) => load_bundle(cfg)?,
        None => {
            let data = synthetic_for(kind, cfg).usage()?;
            (data.dataset, data.schema)
        }
    };
    let out = out_dir(cfg);
    ensure_dir(&out)?;
    let files = run_experiment(kind, cfg, &dataset, &schema, &out).runtime()?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
