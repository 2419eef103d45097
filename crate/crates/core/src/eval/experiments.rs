//! Experiment drivers: stratified splits, per-variant training and the
//! saturation, ablation, temporal and leave-out protocols.

use chrono::NaiveDateTime;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_pool, build_pool, AugmentationConfig, AugmentationContext, AugmentedPool, CandidateSelection,
    DirectMixAugmenter, IdentityAugmenter,
};
use crate::classifier::{FcResNet, FcResNetConfig};
use crate::dataset::{format_timestamp, select_labeled_subset, Dataset, StandardizationParams};
use crate::encoder::{train_invariance_model, EncoderConfig, EncoderEpoch};
use crate::error::{Error, Result};
use crate::eval::gaussian::GaussianAugmenter;
use crate::eval::metrics::{compute_metrics, MetricsReport};
use crate::rng::{rng_for, stream};
use crate::schema::FeatureSchema;
use crate::ssl::{self, EpochLog, SslConfig, SslInputs, TrainingMode};

/// Training setups compared by the drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cross-entropy on the labeled rows only.
    Supervised,
    /// MixMatch without augmentation.
    Mixmatch,
    /// MixMatch with per-family Gaussian noise.
    GaussianOnly,
    /// MixMatch with retrieval augmentation and aligned candidate choice.
    Full,
    /// Retrieval augmentation taking the first candidate.
    NoAlignment,
    /// Interpolation of all coordinates in feature space.
    DirectMix,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Supervised,
        Variant::Mixmatch,
        Variant::GaussianOnly,
        Variant::Full,
        Variant::NoAlignment,
        Variant::DirectMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Supervised => "supervised",
            Variant::Mixmatch => "mixmatch",
            Variant::GaussianOnly => "gaussian_only",
            Variant::Full => "full",
            Variant::NoAlignment => "no_alignment",
            Variant::DirectMix => "direct_mix",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {name:?}")))
    }

    /// Whether the variant needs a trained encoder and retrieval context.
    pub fn uses_encoder(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAlignment)
    }

    /// Whether the variant reads the feature-space neighbor graph.
    pub fn uses_context(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAlignment | Variant::DirectMix)
    }
}

/// Every model-side setting of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub augmentation: AugmentationConfig,
    pub classifier: FcResNetConfig,
    pub ssl: SslConfig,
    /// Held-out share of every family.
    pub test_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            augmentation: AugmentationConfig::default(),
            classifier: FcResNetConfig::default(),
            ssl: SslConfig::default(),
            test_fraction: 0.2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.augmentation.validate()?;
        self.ssl.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.augmentation.pool_variants != self.ssl.pool_variants {
            return Err(Error::InvalidConfig(format!(
                "augmentation.pool_variants = {} but ssl.pool_variants = {}",
                self.augmentation.pool_variants, self.ssl.pool_variants
            )));
        }
        Ok(())
    }

    /// Copy with every component seeded by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.encoder.seed = seed;
        c.augmentation.seed = seed;
        c.classifier.seed = seed;
        c.ssl.seed = seed;
        c
    }
}

/// Dataset row ids of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Family labels of a fully labeled dataset.
pub fn truth_labels(dataset: &Dataset) -> Result<Vec<usize>> {
    dataset
        .labels
        .iter()
        .enumerate()
        .map(|(r, l)| l.ok_or_else(|| Error::MalformedMetadata(format!("experiments need labels; row {r} has none"))))
        .collect()
}

/// Holds out `round(test_fraction · n_f)` rows of every family among `rows`,
/// keeping at least one training row per family.
pub fn stratified_split(
    rows: &[usize],
    truth: &[usize],
    families: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut by_family: Vec<Vec<usize>> = vec![Vec::new(); families];
    for &r in rows {
        let f = *truth.get(r).ok_or_else(|| Error::dim("row id bound", truth.len(), r))?;
        if f >= families {
            return Err(Error::dim("family id bound", families, f));
        }
        by_family[f].push(r);
    }
    let mut rng = rng_for(seed, stream::SPLIT);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for members in &mut by_family {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = ((test_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Standardized train/test matrices and, when requested, the frozen encoder
/// with its retrieval context over the training rows.
pub struct PreparedRun {
    pub split: Split,
    pub standardization: StandardizationParams,
    pub train_x: Array2<f32>,
    pub test_x: Array2<f32>,
    pub train_truth: Vec<usize>,
    pub test_truth: Vec<usize>,
    pub encoder_curve: Vec<EncoderEpoch>,
    pub context: Option<AugmentationContext>,
}

/// Fits standardization on the training rows, then trains the encoder and
/// builds the retrieval context if `with_encoder`, or only the neighbor graph
/// context (with an untrained frozen encoder) if `with_context`.
pub fn prepare(
    dataset: &Dataset,
    schema: &FeatureSchema,
    split: Split,
    config: &PipelineConfig,
    with_encoder: bool,
    with_context: bool,
) -> Result<PreparedRun> {
    if dataset.dim() != schema.dim() {
        return Err(Error::dim("dataset width", schema.dim(), dataset.dim()));
    }
    let truth = truth_labels(dataset)?;
    if split.train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    let standardization = StandardizationParams::fit(&dataset.features.view(), &split.train)?;
    let train_x = standardization.apply(&dataset.features.select(Axis(0), &split.train).view())?;
    let test_x = standardization.apply(&dataset.features.select(Axis(0), &split.test).view())?;
    let (encoder_curve, context) = if with_encoder || with_context {
        let (model, curve) = if with_encoder {
            let trained = train_invariance_model(&train_x.view(), schema, &config.encoder)?;
            (trained.model, trained.curve)
        } else {
            let mut m = crate::encoder::InvarianceModel::new(
                schema.interpolatable_dim(),
                schema.non_interpolatable_dim(),
                config.encoder.clone(),
            )?;
            m.freeze();
            (m, Vec::new())
        };
        let ctx = AugmentationContext::build(train_x.clone(), schema, model, config.augmentation.k_neighbors)?;
        (curve, Some(ctx))
    } else {
        (Vec::new(), None)
    };
    Ok(PreparedRun {
        train_truth: split.train.iter().map(|&r| truth[r]).collect(),
        test_truth: split.test.iter().map(|&r| truth[r]).collect(),
        split,
        standardization,
        train_x,
        test_x,
        encoder_curve,
        context,
    })
}

fn empty_pool(dim: usize) -> AugmentedPool {
    AugmentedPool {
        variants: 0,
        rows: Array2::zeros((0, dim)),
        provenance: Vec::new(),
    }
}

/// Pool of `variant` over standardized training rows. `labels` are in the
/// classifier's class space; `context` must cover the same rows for the
/// retrieval and direct-mix variants.
pub fn variant_pool(
    train_x: &ArrayView2<f32>,
    context: Option<&AugmentationContext>,
    labels: &[Option<usize>],
    num_classes: usize,
    variant: Variant,
    config: &PipelineConfig,
) -> Result<AugmentedPool> {
    let m = config.ssl.pool_variants;
    let aug = &config.augmentation;
    let ctx = || {
        let c = context
            .ok_or_else(|| Error::InvalidConfig(format!("variant {} needs a retrieval context", variant.name())))?;
        if c.len() != train_x.nrows() {
            return Err(Error::dim("retrieval context rows", train_x.nrows(), c.len()));
        }
        Ok(c)
    };
    match variant {
        Variant::Supervised => Ok(empty_pool(train_x.ncols())),
        Variant::Mixmatch => build_pool(&IdentityAugmenter { features: *train_x }, m, aug.seed),
        Variant::GaussianOnly => build_pool(&GaussianAugmenter::new(*train_x, labels, num_classes)?, m, aug.seed),
        Variant::Full => augment_pool(
            ctx()?,
            &AugmentationConfig {
                selection: CandidateSelection::Aligned,
                ..aug.clone()
            },
            m,
        ),
        Variant::NoAlignment => augment_pool(
            ctx()?,
            &AugmentationConfig {
                selection: CandidateSelection::FirstCandidate,
                ..aug.clone()
            },
            m,
        ),
        Variant::DirectMix => {
            aug.validate()?;
            build_pool(&DirectMixAugmenter { ctx: ctx()?, config: aug }, m, aug.seed)
        }
    }
}

/// Trains the classifier of `variant` on a prebuilt pool.
pub fn train_variant(
    train_x: &ArrayView2<f32>,
    pool: &AugmentedPool,
    labels: &[Option<usize>],
    num_classes: usize,
    variant: Variant,
    config: &PipelineConfig,
) -> Result<ssl::TrainedClassifier> {
    let ssl_config = SslConfig {
        mode: if variant == Variant::Supervised {
            TrainingMode::Supervised
        } else {
            TrainingMode::MixMatch
        },
        ..config.ssl.clone()
    };
    let inputs = SslInputs {
        features: *train_x,
        labels,
        pool,
        num_classes,
    };
    ssl::train(&inputs, &config.classifier, &ssl_config)
}

/// Trained classifier of one variant plus its test predictions.
pub struct VariantOutcome {
    pub model: FcResNet<f32>,
    pub log: Vec<EpochLog>,
    pub test_predictions: Vec<usize>,
}

/// Trains `variant` on masked `labels` (class space `0..num_classes`) and
/// predicts the prepared test rows.
pub fn run_variant(
    prep: &PreparedRun,
    labels: &[Option<usize>],
    num_classes: usize,
    variant: Variant,
    config: &PipelineConfig,
) -> Result<VariantOutcome> {
    let x = prep.train_x.view();
    let pool = variant_pool(&x, prep.context.as_ref(), labels, num_classes, variant, config)?;
    let trained = train_variant(&x, &pool, labels, num_classes, variant, config)?;
    let test_predictions = ssl::predict(&trained.model, &prep.test_x.view())?;
    Ok(VariantOutcome {
        model: trained.model,
        log: trained.log,
        test_predictions,
    })
}

/// One evaluated training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub variant: String,
    /// Driver-specific condition, such as a test period or zero/one-shot.
    pub setting: String,
    pub fraction: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_labeled: usize,
    pub n_test: usize,
    pub metrics: MetricsReport,
}

/// Label mask over the training rows (in training-row order).
pub fn masked_labels(train_truth: &[usize], families: usize, fraction: f64, seed: u64) -> Result<Vec<Option<usize>>> {
    let as_opt: Vec<Option<usize>> = train_truth.iter().map(|&f| Some(f)).collect();
    let mask = select_labeled_subset(&as_opt, families, fraction, seed)?;
    Ok(train_truth
        .iter()
        .zip(mask)
        .map(|(&f, m)| if m { Some(f) } else { None })
        .collect())
}

fn needs(variants: &[Variant]) -> (bool, bool) {
    (
        variants.iter().any(|v| v.uses_encoder()),
        variants.iter().any(|v| v.uses_context()),
    )
}

/// Full outcome of one (fraction, seed) over several variants.
pub struct FractionRun {
    pub prepared: PreparedRun,
    pub labels: Vec<Option<usize>>,
    pub records: Vec<RunRecord>,
    pub outcomes: Vec<VariantOutcome>,
}

/// Splits 80/20 with `seed`, labels `fraction` of the training rows and trains
/// each variant.
pub fn run_fraction(
    experiment: &str,
    dataset: &Dataset,
    schema: &FeatureSchema,
    fraction: f64,
    seed: u64,
    variants: &[Variant],
    config: &PipelineConfig,
) -> Result<FractionRun> {
    let config = config.with_seed(seed);
    config.validate()?;
    let truth = truth_labels(dataset)?;
    let f = dataset.num_families();
    let all: Vec<usize> = (0..dataset.len()).collect();
    let split = stratified_split(&all, &truth, f, config.test_fraction, seed)?;
    let (enc, ctx) = needs(variants);
    let prepared = prepare(dataset, schema, split, &config, enc, ctx)?;
    let labels = masked_labels(&prepared.train_truth, f, fraction, seed)?;
    let n_labeled = labels.iter().flatten().count();
    let mut records = Vec::with_capacity(variants.len());
    let mut outcomes = Vec::with_capacity(variants.len());
    for &v in variants {
        let out = run_variant(&prepared, &labels, f, v, &config)?;
        let metrics = compute_metrics(&out.test_predictions, &prepared.test_truth, f)?;
        records.push(RunRecord {
            experiment: experiment.into(),
            variant: v.name().into(),
            setting: "in_domain".into(),
            fraction,
            seed,
            n_train: prepared.split.train.len(),
            n_labeled,
            n_test: prepared.split.test.len(),
            metrics,
        });
        outcomes.push(out);
    }
    Ok(FractionRun {
        prepared,
        labels,
        records,
        outcomes,
    })
}

/// Every (fraction, seed) pair for every variant.
pub fn saturation_experiment(
    dataset: &Dataset,
    schema: &FeatureSchema,
    fractions: &[f64],
    seeds: &[u64],
    variants: &[Variant],
    config: &PipelineConfig,
) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &fraction in fractions {
        for &seed in seeds {
            out.extend(run_fraction("saturation", dataset, schema, fraction, seed, variants, config)?.records);
        }
    }
    Ok(out)
}

/// The ablation variants at one label fraction.
pub fn ablation_experiment(
    dataset: &Dataset,
    schema: &FeatureSchema,
    fraction: f64,
    seeds: &[u64],
    variants: &[Variant],
    config: &PipelineConfig,
) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &seed in seeds {
        out.extend(run_fraction("ablation", dataset, schema, fraction, seed, variants, config)?.records);
    }
    Ok(out)
}

/// Result of the temporal driver with the training-row audit trail.
pub struct TemporalResult {
    pub records: Vec<RunRecord>,
    /// Dataset row ids used for training, per seed.
    pub train_rows: Vec<(u64, Vec<usize>)>,
}

/// Trains on rows dated before `cutoff` (with an in-domain 80/20 split) and
/// evaluates on each later period `[cutoff, b_1), [b_1, b_2), …, [b_k, ∞)`.
#[allow(clippy::too_many_arguments)]
pub fn temporal_experiment(
    dataset: &Dataset,
    schema: &FeatureSchema,
    cutoff: NaiveDateTime,
    boundaries: &[NaiveDateTime],
    fraction: f64,
    seeds: &[u64],
    variants: &[Variant],
    config: &PipelineConfig,
) -> Result<TemporalResult> {
    let stamps = dataset
        .timestamps
        .as_ref()
        .ok_or_else(|| Error::MalformedMetadata("temporal experiment needs timestamps".into()))?;
    if boundaries.windows(2).any(|w| w[0] >= w[1]) || boundaries.first().is_some_and(|b| *b <= cutoff) {
        return Err(Error::InvalidConfig("period boundaries must increase after the cutoff".into()));
    }
    let truth = truth_labels(dataset)?;
    let f = dataset.num_families();
    let before: Vec<usize> = (0..dataset.len()).filter(|&r| stamps[r] < cutoff).collect();
    let mut present = vec![false; f];
    for &r in &before {
        present[truth[r]] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::MissingFamily(format!(
            "{} has no rows before {}",
            dataset.families[missing],
            format_timestamp(&cutoff)
        )));
    }
    let mut edges = vec![cutoff];
    edges.extend_from_slice(boundaries);
    let periods: Vec<(String, Vec<usize>)> = edges
        .iter()
        .enumerate()
        .map(|(k, &lo)| {
            let hi = edges.get(k + 1).copied();
            let rows: Vec<usize> = (0..dataset.len())
                .filter(|&r| stamps[r] >= lo && hi.is_none_or(|h| stamps[r] < h))
                .collect();
            let name = match hi {
                Some(h) => format!("{}..{}", lo.date(), h.date()),
                None => format!("{}..", lo.date()),
            };
            (name, rows)
        })
        .collect();

    let (enc, ctx) = needs(variants);
    let mut records = Vec::new();
    let mut audit = Vec::new();
    for &seed in seeds {
        let cfg = config.with_seed(seed);
        cfg.validate()?;
        let split = stratified_split(&before, &truth, f, cfg.test_fraction, seed)?;
        let prepared = prepare(dataset, schema, split, &cfg, enc, ctx)?;
        if prepared.split.train.iter().any(|&r| stamps[r] >= cutoff) {
            return Err(Error::InvalidConfig("temporal split leaked a post-cutoff row".into()));
        }
        audit.push((seed, prepared.split.train.clone()));
        let labels = masked_labels(&prepared.train_truth, f, fraction, seed)?;
        let n_labeled = labels.iter().flatten().count();
        for &v in variants {
            let out = run_variant(&prepared, &labels, f, v, &cfg)?;
            let mut push = |setting: String, preds: &[usize], truths: &[usize]| -> Result<()> {
                records.push(RunRecord {
                    experiment: "temporal".into(),
                    variant: v.name().into(),
                    setting,
                    fraction,
                    seed,
                    n_train: prepared.split.train.len(),
                    n_labeled,
                    n_test: truths.len(),
                    metrics: compute_metrics(preds, truths, f)?,
                });
                Ok(())
            };
            push("in_domain".into(), &out.test_predictions, &prepared.test_truth)?;
            for (name, rows) in &periods {
                if rows.is_empty() {
                    continue;
                }
                let x = prepared
                    .standardization
                    .apply(&dataset.features.select(Axis(0), rows).view())?;
                let preds = ssl::predict(&out.model, &x.view())?;
                let truths: Vec<usize> = rows.iter().map(|&r| truth[r]).collect();
                push(name.clone(), &preds, &truths)?;
            }
        }
    }
    Ok(TemporalResult {
        records,
        train_rows: audit,
    })
}

/// Families held out as unidentified for `seed`, sorted.
pub fn choose_unidentified(families: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 || count >= families {
        return Err(Error::InvalidConfig(format!(
            "need 1 ≤ unidentified < {families}, got {count}"
        )));
    }
    let mut rng = rng_for(seed, stream::LEAVEOUT);
    let mut ids: Vec<usize> = (0..families).collect();
    ids.shuffle(&mut rng);
    let mut out = ids[..count].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Zero-shot: labels only for identified families and a classifier over
/// those; one-shot: one extra labeled row per unidentified family and a
/// classifier over all families. Both are scored over all families.
#[allow(clippy::too_many_arguments)]
pub fn leaveout_experiment(
    dataset: &Dataset,
    schema: &FeatureSchema,
    unidentified: usize,
    fraction: f64,
    seeds: &[u64],
    variant: Variant,
    config: &PipelineConfig,
) -> Result<Vec<RunRecord>> {
    let truth = truth_labels(dataset)?;
    let f = dataset.num_families();
    let (enc, ctx) = needs(&[variant]);
    let mut records = Vec::new();
    for &seed in seeds {
        let cfg = config.with_seed(seed);
        cfg.validate()?;
        let all: Vec<usize> = (0..dataset.len()).collect();
        let split = stratified_split(&all, &truth, f, cfg.test_fraction, seed)?;
        let prepared = prepare(dataset, schema, split, &cfg, enc, ctx)?;
        let hidden = choose_unidentified(f, unidentified, seed)?;
        let kept: Vec<usize> = (0..f).filter(|c| !hidden.contains(c)).collect();
        let remap: Vec<Option<usize>> = (0..f).map(|c| kept.iter().position(|&k| k == c)).collect();

        // Labels among identified training rows, in the reduced class space.
        let identified: Vec<usize> = (0..prepared.train_truth.len())
            .filter(|&i| remap[prepared.train_truth[i]].is_some())
            .collect();
        let reduced_truth: Vec<usize> = identified
            .iter()
            .map(|&i| remap[prepared.train_truth[i]].expect("identified"))
            .collect();
        let sub_mask = masked_labels(&reduced_truth, kept.len(), fraction, seed)?;
        let mut zero = vec![None; prepared.train_truth.len()];
        for (&i, l) in identified.iter().zip(sub_mask) {
            zero[i] = l;
        }

        let mut rng = rng_for(seed, stream::LEAVEOUT);
        let mut one: Vec<Option<usize>> = zero.iter().map(|l| l.map(|c| kept[c])).collect();
        for &h in &hidden {
            let members: Vec<usize> = (0..prepared.train_truth.len())
                .filter(|&i| prepared.train_truth[i] == h)
                .collect();
            let pick = *members
                .choose(&mut rng)
                .ok_or_else(|| Error::MissingFamily(dataset.families[h].clone()))?;
            one[pick] = Some(h);
        }

        let zero_out = run_variant(&prepared, &zero, kept.len(), variant, &cfg)?;
        let zero_preds: Vec<usize> = zero_out.test_predictions.iter().map(|&p| kept[p]).collect();
        let one_out = run_variant(&prepared, &one, f, variant, &cfg)?;
        for (setting, preds, labels) in [
            ("zero_shot", zero_preds, &zero),
            ("one_shot", one_out.test_predictions, &one),
        ] {
            records.push(RunRecord {
                experiment: "leaveout".into(),
                variant: variant.name().into(),
                setting: setting.into(),
                fraction,
                seed,
                n_train: prepared.split.train.len(),
                n_labeled: labels.iter().flatten().count(),
                n_test: prepared.split.test.len(),
                metrics: compute_metrics(&preds, &prepared.test_truth, f)?,
            });
        }
    }
    Ok(records)
}
