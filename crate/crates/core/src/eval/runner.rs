//! Config-driven experiment execution with report and weight files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{parse_timestamp, Dataset};
use crate::error::{Error, Result};
use crate::eval::experiments::{
    ablation_experiment, leaveout_experiment, run_fraction, saturation_experiment, temporal_experiment, RunRecord,
};
use crate::eval::report::{report_stem, write_report};
use crate::eval::synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
use crate::schema::FeatureSchema;
use crate::ssl::write_epoch_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Saturation,
    Temporal,
    Leaveout,
    Ablation,
    SyntheticBench,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Saturation,
        ExperimentKind::Temporal,
        ExperimentKind::Leaveout,
        ExperimentKind::Ablation,
        ExperimentKind::SyntheticBench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Saturation => "saturation",
            ExperimentKind::Temporal => "temporal",
            ExperimentKind::Leaveout => "leaveout",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::SyntheticBench => "synthetic-bench",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidConfig(format!("unknown experiment {name:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Synthetic data for `kind`: the leave-out driver uses
/// `experiment.n_families` families.
pub fn synthetic_for(kind: ExperimentKind, config: &RunConfig) -> Result<SyntheticData> {
    let spec = match kind {
        ExperimentKind::Leaveout => SyntheticSpec {
            families: config.experiment.n_families,
            ..config.experiment.synthetic.clone()
        },
        _ => config.experiment.synthetic.clone(),
    };
    generate_synthetic(&spec)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs `kind` on `dataset` and writes its files under `out`.
pub fn run_experiment(
    kind: ExperimentKind,
    config: &RunConfig,
    dataset: &Dataset,
    schema: &FeatureSchema,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let e = &config.experiment;
    let p = &config.pipeline;
    let mut written = Vec::new();
    let (stem, records): (String, Vec<RunRecord>) = match kind {
        ExperimentKind::Saturation => (
            report_stem(kind.name(), &e.fractions, &e.seeds),
            saturation_experiment(dataset, schema, &e.fractions, &e.seeds, &e.variants, p)?,
        ),
        ExperimentKind::Ablation => (
            report_stem(kind.name(), &[config.labels_fraction], &e.seeds),
            ablation_experiment(dataset, schema, config.labels_fraction, &e.seeds, &e.variants, p)?,
        ),
        ExperimentKind::Leaveout => (
            report_stem(kind.name(), &[config.labels_fraction], &e.seeds),
            leaveout_experiment(
                dataset,
                schema,
                e.unidentified,
                config.labels_fraction,
                &e.seeds,
                config.variant,
                p,
            )?,
        ),
        ExperimentKind::Temporal => {
            let cutoff = parse_timestamp(&e.cutoff)?;
            let edges = e
                .boundaries
                .iter()
                .map(|b| parse_timestamp(b))
                .collect::<Result<Vec<_>>>()?;
            let res = temporal_experiment(
                dataset,
                schema,
                cutoff,
                &edges,
                config.labels_fraction,
                &e.seeds,
                &e.variants,
                p,
            )?;
            let stem = report_stem(kind.name(), &[config.labels_fraction], &e.seeds);
            let audit = out.join(format!("{stem}_train_rows.json"));
            write_json(&audit, &res.train_rows)?;
            written.push(audit);
            (stem, res.records)
        }
        ExperimentKind::SyntheticBench => {
            let stem = report_stem(kind.name(), &[config.labels_fraction], &[config.seed]);
            let run = run_fraction(
                kind.name(),
                dataset,
                schema,
                config.labels_fraction,
                config.seed,
                &e.variants,
                p,
            )?;
            let weights = out.join("weights");
            std::fs::create_dir_all(&weights).map_err(|e| Error::io(&weights, e))?;
            if let (Some(ctx), false) = (&run.prepared.context, run.prepared.encoder_curve.is_empty()) {
                let m = weights.join(format!("{stem}_encoder.json"));
                ctx.model().save(&m)?;
                let c = weights.join(format!("{stem}_encoder_curve.json"));
                write_json(&c, &run.prepared.encoder_curve)?;
                written.extend([m, c]);
            }
            for (rec, o) in run.records.iter().zip(&run.outcomes) {
                let m = weights.join(format!("{stem}_{}_classifier.json", rec.variant));
                o.model.save(&m)?;
                let l = weights.join(format!("{stem}_{}_log.jsonl", rec.variant));
                write_epoch_log(&l, &o.log)?;
                written.extend([m, l]);
            }
            (stem, run.records)
        }
    };
    let files = write_report(out, &stem, &records, &dataset.families)?;
    // The echo omits the output directory so reruns elsewhere match byte for byte.
    let mut echo = config.clone();
    echo.paths.out = None;
    let cfg_path = out.join(format!("{stem}_config.json"));
    std::fs::write(&cfg_path, echo.to_json() + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    written.extend([files.runs, files.per_family, files.summary, cfg_path]);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.name()).unwrap(), k);
        }
        let err = ExperimentKind::parse("bench").unwrap_err().to_string();
        assert!(err.contains("synthetic-bench"), "{err}");
    }

    #[test]
    fn leaveout_data_uses_its_family_count() {
        let mut c = RunConfig::default();
        c.experiment.synthetic.samples_per_family = 10;
        c.experiment.n_families = 6;
        assert_eq!(synthetic_for(ExperimentKind::Leaveout, &c).unwrap().dataset.num_families(), 6);
        assert_eq!(synthetic_for(ExperimentKind::Ablation, &c).unwrap().dataset.num_families(), 5);
    }
}
