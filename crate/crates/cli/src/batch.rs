//! `fit` and `augment` over a sample directory.

use anyhow::{bail, Context};
use dsgen::dataset::{load_sample, save_augmented, scan_manifest, write_json, StereoSample};
use dsgen::fit::MIN_OBSERVATIONS;
use dsgen::warp::{AugmentedSample, BranchCounts};
use dsgen::{
    augment_sample, extract_observations, fit_model, Calibration, DisparityObservations, FitConfig, FitReport,
    FitResultF64, Interpolation, ObservationsF64, StereoRigF64,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::report::{relative_message, Outcome, SCHEMA_VERSION};

#[derive(Serialize)]
struct BatchReport {
    schema_version: u32,
    command: Mode,
    settings: Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    global_model: Option<FitReport>,
    samples: Vec<SampleRecord>,
    summary: Summary,
}

#[derive(Serialize)]
struct Settings {
    fit: FitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    interpolation: Option<Interpolation>,
    global_model: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<Calibration>,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Serialize)]
struct SampleRecord {
    sample_id: String,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branches: Option<BranchCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<Outputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct Outputs {
    image: String,
    label: String,
}

#[derive(Serialize)]
struct Summary {
    total: usize,
    succeeded: usize,
    failed: usize,
    skipped: usize,
}

impl SampleRecord {
    fn failure(sample_id: &str, status: Status, error: String) -> Self {
        Self {
            sample_id: sample_id.to_owned(),
            status,
            fit: None,
            branches: None,
            outputs: None,
            error: Some(error),
        }
    }
}

pub fn run_fit(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    run(cfg)
}

pub fn run_augment(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.out == cfg.root {
        bail!("--out must differ from --root");
    }
    run(cfg)
}

struct Processed {
    fit: FitResultF64,
    augmented: Option<AugmentedSample<f64>>,
}

fn run(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("starting worker pool")?;
    let rig: Option<StereoRigF64> = cfg.calibration.as_ref().map(|c| c.to_rig()).transpose()?;
    let msg = |e: &dyn std::fmt::Display| relative_message(&format!("{e:#}"), &[&cfg.root, &cfg.out]);

    let entries = scan_manifest(&cfg.root)?;
    if entries.is_empty() {
        bail!("no samples found under {}", cfg.root.display());
    }
    let mut records = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    let mut ids = Vec::new();
    for e in &entries {
        if e.complete() {
            ids.push(e.sample_id.clone());
        } else {
            let reason = format!("incomplete sample, missing {}", e.missing().join(", "));
            if cfg.strict {
                bail!("{}: {reason}", e.sample_id);
            }
            warn!("skipping {}: {reason}", e.sample_id);
            failures.push((e.sample_id.clone(), reason.clone()));
            records.push(SampleRecord::failure(&e.sample_id, Status::Skipped, reason));
        }
    }
    if ids.is_empty() {
        bail!("no complete samples under {}", cfg.root.display());
    }
    info!("{} complete samples, {} jobs", ids.len(), cfg.jobs);

    let global = if cfg.global_model {
        let fit = fit_global(cfg, &pool, &ids)?;
        info!(
            "global model: roll {:.6} rad, gain {:.6}, offset {:.3}",
            fit.model.roll(),
            fit.model.gain(),
            fit.model.offset()
        );
        Some(fit)
    } else {
        None
    };

    // Each chunk is processed in parallel and saved in sorted order, so the
    // outputs do not depend on the job count.
    for chunk in ids.chunks(cfg.jobs) {
        let results: Vec<anyhow::Result<Processed>> =
            pool.install(|| chunk.par_iter().map(|id| process(cfg, global.as_ref(), id)).collect());
        for (id, result) in chunk.iter().zip(results) {
            let saved = result.and_then(|p| {
                let outputs = match &p.augmented {
                    Some(aug) => {
                        let saved = save_augmented(&cfg.out, aug, cfg.overwrite)?;
                        Some(Outputs {
                            image: relative_message(&saved.image.display().to_string(), &[&cfg.out]),
                            label: relative_message(&saved.label.display().to_string(), &[&cfg.out]),
                        })
                    }
                    None => None,
                };
                Ok((p, outputs))
            });
            match saved {
                Ok((p, outputs)) => records.push(SampleRecord {
                    sample_id: id.clone(),
                    status: Status::Ok,
                    fit: Some(FitReport::new(&p.fit, rig.as_ref())),
                    branches: p.augmented.as_ref().map(|a| a.branches),
                    outputs,
                    error: None,
                }),
                Err(e) => {
                    let reason = msg(&e);
                    if cfg.strict {
                        bail!("{id}: {reason}");
                    }
                    warn!("{id} failed: {reason}");
                    failures.push((id.clone(), reason.clone()));
                    records.push(SampleRecord::failure(id, Status::Failed, reason));
                }
            }
        }
    }
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let summary = Summary {
        total: records.len(),
        succeeded: records.iter().filter(|r| matches!(r.status, Status::Ok)).count(),
        failed: records.iter().filter(|r| matches!(r.status, Status::Failed)).count(),
        skipped: records.iter().filter(|r| matches!(r.status, Status::Skipped)).count(),
    };
    let report = BatchReport {
        schema_version: SCHEMA_VERSION,
        command: cfg.mode,
        settings: Settings {
            fit: cfg.fit.clone(),
            interpolation: (cfg.mode == Mode::Augment).then_some(cfg.interpolation),
            global_model: cfg.global_model,
            calibration: cfg.calibration,
        },
        global_model: global.as_ref().map(|g| FitReport::new(g, rig.as_ref())),
        samples: records,
        summary,
    };
    let report_path = match cfg.mode {
        Mode::Fit => cfg.out.clone(),
        Mode::Augment => cfg.out.join("augment_report.json"),
    };
    write_json(&report_path, &report)?;
    info!(
        "{} ok, {} failed, {} skipped; report {}",
        report.summary.succeeded,
        report.summary.failed,
        report.summary.skipped,
        report_path.display()
    );
    Ok(Outcome::from_failures(failures))
}

fn process(cfg: &RunConfig, global: Option<&FitResultF64>, id: &str) -> anyhow::Result<Processed> {
    let sample = load_sample(&cfg.root, id)?;
    let fit = match global {
        Some(g) => *g,
        None => fit_sample(&sample, &cfg.fit)?,
    };
    let augmented = match cfg.mode {
        Mode::Fit => None,
        Mode::Augment => Some(augment_sample(&sample, &fit, cfg.interpolation)?),
    };
    Ok(Processed { fit, augmented })
}

fn fit_sample(sample: &StereoSample, config: &FitConfig) -> dsgen::Result<FitResultF64> {
    let obs: ObservationsF64 = extract_observations(&sample.disparity, &sample.road_mask, config)?;
    fit_model(&obs, config)
}

/// One model over the road observations of every sample. Each sample
/// contributes at most `max_samples` observations.
fn fit_global(cfg: &RunConfig, pool: &rayon::ThreadPool, ids: &[String]) -> anyhow::Result<FitResultF64> {
    let per_sample: Vec<anyhow::Result<ObservationsF64>> = pool.install(|| {
        ids.par_iter()
            .map(|id| {
                let sample = load_sample(&cfg.root, id)?;
                Ok(extract_observations(&sample.disparity, &sample.road_mask, &cfg.fit)?)
            })
            .collect()
    });
    let mut all = Vec::new();
    for (id, obs) in ids.iter().zip(per_sample) {
        match obs {
            Ok(o) => all.extend_from_slice(o.samples()),
            Err(e) if cfg.strict => return Err(e.context(id.clone())),
            Err(e) => warn!("{id} contributes no observations: {}", relative_message(&format!("{e:#}"), &[&cfg.root])),
        }
    }
    if all.len() < MIN_OBSERVATIONS {
        bail!("only {} road observations across all samples", all.len());
    }
    let obs = DisparityObservations::new(all)?;
    Ok(fit_model(&obs, &cfg.fit)?)
}
