//! `evaluate`: pixel-wise scores of predicted road masks.

use std::path::Path;

use anyhow::bail;
use dsgen::dataset::{png_stems, read_mask, write_json};
use dsgen::metrics::{confusion_in_region, format_table};
use dsgen::{segmentation_metrics, ConfusionCounts, SegmentationMetrics};
use log::{info, warn};
use serde::Serialize;

use crate::report::{relative_message, Outcome, SCHEMA_VERSION};
use crate::EvaluateCmd;

#[derive(Debug, Serialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub counts: ConfusionCounts,
    pub metrics: SegmentationMetrics,
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub schema_version: u32,
    pub samples: Vec<SampleScore>,
    /// Scores of the pooled counts over all evaluated samples.
    pub total: Option<SampleScore>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub sample_id: String,
    pub reason: String,
}

/// Scores every ground-truth mask in `gt` against the same-named file in
/// `pred`, optionally restricted to the same-named mask in `roi`.
pub fn evaluate_dirs(pred: &Path, gt: &Path, roi: Option<&Path>) -> anyhow::Result<Evaluation> {
    for dir in [Some(pred), Some(gt), roi].into_iter().flatten() {
        if !dir.is_dir() {
            bail!("{} is not a directory", dir.display());
        }
    }
    let stems = png_stems(gt)?;
    if stems.is_empty() {
        bail!("no ground-truth masks in {}", gt.display());
    }
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut pooled = ConfusionCounts::default();
    for stem in &stems {
        let file = format!("{stem}.png");
        let scored = (|| -> anyhow::Result<SampleScore> {
            let g = read_mask(&gt.join(&file))?;
            let p = read_mask(&pred.join(&file))?;
            let r = roi.map(|d| read_mask(&d.join(&file))).transpose()?;
            let counts = confusion_in_region(&p, &g, r.as_ref())?;
            Ok(SampleScore {
                sample_id: stem.clone(),
                counts,
                metrics: segmentation_metrics(&counts)?,
            })
        })();
        match scored {
            Ok(s) => {
                pooled += s.counts;
                samples.push(s);
            }
            Err(e) => {
                let roots: Vec<&Path> = [Some(pred), Some(gt), roi].into_iter().flatten().collect();
                let reason = relative_message(&format!("{e:#}"), &roots);
                warn!("{stem}: {reason}");
                failures.push(Failure {
                    sample_id: stem.clone(),
                    reason,
                });
            }
        }
    }
    let total = if samples.is_empty() {
        None
    } else {
        Some(SampleScore {
            sample_id: "total".into(),
            counts: pooled,
            metrics: segmentation_metrics(&pooled)?,
        })
    };
    Ok(Evaluation {
        schema_version: SCHEMA_VERSION,
        samples,
        total,
        failures,
    })
}

impl Evaluation {
    pub fn table(&self) -> String {
        let rows: Vec<(String, SegmentationMetrics)> = self
            .samples
            .iter()
            .chain(self.total.as_ref())
            .map(|s| (s.sample_id.clone(), s.metrics))
            .collect();
        format_table(&rows)
    }
}

pub fn run(cmd: &EvaluateCmd) -> anyhow::Result<Outcome> {
    let eval = evaluate_dirs(&cmd.pred, &cmd.gt, cmd.roi.as_deref())?;
    if eval.samples.is_empty() {
        bail!("no sample could be evaluated");
    }
    print!("{}", eval.table());
    if let Some(out) = &cmd.out {
        write_json(out, &eval)?;
        info!("metrics written to {}", out.display());
    }
    Ok(Outcome::from_failures(
        eval.failures.into_iter().map(|f| (f.sample_id, f.reason)).collect(),
    ))
}
