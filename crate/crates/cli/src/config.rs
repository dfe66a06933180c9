//! Run configuration: command-line flags over `--config` JSON over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dsgen::dataset::{load_calibration, read_json};
use dsgen::{Calibration, FitConfig, Interpolation};
use serde::{Deserialize, Serialize};

use crate::{AugmentCmd, BatchOptions, FitCmd};

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub tolerance: Option<f64>,
    pub trim: Option<bool>,
    pub trim_k: Option<f64>,
    pub max_samples: Option<usize>,
    pub seed: Option<u64>,
    pub interpolation: Option<Interpolation>,
    pub jobs: Option<usize>,
    pub overwrite: Option<bool>,
    pub strict: Option<bool>,
    pub global_model: Option<bool>,
    pub calib: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        read_json(path).with_context(|| format!("reading config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fit,
    Augment,
}

/// Fully resolved settings for a `fit` or `augment` run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub root: PathBuf,
    /// Report path for `fit`, output root for `augment`.
    pub out: PathBuf,
    pub calibration: Option<Calibration>,
    pub fit: FitConfig,
    pub interpolation: Interpolation,
    pub jobs: usize,
    pub overwrite: bool,
    pub strict: bool,
    pub global_model: bool,
}

impl RunConfig {
    pub fn for_fit(cmd: &FitCmd, file: &FileConfig) -> anyhow::Result<Self> {
        let out = cmd.out.clone().unwrap_or_else(|| cmd.batch.root.join("fit_report.json"));
        Self::resolve(Mode::Fit, &cmd.batch, out, None, false, file)
    }

    pub fn for_augment(cmd: &AugmentCmd, file: &FileConfig) -> anyhow::Result<Self> {
        Self::resolve(
            Mode::Augment,
            &cmd.batch,
            cmd.out.clone(),
            cmd.interp.map(Into::into),
            cmd.overwrite,
            file,
        )
    }

    fn resolve(
        mode: Mode,
        batch: &BatchOptions,
        out: PathBuf,
        interp: Option<Interpolation>,
        overwrite: bool,
        file: &FileConfig,
    ) -> anyhow::Result<Self> {
        if !batch.root.is_dir() {
            bail!("input root {} is not a directory", batch.root.display());
        }
        let fit = fit_config(batch, file)?;

        let calib_path = batch.calib.clone().or_else(|| file.calib.clone()).or_else(|| {
            let p = batch.root.join("calib.json");
            p.is_file().then_some(p)
        });
        let calibration = match calib_path {
            Some(p) => {
                let c = load_calibration(&p).with_context(|| format!("reading calibration {}", p.display()))?;
                c.to_rig::<f64>()
                    .with_context(|| format!("invalid calibration {}", p.display()))?;
                Some(c)
            }
            None => None,
        };

        let jobs = batch
            .jobs
            .or(file.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }

        Ok(Self {
            mode,
            root: batch.root.clone(),
            out,
            calibration,
            fit,
            interpolation: interp.or(file.interpolation).unwrap_or_default(),
            jobs,
            overwrite: overwrite || file.overwrite.unwrap_or(false),
            strict: batch.strict || file.strict.unwrap_or(false),
            global_model: batch.global_model || file.global_model.unwrap_or(false),
        })
    }
}

/// Fit options with flag > file > default precedence.
pub fn fit_config(batch: &BatchOptions, file: &FileConfig) -> anyhow::Result<FitConfig> {
    let d = FitConfig::default();
    let f = &batch.fit;
    let max_samples = match f.max_samples.or(file.max_samples) {
        Some(0) => None,
        Some(n) => Some(n),
        None => d.max_samples,
    };
    let cfg = FitConfig {
        phi_min: f.phi_min.or(file.phi_min).unwrap_or(d.phi_min),
        phi_max: f.phi_max.or(file.phi_max).unwrap_or(d.phi_max),
        grid_step: f.grid_step.or(file.grid_step).unwrap_or(d.grid_step),
        tolerance: f.tolerance.or(file.tolerance).unwrap_or(d.tolerance),
        trim: f.trim || file.trim.unwrap_or(d.trim),
        trim_k: f.trim_k.or(file.trim_k).unwrap_or(d.trim_k),
        max_samples,
        seed: f.seed.or(file.seed).unwrap_or(d.seed),
    };
    cfg.validate()?;
    Ok(cfg)
}
