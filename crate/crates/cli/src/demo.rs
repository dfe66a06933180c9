//! `demo`: synthetic render, fit, augment and evaluate with known truth.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use dsgen::dataset::{load_sample, save_augmented, save_sample, write_json, write_mask, MASK_DIR};
use dsgen::synth::SceneSpec;
use dsgen::warp::BranchCounts;
use dsgen::{
    augment_sample, extract_observations, fit_model, render_planar_scene, BinaryMask, Calibration, FitReport, Image,
    ObservationsF64, RoadProjectionModelF64, SyntheticScene,
};
use log::info;
use serde::Serialize;

use crate::config::{fit_config, FileConfig};
use crate::evaluate::{evaluate_dirs, SampleScore};
use crate::report::{Outcome, SCHEMA_VERSION};
use crate::{BatchOptions, DemoCmd};

pub const ROLL_TOLERANCE: f64 = 1e-4;
pub const RELATIVE_TOLERANCE: f64 = 1e-3;
/// Mean absolute photometric error on the road, intensities in `[0, 1]`.
pub const MAE_TOLERANCE: f64 = 2.0 / 255.0;
pub const RUNTIME_BUDGET_S: f64 = 10.0;

/// Pixels within this many disparity levels of the fitted model count as road.
const PREDICTION_BAND: f64 = 1.0;

#[derive(Debug, Serialize)]
struct Truth {
    phi_rad: f64,
    varkappa: f64,
    kappa: f64,
}

#[derive(Debug, Serialize)]
struct Residuals {
    roll_error_rad: f64,
    varkappa_relative_error: f64,
    kappa_relative_error: f64,
    road_mae: f64,
    partition_exact: bool,
}

#[derive(Debug, Serialize)]
struct DemoReport {
    schema_version: u32,
    seed: u64,
    width: usize,
    height: usize,
    truth: Truth,
    fit: FitReport,
    branches: BranchCounts,
    residuals: Residuals,
    evaluation: Option<SampleScore>,
    passed: bool,
}

pub fn run(cmd: &DemoCmd, file: &FileConfig) -> anyhow::Result<Outcome> {
    let tmp;
    let out: PathBuf = match &cmd.out {
        Some(p) => p.clone(),
        None => {
            tmp = tempfile::tempdir().context("creating temporary directory")?;
            tmp.path().to_path_buf()
        }
    };
    let start = Instant::now();
    let fit_cfg = fit_config(&BatchOptions::default(), file)?;
    let interpolation = file.interpolation.unwrap_or_default();
    let overwrite = cmd.overwrite || file.overwrite.unwrap_or(false);

    let spec = SceneSpec::kitti_like(cmd.seed);
    let scene = SyntheticScene::from_spec(&spec)?;
    let truth = scene.model()?;
    let data = out.join("data");
    let rendered = render_planar_scene(&scene)?;
    save_sample(&data, &rendered, overwrite)?;
    write_json(&data.join("calib.json"), &Calibration::from_rig(&scene.rig))?;

    let sample = load_sample(&data, &spec.sample_id)?;
    let obs: ObservationsF64 = extract_observations(&sample.disparity, &sample.road_mask, &fit_cfg)?;
    let fit = fit_model(&obs, &fit_cfg)?;
    let aug = augment_sample(&sample, &fit, interpolation)?;
    save_augmented(&out.join("generated"), &aug, overwrite)?;

    let pred_dir = out.join("pred");
    let pred_path = pred_dir.join(format!("{}.png", spec.sample_id));
    if pred_path.exists() && !overwrite {
        bail!("{} exists; pass --overwrite", pred_path.display());
    }
    write_mask(&pred_path, &model_consistent_mask(&sample.disparity, &fit.model)?)?;
    let evaluation = evaluate_dirs(&pred_dir, &data.join(MASK_DIR), None)?.samples.into_iter().next();
    let elapsed = start.elapsed().as_secs_f64();

    let pixels = (spec.width * spec.height) as u64;
    let residuals = Residuals {
        roll_error_rad: (fit.model.roll() - truth.roll()).abs(),
        varkappa_relative_error: (fit.model.gain() / truth.gain() - 1.0).abs(),
        kappa_relative_error: (fit.model.offset() / truth.offset() - 1.0).abs(),
        road_mae: road_mae(&aug.generated_image, &sample.ref_image, &sample.road_mask),
        partition_exact: aug.branches.total() == pixels,
    };
    let checks = [
        ("roll error (rad)", residuals.roll_error_rad, ROLL_TOLERANCE),
        ("gain relative error", residuals.varkappa_relative_error, RELATIVE_TOLERANCE),
        ("offset relative error", residuals.kappa_relative_error, RELATIVE_TOLERANCE),
        ("road MAE (intensity)", residuals.road_mae, MAE_TOLERANCE),
        ("runtime (s)", elapsed, RUNTIME_BUDGET_S),
    ];
    let mut passed = residuals.partition_exact;
    for (name, value, tol) in checks {
        let ok = value <= tol;
        passed &= ok;
        println!("{:<24} {:>12.3e}  <= {:.3e}  {}", name, value, tol, verdict(ok));
    }
    println!(
        "{:<24} {:>12}  == {}  {}",
        "branch partition",
        aug.branches.total(),
        pixels,
        verdict(residuals.partition_exact)
    );
    if let Some(s) = &evaluation {
        println!(
            "{:<24} {:>12.4}  (IoU {:.4})",
            "road F-score", s.metrics.fscore.value, s.metrics.iou.value
        );
    }

    let report = DemoReport {
        schema_version: SCHEMA_VERSION,
        seed: cmd.seed,
        width: spec.width,
        height: spec.height,
        truth: truth_of(&truth),
        fit: FitReport::new(&fit, Some(&scene.rig)),
        branches: aug.branches,
        residuals,
        evaluation,
        passed,
    };
    write_json(&out.join("demo_report.json"), &report)?;
    if cmd.out.is_some() {
        info!("artifacts in {}", out.display());
    }
    if !passed {
        bail!("synthetic loop outside tolerance");
    }
    Ok(Outcome::Success)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn truth_of(m: &RoadProjectionModelF64) -> Truth {
    Truth {
        phi_rad: m.roll(),
        varkappa: m.gain(),
        kappa: m.offset(),
    }
}

/// Valid disparities that agree with the model to within the prediction band.
fn model_consistent_mask(disparity: &dsgen::DisparityMap, model: &RoadProjectionModelF64) -> anyhow::Result<BinaryMask> {
    let (w, h) = disparity.dims();
    let mut mask = BinaryMask::empty(w, h)?;
    for v in 0..h {
        for u in 0..w {
            if let Some(d) = disparity.get(u, v) {
                let expected = model.disparity(dsgen::Pixel::new(u as f64, v as f64));
                if (d as f64 - expected).abs() <= PREDICTION_BAND {
                    mask.set(u, v, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Mean absolute difference over road pixels and channels, scaled to `[0, 1]`.
pub fn road_mae(a: &Image, b: &Image, mask: &BinaryMask) -> f64 {
    let c = a.channels();
    let (mut sum, mut n) = (0u64, 0u64);
    for (i, _) in mask.values().iter().enumerate().filter(|(_, &road)| road) {
        for k in 0..c {
            sum += a.data()[i * c + k].abs_diff(b.data()[i * c + k]) as u64;
            n += 1;
        }
    }
    if n == 0 {
        return f64::INFINITY;
    }
    sum as f64 / n as f64 / 255.0
}
