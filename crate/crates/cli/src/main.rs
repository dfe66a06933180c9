//! `dsgen`: fit road models, synthesize reference views, render synthetic
//! scenes and score road masks over KITTI-style directories.

mod batch;
mod config;
mod demo;
mod evaluate;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsgen::dataset::{read_json, save_sample, write_json};
use dsgen::synth::SceneSpec;
use dsgen::{render_planar_scene, Calibration, Interpolation, SyntheticScene};

use crate::report::{print_error_summary, Outcome};

#[derive(Debug, Parser)]
#[command(name = "dsgen", version, about)]
struct Cli {
    /// JSON file with defaults for fit options, interpolation, jobs and flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one road model per sample and write a JSON report.
    Fit(FitCmd),
    /// Fit, generate reference views and save them with copied labels.
    Augment(AugmentCmd),
    /// Render a synthetic planar scene into a sample directory.
    Render(RenderCmd),
    /// Score predicted road masks against ground truth.
    Evaluate(EvaluateCmd),
    /// Render, fit, augment and evaluate a synthetic scene as a self-check.
    Demo(DemoCmd),
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitOptions {
    #[arg(long, allow_hyphen_values = true)]
    pub phi_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi_max: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Final roll bracket width (radians).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Refit once after dropping residuals beyond trim-k median absolute deviations.
    #[arg(long)]
    pub trim: bool,
    #[arg(long)]
    pub trim_k: Option<f64>,
    /// Observation cap per sample; 0 disables subsampling.
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BatchOptions {
    /// Sample root with image_2/, image_3/, disp/ and gt_mask/.
    #[arg(long)]
    pub root: PathBuf,
    /// Calibration JSON (f, o_u, o_v, baseline_Tc).
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Fit a single model on all samples instead of one per sample.
    #[arg(long)]
    pub global_model: bool,
    /// Abort on the first failing sample.
    #[arg(long)]
    pub strict: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub batch: BatchOptions,
    /// Report path (default: <root>/fit_report.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Bilinear,
    Nearest,
}

impl From<InterpArg> for Interpolation {
    fn from(a: InterpArg) -> Self {
        match a {
            InterpArg::Bilinear => Interpolation::Bilinear,
            InterpArg::Nearest => Interpolation::Nearest,
        }
    }
}

#[derive(Debug, Args)]
pub struct AugmentCmd {
    #[command(flatten)]
    pub batch: BatchOptions,
    /// Output root for generated images, labels, manifest and report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub interp: Option<InterpArg>,
    /// Replace existing outputs.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct RenderCmd {
    /// Scene description JSON.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    /// Directory of predicted mask PNGs.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth mask PNGs with matching names.
    #[arg(long)]
    pub gt: PathBuf,
    /// Optional directory of region-of-interest masks.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Metrics JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoCmd {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep all artifacts under this directory instead of a temporary one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(failures)) => {
            print_error_summary("some samples failed", &failures);
            ExitCode::from(2)
        }
        Err(err) => {
            print_error_summary(&format!("{err:#}"), &[]);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let file_config = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    match cli.command {
        Command::Fit(cmd) => batch::run_fit(&config::RunConfig::for_fit(&cmd, &file_config)?),
        Command::Augment(cmd) => batch::run_augment(&config::RunConfig::for_augment(&cmd, &file_config)?),
        Command::Render(cmd) => render(&cmd),
        Command::Evaluate(cmd) => evaluate::run(&cmd),
        Command::Demo(cmd) => demo::run(&cmd, &file_config),
    }
}

fn render(cmd: &RenderCmd) -> anyhow::Result<Outcome> {
    let spec: SceneSpec = read_json(&cmd.scene)?;
    let scene = SyntheticScene::from_spec(&spec)?;
    let sample = render_planar_scene(&scene)?;
    save_sample(&cmd.out, &sample, cmd.overwrite)?;
    write_json(&cmd.out.join("calib.json"), &Calibration::from_rig(&scene.rig))?;
    log::info!(
        "rendered {} ({}x{}, {} road pixels) into {}",
        sample.sample_id,
        spec.width,
        spec.height,
        sample.road_mask.count(),
        cmd.out.display()
    );
    Ok(Outcome::Success)
}
