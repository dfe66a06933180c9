//! Road-plane disparity model fitting and stereo view synthesis.
//!
//! A planar road seen by a rectified stereo rig induces a homography whose
//! only nontrivial row is a linear function of the rotated image row. This
//! crate fits that model to road disparities, warps the target image into
//! the reference view with it, renders synthetic planar scenes with exact
//! ground truth, reads and writes KITTI-style sample directories and scores
//! binary road segmentations.
//!
//! Geometry and fitting are generic over [`Real`] (`f32` or `f64`); the
//! `F64` aliases below are what the I/O and CLI layers use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod golden;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use fit::{
    extract_observations, fit_gain_offset, fit_model, fit_model_bruteforce, stationary_roll, DisparityObservations,
    FitConfig, FitReport, FitResult, Observation,
};
pub use geometry::{
    apply_homography, homography_from_model, homography_general, homography_stereo, model_disparity, model_to_plane,
    plane_to_model, w_transform, Calibration, CameraIntrinsics, Homography, PlaneParams, Pixel, RoadProjectionModel,
    StereoRig,
};
pub use metrics::{confusion, segmentation_metrics, ConfusionCounts, SegmentationMetrics};
pub use raster::{BinaryMask, DisparityMap, Image};
pub use scalar::Real;
pub use synth::{ground_truth_disparity, render_planar_scene, SyntheticScene};
pub use warp::{augment_sample, generate_view, AugmentedSample, Interpolation};

pub type CameraIntrinsicsF64 = CameraIntrinsics<f64>;
pub type StereoRigF64 = StereoRig<f64>;
pub type PlaneParamsF64 = PlaneParams<f64>;
pub type RoadProjectionModelF64 = RoadProjectionModel<f64>;
pub type HomographyF64 = Homography<f64>;
pub type ObservationsF64 = DisparityObservations<f64>;
pub type FitResultF64 = FitResult<f64>;

pub type RoadProjectionModelF32 = RoadProjectionModel<f32>;
pub type ObservationsF32 = DisparityObservations<f32>;
pub type FitResultF32 = FitResult<f32>;
