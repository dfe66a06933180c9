//! Ground-truth stereo frames of a textured planar road.
//!
//! Both cameras cast one ray through each pixel center. Rays that meet the
//! plane in front of the camera and no farther than `max_depth` sample a
//! procedural texture at the hit point; all other pixels get the background
//! value. Disparity and road mask come from the closed-form plane geometry
//! and use the same on-disk conventions as real data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::StereoSample;
use crate::error::{Error, Result};
use crate::geometry::{plane_to_model, Calibration, PlaneParams, Pixel, RoadProjectionModel, StereoRig};
use crate::raster::{decode_disparity, encode_disparity, BinaryMask, DisparityMap, Image};
use crate::scalar::Real;

/// Disparity of the plane at `p`, or `None` when the pixel ray misses the
/// plane or meets it beyond `max_depth`.
///
/// `d = T_c (n_x (u - o_u) + n_y (v - o_v) + f n_z) / D`.
pub fn ground_truth_disparity<T: Real>(
    rig: &StereoRig<T>,
    plane: &PlaneParams<T>,
    p: Pixel<T>,
    max_depth: T,
) -> Option<T> {
    let k = rig.intrinsics();
    let [nx, ny, nz] = plane.normal();
    // f * (n . ray) with ray = ((u - o_u) / f, (v - o_v) / f, 1)
    let facing = nx * (p.u - k.o_u()) + ny * (p.v - k.o_v()) + k.f() * nz;
    if !(facing > T::zero()) {
        return None;
    }
    let depth = plane.distance() * k.f() / facing;
    if depth > max_depth {
        return None;
    }
    Some(rig.baseline() * facing / plane.distance())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    /// Two crossing sinusoids; band-limited, suited to interpolation checks.
    #[default]
    Sinusoid,
    /// Square checkerboard; aliases, for visual inspection only.
    Checkerboard,
}

fn default_period() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    #[serde(default)]
    pub kind: TextureKind,
    #[serde(default)]
    pub seed: u64,
    /// Base period (sinusoid) or square size (checkerboard), meters.
    #[serde(default = "default_period")]
    pub period_m: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            kind: TextureKind::Sinusoid,
            seed: 0,
            period_m: default_period(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub distance: f64,
}

fn default_sample_id() -> String {
    "synthetic_000000".into()
}

fn default_channels() -> usize {
    3
}

fn default_max_depth() -> f64 {
    40.0
}

/// JSON scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "default_sample_id")]
    pub sample_id: String,
    pub calibration: Calibration,
    pub plane: PlaneSpec,
    #[serde(default)]
    pub texture: TextureSpec,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default)]
    pub background: u8,
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
    /// Gaussian noise added to valid disparities (pixels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disparity_noise_sigma: Option<f64>,
}

impl SceneSpec {
    /// KITTI-sized level-ish road with a slight roll.
    pub fn kitti_like(seed: u64) -> Self {
        let roll: f64 = 0.02;
        let pitch: f64 = 0.01;
        Self {
            sample_id: default_sample_id(),
            calibration: Calibration {
                f: 721.5377,
                o_u: 609.5593,
                o_v: 172.854,
                baseline_tc: 0.5372,
            },
            plane: PlaneSpec {
                normal: [-roll.sin(), roll.cos() * pitch.cos(), pitch.sin()],
                distance: 1.65,
            },
            texture: TextureSpec {
                seed,
                ..TextureSpec::default()
            },
            width: 1242,
            height: 375,
            channels: 3,
            background: 0,
            max_depth: default_max_depth(),
            disparity_noise_sigma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub sample_id: String,
    pub rig: StereoRig<f64>,
    pub plane: PlaneParams<f64>,
    pub texture: TextureSpec,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub background: u8,
    pub max_depth: f64,
    pub disparity_noise_sigma: Option<f64>,
}

impl SyntheticScene {
    pub fn from_spec(spec: &SceneSpec) -> Result<Self> {
        if spec.width == 0 || spec.height == 0 {
            return Err(Error::DegenerateScene("image dimensions must be positive".into()));
        }
        if spec.channels != 1 && spec.channels != 3 {
            return Err(Error::DegenerateScene(format!("unsupported channel count {}", spec.channels)));
        }
        if !(spec.max_depth > 0.0) {
            return Err(Error::DegenerateScene("max_depth must be positive".into()));
        }
        if !(spec.texture.period_m > 0.0) {
            return Err(Error::DegenerateScene("texture period must be positive".into()));
        }
        if spec.disparity_noise_sigma.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::DegenerateScene("noise sigma must be non-negative".into()));
        }
        Ok(Self {
            sample_id: spec.sample_id.clone(),
            rig: spec.calibration.to_rig()?,
            plane: PlaneParams::new(spec.plane.normal, spec.plane.distance)?,
            texture: spec.texture.clone(),
            width: spec.width,
            height: spec.height,
            channels: spec.channels,
            background: spec.background,
            max_depth: spec.max_depth,
            disparity_noise_sigma: spec.disparity_noise_sigma,
        })
    }

    /// The road model this scene's plane induces.
    pub fn model(&self) -> Result<RoadProjectionModel<f64>> {
        plane_to_model(&self.rig, &self.plane)
    }
}

/// Procedural texture evaluated in in-plane coordinates.
struct Texture {
    kind: TextureKind,
    period: f64,
    // in-plane orthonormal basis
    e1: [f64; 3],
    e2: [f64; 3],
    waves: [(f64, f64, f64); 2],
    phases: [f64; 3],
    origin: (f64, f64),
}

impl Texture {
    fn new(spec: &TextureSpec, normal: [f64; 3]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let axis = if normal[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let along = dot(&axis, &normal);
        let e1 = normalize([
            axis[0] - along * normal[0],
            axis[1] - along * normal[1],
            axis[2] - along * normal[2],
        ]);
        let e2 = cross(&normal, &e1);
        let tau = std::f64::consts::TAU;
        let a1 = rng.random_range(0.2..1.3);
        let a2 = a1 + rng.random_range(0.7..1.4);
        Self {
            kind: spec.kind,
            period: spec.period_m,
            e1,
            e2,
            waves: [
                (a1, spec.period_m, rng.random_range(0.0..tau)),
                (a2, spec.period_m * 1.37, rng.random_range(0.0..tau)),
            ],
            phases: [0.0, rng.random_range(0.5..2.0), rng.random_range(2.5..4.0)],
            origin: (rng.random_range(0.0..spec.period_m), rng.random_range(0.0..spec.period_m)),
        }
    }

    fn sample(&self, point: [f64; 3], out: &mut [u8]) {
        let s = dot(&point, &self.e1);
        let t = dot(&point, &self.e2);
        match self.kind {
            TextureKind::Sinusoid => {
                let tau = std::f64::consts::TAU;
                let [(a1, l1, p1), (a2, l2, p2)] = self.waves;
                let x1 = tau * (s * a1.cos() + t * a1.sin()) / l1 + p1;
                let x2 = tau * (s * a2.cos() + t * a2.sin()) / l2 + p2;
                for (c, o) in out.iter_mut().enumerate() {
                    let value = 128.0 + 55.0 * (x1 + self.phases[c]).sin() + 35.0 * (x2 - self.phases[c]).sin();
                    *o = value.round().clamp(0.0, 255.0) as u8;
                }
            }
            TextureKind::Checkerboard => {
                let i = ((s + self.origin.0) / self.period).floor() as i64;
                let j = ((t + self.origin.1) / self.period).floor() as i64;
                let value = if (i + j).rem_euclid(2) == 0 { 200 } else { 55 };
                out.fill(value);
            }
        }
    }
}

/// Renders the reference and target images, the exact (1/256-quantized)
/// disparity and the road mask.
pub fn render_planar_scene(scene: &SyntheticScene) -> Result<StereoSample> {
    let (width, height, channels) = (scene.width, scene.height, scene.channels);
    let rig = &scene.rig;
    let k = *rig.intrinsics();
    let [nx, ny, nz] = scene.plane.normal();
    let distance = scene.plane.distance();
    let baseline = rig.baseline();
    if distance - nx * baseline <= 0.0 {
        return Err(Error::DegenerateScene("target camera is not on the camera side of the plane".into()));
    }
    let texture = Texture::new(&scene.texture, scene.plane.normal());
    let stride = width * channels;

    let rows: Vec<(Vec<u8>, Vec<u8>, Vec<f32>)> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut ref_row = vec![scene.background; stride];
            let mut tgt_row = vec![scene.background; stride];
            let mut disp_row = vec![0.0f32; width];
            for u in 0..width {
                let ray = [(u as f64 - k.o_u()) / k.f(), (v as f64 - k.o_v()) / k.f(), 1.0];
                let facing = nx * ray[0] + ny * ray[1] + nz * ray[2];
                if facing <= 0.0 {
                    continue;
                }
                let px = u * channels..(u + 1) * channels;
                let t_ref = distance / facing;
                if t_ref <= scene.max_depth {
                    texture.sample(ray.map(|c| c * t_ref), &mut ref_row[px.clone()]);
                }
                let t_tgt = (distance - nx * baseline) / facing;
                if t_tgt <= scene.max_depth {
                    let hit = [baseline + ray[0] * t_tgt, ray[1] * t_tgt, t_tgt];
                    texture.sample(hit, &mut tgt_row[px]);
                }
                if let Some(d) = ground_truth_disparity(rig, &scene.plane, Pixel::new(u as f64, v as f64), scene.max_depth) {
                    disp_row[u] = decode_disparity(encode_disparity(d as f32));
                }
            }
            (ref_row, tgt_row, disp_row)
        })
        .collect();

    let mut ref_data = Vec::with_capacity(stride * height);
    let mut tgt_data = Vec::with_capacity(stride * height);
    let mut disp = Vec::with_capacity(width * height);
    for (r, t, d) in rows {
        ref_data.extend(r);
        tgt_data.extend(t);
        disp.extend(d);
    }

    if let Some(sigma) = scene.disparity_noise_sigma.filter(|s| *s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.texture.seed ^ 0x9e37_79b9_7f4a_7c15);
        let noise = Normal::new(0.0, sigma).expect("valid sigma");
        for d in disp.iter_mut().filter(|d| **d > 0.0) {
            let noisy = (*d as f64 + noise.sample(&mut rng)).max(1.0 / 256.0);
            *d = decode_disparity(encode_disparity(noisy as f32));
        }
    }

    let mask_values: Vec<bool> = disp.iter().map(|&d| d > 0.0).collect();
    if !mask_values.iter().any(|&m| m) {
        return Err(Error::DegenerateScene("the plane is not visible within max_depth".into()));
    }
    StereoSample::new(
        scene.sample_id.clone(),
        Image::new(width, height, channels, ref_data)?,
        Image::new(width, height, channels, tgt_data)?,
        DisparityMap::new(width, height, disp)?,
        BinaryMask::new(width, height, mask_values)?,
    )
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(&a, &a).sqrt();
    a.map(|c| c / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;

    fn rig() -> StereoRig<f64> {
        StereoRig::new(CameraIntrinsics::new(721.0, 609.0, 193.0).unwrap(), 0.54).unwrap()
    }

    fn small_spec() -> SceneSpec {
        SceneSpec {
            width: 320,
            height: 120,
            calibration: Calibration {
                f: 300.0,
                o_u: 160.0,
                o_v: 50.0,
                baseline_tc: 0.5,
            },
            ..SceneSpec::kitti_like(3)
        }
    }

    #[test]
    fn horizon_row_has_no_disparity() {
        let plane = PlaneParams::new([0.0, 1.0, 0.0], 1.5).unwrap();
        assert_eq!(ground_truth_disparity(&rig(), &plane, Pixel::new(300.0, 193.0), f64::INFINITY), None);
        assert_eq!(ground_truth_disparity(&rig(), &plane, Pixel::new(300.0, 150.0), f64::INFINITY), None);
    }

    #[test]
    fn level_road_disparity() {
        let plane = PlaneParams::new([0.0, 1.0, 0.0], 1.5).unwrap();
        let d = ground_truth_disparity(&rig(), &plane, Pixel::new(300.0, 393.0), f64::INFINITY).unwrap();
        assert!((d - 72.0).abs() < 1e-12);
        // depth = f T_c / d = 5.4075 m
        assert_eq!(ground_truth_disparity(&rig(), &plane, Pixel::new(300.0, 393.0), 5.0), None);
    }

    #[test]
    fn matches_model_disparity() {
        let plane = PlaneParams::new([-0.05, 0.99, 0.1], 1.7).unwrap();
        let model = plane_to_model(&rig(), &plane).unwrap();
        for v in (0..400).step_by(13) {
            for u in (0..1200).step_by(37) {
                let p = Pixel::new(u as f64, v as f64);
                if let Some(d) = ground_truth_disparity(&rig(), &plane, p, f64::INFINITY) {
                    assert!((d - model.disparity(p)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn level_scene_mask_below_horizon() {
        let mut spec = small_spec();
        spec.plane = PlaneSpec {
            normal: [0.0, 1.0, 0.0],
            distance: 1.5,
        };
        let sample = render_planar_scene(&SyntheticScene::from_spec(&spec).unwrap()).unwrap();
        let o_v = spec.calibration.o_v;
        for v in 0..spec.height {
            for u in 0..spec.width {
                if sample.road_mask.get(u, v) {
                    assert!(v as f64 > o_v);
                    assert!(sample.disparity.get(u, v).unwrap() > 0.0);
                }
            }
        }
        assert!(sample.road_mask.count() > 0);
    }

    #[test]
    fn deterministic_for_seed() {
        let scene = SyntheticScene::from_spec(&small_spec()).unwrap();
        let a = render_planar_scene(&scene).unwrap();
        let b = render_planar_scene(&scene).unwrap();
        assert_eq!(a, b);
        let mut other = small_spec();
        other.texture.seed = 4;
        let c = render_planar_scene(&SyntheticScene::from_spec(&other).unwrap()).unwrap();
        assert_ne!(a.ref_image, c.ref_image);
        assert_eq!(a.disparity, c.disparity);
    }

    #[test]
    fn invisible_plane_is_degenerate() {
        let mut spec = small_spec();
        spec.max_depth = 0.01;
        let r = render_planar_scene(&SyntheticScene::from_spec(&spec).unwrap());
        assert!(matches!(r, Err(Error::DegenerateScene(_))));
    }

    #[test]
    fn noise_hook_perturbs_only_valid_pixels() {
        let clean = render_planar_scene(&SyntheticScene::from_spec(&small_spec()).unwrap()).unwrap();
        let mut spec = small_spec();
        spec.disparity_noise_sigma = Some(0.5);
        let noisy = render_planar_scene(&SyntheticScene::from_spec(&spec).unwrap()).unwrap();
        assert_eq!(clean.road_mask, noisy.road_mask);
        assert_ne!(clean.disparity, noisy.disparity);
        for (a, b) in clean.disparity.values().iter().zip(noisy.disparity.values()) {
            assert_eq!(*a > 0.0, *b > 0.0);
        }
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SceneSpec = serde_json::from_str(
            r#"{"calibration": {"f": 300, "o_u": 160, "o_v": 50, "baseline_Tc": 0.5},
                "plane": {"normal": [0, 1, 0], "distance": 1.5},
                "width": 64, "height": 48}"#,
        )
        .unwrap();
        assert_eq!(spec.channels, 3);
        assert_eq!(spec.texture.kind, TextureKind::Sinusoid);
        assert_eq!(spec.max_depth, 40.0);
        assert!(SyntheticScene::from_spec(&spec).is_ok());
    }

    #[test]
    fn checkerboard_renders() {
        let mut spec = small_spec();
        spec.texture.kind = TextureKind::Checkerboard;
        let s = render_planar_scene(&SyntheticScene::from_spec(&spec).unwrap()).unwrap();
        assert!(s.ref_image.data().iter().all(|&b| b == 0 || b == 55 || b == 200));
    }
}
