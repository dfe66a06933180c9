//! Road disparity model fitting.
//!
//! For a fixed roll `phi` the energy `sum (d - gain * (w + offset))^2` is a
//! linear least-squares problem in `(gain, gain * offset)` and has a closed
//! form. The roll is found by minimizing the resulting profile energy: a
//! coarse grid locates the basin and golden-section search refines it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{model_to_plane, w_transform, Pixel, RoadProjectionModel, StereoRig};
use crate::golden::golden_section;
use crate::raster::{BinaryMask, DisparityMap};
use crate::scalar::Real;

pub const MIN_OBSERVATIONS: usize = 3;

/// One road pixel `(u, v)` with its disparity `d > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation<T> {
    pub u: T,
    pub v: T,
    pub d: T,
}

impl<T: Real> Observation<T> {
    pub fn new(u: T, v: T, d: T) -> Self {
        Self { u, v, d }
    }

    pub fn pixel(&self) -> Pixel<T> {
        Pixel::new(self.u, self.v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisparityObservations<T> {
    samples: Vec<Observation<T>>,
}

impl<T: Real> DisparityObservations<T> {
    /// Rejects non-finite coordinates and non-positive disparities.
    pub fn new(samples: Vec<Observation<T>>) -> Result<Self> {
        if let Some(bad) = samples
            .iter()
            .find(|s| !(s.u.is_finite() && s.v.is_finite() && s.d.is_finite() && s.d > T::zero()))
        {
            return Err(Error::InvalidParameter(format!("invalid observation {bad:?}")));
        }
        Ok(Self { samples })
    }

    /// Like [`DisparityObservations::new`], additionally requiring every
    /// pixel to lie in `[0, width) x [0, height)`.
    pub fn with_bounds(samples: Vec<Observation<T>>, width: usize, height: usize) -> Result<Self> {
        let (w, h) = (T::from_count(width), T::from_count(height));
        if let Some(bad) = samples
            .iter()
            .find(|s| !(s.u >= T::zero() && s.u < w && s.v >= T::zero() && s.v < h))
        {
            return Err(Error::InvalidParameter(format!(
                "observation {bad:?} outside {width}x{height} image"
            )));
        }
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Observation<T>] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation<T>> {
        self.samples.iter()
    }

    fn require_fittable(&self) -> Result<()> {
        if self.len() < MIN_OBSERVATIONS {
            return Err(Error::InsufficientData {
                needed: MIN_OBSERVATIONS,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Closed-form gain and offset for a fixed roll, with the energy at that point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainOffset<T> {
    pub gain: T,
    pub offset: T,
    pub energy: T,
}

/// Energy `sum (d - gain * (w(p, roll) + offset))^2`, evaluated directly.
pub fn energy<T: Real>(obs: &DisparityObservations<T>, roll: T, gain: T, offset: T) -> T {
    let (s, c) = roll.sin_cos();
    obs.iter()
        .map(|o| {
            let r = o.d - gain * (o.v * c - o.u * s + offset);
            r * r
        })
        .sum()
}

/// Least-squares gain and offset for a fixed roll.
///
/// With `c = m Σw² - (Σw)²` the solution is
/// `gain = (m Σdw - Σd Σw) / c` and
/// `offset = (Σd Σw² - Σw Σdw) / (gain c)`. The sums are accumulated about
/// their means, which gives the same values with far less cancellation.
pub fn fit_gain_offset<T: Real>(obs: &DisparityObservations<T>, roll: T) -> Result<GainOffset<T>> {
    obs.require_fittable()?;
    let m = T::from_count(obs.len());
    let ws: Vec<T> = obs.iter().map(|o| w_transform(o.pixel(), roll)).collect();
    let w_mean = ws.iter().copied().sum::<T>() / m;
    let d_mean = obs.iter().map(|o| o.d).sum::<T>() / m;
    let mut sww = T::zero();
    let mut sdw = T::zero();
    let mut max_w2 = T::zero();
    for (o, &w) in obs.iter().zip(&ws) {
        let wc = w - w_mean;
        sww = sww + wc * wc;
        sdw = sdw + (o.d - d_mean) * wc;
        max_w2 = max_w2.max(w * w);
    }
    let c = m * sww;
    if c <= T::tol(1e-12) * m * max_w2 {
        return Err(Error::DegenerateObservations(format!(
            "all rotated rows coincide at roll {roll} (c = {c})"
        )));
    }
    let gain = m * sdw / c;
    if gain.abs() <= T::tol(1e-12) {
        return Err(Error::PlaneThroughBaseline);
    }
    let offset = d_mean / gain - w_mean;
    Ok(GainOffset {
        gain,
        offset,
        energy: energy(obs, roll, gain, offset),
    })
}

fn default_phi_min() -> f64 {
    -std::f64::consts::FRAC_PI_3
}

fn default_phi_max() -> f64 {
    std::f64::consts::FRAC_PI_3
}

fn default_grid_step() -> f64 {
    0.002
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_trim_k() -> f64 {
    3.0
}

fn default_max_samples() -> Option<usize> {
    Some(100_000)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Lower end of the roll search interval (radians).
    pub phi_min: f64,
    pub phi_max: f64,
    /// Coarse grid spacing (radians).
    pub grid_step: f64,
    /// Width of the final golden-section bracket (radians).
    pub tolerance: f64,
    /// One round of residual trimming at `trim_k` median absolute deviations.
    pub trim: bool,
    pub trim_k: f64,
    /// Observation cap applied by [`extract_observations`]; `None` keeps all.
    pub max_samples: Option<usize>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            phi_min: default_phi_min(),
            phi_max: default_phi_max(),
            grid_step: default_grid_step(),
            tolerance: default_tolerance(),
            trim: false,
            trim_k: default_trim_k(),
            max_samples: default_max_samples(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.phi_min.is_finite() && self.phi_max.is_finite() && self.phi_min <= self.phi_max) {
            return Err(Error::InvalidParameter(format!(
                "roll interval [{}, {}] is empty",
                self.phi_min, self.phi_max
            )));
        }
        if self.phi_min <= -half_pi || self.phi_max >= half_pi {
            return Err(Error::InvalidParameter("roll interval must lie inside (-pi/2, pi/2)".into()));
        }
        if !(self.grid_step > 0.0 && self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("grid step and tolerance must be positive".into()));
        }
        if self.trim && !(self.trim_k > 0.0) {
            return Err(Error::InvalidParameter("trim_k must be positive".into()));
        }
        if self.max_samples.is_some_and(|n| n < MIN_OBSERVATIONS) {
            return Err(Error::InvalidParameter(format!("max_samples must be at least {MIN_OBSERVATIONS}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult<T> {
    pub model: RoadProjectionModel<T>,
    /// Energy at the optimum over the observations used in the final fit.
    pub residual_energy: T,
    pub inlier_count: usize,
    pub observation_count: usize,
}

/// Centered first and second moments of `(u, v, d)`; the profile energy at
/// any roll follows from them in constant time.
#[derive(Clone, Copy, Debug)]
struct Moments<T> {
    suu: T,
    svv: T,
    suv: T,
    sdu: T,
    sdv: T,
    sdd: T,
    max_r2: T,
}

impl<T: Real> Moments<T> {
    fn new(obs: &DisparityObservations<T>) -> Self {
        let m = T::from_count(obs.len());
        let (mut u_mean, mut v_mean, mut d_mean) = (T::zero(), T::zero(), T::zero());
        for o in obs.iter() {
            u_mean = u_mean + o.u;
            v_mean = v_mean + o.v;
            d_mean = d_mean + o.d;
        }
        u_mean = u_mean / m;
        v_mean = v_mean / m;
        d_mean = d_mean / m;
        let z = T::zero();
        let mut acc = Self {
            suu: z,
            svv: z,
            suv: z,
            sdu: z,
            sdv: z,
            sdd: z,
            max_r2: z,
        };
        for o in obs.iter() {
            let (u, v, d) = (o.u - u_mean, o.v - v_mean, o.d - d_mean);
            acc.suu = acc.suu + u * u;
            acc.svv = acc.svv + v * v;
            acc.suv = acc.suv + u * v;
            acc.sdu = acc.sdu + d * u;
            acc.sdv = acc.sdv + d * v;
            acc.sdd = acc.sdd + d * d;
            acc.max_r2 = acc.max_r2.max(o.u * o.u + o.v * o.v);
        }
        acc
    }

    /// Minimum over gain and offset of the energy at `roll`, or `None` when
    /// the rotated rows are (numerically) all equal.
    fn profile(&self, roll: T) -> Option<T> {
        let (s, c) = roll.sin_cos();
        let sww = c * c * self.svv - T::lit(2.0) * c * s * self.suv + s * s * self.suu;
        if sww <= T::tol(1e-12) * self.max_r2 {
            return None;
        }
        let sdw = c * self.sdv - s * self.sdu;
        Some((self.sdd - sdw * sdw / sww).max(T::zero()))
    }
}

/// Evenly spaced rolls covering `[lo, hi]` including both ends, no wider
/// apart than `step`.
fn roll_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let span = hi - lo;
    if span <= 0.0 {
        return vec![lo];
    }
    let n = (span / step).ceil().max(1.0) as usize;
    (0..=n).map(|k| lo + span * k as f64 / n as f64).collect()
}

/// Index of the smallest finite value; ties resolve to the lowest index.
fn argmin<T: Real>(values: &[Option<T>]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Minimizes the energy over roll, gain and offset.
pub fn fit_model<T: Real>(obs: &DisparityObservations<T>, config: &FitConfig) -> Result<FitResult<T>> {
    config.validate()?;
    obs.require_fittable()?;
    let fit = fit_profile(obs, config)?;
    if !config.trim {
        return Ok(fit);
    }
    let trimmed = trim_outliers(obs, &fit.model, config.trim_k)?;
    match trimmed {
        Some(inliers) if inliers.len() >= MIN_OBSERVATIONS && inliers.len() < obs.len() => {
            let mut refit = fit_profile(&inliers, config)?;
            refit.observation_count = obs.len();
            Ok(refit)
        }
        _ => Ok(fit),
    }
}

fn fit_profile<T: Real>(obs: &DisparityObservations<T>, config: &FitConfig) -> Result<FitResult<T>> {
    let moments = Moments::new(obs);
    let grid = roll_grid(config.phi_min, config.phi_max, config.grid_step);
    let profile: Vec<Option<T>> = grid.iter().map(|&phi| moments.profile(T::lit(phi))).collect();
    let best = argmin(&profile).ok_or(Error::Unfittable {
        min: config.phi_min,
        max: config.phi_max,
    })?;

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section(
        |phi| moments.profile(phi).unwrap_or_else(T::infinity),
        T::lit(lo),
        T::lit(hi),
        T::tol(config.tolerance),
    );

    let grid_roll = T::lit(grid[best]);
    let mut candidates = Vec::with_capacity(2);
    if let Ok(g) = fit_gain_offset(obs, refined.x) {
        candidates.push((refined.x, g));
    }
    match fit_gain_offset(obs, grid_roll) {
        Ok(g) => candidates.push((grid_roll, g)),
        Err(e) if candidates.is_empty() => return Err(e),
        Err(_) => {}
    }
    let (roll, g) = candidates
        .into_iter()
        .reduce(|a, b| if b.1.energy < a.1.energy { b } else { a })
        .expect("at least one candidate");
    Ok(FitResult {
        model: RoadProjectionModel::new(roll, g.gain, g.offset)?,
        residual_energy: g.energy,
        inlier_count: obs.len(),
        observation_count: obs.len(),
    })
}

/// Keeps observations whose residual lies within `k` median absolute
/// deviations of the median residual. `None` when the deviation is zero.
fn trim_outliers<T: Real>(
    obs: &DisparityObservations<T>,
    model: &RoadProjectionModel<T>,
    k: f64,
) -> Result<Option<DisparityObservations<T>>> {
    let residuals: Vec<T> = obs.iter().map(|o| o.d - model.disparity(o.pixel())).collect();
    let med = median(residuals.clone());
    let mad = median(residuals.iter().map(|r| (*r - med).abs()).collect());
    if !(mad > T::zero()) {
        return Ok(None);
    }
    let limit = T::lit(k) * mad;
    let kept = obs
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| (**r - med).abs() <= limit)
        .map(|(o, _)| *o)
        .collect();
    DisparityObservations::new(kept).map(Some)
}

fn median<T: Real>(mut values: Vec<T>) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::lit(2.0)
    }
}

/// Exhaustive roll search over `[config.phi_min, config.phi_max]` at
/// `grid_step`, solving the gain and offset directly at every grid point.
/// Grid points where the closed form is degenerate are skipped. Serves as
/// the reference for [`fit_model`].
pub fn fit_model_bruteforce<T: Real>(
    obs: &DisparityObservations<T>,
    grid_step: f64,
    config: &FitConfig,
) -> Result<FitResult<T>> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidParameter(format!("grid step must be positive, got {grid_step}")));
    }
    obs.require_fittable()?;
    let n = ((config.phi_max - config.phi_min) / grid_step + 1e-9).floor() as usize;
    let fits: Vec<Option<(T, GainOffset<T>)>> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let roll = T::lit(config.phi_min + k as f64 * grid_step);
            fit_gain_offset(obs, roll).ok().map(|g| (roll, g))
        })
        .collect();
    let energies: Vec<Option<T>> = fits.iter().map(|f| f.map(|(_, g)| g.energy)).collect();
    let best = argmin(&energies).ok_or(Error::Unfittable {
        min: config.phi_min,
        max: config.phi_max,
    })?;
    let (roll, g) = fits[best].expect("argmin points at a fitted roll");
    Ok(FitResult {
        model: RoadProjectionModel::new(roll, g.gain, g.offset)?,
        residual_energy: g.energy,
        inlier_count: obs.len(),
        observation_count: obs.len(),
    })
}

/// Profile energy at `roll` computed by the direct closed form, for
/// inspecting the energy landscape.
pub fn profile_energy<T: Real>(obs: &DisparityObservations<T>, roll: T) -> Result<T> {
    fit_gain_offset(obs, roll).map(|g| g.energy)
}

/// Unconstrained stationary point of the profile energy.
///
/// The profile is `S_dd - (g·x)^2 / (x^T B x)` with `x = (cos, sin)` of the
/// roll, `g = (S_dv, -S_du)` and `B = [[S_vv, -S_uv], [-S_uv, S_uu]]` built
/// from centered sums, so its minimizer is the direction `B^-1 g`. The
/// result is not restricted to any search interval.
pub fn stationary_roll<T: Real>(obs: &DisparityObservations<T>) -> Result<T> {
    obs.require_fittable()?;
    let mo = Moments::new(obs);
    let det = mo.suu * mo.svv - mo.suv * mo.suv;
    if det <= T::tol(1e-12) * mo.suu.max(mo.svv).powi(2) {
        return Err(Error::DegenerateObservations("observed pixels are collinear".into()));
    }
    let x = mo.suu * mo.sdv - mo.suv * mo.sdu;
    let y = mo.suv * mo.sdv - mo.svv * mo.sdu;
    if x == T::zero() {
        return Err(Error::DegenerateObservations("stationary roll at +-pi/2".into()));
    }
    Ok((y / x).atan())
}

/// Collects `(u, v, d)` for every road pixel with a valid disparity, row by
/// row. When more than `config.max_samples` qualify, a seeded uniform stride
/// keeps exactly that many.
pub fn extract_observations<T: Real>(
    disparity: &DisparityMap,
    road_mask: &BinaryMask,
    config: &FitConfig,
) -> Result<DisparityObservations<T>> {
    if disparity.dims() != road_mask.dims() {
        return Err(Error::Shape(format!(
            "disparity {:?} and mask {:?} differ",
            disparity.dims(),
            road_mask.dims()
        )));
    }
    let (width, height) = disparity.dims();
    let mut samples = Vec::new();
    for v in 0..height {
        for u in 0..width {
            if !road_mask.get(u, v) {
                continue;
            }
            if let Some(d) = disparity.get(u, v) {
                samples.push(Observation::new(T::from_count(u), T::from_count(v), T::lit(d as f64)));
            }
        }
    }
    if samples.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: samples.len(),
        });
    }
    if let Some(cap) = config.max_samples {
        if samples.len() > cap {
            samples = strided_subsample(&samples, cap, config.seed);
        }
    }
    DisparityObservations::with_bounds(samples, width, height)
}

fn strided_subsample<S: Copy>(items: &[S], count: usize, seed: u64) -> Vec<S> {
    let stride = items.len() as f64 / count as f64;
    let start = ChaCha8Rng::seed_from_u64(seed).random::<f64>() * stride;
    (0..count)
        .map(|k| {
            let i = (start + k as f64 * stride).floor() as usize;
            items[i.min(items.len() - 1)]
        })
        .collect()
}

/// Serialized fit summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub phi_rad: f64,
    pub varkappa: f64,
    pub kappa: f64,
    pub residual_energy: f64,
    pub m: usize,
    pub inlier_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plane: Option<PlaneReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneReport {
    pub normal: [f64; 3],
    pub distance: f64,
}

impl FitReport {
    pub fn new<T: Real>(fit: &FitResult<T>, rig: Option<&StereoRig<T>>) -> Self {
        let plane = rig.and_then(|r| model_to_plane(r, &fit.model).ok()).map(|p| PlaneReport {
            normal: p.normal().map(|c| c.as_f64()),
            distance: p.distance().as_f64(),
        });
        Self {
            phi_rad: fit.model.roll().as_f64(),
            varkappa: fit.model.gain().as_f64(),
            kappa: fit.model.offset().as_f64(),
            residual_energy: fit.residual_energy.as_f64(),
            m: fit.observation_count,
            inlier_count: fit.inlier_count,
            plane,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, Normal};

    /// Independent reference: SVD least squares on the design matrix
    /// `[w 1]` for the unknowns `(gain, gain * offset)`.
    fn lstsq_oracle(obs: &DisparityObservations<f64>, roll: f64) -> (f64, f64, f64) {
        let m = obs.len();
        let a = DMatrix::from_fn(m, 2, |i, j| {
            if j == 0 {
                w_transform(obs.samples()[i].pixel(), roll)
            } else {
                1.0
            }
        });
        let b = DVector::from_iterator(m, obs.iter().map(|o| o.d));
        let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let r = &a * &x - &b;
        (x[0], x[1] / x[0], r.norm_squared())
    }

    fn obs(points: &[(f64, f64, f64)]) -> DisparityObservations<f64> {
        DisparityObservations::new(points.iter().map(|&(u, v, d)| Observation::new(u, v, d)).collect()).unwrap()
    }

    fn synthetic(roll: f64, gain: f64, offset: f64) -> DisparityObservations<f64> {
        let model = RoadProjectionModel::new(roll, gain, offset).unwrap();
        let mut samples = Vec::new();
        for v in (250..550).step_by(3) {
            for u in (400..600).step_by(2) {
                let p = Pixel::new(u as f64, v as f64);
                let d = model.disparity(p);
                if d > 0.0 {
                    samples.push(Observation::new(p.u, p.v, d));
                }
            }
        }
        DisparityObservations::new(samples).unwrap()
    }

    #[test]
    fn exact_line_recovered() {
        for u in [0.0, 17.0, 640.0] {
            let g = fit_gain_offset(&obs(&[(u, 0.0, 2.0), (u, 1.0, 4.0), (u, 2.0, 6.0)]), 0.0).unwrap();
            assert!((g.gain - 2.0).abs() < 1e-12);
            assert!((g.offset - 1.0).abs() < 1e-12);
            assert!(g.energy < 1e-20);
        }
    }

    #[test]
    fn constant_rotated_row_is_degenerate() {
        let o = obs(&[(0.0, 5.0, 3.0), (1.0, 5.0, 3.0), (2.0, 5.0, 3.0)]);
        assert!(matches!(fit_gain_offset(&o, 0.0), Err(Error::DegenerateObservations(_))));
    }

    #[test]
    fn flat_disparity_is_plane_through_baseline() {
        let o = obs(&[(0.0, 1.0, 3.0), (0.0, 2.0, 3.0), (0.0, 3.0, 3.0)]);
        assert!(matches!(fit_gain_offset(&o, 0.0), Err(Error::PlaneThroughBaseline)));
    }

    #[test]
    fn too_few_observations() {
        let o = obs(&[(0.0, 1.0, 3.0), (0.0, 2.0, 4.0)]);
        assert!(matches!(fit_gain_offset(&o, 0.0), Err(Error::InsufficientData { got: 2, .. })));
        assert!(matches!(fit_model(&o, &FitConfig::default()), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn invalid_observations_rejected() {
        assert!(DisparityObservations::new(vec![Observation::new(0.0, 0.0, 0.0)]).is_err());
        assert!(DisparityObservations::new(vec![Observation::new(f64::NAN, 0.0, 1.0)]).is_err());
        assert!(DisparityObservations::with_bounds(vec![Observation::new(5.0, 0.0, 1.0)], 5, 5).is_err());
    }

    #[test]
    fn noisy_line_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let samples: Vec<_> = (0..10_000)
            .map(|i| {
                let u = (i % 500) as f64;
                let v = 200.0 + (i / 500) as f64 * 8.0 + (i % 7) as f64;
                Observation::new(u, v, 0.36 * (v - 193.0) + noise.sample(&mut rng))
            })
            .filter(|o| o.d > 0.0)
            .collect();
        let o = DisparityObservations::new(samples).unwrap();
        let g = fit_gain_offset(&o, 0.0).unwrap();
        let (gain, offset, _) = lstsq_oracle(&o, 0.0);
        assert!((g.gain - 0.36).abs() < 0.01, "{g:?}");
        assert!((g.offset + 193.0).abs() < 3.0, "{g:?}");
        assert!((g.gain - gain).abs() < 1e-9 * gain.abs());
        assert!((g.offset - offset).abs() < 1e-9 * offset.abs());
    }

    #[test]
    fn matches_lstsq_oracle_on_rolled_data() {
        let o = synthetic(0.1, 0.4, -180.0);
        for roll in [-0.2, 0.0, 0.1, 0.35] {
            let g = fit_gain_offset(&o, roll).unwrap();
            let (gain, offset, e) = lstsq_oracle(&o, roll);
            assert!((g.gain - gain).abs() <= 1e-9 * gain.abs());
            assert!((g.offset - offset).abs() <= 1e-9 * offset.abs());
            assert!(g.energy <= e * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let o = synthetic(-0.05, 0.3, -150.0);
        let noisy: Vec<_> = o
            .iter()
            .enumerate()
            .map(|(i, s)| Observation::new(s.u, s.v, s.d + 0.3 * ((i * 37 % 11) as f64 - 5.0) / 5.0 + 2.0))
            .collect();
        let o = DisparityObservations::new(noisy).unwrap();
        let roll = 0.02;
        let g = fit_gain_offset(&o, roll).unwrap();
        let (mut r_sum, mut rw_sum, mut max_d) = (0.0, 0.0, 0.0f64);
        for s in o.iter() {
            let w = w_transform(s.pixel(), roll);
            let r = s.d - g.gain * (w + g.offset);
            r_sum += r;
            rw_sum += r * w;
            max_d = max_d.max(s.d.abs());
        }
        let bound = 1e-8 * o.len() as f64 * max_d;
        assert!(r_sum.abs() < bound, "{r_sum}");
        assert!(rw_sum.abs() < bound * 600.0, "{rw_sum}");
    }

    #[test]
    fn moments_profile_matches_direct_profile() {
        let o = synthetic(0.05, 0.36, -193.0);
        let mo = Moments::new(&o);
        for roll in [-0.5, -0.1, 0.0, 0.049, 0.3] {
            let direct = profile_energy(&o, roll).unwrap();
            let fast = mo.profile(roll).unwrap();
            // Cancellation error scales with the total variance, not the residual.
            assert!((direct - fast).abs() <= 1e-12 * mo.sdd, "{roll}: {direct} vs {fast}");
        }
    }

    #[test]
    fn zero_roll_fit() {
        let o = synthetic(0.0, 0.36, -193.0);
        let fit = fit_model(&o, &FitConfig::default()).unwrap();
        assert!(fit.model.roll().abs() <= 1e-4);
        assert!(fit.residual_energy <= 1e-12 * o.len() as f64);
    }

    #[test]
    fn rolled_fit_recovers_parameters() {
        let o = synthetic(0.05, 0.36, -193.0);
        let fit = fit_model(&o, &FitConfig::default()).unwrap();
        assert!((fit.model.roll() - 0.05).abs() < 1e-4);
        assert!((fit.model.gain() / 0.36 - 1.0).abs() < 1e-3);
        assert!((fit.model.offset() / -193.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn three_points_interpolated() {
        let o = obs(&[(100.0, 300.0, 30.0), (200.0, 310.0, 40.0), (150.0, 400.0, 70.0)]);
        let fit = fit_model(&o, &FitConfig::default()).unwrap();
        assert!(fit.residual_energy < 1e-12, "{fit:?}");
    }

    #[test]
    fn bruteforce_agrees_with_golden_refinement() {
        let o = synthetic(0.05, 0.36, -193.0);
        let cfg = FitConfig {
            phi_min: 0.0,
            phi_max: 0.1,
            ..FitConfig::default()
        };
        let step = 1e-5;
        let brute = fit_model_bruteforce(&o, step, &cfg).unwrap();
        let fit = fit_model(&o, &cfg).unwrap();
        assert!((brute.model.roll() - fit.model.roll()).abs() <= 2.0 * step);
        assert!(fit.residual_energy <= brute.residual_energy + 1e-10);
    }

    #[test]
    fn bruteforce_skips_degenerate_grid_points() {
        // All three pixels share a row, so roll = 0 is degenerate; the
        // sweep must still evaluate its neighbours.
        let o = obs(&[(0.0, 5.0, 3.0), (1.0, 5.0, 4.0), (2.0, 5.0, 5.0)]);
        let cfg = FitConfig {
            phi_min: -0.01,
            phi_max: 0.01,
            ..FitConfig::default()
        };
        assert!(fit_gain_offset(&o, 0.0).is_err());
        let fit = fit_model_bruteforce(&o, 0.01, &cfg).unwrap();
        assert!(fit.model.roll() != 0.0);
    }

    #[test]
    fn bruteforce_profile_symmetric_under_reflection() {
        let o_u = 500.0;
        let model = RoadProjectionModel::new(0.0, 0.36, -193.0).unwrap();
        let mut samples = Vec::new();
        for v in (220..400).step_by(4) {
            for du in (1..200).step_by(3) {
                for u in [o_u - du as f64, o_u + du as f64] {
                    let p = Pixel::new(u - o_u, v as f64);
                    samples.push(Observation::new(p.u, p.v, model.disparity(p) + 0.1 * (du % 5) as f64));
                }
            }
        }
        let o = DisparityObservations::new(samples).unwrap();
        for k in 1..50 {
            let phi = k as f64 * 0.01;
            let a = profile_energy(&o, phi).unwrap();
            let b = profile_energy(&o, -phi).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{phi}: {a} vs {b}");
        }
    }

    #[test]
    fn stationary_roll_matches_bruteforce() {
        for truth in [-0.3, 0.0, 0.2] {
            let o = synthetic(truth, 0.36, -193.0);
            let roll = stationary_roll(&o).unwrap();
            assert!((roll - truth).abs() < 1e-9, "{truth}: {roll}");
        }
    }

    #[test]
    fn scaling_disparity_scales_gain_only() {
        let o = synthetic(0.07, 0.36, -193.0);
        let s = 2.5;
        let scaled = DisparityObservations::new(o.iter().map(|x| Observation::new(x.u, x.v, x.d * s)).collect()).unwrap();
        let cfg = FitConfig::default();
        let a = fit_model(&o, &cfg).unwrap();
        let b = fit_model(&scaled, &cfg).unwrap();
        assert!((b.model.gain() / (s * a.model.gain()) - 1.0).abs() < 1e-6);
        assert!((b.model.roll() - a.model.roll()).abs() < 1e-6);
        assert!((b.model.offset() / a.model.offset() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifting_rows_shifts_offset() {
        let o = synthetic(0.0, 0.36, -193.0);
        let shift = 25.0;
        let moved = DisparityObservations::new(o.iter().map(|x| Observation::new(x.u, x.v + shift, x.d)).collect()).unwrap();
        let a = fit_gain_offset(&o, 0.0).unwrap();
        let b = fit_gain_offset(&moved, 0.0).unwrap();
        assert!((b.gain - a.gain).abs() < 1e-9);
        assert!((b.offset - (a.offset - shift)).abs() < 1e-9);
    }

    #[test]
    fn trimmed_refit_ignores_outliers() {
        let clean = synthetic(0.05, 0.36, -193.0);
        let mut samples = clean.samples().to_vec();
        for s in samples.iter_mut().step_by(20) {
            s.d += 25.0;
        }
        let o = DisparityObservations::new(samples).unwrap();
        let plain = fit_model(&o, &FitConfig::default()).unwrap();
        let trimmed = fit_model(
            &o,
            &FitConfig {
                trim: true,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert_eq!(plain.inlier_count, o.len());
        assert!(trimmed.inlier_count < o.len());
        assert_eq!(trimmed.observation_count, o.len());
        assert!((trimmed.model.roll() - 0.05).abs() < 1e-6);
        assert!((trimmed.model.gain() - 0.36).abs() < 1e-6);
    }

    #[test]
    fn extraction_selects_valid_road_pixels() {
        let disp = DisparityMap::new(4, 4, (1..=16).map(|x| x as f32).collect()).unwrap();
        let mut mask = BinaryMask::empty(4, 4).unwrap();
        mask.set(0, 1, true);
        mask.set(3, 2, true);
        mask.set(1, 3, true);
        let o: DisparityObservations<f64> = extract_observations(&disp, &mask, &FitConfig::default()).unwrap();
        let got: Vec<_> = o.iter().map(|s| (s.u, s.v, s.d)).collect();
        assert_eq!(got, vec![(0.0, 1.0, 5.0), (3.0, 2.0, 12.0), (1.0, 3.0, 14.0)]);
    }

    #[test]
    fn extraction_drops_invalid_disparity() {
        let mut values: Vec<f32> = (1..=16).map(|x| x as f32).collect();
        values[5] = 0.0;
        let disp = DisparityMap::new(4, 4, values).unwrap();
        let mask = BinaryMask::new(4, 4, vec![true; 16]).unwrap();
        let o: DisparityObservations<f64> = extract_observations(&disp, &mask, &FitConfig::default()).unwrap();
        assert_eq!(o.len(), 15);
        assert!(o.iter().all(|s| !(s.u == 1.0 && s.v == 1.0)));
    }

    #[test]
    fn extraction_errors() {
        let disp = DisparityMap::new(4, 4, vec![1.0; 16]).unwrap();
        let mut mask = BinaryMask::empty(4, 4).unwrap();
        mask.set(0, 0, true);
        mask.set(1, 0, true);
        let r: Result<DisparityObservations<f64>> = extract_observations(&disp, &mask, &FitConfig::default());
        assert!(matches!(r, Err(Error::InsufficientData { got: 2, .. })));
        let small = BinaryMask::empty(4, 3).unwrap();
        let r: Result<DisparityObservations<f64>> = extract_observations(&disp, &small, &FitConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn subsampling_is_exact_and_deterministic() {
        let (w, h) = (1000, 1000);
        let disp = DisparityMap::new(w, h, vec![3.0; w * h]).unwrap();
        let mask = BinaryMask::new(w, h, vec![true; w * h]).unwrap();
        let cfg = FitConfig {
            max_samples: Some(50_000),
            seed: 11,
            ..FitConfig::default()
        };
        let a: DisparityObservations<f32> = extract_observations(&disp, &mask, &cfg).unwrap();
        let b: DisparityObservations<f32> = extract_observations(&disp, &mask, &cfg).unwrap();
        assert_eq!(a.len(), 50_000);
        assert_eq!(a, b);
        let other: DisparityObservations<f32> =
            extract_observations(&disp, &mask, &FitConfig { seed: 12, ..cfg }).unwrap();
        assert_eq!(other.len(), 50_000);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = [
            FitConfig { phi_min: 0.5, phi_max: 0.1, ..FitConfig::default() },
            FitConfig { phi_max: 2.0, ..FitConfig::default() },
            FitConfig { grid_step: 0.0, ..FitConfig::default() },
            FitConfig { max_samples: Some(2), ..FitConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let cfg: FitConfig = serde_json::from_str(r#"{"grid_step": 0.01}"#).unwrap();
        assert_eq!(cfg.grid_step, 0.01);
        assert_eq!(cfg.max_samples, Some(100_000));
    }

    #[test]
    fn report_includes_plane_when_rig_given() {
        use crate::geometry::CameraIntrinsics;
        let rig = StereoRig::new(CameraIntrinsics::new(721.0, 609.0, 193.0).unwrap(), 0.54).unwrap();
        let fit = fit_model(&synthetic(0.0, 0.36, -193.0), &FitConfig::default()).unwrap();
        let report = FitReport::new(&fit, Some(&rig));
        let plane = report.plane.as_ref().unwrap();
        assert!((plane.distance - 1.5).abs() < 1e-6);
        let json = serde_json::to_value(&report).unwrap();
        for key in ["phi_rad", "varkappa", "kappa", "residual_energy", "m", "plane"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(serde_json::to_value(FitReport::new(&fit, None)).unwrap().get("plane").is_none());
    }

    #[test]
    fn single_precision_fit() {
        let o64 = synthetic(0.05, 0.36, -193.0);
        let o32 = DisparityObservations::new(
            o64.iter().map(|s| Observation::new(s.u as f32, s.v as f32, s.d as f32)).collect(),
        )
        .unwrap();
        let fit = fit_model(&o32, &FitConfig::default()).unwrap();
        assert!((fit.model.roll() - 0.05).abs() < 1e-3, "{fit:?}");
        assert!((fit.model.gain() / 0.36 - 1.0).abs() < 1e-2);
    }
}
