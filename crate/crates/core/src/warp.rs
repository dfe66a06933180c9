//! Reference-view synthesis from the target image.
//!
//! Each output pixel `(u, v)` samples the target image at column
//! `u - d(u, v)` on the same row, where `d` is the road model disparity.
//! When that column is not inside the image the reference pixel is copied
//! instead.
//!
//! The warp is only geometrically correct on the road plane. Everything
//! off the plane (cars, buildings, sky) lands in the wrong place, yet the
//! generated image is paired with the unmodified reference label. That is
//! the intended augmentation: labels are never warped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::StereoSample;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::geometry::{Pixel, RoadProjectionModel};
use crate::raster::{BinaryMask, Image};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Linear blend of the two target columns around the source position.
    #[default]
    Bilinear,
    /// Nearest target column; copies exact bytes.
    Nearest,
}

/// Where an output pixel comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source<T> {
    Reference,
    /// Target row sample: left column and weight of the right neighbour.
    Target { column: usize, weight: T },
}

/// Branch selection for source column `x` in an image `width` pixels wide.
///
/// `x <= 0` and `x > width` copy the reference. Beyond that, the sampling
/// footprint must fit inside `[0, width - 1]`: both `floor(x)` and
/// `floor(x) + 1` for bilinear, `round(x)` for nearest.
pub fn source_for<T: Real>(x: T, width: usize, interpolation: Interpolation) -> Source<T> {
    let w = T::from_count(width);
    if !(x > T::zero()) || x > w {
        return Source::Reference;
    }
    match interpolation {
        Interpolation::Bilinear => {
            let left = x.floor();
            if left + T::one() > w - T::one() {
                return Source::Reference;
            }
            Source::Target {
                column: left.to_usize().expect("non-negative column"),
                weight: x - left,
            }
        }
        Interpolation::Nearest => {
            let nearest = x.round();
            if nearest > w - T::one() {
                return Source::Reference;
            }
            Source::Target {
                column: nearest.to_usize().expect("non-negative column"),
                weight: T::zero(),
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub reference_copied: u64,
    pub target_sampled: u64,
}

impl BranchCounts {
    pub fn total(&self) -> u64 {
        self.reference_copied + self.target_sampled
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedView {
    pub image: Image,
    pub branches: BranchCounts,
}

/// Synthesizes a reference-view image from `tgt` under `model`.
///
/// Rows are processed in parallel; the output does not depend on the
/// thread count.
pub fn generate_view<T: Real>(
    reference: &Image,
    target: &Image,
    model: &RoadProjectionModel<T>,
    interpolation: Interpolation,
) -> Result<GeneratedView> {
    if reference.dims() != target.dims() || reference.channels() != target.channels() {
        return Err(Error::Shape(format!(
            "reference {:?}x{} vs target {:?}x{}",
            reference.dims(),
            reference.channels(),
            target.dims(),
            target.channels()
        )));
    }
    let jacobian = model.column_jacobian();
    if !(jacobian > T::zero()) {
        return Err(Error::NonMonotoneWarp(jacobian.as_f64()));
    }

    let (width, _) = reference.dims();
    let channels = reference.channels();
    let stride = width * channels;
    let mut out = reference.clone();
    let branches = out
        .data_mut()
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(v, row)| warp_row(row, target.row(v), v, width, channels, model, interpolation))
        .reduce(BranchCounts::default, |a, b| BranchCounts {
            reference_copied: a.reference_copied + b.reference_copied,
            target_sampled: a.target_sampled + b.target_sampled,
        });
    Ok(GeneratedView { image: out, branches })
}

/// Overwrites target-sampled pixels of `row`, which starts as the
/// reference row.
fn warp_row<T: Real>(
    row: &mut [u8],
    target_row: &[u8],
    v: usize,
    width: usize,
    channels: usize,
    model: &RoadProjectionModel<T>,
    interpolation: Interpolation,
) -> BranchCounts {
    let mut counts = BranchCounts::default();
    let vt = T::from_count(v);
    for u in 0..width {
        let ut = T::from_count(u);
        let x = ut - model.disparity(Pixel::new(ut, vt));
        match source_for(x, width, interpolation) {
            Source::Reference => counts.reference_copied += 1,
            Source::Target { column, weight } => {
                counts.target_sampled += 1;
                let dst = &mut row[u * channels..(u + 1) * channels];
                let left = &target_row[column * channels..(column + 1) * channels];
                if weight == T::zero() {
                    dst.copy_from_slice(left);
                } else {
                    let right = &target_row[(column + 1) * channels..(column + 2) * channels];
                    for c in 0..channels {
                        let a = T::lit(left[c] as f64);
                        let b = T::lit(right[c] as f64);
                        let value = (a + (b - a) * weight).round();
                        dst[c] = value.max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0);
                    }
                }
            }
        }
    }
    counts
}

/// A generated training image paired with the untouched reference label.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample<T> {
    pub sample_id: String,
    pub generated_image: Image,
    pub label: BinaryMask,
    pub reference_id: String,
    pub target_id: String,
    pub model: RoadProjectionModel<T>,
    pub branches: BranchCounts,
}

pub fn augment_sample<T: Real>(
    sample: &StereoSample,
    fit: &FitResult<T>,
    interpolation: Interpolation,
) -> Result<AugmentedSample<T>> {
    let view = generate_view(&sample.ref_image, &sample.tgt_image, &fit.model, interpolation)?;
    Ok(AugmentedSample {
        sample_id: generated_id(&sample.sample_id),
        generated_image: view.image,
        label: sample.road_mask.clone(),
        reference_id: format!("image_2/{}", sample.sample_id),
        target_id: format!("image_3/{}", sample.sample_id),
        model: fit.model,
        branches: view.branches,
    })
}

pub fn generated_id(sample_id: &str) -> String {
    format!("{sample_id}_gen")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(width: usize, height: usize) -> Image {
        let data = (0..height).flat_map(|v| (0..width).map(move |u| ((u * 7 + v * 3) % 256) as u8)).collect();
        Image::new(width, height, 1, data).unwrap()
    }

    #[test]
    fn zero_shift_row_copies_target() {
        // d = 0.5 (v - 4): row 4 has zero disparity.
        let model = RoadProjectionModel::new(0.0, 0.5, -4.0).unwrap();
        let reference = Image::filled(16, 8, 1, 9).unwrap();
        let target = ramp(16, 8);
        let out = generate_view(&reference, &target, &model, Interpolation::Bilinear).unwrap();
        // u = 0 is the reference branch (x <= 0); the footprint of u = 15 leaves the image.
        assert_eq!(&out.image.row(4)[1..15], &target.row(4)[1..15]);
        assert_eq!(out.image.row(4)[0], 9);
        assert_eq!(out.image.row(4)[15], 9);
    }

    #[test]
    fn large_shift_left_edge_copies_reference() {
        let model = RoadProjectionModel::new(0.0, 0.36, -193.0).unwrap();
        // v = 393 gives d = 72; u = 5 maps to -67.
        assert_eq!(source_for(5.0 - model.disparity(Pixel::new(5.0, 393.0)), 100, Interpolation::Bilinear), Source::Reference);
    }

    #[test]
    fn branch_rule_literal_cases() {
        let b = Interpolation::Bilinear;
        assert_eq!(source_for(0.0, 10, b), Source::Reference);
        assert_eq!(source_for(-0.5, 10, b), Source::Reference);
        assert_eq!(source_for(10.5, 10, b), Source::Reference);
        assert_eq!(source_for(9.0, 10, b), Source::Reference);
        assert_eq!(source_for(8.25, 10, b), Source::Target { column: 8, weight: 0.25 });
        assert_eq!(source_for(0.5, 10, b), Source::Target { column: 0, weight: 0.5 });
        let n = Interpolation::Nearest;
        assert_eq!(source_for(9.4, 10, n), Source::Target { column: 9, weight: 0.0 });
        assert_eq!(source_for(9.6, 10, n), Source::Reference);
        assert_eq!(source_for(0.2, 10, n), Source::Target { column: 0, weight: 0.0 });
    }

    #[test]
    fn bilinear_half_pixel() {
        // d = 0.5 (v + 1) is 0.5 on row 0.
        let model = RoadProjectionModel::new(0.0, 0.5, 1.0).unwrap();
        let reference = Image::filled(4, 1, 1, 0).unwrap();
        let target = Image::new(4, 1, 1, vec![10, 20, 31, 40]).unwrap();
        let out = generate_view(&reference, &target, &model, Interpolation::Bilinear).unwrap();
        // u = 1 -> x = 0.5: 15; u = 2 -> x = 1.5: 25.5 rounds to 26; u = 3 -> x = 2.5: 35.5 -> 36.
        assert_eq!(out.image.data(), &[0, 15, 26, 36]);
        assert_eq!(out.branches, BranchCounts { reference_copied: 1, target_sampled: 3 });
    }

    #[test]
    fn shape_mismatch() {
        let model = RoadProjectionModel::new(0.0, 0.5, 0.0).unwrap();
        let a = Image::filled(4, 2, 1, 0).unwrap();
        let b = Image::filled(4, 3, 1, 0).unwrap();
        let c = Image::filled(4, 2, 3, 0).unwrap();
        assert!(matches!(generate_view(&a, &b, &model, Interpolation::Bilinear), Err(Error::Shape(_))));
        assert!(matches!(generate_view(&a, &c, &model, Interpolation::Bilinear), Err(Error::Shape(_))));
    }

    #[test]
    fn folding_model_rejected() {
        let model = RoadProjectionModel::new(-1.2, 2.0, 0.0).unwrap();
        let a = Image::filled(4, 2, 1, 0).unwrap();
        assert!(matches!(generate_view(&a, &a, &model, Interpolation::Bilinear), Err(Error::NonMonotoneWarp(_))));
    }

    #[test]
    fn deterministic_and_partitioned() {
        let model = RoadProjectionModel::new(0.03, 0.36, -20.0).unwrap();
        let reference = ramp(97, 61);
        let target = ramp(97, 61);
        let a = generate_view(&reference, &target, &model, Interpolation::Bilinear).unwrap();
        let b = generate_view(&reference, &target, &model, Interpolation::Bilinear).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.branches.total(), 97 * 61);
    }

    #[test]
    fn rows_are_independent() {
        let model = RoadProjectionModel::new(0.02, 0.4, -10.0).unwrap();
        let reference = ramp(40, 30);
        let target = ramp(40, 30);
        let full = generate_view(&reference, &target, &model, Interpolation::Bilinear).unwrap();
        // Scramble every row except 17 in both inputs; row 17 of the output must not change.
        let mut r2 = reference.clone();
        let mut t2 = target.clone();
        for (i, (a, b)) in r2.data_mut().iter_mut().zip(t2.data_mut().iter_mut()).enumerate() {
            if i / 40 != 17 {
                *a = a.wrapping_mul(31);
                *b = b.wrapping_add(101);
            }
        }
        let scrambled = generate_view(&r2, &t2, &model, Interpolation::Bilinear).unwrap();
        assert_eq!(full.image.row(17), scrambled.image.row(17));
    }
}
