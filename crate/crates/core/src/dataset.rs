//! KITTI-style sample directories.
//!
//! ```text
//! <root>/image_2/<id>.png   reference image, 8-bit gray or RGB
//! <root>/image_3/<id>.png   target image
//! <root>/disp/<id>.png      16-bit gray disparity, value / 256 px, 0 = invalid
//! <root>/gt_mask/<id>.png   8-bit gray road mask, nonzero = road
//! <root>/manifest.jsonl     one JSON record per generated sample
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! readers never observe partial files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Calibration;
use crate::raster::{BinaryMask, DisparityMap, Image};
use crate::scalar::Real;
use crate::warp::AugmentedSample;

pub const REFERENCE_DIR: &str = "image_2";
pub const TARGET_DIR: &str = "image_3";
pub const DISPARITY_DIR: &str = "disp";
pub const MASK_DIR: &str = "gt_mask";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One stereo frame with its road label. All rasters share dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoSample {
    pub sample_id: String,
    pub ref_image: Image,
    pub tgt_image: Image,
    pub disparity: DisparityMap,
    pub road_mask: BinaryMask,
}

impl StereoSample {
    pub fn new(
        sample_id: impl Into<String>,
        ref_image: Image,
        tgt_image: Image,
        disparity: DisparityMap,
        road_mask: BinaryMask,
    ) -> Result<Self> {
        let dims = ref_image.dims();
        if tgt_image.dims() != dims || disparity.dims() != dims || road_mask.dims() != dims {
            return Err(Error::Shape(format!(
                "sample rasters differ: reference {:?}, target {:?}, disparity {:?}, mask {:?}",
                dims,
                tgt_image.dims(),
                disparity.dims(),
                road_mask.dims()
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            ref_image,
            tgt_image,
            disparity,
            road_mask,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ref_image.dims()
    }
}

/// Paths of the four component files of `sample_id` under `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePaths {
    pub reference: PathBuf,
    pub target: PathBuf,
    pub disparity: PathBuf,
    pub mask: PathBuf,
}

impl SamplePaths {
    pub fn new(root: &Path, sample_id: &str) -> Self {
        let file = format!("{sample_id}.png");
        Self {
            reference: root.join(REFERENCE_DIR).join(&file),
            target: root.join(TARGET_DIR).join(&file),
            disparity: root.join(DISPARITY_DIR).join(&file),
            mask: root.join(MASK_DIR).join(&file),
        }
    }

    fn all(&self) -> [&Path; 4] {
        [&self.reference, &self.target, &self.disparity, &self.mask]
    }
}

pub fn load_sample(root: &Path, sample_id: &str) -> Result<StereoSample> {
    let paths = SamplePaths::new(root, sample_id);
    for p in paths.all() {
        if !p.is_file() {
            return Err(Error::MissingFile(p.to_path_buf()));
        }
    }
    let ref_image = read_image(&paths.reference)?;
    let expected = ref_image.dims();
    let tgt_image = read_image(&paths.target)?;
    check_dims(&paths.target, expected, tgt_image.dims())?;
    let disparity = read_disparity(&paths.disparity)?;
    check_dims(&paths.disparity, expected, disparity.dims())?;
    let road_mask = read_mask(&paths.mask)?;
    check_dims(&paths.mask, expected, road_mask.dims())?;
    StereoSample::new(sample_id, ref_image, tgt_image, disparity, road_mask)
}

/// Writes all four components. Fails with [`Error::DuplicateSample`] when
/// any of them exists and `overwrite` is false.
pub fn save_sample(root: &Path, sample: &StereoSample, overwrite: bool) -> Result<SamplePaths> {
    let paths = SamplePaths::new(root, &sample.sample_id);
    if !overwrite && paths.all().iter().any(|p| p.exists()) {
        return Err(Error::DuplicateSample(sample.sample_id.clone()));
    }
    write_image(&paths.reference, &sample.ref_image)?;
    write_image(&paths.target, &sample.tgt_image)?;
    write_disparity(&paths.disparity, &sample.disparity)?;
    write_mask(&paths.mask, &sample.road_mask)?;
    Ok(paths)
}

fn check_dims(path: &Path, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected: (expected.0 as u32, expected.1 as u32),
            found: (found.0 as u32, found.1 as u32),
        });
    }
    Ok(())
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|source| io_error(path, source))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|source| Error::MalformedImage {
        path: path.to_path_buf(),
        source,
    })
}

/// Gray images load with one channel; everything else is converted to RGB.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Image::new(w, h, 1, buf.into_raw()),
        other => Image::new(w, h, 3, other.into_rgb8().into_raw()),
    }
}

pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    match decode(path)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            DisparityMap::from_raw_u16(w, h, buf.as_raw())
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("disparity must be 16-bit grayscale, found {:?}", other.color()),
        }),
    }
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMask::from_bytes(w, h, img.into_luma8().as_raw())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, img.data().to_vec()).expect("buffer size"))
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, img.data().to_vec()).expect("buffer size"))
    };
    write_png(path, &dynamic)
}

pub fn write_disparity(path: &Path, map: &DisparityMap) -> Result<()> {
    let (w, h) = (map.width() as u32, map.height() as u32);
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, map.to_raw_u16()).expect("buffer size");
    write_png(path, &DynamicImage::ImageLuma16(buf))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, mask.to_bytes()).expect("buffer size");
    write_png(path, &DynamicImage::ImageLuma8(buf))
}

fn write_png(path: &Path, img: &DynamicImage) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|source| Error::MalformedImage {
            path: path.to_path_buf(),
            source,
        })?;
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`. Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| io_error(parent, source))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|source| io_error(&tmp, source))?;
    fs::rename(&tmp, path).map_err(|source| {
        let _ = fs::remove_file(&tmp);
        io_error(path, source)
    })
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|source| io_error(path, source))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_json(path)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub files: ManifestFiles,
    pub source: ManifestSource,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub image: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSource {
    pub reference: String,
    pub target: String,
}

/// Files written for one augmented sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SavedAugmented {
    pub image: PathBuf,
    pub label: PathBuf,
    pub manifest: PathBuf,
}

static MANIFEST_LOCK: Mutex<()> = Mutex::new(());

/// Writes the generated image to `image_2/<id>.png`, the copied label to
/// `gt_mask/<id>.png` (`<id>` already carries the `_gen` suffix) and
/// records the sample in the manifest. Without `overwrite`, an id that is
/// already present on disk or in the manifest is rejected before anything
/// is written. With it, the existing manifest line is replaced in place.
pub fn save_augmented<T: Real>(root: &Path, aug: &AugmentedSample<T>, overwrite: bool) -> Result<SavedAugmented> {
    let _guard = MANIFEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let file = format!("{}.png", aug.sample_id);
    let image = root.join(REFERENCE_DIR).join(&file);
    let label = root.join(MASK_DIR).join(&file);
    let manifest = root.join(MANIFEST_FILE);

    let mut records = read_manifest(root)?;
    let existing = records.iter().position(|r| r.sample_id == aug.sample_id);
    if !overwrite && (existing.is_some() || image.exists() || label.exists()) {
        return Err(Error::DuplicateSample(aug.sample_id.clone()));
    }

    write_image(&image, &aug.generated_image)?;
    write_mask(&label, &aug.label)?;

    let record = ManifestRecord {
        sample_id: aug.sample_id.clone(),
        files: ManifestFiles {
            image: format!("{REFERENCE_DIR}/{file}"),
            label: format!("{MASK_DIR}/{file}"),
        },
        source: ManifestSource {
            reference: aug.reference_id.clone(),
            target: aug.target_id.clone(),
        },
        complete: true,
    };
    match existing {
        Some(i) => records[i] = record,
        None => records.push(record),
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("manifest record serializes"));
        text.push('\n');
    }
    write_atomic(&manifest, text.as_bytes())?;
    Ok(SavedAugmented { image, label, manifest })
}

/// Records of `<root>/manifest.jsonl`; empty when the file does not exist.
pub fn read_manifest(root: &Path) -> Result<Vec<ManifestRecord>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|source| io_error(&path, source))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })
        })
        .collect()
}

/// Presence of each component of one sample id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub has_reference: bool,
    pub has_target: bool,
    pub has_disparity: bool,
    pub has_mask: bool,
}

impl SampleEntry {
    pub fn complete(&self) -> bool {
        self.has_reference && self.has_target && self.has_disparity && self.has_mask
    }

    pub fn missing(&self) -> Vec<&'static str> {
        [
            (self.has_reference, REFERENCE_DIR),
            (self.has_target, TARGET_DIR),
            (self.has_disparity, DISPARITY_DIR),
            (self.has_mask, MASK_DIR),
        ]
        .into_iter()
        .filter(|(present, _)| !present)
        .map(|(_, dir)| dir)
        .collect()
    }
}

/// Every sample id found in any component directory, in byte-wise
/// lexicographic order.
pub fn scan_manifest(root: &Path) -> Result<Vec<SampleEntry>> {
    fs::read_dir(root).map_err(|source| io_error(root, source))?;
    let sets = [REFERENCE_DIR, TARGET_DIR, DISPARITY_DIR, MASK_DIR]
        .map(|dir| png_stems(&root.join(dir)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ids: BTreeSet<&String> = sets.iter().flatten().collect();
    Ok(ids
        .into_iter()
        .map(|id| SampleEntry {
            sample_id: id.clone(),
            has_reference: sets[0].contains(id),
            has_target: sets[1].contains(id),
            has_disparity: sets[2].contains(id),
            has_mask: sets[3].contains(id),
        })
        .collect())
}

/// Stems of the `.png` files in `dir`; empty when `dir` does not exist.
pub fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut stems = BTreeSet::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stems),
        Err(source) => return Err(io_error(dir, source)),
    };
    for entry in entries {
        let path = entry.map_err(|source| io_error(dir, source))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if !stem.starts_with('.') {
                    stems.insert(stem.to_owned());
                }
            }
        }
    }
    Ok(stems)
}
