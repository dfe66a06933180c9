//! In-memory rasters: 8-bit images, disparity maps and binary road masks.

use crate::error::{Error, Result};

/// 8-bit image with 1 or 3 interleaved channels, row-major, origin top-left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "buffer of {} bytes for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn row(&self, v: usize) -> &[u8] {
        let stride = self.width * self.channels;
        &self.data[v * stride..(v + 1) * stride]
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[u8] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }
}

/// Dense disparity in pixels; values `<= 0` (or non-finite) are invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::Shape(format!("{} disparities for {width}x{height}", values.len())));
        }
        Ok(Self { width, height, values })
    }

    /// Decodes 16-bit samples with `value / 256`, raw 0 meaning invalid.
    pub fn from_raw_u16(width: usize, height: usize, raw: &[u16]) -> Result<Self> {
        Self::new(width, height, raw.iter().map(|&r| decode_disparity(r)).collect())
    }

    /// Inverse of [`DisparityMap::from_raw_u16`]. Invalid entries encode to 0;
    /// valid ones are rounded to the nearest 1/256 px and clamped to the
    /// representable range `[1/256, 65535/256]`.
    pub fn to_raw_u16(&self) -> Vec<u16> {
        self.values.iter().map(|&d| encode_disparity(d)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f32> {
        let d = self.values[v * self.width + u];
        is_valid_disparity(d).then_some(d)
    }
}

pub fn is_valid_disparity(d: f32) -> bool {
    d.is_finite() && d > 0.0
}

pub fn decode_disparity(raw: u16) -> f32 {
    raw as f32 / 256.0
}

pub fn encode_disparity(d: f32) -> u16 {
    if !is_valid_disparity(d) {
        return 0;
    }
    (d * 256.0).round().clamp(1.0, u16::MAX as f32) as u16
}

/// Road / not-road labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::Shape(format!("{} mask values for {width}x{height}", values.len())));
        }
        Ok(Self { width, height, values })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    /// Nonzero bytes are road.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b != 0).collect())
    }

    /// Road as 255, background as 0.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().map(|&r| if r { 255 } else { 0 }).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.values[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, road: bool) {
        self.values[v * self.width + u] = road;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&r| r).count()
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!("empty raster {width}x{height}")));
    }
    Ok(())
}
