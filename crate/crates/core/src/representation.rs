//! Voxel-grid event representation and tensor conditioning for reconstructors.
//!
//! Each event contributes its polarity to the two temporally nearest of `B` bins:
//! with normalized time `t* = (B - 1)(t - T_k) / ΔT`, bin `b` receives
//! `p * max(0, 1 - |b - t*|)` at the event's pixel. Layout is `(B, H, W)`, row-major
//! within a bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, SensorGeometry};
use crate::grouping::EventGroup;
use crate::image::Image;

pub const DEFAULT_BINS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    height: usize,
    width: usize,
    t_start: f64,
    duration: f64,
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, height: usize, width: usize, t_start: f64, duration: f64) -> Self {
        Self { bins, height, width, t_start, duration, data: vec![0.0; bins * height * width] }
    }

    pub fn from_data(bins: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Invalid(format!("voxel grid needs B >= 2, got {bins}")));
        }
        if bins * height * width != data.len() {
            return Err(Error::Dimension(format!("{bins}x{height}x{width} grid needs {} values, got {}", bins * height * width, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("voxel grid entries must be finite".into()));
        }
        Ok(Self { bins, height, width, t_start: 0.0, duration: 0.0, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(B, H, W)`.
    pub fn shape(&self) -> [usize; 3] {
        [self.bins, self.height, self.width]
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t_start, self.t_start + self.duration)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, bin: usize, y: usize, x: usize) -> f64 {
        self.data[(bin * self.height + y) * self.width + x]
    }

    pub fn bin(&self, bin: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[bin * n..(bin + 1) * n]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Elementwise sum with another grid of the same shape.
    pub fn add(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(out)
    }
}

/// Accumulates `events` over the window `[t_start, t_end]` into a `B x H x W` grid.
///
/// A zero-length window places all mass in bin 0. Events outside the window keep
/// whatever weight the tent kernel gives inside `[0, B - 1]`.
pub fn build_voxel_grid(
    events: &[Event],
    geometry: SensorGeometry,
    window: (f64, f64),
    bins: usize,
) -> Result<VoxelGrid> {
    if bins < 2 {
        return Err(Error::Invalid(format!("voxel grid needs B >= 2, got {bins}")));
    }
    let (t_start, t_end) = window;
    let duration = t_end - t_start;
    let (h, w) = (geometry.height as usize, geometry.width as usize);
    let mut grid = VoxelGrid::zeros(bins, h, w, t_start, duration);
    let plane = h * w;
    let scale = if duration > 0.0 { (bins - 1) as f64 / duration } else { 0.0 };
    let last = (bins - 1) as f64;
    let data = &mut grid.data;

    for e in events {
        let ts = (e.t - t_start) * scale;
        let lower = ts.floor();
        let frac = ts - lower;
        let p = f64::from(e.p);
        let pixel = e.y as usize * w + e.x as usize;
        if lower >= 0.0 && lower <= last {
            data[lower as usize * plane + pixel] += p * (1.0 - frac);
        }
        let upper = lower + 1.0;
        if frac > 0.0 && upper >= 0.0 && upper <= last {
            data[upper as usize * plane + pixel] += p * frac;
        }
    }
    Ok(grid)
}

pub fn build_group_voxel_grid(stream: &EventStream, group: &EventGroup, bins: usize) -> Result<VoxelGrid> {
    build_voxel_grid(&stream.events()[group.events.clone()], stream.geometry(), (group.t_start, group.t_end), bins)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorNormSpec {
    #[default]
    None,
    /// Standardize nonzero entries by their own mean and (population) std.
    NonzeroMeanStd,
}

pub fn normalize_tensor(grid: &VoxelGrid, spec: TensorNormSpec) -> VoxelGrid {
    match spec {
        TensorNormSpec::None => grid.clone(),
        TensorNormSpec::NonzeroMeanStd => {
            let (n, sum) = grid.data.iter().filter(|&&v| v != 0.0).fold((0usize, 0.0), |(n, s), &v| (n + 1, s + v));
            if n == 0 {
                return grid.clone();
            }
            let mean = sum / n as f64;
            let var = grid.data.iter().filter(|&&v| v != 0.0).map(|&v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let std = if std < 1e-6 { 1.0 } else { std };
            let mut out = grid.clone();
            for v in out.data.iter_mut().filter(|v| **v != 0.0) {
                *v = (*v - mean) / std;
            }
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub multiple: usize,
}

impl Default for PadSpec {
    fn default() -> Self {
        Self { multiple: 1 }
    }
}

/// Original spatial size of a padded tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
}

fn round_up(v: usize, multiple: usize) -> usize {
    v.div_ceil(multiple) * multiple
}

/// Zero-pads H and W (bottom/right) up to the next multiple of `spec.multiple`.
pub fn pad_to_multiple(grid: &VoxelGrid, spec: PadSpec) -> Result<(VoxelGrid, CropRecord)> {
    if spec.multiple == 0 {
        return Err(Error::Invalid("pad multiple must be >= 1".into()));
    }
    let record = CropRecord { height: grid.height, width: grid.width };
    let (ph, pw) = (round_up(grid.height, spec.multiple), round_up(grid.width, spec.multiple));
    if (ph, pw) == (grid.height, grid.width) {
        return Ok((grid.clone(), record));
    }
    let mut out = VoxelGrid::zeros(grid.bins, ph, pw, grid.t_start, grid.duration);
    for b in 0..grid.bins {
        for y in 0..grid.height {
            let src = (b * grid.height + y) * grid.width;
            let dst = (b * ph + y) * pw;
            out.data[dst..dst + grid.width].copy_from_slice(&grid.data[src..src + grid.width]);
        }
    }
    Ok((out, record))
}

pub fn crop_image(image: &Image, record: CropRecord) -> Result<Image> {
    if image.height() < record.height || image.width() < record.width {
        return Err(Error::Dimension(format!(
            "cannot crop {}x{} image to {}x{}",
            image.height(),
            image.width(),
            record.height,
            record.width
        )));
    }
    if image.dims() == (record.height, record.width) {
        return Ok(image.clone());
    }
    let data = (0..record.height)
        .flat_map(|y| image.data()[y * image.width()..y * image.width() + record.width].iter().copied())
        .collect();
    Image::new(record.width, record.height, data)
}
