//! Hole application, the progressive hole-size schedule, mask sampling and
//! dim/over-lit simulation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MaskBitmap;
use crate::maskgen::{MaskPool, PlacementMode, PoolMask};

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    /// Returns `None` when `data.len() != width * height * 3`.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let mut out = Self::new(width, height);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
            let y1 = (y0 + 1).min(self.height - 1);
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
                let x1 = (x0 + 1).min(self.width - 1);
                let (a, b, c, d) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
                let mut rgb = [0u8; 3];
                for k in 0..3 {
                    let top = f64::from(a[k]) * (1.0 - tx) + f64::from(b[k]) * tx;
                    let bottom = f64::from(c[k]) * (1.0 - tx) + f64::from(d[k]) * tx;
                    rgb[k] = (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8;
                }
                out.set_pixel(x, y, rgb);
            }
        }
        out
    }
}

/// Nearest-neighbor resampling; keeps masks binary.
pub fn resize_mask_nearest(mask: &MaskBitmap, width: usize, height: usize) -> MaskBitmap {
    if (width, height) == (mask.width(), mask.height()) {
        return mask.clone();
    }
    if mask.width() == 0 || mask.height() == 0 {
        return MaskBitmap::empty(width, height);
    }
    MaskBitmap::from_fn(width, height, |x, y| {
        let sx = ((x * mask.width()) / width).min(mask.width() - 1);
        let sy = ((y * mask.height()) / height).min(mask.height() - 1);
        mask.get(sx, sy)
    })
}

/// Per-channel mean over every pixel of every image.
pub fn mean_rgb<'a>(dataset: impl IntoIterator<Item = &'a RgbImage>) -> Result<[f64; 3]> {
    let mut sums = [0u64; 3];
    let mut pixels = 0u64;
    for img in dataset {
        for px in img.data.chunks_exact(3) {
            for k in 0..3 {
                sums[k] += u64::from(px[k]);
            }
        }
        pixels += (img.width * img.height) as u64;
    }
    if pixels == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(sums.map(|s| s as f64 / pixels as f64))
}

/// Replaces hole pixels with `fill` (rounded to 8 bits).
pub fn apply_hole(img: &RgbImage, mask: &MaskBitmap, fill: [f64; 3]) -> Result<RgbImage> {
    if (img.width, img.height) != (mask.width(), mask.height()) {
        return Err(Error::DimMismatch {
            expected: (img.width, img.height),
            got: (mask.width(), mask.height()),
        });
    }
    let fill = fill.map(|v| v.round().clamp(0.0, 255.0) as u8);
    let mut out = img.clone();
    for (px, &hole) in out.data.chunks_exact_mut(3).zip(mask.bits()) {
        if hole {
            px.copy_from_slice(&fill);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub epochs_per_interval: usize,
    pub num_intervals: usize,
    pub mode: PlacementMode,
}

impl Default for ScheduleConfig {
    /// Ground-truth regime: +1% every three epochs over ten intervals.
    fn default() -> Self {
        Self {
            epochs_per_interval: 3,
            num_intervals: 10,
            mode: PlacementMode::AvoidIsolation,
        }
    }
}

pub fn schedule_interval(epoch: usize, cfg: &ScheduleConfig) -> usize {
    let period = cfg.epochs_per_interval.max(1);
    (epoch / period).min(cfg.num_intervals.saturating_sub(1))
}

/// Which candidates a sampled mask is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleCase {
    /// The image's own candidates at the interval.
    Case1,
    /// Every image's candidates at the interval.
    Case2,
}

impl From<PlacementMode> for SampleCase {
    fn from(mode: PlacementMode) -> Self {
        match mode {
            PlacementMode::AvoidIsolation => Self::Case1,
            PlacementMode::Random => Self::Case2,
        }
    }
}

/// Uniform choice among grouped candidates.
///
/// Case2 enumerates groups in key order so the choice is reproducible.
pub fn sample_candidate<'a, T, R: Rng + ?Sized>(
    groups: &'a BTreeMap<(String, usize), Vec<T>>,
    image_id: &str,
    interval: usize,
    case: SampleCase,
    rng: &mut R,
) -> Result<&'a T> {
    match case {
        SampleCase::Case1 => {
            let list = groups
                .get(&(image_id.to_string(), interval))
                .filter(|l| !l.is_empty())
                .ok_or(Error::EmptyInterval { interval })?;
            Ok(&list[rng.random_range(0..list.len())])
        }
        SampleCase::Case2 => {
            let all: Vec<&T> = groups
                .iter()
                .filter(|((_, iv), _)| *iv == interval)
                .flat_map(|(_, list)| list)
                .collect();
            if all.is_empty() {
                return Err(Error::EmptyInterval { interval });
            }
            Ok(all[rng.random_range(0..all.len())])
        }
    }
}

pub fn sample_entry<'a, R: Rng + ?Sized>(
    pool: &'a MaskPool,
    image_id: &str,
    interval: usize,
    case: SampleCase,
    rng: &mut R,
) -> Result<&'a PoolMask> {
    sample_candidate(&pool.entries, image_id, interval, case, rng)
}

pub fn sample_mask<R: Rng + ?Sized>(
    pool: &MaskPool,
    image_id: &str,
    interval: usize,
    case: SampleCase,
    rng: &mut R,
) -> Result<MaskBitmap> {
    sample_entry(pool, image_id, interval, case, rng).map(|e| pool.materialize(e))
}

pub const GAMMA: f64 = 2.2;
/// Expected photon count at full intensity for the dim-light shot noise.
pub const SHOT_NOISE_PEAK: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Dim,
    Over,
}

impl Lighting {
    pub fn scale_range(self) -> (f64, f64) {
        match self {
            Self::Dim => (1.0 / 16.0, 1.0 / 8.0),
            Self::Over => (3.0, 3.3),
        }
    }
}

impl std::str::FromStr for Lighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dim" => Ok(Self::Dim),
            "over" => Ok(Self::Over),
            other => Err(Error::Config(format!("unknown lighting mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightingParams {
    pub mode: Lighting,
    pub scale: f64,
    pub shot_noise: bool,
}

fn to_linear(v: f64) -> f64 {
    255.0 * (v / 255.0).powf(GAMMA)
}

fn from_linear(v: f64) -> f64 {
    (255.0 * (v.clamp(0.0, 255.0) / 255.0).powf(1.0 / GAMMA)).clamp(0.0, 255.0)
}

/// Linear-domain intensity of one channel value after scaling and truncation.
pub fn scaled_linear(v: u8, params: &LightingParams) -> f64 {
    let lin = to_linear(f64::from(v)) * params.scale;
    match params.mode {
        Lighting::Dim => lin.max(0.0),
        Lighting::Over => lin.min(255.0),
    }
}

/// Noise-free mapping of one channel value.
pub fn relight_value(v: u8, params: &LightingParams) -> u8 {
    from_linear(scaled_linear(v, params)).round() as u8
}

/// Relights `img` with an explicit scale factor.
pub fn relight<R: Rng + ?Sized>(img: &RgbImage, params: &LightingParams, rng: &mut R) -> RgbImage {
    let noisy = params.shot_noise && params.mode == Lighting::Dim;
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        let mut lin = scaled_linear(*v, params);
        if noisy {
            let lambda = lin / 255.0 * SHOT_NOISE_PEAK;
            let count = if lambda > 0.0 {
                Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            };
            lin = count * 255.0 / SHOT_NOISE_PEAK;
        }
        *v = from_linear(lin).round() as u8;
    }
    out
}

/// Dim or over-lit simulation with the scale drawn from the mode's range.
pub fn simulate_lighting<R: Rng + ?Sized>(img: &RgbImage, mode: Lighting, rng: &mut R) -> RgbImage {
    let (lo, hi) = mode.scale_range();
    let scale = rng.random_range(lo..=hi);
    relight(
        img,
        &LightingParams {
            mode,
            scale,
            shot_noise: true,
        },
        rng,
    )
}
