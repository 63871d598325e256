//! Image manipulations under detection, preprocessing, and distortion metrics.

use crate::error::{check_dim, Error, Result};
use crate::image::{ColorImage, GrayImage};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ManipulationKind {
    Ahe,
    Mf3,
    Mf5,
    Mf7,
}

impl ManipulationKind {
    pub const ALL: [ManipulationKind; 4] = [
        ManipulationKind::Ahe,
        ManipulationKind::Mf3,
        ManipulationKind::Mf5,
        ManipulationKind::Mf7,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ManipulationKind::Ahe => "ahe",
            ManipulationKind::Mf3 => "mf3",
            ManipulationKind::Mf5 => "mf5",
            ManipulationKind::Mf7 => "mf7",
        }
    }

    pub fn median_window(self) -> Option<usize> {
        match self {
            ManipulationKind::Ahe => None,
            ManipulationKind::Mf3 => Some(3),
            ManipulationKind::Mf5 => Some(5),
            ManipulationKind::Mf7 => Some(7),
        }
    }

    pub fn apply(self, image: &GrayImage) -> Result<GrayImage> {
        match self.median_window() {
            None => clahe(image, DEFAULT_CLIP_LIMIT),
            Some(w) => median_filter(image, w),
        }
    }
}

impl fmt::Display for ManipulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ManipulationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ahe" | "clahe" => Ok(ManipulationKind::Ahe),
            "mf3" => Ok(ManipulationKind::Mf3),
            "mf5" => Ok(ManipulationKind::Mf5),
            "mf7" => Ok(ManipulationKind::Mf7),
            other => Err(Error::param(format!(
                "unknown manipulation `{other}` (expected ahe, mf3, mf5, mf7)"
            ))),
        }
    }
}

pub const DEFAULT_CLIP_LIMIT: f64 = 0.02;
pub const CLAHE_TILES: usize = 8;
pub const CLAHE_BINS: usize = 256;

/// Clipped histogram with the excess spread back over the bins.
fn clip_histogram(hist: &mut [u32], clip: u32) {
    let bins = hist.len() as i64;
    let clip = i64::from(clip);
    let mut excess: i64 = hist.iter().map(|&h| (i64::from(h) - clip).max(0)).sum();
    let avg_incr = excess / bins;
    let upper = clip - avg_incr;
    for h in hist.iter_mut() {
        let v = i64::from(*h);
        if v > clip {
            *h = clip as u32;
        } else if v > upper {
            excess -= clip - v;
            *h = clip as u32;
        } else {
            excess -= avg_incr;
            *h = (v + avg_incr) as u32;
        }
    }
    let mut start = 0usize;
    while excess > 0 {
        let step = ((bins / excess).max(1)) as usize;
        let mut m = start;
        let before = excess;
        while m < hist.len() {
            if i64::from(hist[m]) < clip {
                hist[m] += 1;
                excess -= 1;
                if excess == 0 {
                    break;
                }
            }
            m += step;
        }
        start = (start + 1) % hist.len();
        if before == excess && start == 0 && hist.iter().all(|&h| i64::from(h) >= clip) {
            // every bin is full; nothing left to receive the remainder
            break;
        }
    }
}

/// Per-tile gray-level mapping into `[0, 255]`.
fn tile_mapping(hist: &[u32; CLAHE_BINS], n_pixels: u32, clip_limit: f64) -> [f64; CLAHE_BINS] {
    let min_clip = n_pixels.div_ceil(CLAHE_BINS as u32);
    let clip = min_clip + (clip_limit * f64::from(n_pixels - min_clip)).round() as u32;
    let mut h = *hist;
    clip_histogram(&mut h, clip);
    let scale = 255.0 / f64::from(n_pixels);
    let mut map = [0.0; CLAHE_BINS];
    let mut acc = 0u64;
    for (m, &c) in map.iter_mut().zip(h.iter()) {
        acc += u64::from(c);
        *m = (acc as f64 * scale).min(255.0);
    }
    map
}

/// Tile boundaries along one axis: tile `i` covers `[b[i], b[i+1])`.
pub(crate) fn tile_bounds(len: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|i| i * len / tiles).collect()
}

/// Contrast-limited adaptive histogram equalization on an 8×8 tile grid with
/// 256 bins, a uniform target distribution and bilinear blending of the
/// tile mappings between tile centers.
pub fn clahe(image: &GrayImage, clip_limit: f64) -> Result<GrayImage> {
    let (h, w) = (image.height(), image.width());
    if h < CLAHE_TILES || w < CLAHE_TILES {
        return Err(Error::param(format!(
            "CLAHE needs at least {CLAHE_TILES}x{CLAHE_TILES} pixels, got {w}x{h}"
        )));
    }
    if !(0.0..=1.0).contains(&clip_limit) {
        return Err(Error::param(format!(
            "clip limit must be in [0,1], got {clip_limit}"
        )));
    }
    let rb = tile_bounds(h, CLAHE_TILES);
    let cb = tile_bounds(w, CLAHE_TILES);
    let mut maps = Vec::with_capacity(CLAHE_TILES * CLAHE_TILES);
    for ti in 0..CLAHE_TILES {
        for tj in 0..CLAHE_TILES {
            let mut hist = [0u32; CLAHE_BINS];
            for r in rb[ti]..rb[ti + 1] {
                for c in cb[tj]..cb[tj + 1] {
                    hist[image.get(r, c) as usize] += 1;
                }
            }
            let n = ((rb[ti + 1] - rb[ti]) * (cb[tj + 1] - cb[tj])) as u32;
            maps.push(tile_mapping(&hist, n, clip_limit));
        }
    }
    let centers = |b: &[usize]| -> Vec<f64> {
        (0..CLAHE_TILES)
            .map(|i| (b[i] + b[i + 1] - 1) as f64 / 2.0)
            .collect()
    };
    let (cy, cx) = (centers(&rb), centers(&cb));
    let ry: Vec<(usize, usize, f64)> = (0..h).map(|r| interp_coords(&cy, r as f64)).collect();
    let rx: Vec<(usize, usize, f64)> = (0..w).map(|c| interp_coords(&cx, c as f64)).collect();
    let mut out = image.clone();
    for r in 0..h {
        let (i0, i1, wy) = ry[r];
        for c in 0..w {
            let (j0, j1, wx) = rx[c];
            let v = image.get(r, c) as usize;
            let m = |i: usize, j: usize| maps[i * CLAHE_TILES + j][v];
            let top = (1.0 - wx) * m(i0, j0) + wx * m(i0, j1);
            let bottom = (1.0 - wx) * m(i1, j0) + wx * m(i1, j1);
            let val = (1.0 - wy) * top + wy * bottom;
            out.set(r, c, val.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

/// Neighboring tile indices and the weight of the second one for coordinate `x`.
fn interp_coords(centers: &[f64], x: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if x <= centers[0] {
        return (0, 0, 0.0);
    }
    if x >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.iter().rposition(|&c| c <= x).unwrap_or(0);
    let t = (x - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

/// Symmetric border index: `-1 -> 0`, `-2 -> 1`, `n -> n-1`, ...
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Median over a `window×window` neighborhood with symmetric border replication.
pub fn median_filter(image: &GrayImage, window: usize) -> Result<GrayImage> {
    if !matches!(window, 3 | 5 | 7) {
        return Err(Error::param(format!(
            "median window must be 3, 5 or 7, got {window}"
        )));
    }
    let (h, w) = (image.height(), image.width());
    let rad = (window / 2) as isize;
    let mut out = image.clone();
    let mut buf = Vec::with_capacity(window * window);
    let cols: Vec<Vec<usize>> = (0..w)
        .map(|c| (-rad..=rad).map(|d| reflect(c as isize + d, w)).collect())
        .collect();
    for r in 0..h {
        let rows: Vec<usize> = (-rad..=rad).map(|d| reflect(r as isize + d, h)).collect();
        for c in 0..w {
            buf.clear();
            for &rr in &rows {
                for &cc in &cols[c] {
                    buf.push(image.get(rr, cc));
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable(mid);
            out.set(r, c, *m);
        }
    }
    Ok(out)
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, rounded half-up.
pub fn to_grayscale(rgb: &ColorImage) -> Result<GrayImage> {
    if rgb.channels != 3 {
        return Err(Error::param(format!(
            "expected 3 channels, got {}",
            rgb.channels
        )));
    }
    check_dim(rgb.width * rgb.height * 3, rgb.data.len())?;
    let px = rgb
        .data
        .chunks_exact(3)
        .map(|p| {
            ((299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]) + 500) / 1000)
                .min(255) as u8
        })
        .collect();
    GrayImage::new(rgb.width, rgb.height, px)
}

/// 4×4 block mean, rounded half-up; trailing rows/columns are dropped.
pub fn downsample4(image: &GrayImage) -> Result<GrayImage> {
    let (h, w) = (image.height() / 4, image.width() / 4);
    if h == 0 || w == 0 {
        return Err(Error::param("downsampling needs at least 4x4 pixels"));
    }
    GrayImage::from_fn(w, h, |r, c| {
        let mut s = 0u32;
        for dr in 0..4 {
            for dc in 0..4 {
                s += u32::from(image.get(4 * r + dr, 4 * c + dc));
            }
        }
        ((s + 8) / 16) as u8
    })
}

/// PSNR in dB over the 8-bit range; `f64::INFINITY` marks identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::param(format!(
            "PSNR needs equal sizes, got {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sse: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (i64::from(x) - i64::from(y)).pow(2) as u64)
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.pixels().len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

/// `10 log10(‖v‖² / ‖v - v*‖²)`.
pub fn feature_snr(v: &[f64], v_star: &[f64]) -> Result<f64> {
    check_dim(v.len(), v_star.len())?;
    let signal: f64 = v.iter().map(|x| x * x).sum();
    let noise: f64 = v.iter().zip(v_star).map(|(a, b)| (a - b) * (a - b)).sum();
    if noise == 0.0 {
        return Err(Error::UndefinedMetric(
            "feature SNR of an undistorted vector".into(),
        ));
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Distortion of an attack; `psnr_db` is infinite for an untouched image and
/// absent for feature-domain attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub psnr_db: Option<f64>,
    pub feature_snr_db: Option<f64>,
    pub feature_distance: f64,
}

/// Mean over finite values, skipping the identical-image marker.
pub fn mean_finite(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}
