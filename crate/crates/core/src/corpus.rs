//! Procedural stand-in for a natural-photo corpus: smooth illumination,
//! occluding shapes, multi-octave texture and sensor noise.

use crate::error::{Error, Result};
use crate::image::{write_image, GrayImage};
use crate::seed::{derive_seed, rng_from_seed, TaskRng};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    /// Range of the additive Gaussian noise standard deviation, in gray levels.
    pub noise_sigma: (f64, f64),
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            width: 128,
            height: 128,
            count: 300,
            noise_sigma: (1.0, 3.0),
            seed: 0,
        }
    }
}

/// Bilinearly interpolated lattice noise with `cells` cells across the image.
fn value_noise(rng: &mut TaskRng, w: usize, h: usize, cells: usize) -> Vec<f64> {
    let gw = cells + 2;
    let lattice: Vec<f64> = (0..gw * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        let fy = r as f64 / h as f64 * cells as f64;
        let (iy, ty) = (fy.floor() as usize, fy.fract());
        let sy = ty * ty * (3.0 - 2.0 * ty);
        for c in 0..w {
            let fx = c as f64 / w as f64 * cells as f64;
            let (ix, tx) = (fx.floor() as usize, fx.fract());
            let sx = tx * tx * (3.0 - 2.0 * tx);
            let l = |y: usize, x: usize| lattice[y * gw + x];
            let top = l(iy, ix) * (1.0 - sx) + l(iy, ix + 1) * sx;
            let bot = l(iy + 1, ix) * (1.0 - sx) + l(iy + 1, ix + 1) * sx;
            out[r * w + c] = top * (1.0 - sy) + bot * sy;
        }
    }
    out
}

/// Separable Gaussian blur with border clamping.
fn blur(field: &mut [f64], w: usize, h: usize, sigma: f64) {
    if sigma < 0.05 {
        return;
    }
    let rad = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-rad..=rad)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let mut tmp = vec![0.0; field.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, d) in taps.iter().zip(-rad..=rad) {
                let cc = (c as isize + d).clamp(0, w as isize - 1) as usize;
                acc += t * field[r * w + cc];
            }
            tmp[r * w + c] = acc / total;
        }
    }
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, d) in taps.iter().zip(-rad..=rad) {
                let rr = (r as isize + d).clamp(0, h as isize - 1) as usize;
                acc += t * tmp[rr * w + c];
            }
            field[r * w + c] = acc / total;
        }
    }
}

/// One synthetic grayscale scene. Scenes differ in illumination, contrast,
/// texture strength and its spatial layout, optical blur, highlight clipping
/// and noise level.
pub fn generate_image(
    width: usize,
    height: usize,
    noise_sigma: (f64, f64),
    rng: &mut TaskRng,
) -> Result<GrayImage> {
    if width < 8 || height < 8 {
        return Err(Error::param("synthetic images must be at least 8x8"));
    }
    if !(noise_sigma.0 >= 0.0 && noise_sigma.1 >= noise_sigma.0) {
        return Err(Error::param("invalid noise range"));
    }
    let (w, h) = (width, height);
    let mut field = vec![0.0f64; w * h];

    let base = rng.random_range(60.0..190.0);
    let (gx, gy) = (rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
    let low = value_noise(rng, w, h, 2);
    let low_amp = rng.random_range(10.0..40.0);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (c as f64 / w as f64 - 0.5, r as f64 / h as f64 - 0.5);
            field[r * w + c] = base + gx * x + gy * y + low_amp * low[r * w + c];
        }
    }

    let n_shapes = rng.random_range(0..15);
    for _ in 0..n_shapes {
        let (cx, cy) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let (ax, ay) = (
            rng.random_range(0.03..0.35) * w as f64,
            rng.random_range(0.03..0.35) * h as f64,
        );
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let level = rng.random_range(0.0..255.0);
        let opacity = rng.random_range(0.4..1.0);
        let soft = rng.random_range(0.3..3.0);
        let rect = rng.random_bool(0.4);
        let (sa, ca) = angle.sin_cos();
        for r in 0..h {
            for c in 0..w {
                let (dx, dy) = (c as f64 - cx, r as f64 - cy);
                let (u, v) = ((dx * ca + dy * sa) / ax, (-dx * sa + dy * ca) / ay);
                // signed distance-like value in pixels, negative inside
                let d = if rect {
                    (u.abs().max(v.abs()) - 1.0) * ax.min(ay)
                } else {
                    ((u * u + v * v).sqrt() - 1.0) * ax.min(ay)
                };
                let cover = 1.0 / (1.0 + (d / soft).exp());
                let i = r * w + c;
                field[i] += opacity * cover * (level - field[i]);
            }
        }
    }

    // texture strength varies over orders of magnitude between scenes and,
    // through a smooth mask, between regions of one scene
    let tex_amp = (rng.random_range(0.3f64..40.0f64).ln() * 0.5
        + rng.random_range(0.3f64..40.0f64).ln() * 0.5)
        .exp();
    let mask_cells = rng.random_range(1..4);
    let mask = value_noise(rng, w, h, mask_cells);
    let mask_bias = rng.random_range(-0.5..1.0);
    let octaves = rng.random_range(2..6);
    let persistence = rng.random_range(0.4..0.8);
    let mut cells = rng.random_range(3..8);
    let mut amp = 1.0;
    let mut tex = vec![0.0; w * h];
    for _ in 0..octaves {
        let n = value_noise(rng, w, h, cells.min(w.max(h)));
        for (t, v) in tex.iter_mut().zip(&n) {
            *t += amp * v;
        }
        cells *= 2;
        amp *= persistence;
    }
    for ((f, t), m) in field.iter_mut().zip(&tex).zip(&mask) {
        let weight = (m + mask_bias).clamp(0.0, 1.5);
        *f += tex_amp * weight * t;
    }

    let contrast = rng.random_range(0.2f64.ln()..2.5f64.ln()).exp();
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let offset = rng.random_range(-40.0..40.0);
    for f in field.iter_mut() {
        *f = mean + offset + contrast * (*f - mean);
    }
    blur(&mut field, w, h, rng.random_range(0.0..1.5));

    let sigma = rng.random_range(noise_sigma.0..=noise_sigma.1);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let px = field
        .iter()
        .map(|&f| (f + noise.sample(rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(w, h, px)
}

/// Image `index` of the corpus defined by `config`; independent of `count`.
pub fn corpus_image(config: &CorpusConfig, index: usize) -> Result<GrayImage> {
    let mut rng = rng_from_seed(derive_seed(config.seed, "corpus-image", &[index as u64]));
    generate_image(config.width, config.height, config.noise_sigma, &mut rng)
}

pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<GrayImage>> {
    use rayon::prelude::*;
    (0..config.count)
        .into_par_iter()
        .map(|i| corpus_image(config, i))
        .collect()
}

/// Writes the corpus as `img_00000.pgm`, ... and returns the paths.
pub fn write_corpus(config: &CorpusConfig, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let images = generate_corpus(config)?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = dir.join(format!("img_{i:05}.pgm"));
            write_image(img, &p)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let cfg = CorpusConfig {
            width: 32,
            height: 24,
            count: 3,
            ..Default::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        assert_eq!(a, generate_corpus(&cfg).unwrap());
        assert_ne!(a[0], a[1]);
        assert_eq!(corpus_image(&cfg, 2).unwrap(), a[2]);
        assert_eq!((a[0].width(), a[0].height()), (32, 24));
    }

    #[test]
    fn images_have_spread() {
        let cfg = CorpusConfig {
            width: 64,
            height: 64,
            count: 4,
            ..Default::default()
        };
        for img in generate_corpus(&cfg).unwrap() {
            let (lo, hi) = img
                .pixels()
                .iter()
                .fold((255u8, 0u8), |(l, h), &p| (l.min(p), h.max(p)));
            assert!(hi - lo > 20);
        }
    }
}
