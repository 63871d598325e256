//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rfs_forensics::image::GrayImage;
use rfs_forensics::spam::FeatureNormalizer;
use rfs_forensics::svm::{Kernel, SvmModel};

/// Straight transcription of the second-order SPAM definition.
pub fn naive_spam(img: &GrayImage) -> Vec<f64> {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let px = |r: isize, c: isize| i32::from(img.get(r as usize, c as usize));
    let d = |r: isize, c: isize, dr: isize, dc: isize| (px(r, c) - px(r + dr, c + dc)).clamp(-3, 3);
    let dirs = [
        (0, 1),
        (0, -1),
        (1, 0),
        (-1, 0),
        (1, 1),
        (-1, -1),
        (1, -1),
        (-1, 1),
    ];
    let mut per_dir = Vec::new();
    for &(dr, dc) in &dirs {
        let mut triples = vec![0.0f64; 343];
        let mut ctx = vec![0.0f64; 49];
        for r in 0..h {
            for c in 0..w {
                let inside =
                    |k: isize| (0..h).contains(&(r + k * dr)) && (0..w).contains(&(c + k * dc));
                if !inside(3) {
                    continue;
                }
                let a = d(r, c, dr, dc) + 3;
                let b = d(r + dr, c + dc, dr, dc) + 3;
                let e = d(r + 2 * dr, c + 2 * dc, dr, dc) + 3;
                triples[(a * 49 + b * 7 + e) as usize] += 1.0;
                ctx[(a * 7 + b) as usize] += 1.0;
            }
        }
        let m: Vec<f64> = (0..343)
            .map(|i| {
                if ctx[i / 7] > 0.0 {
                    triples[i] / ctx[i / 7]
                } else {
                    0.0
                }
            })
            .collect();
        per_dir.push(m);
    }
    let mut out = vec![0.0; 686];
    for i in 0..343 {
        out[i] = (per_dir[0][i] + per_dir[1][i] + per_dir[2][i] + per_dir[3][i]) / 4.0;
        out[343 + i] = (per_dir[4][i] + per_dir[5][i] + per_dir[6][i] + per_dir[7][i]) / 4.0;
    }
    out
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, spread: u8) -> GrayImage {
    let base: u8 = rng.random_range(0..=255u8.saturating_sub(spread));
    let px = (0..w * h)
        .map(|_| base + rng.random_range(0..=spread))
        .collect();
    GrayImage::new(w, h, px).unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

pub fn random_model(
    rng: &mut ChaCha8Rng,
    kernel: Kernel,
    dim: usize,
    n_sv: usize,
    normalized: bool,
) -> SvmModel {
    let svs: Vec<Vec<f64>> = (0..n_sv).map(|_| gaussian(rng, dim, 1.0)).collect();
    let mut coefs: Vec<f64> = (0..n_sv).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mean = coefs.iter().sum::<f64>() / n_sv as f64;
    coefs.iter_mut().for_each(|c| *c -= mean);
    let norm = normalized.then(|| {
        FeatureNormalizer::new((0..dim).map(|_| rng.random_range(0.3..3.0)).collect()).unwrap()
    });
    SvmModel::new(
        kernel,
        svs,
        coefs,
        rng.random_range(-1.0..1.0),
        rng.random_range(0.5..3.0),
        dim,
        norm,
    )
    .unwrap()
}
