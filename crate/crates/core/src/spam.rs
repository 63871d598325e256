//! Second-order SPAM features (truncation `T = 3`, 686 dimensions).
//!
//! For a step vector `s`, the difference array is `D_s(p) = I(p) - I(p + s)`,
//! clamped to `[-3, 3]`. Along every direction we count triples
//! `(D(p), D(p+s), D(p+2s))` whose four pixels `p .. p+3s` lie inside the
//! image and estimate `Pr(d3 | d1, d2)`. Contexts `(d1, d2)` that never occur
//! contribute zeros. Features `0..343` average the four axis directions,
//! features `343..686` the four diagonal ones; each block is indexed by
//! `(d1+3)·49 + (d2+3)·7 + (d3+3)`.

use crate::error::{check_dim, Error, Result};
use crate::image::GrayImage;
use serde::{Deserialize, Serialize};

pub const TRUNCATION: i32 = 3;
pub const LEVELS: usize = 7;
pub const CONTEXTS: usize = LEVELS * LEVELS;
pub const BLOCK: usize = LEVELS * LEVELS * LEVELS;
pub const SPAM_DIM: usize = 2 * BLOCK;
const NORMALIZER_FLOOR: f64 = 1e-8;

/// Step vectors (row, col); the first four form the axis group, the last four the diagonal group.
pub const DIRECTIONS: [(isize, isize); 8] = [
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamFeatures(Vec<f64>);

impl SpamFeatures {
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        check_dim(SPAM_DIM, values.len())?;
        Ok(SpamFeatures(values))
    }
    pub fn values(&self) -> &[f64] {
        &self.0
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[inline]
fn clamp_diff(a: u8, b: u8) -> usize {
    ((i32::from(a) - i32::from(b)).clamp(-TRUNCATION, TRUNCATION) + TRUNCATION) as usize
}

/// Transition counts for the eight directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpamCounts {
    triples: [[u32; BLOCK]; 8],
    contexts: [[u32; CONTEXTS]; 8],
}

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < 4 || img.height() < 4 {
        return Err(Error::param(format!(
            "SPAM needs at least 4x4 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Valid start range along one axis for a step component `s` (triples span `3s`).
#[inline]
fn start_range(len: usize, s: isize) -> (usize, usize) {
    match s {
        0 => (0, len),
        1 => (0, len - 3),
        _ => (3, len),
    }
}

impl SpamCounts {
    pub fn from_image(img: &GrayImage) -> Result<Self> {
        check_size(img)?;
        let mut c = SpamCounts {
            triples: [[0; BLOCK]; 8],
            contexts: [[0; CONTEXTS]; 8],
        };
        let w = img.width() as isize;
        let px = img.pixels();
        for (d, &(sr, sc)) in DIRECTIONS.iter().enumerate() {
            let (r0, r1) = start_range(img.height(), sr);
            let (c0, c1) = start_range(img.width(), sc);
            let step = sr * w + sc;
            for r in r0..r1 {
                for col in c0..c1 {
                    let p = (r as isize * w + col as isize) as usize;
                    let at = |k: isize| px[(p as isize + k * step) as usize];
                    let (a, b, e, f) = (at(0), at(1), at(2), at(3));
                    let d1 = clamp_diff(a, b);
                    let d2 = clamp_diff(b, e);
                    let d3 = clamp_diff(e, f);
                    c.triples[d][d1 * CONTEXTS + d2 * LEVELS + d3] += 1;
                    c.contexts[d][d1 * LEVELS + d2] += 1;
                }
            }
        }
        Ok(c)
    }

    #[inline]
    fn transition(&self, dir: usize, idx: usize) -> f64 {
        let ctx = self.contexts[dir][idx / LEVELS];
        if ctx == 0 {
            0.0
        } else {
            f64::from(self.triples[dir][idx]) / f64::from(ctx)
        }
    }

    /// Feature `i` of the 686-vector.
    #[inline]
    pub fn feature(&self, i: usize) -> f64 {
        let (g, idx) = (i / BLOCK, i % BLOCK);
        let base = 4 * g;
        (self.transition(base, idx)
            + self.transition(base + 1, idx)
            + self.transition(base + 2, idx)
            + self.transition(base + 3, idx))
            / 4.0
    }

    pub fn features(&self) -> SpamFeatures {
        SpamFeatures((0..SPAM_DIM).map(|i| self.feature(i)).collect())
    }

    /// Per-direction conditional distributions, before averaging across directions.
    pub fn direction_transitions(&self, dir: usize) -> Vec<f64> {
        (0..BLOCK).map(|i| self.transition(dir, i)).collect()
    }

    pub fn context_count(&self, dir: usize, ctx: usize) -> u32 {
        self.contexts[dir][ctx]
    }
}

pub fn extract_spam(img: &GrayImage) -> Result<SpamFeatures> {
    Ok(SpamCounts::from_image(img)?.features())
}

/// Image plus its SPAM counts, updated in place on single-pixel edits.
#[derive(Debug, Clone)]
pub struct SpamCache {
    image: GrayImage,
    counts: SpamCounts,
}

/// A (group, context) pair touched by an edit.
type TouchedContext = (usize, usize);

impl SpamCache {
    pub fn new(image: GrayImage) -> Result<Self> {
        let counts = SpamCounts::from_image(&image)?;
        Ok(SpamCache { image, counts })
    }

    /// Wraps precomputed counts; call [`SpamCache::validate`] to check them.
    pub fn from_parts(image: GrayImage, counts: SpamCounts) -> Result<Self> {
        check_size(&image)?;
        Ok(SpamCache { image, counts })
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }
    pub fn counts(&self) -> &SpamCounts {
        &self.counts
    }
    pub fn into_image(self) -> GrayImage {
        self.image
    }

    pub fn features(&self) -> SpamFeatures {
        self.counts.features()
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = SpamCounts::from_image(&self.image)?;
        if fresh != self.counts {
            return Err(Error::CacheInvalid(
                "cached counts differ from a full recount".into(),
            ));
        }
        Ok(())
    }

    /// Visits every triple (direction, start offset in pixels) that includes pixel `(row, col)`.
    fn for_each_triple(&self, row: usize, col: usize, mut f: impl FnMut(usize, isize, isize)) {
        let (h, w) = (self.image.height() as isize, self.image.width() as isize);
        let (r, c) = (row as isize, col as isize);
        for (d, &(sr, sc)) in DIRECTIONS.iter().enumerate() {
            for back in 0..4 {
                let (tr, tc) = (r - back * sr, c - back * sc);
                let (er, ec) = (tr + 3 * sr, tc + 3 * sc);
                if tr < 0 || tc < 0 || tr >= h || tc >= w || er < 0 || ec < 0 || er >= h || ec >= w
                {
                    continue;
                }
                f(d, tr * w + tc, sr * w + sc);
            }
        }
    }

    fn triple_index(&self, start: isize, step: isize) -> usize {
        let px = self.image.pixels();
        let at = |k: isize| px[(start + k * step) as usize];
        clamp_diff(at(0), at(1)) * CONTEXTS
            + clamp_diff(at(1), at(2)) * LEVELS
            + clamp_diff(at(2), at(3))
    }

    fn adjust(
        &mut self,
        row: usize,
        col: usize,
        add: bool,
        touched: Option<&mut Vec<TouchedContext>>,
    ) {
        let mut list = Vec::new();
        self.for_each_triple(row, col, |d, start, step| list.push((d, start, step)));
        let mut touched = touched;
        for (d, start, step) in list {
            let idx = self.triple_index(start, step);
            let ctx = idx / LEVELS;
            if add {
                self.counts.triples[d][idx] += 1;
                self.counts.contexts[d][ctx] += 1;
            } else {
                self.counts.triples[d][idx] -= 1;
                self.counts.contexts[d][ctx] -= 1;
            }
            if let Some(t) = touched.as_deref_mut() {
                let key = (d / 4, ctx);
                if !t.contains(&key) {
                    t.push(key);
                }
            }
        }
    }

    fn check_pixel(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.image.height() || col >= self.image.width() {
            return Err(Error::param(format!(
                "pixel ({row},{col}) outside {}x{} image",
                self.image.height(),
                self.image.width()
            )));
        }
        Ok(())
    }

    /// Sets one pixel, recounting only the triples that contain it.
    pub fn set_pixel(&mut self, row: usize, col: usize, value: u8) -> Result<()> {
        self.check_pixel(row, col)?;
        if self.image.get(row, col) == value {
            return Ok(());
        }
        self.adjust(row, col, false, None);
        self.image.set(row, col, value);
        self.adjust(row, col, true, None);
        Ok(())
    }

    /// Applies a single-pixel edit and returns the resulting feature vector.
    pub fn update(&mut self, row: usize, col: usize, value: u8) -> Result<SpamFeatures> {
        self.set_pixel(row, col, value)?;
        Ok(self.features())
    }

    /// Feature entries that would change if `(row, col)` were set to `value`,
    /// as `(index, new value)`; the cache is left unchanged.
    pub fn probe(
        &mut self,
        row: usize,
        col: usize,
        value: u8,
        out: &mut Vec<(usize, f64)>,
    ) -> Result<()> {
        self.check_pixel(row, col)?;
        out.clear();
        let old = self.image.get(row, col);
        if old == value {
            return Ok(());
        }
        let mut touched = Vec::with_capacity(64);
        self.adjust(row, col, false, Some(&mut touched));
        self.image.set(row, col, value);
        self.adjust(row, col, true, Some(&mut touched));
        for &(g, ctx) in &touched {
            for d3 in 0..LEVELS {
                let i = g * BLOCK + ctx * LEVELS + d3;
                out.push((i, self.counts.feature(i)));
            }
        }
        self.adjust(row, col, false, None);
        self.image.set(row, col, old);
        self.adjust(row, col, true, None);
        Ok(())
    }
}

/// Per-feature scale (training-set standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub scale: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn new(scale: Vec<f64>) -> Result<Self> {
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::param(
                "normalizer scales must be positive and finite",
            ));
        }
        Ok(FeatureNormalizer { scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.scale.len(), f.len())?;
        Ok(f.iter().zip(&self.scale).map(|(x, s)| x / s).collect())
    }

    pub fn invert(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.scale.len(), f.len())?;
        Ok(f.iter().zip(&self.scale).map(|(x, s)| x * s).collect())
    }

    /// Restriction to the given feature indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        FeatureNormalizer {
            scale: indices.iter().map(|&i| self.scale[i]).collect(),
        }
    }
}

/// Sample standard deviation per coordinate, floored at 1e-8.
pub fn fit_normalizer<V: AsRef<[f64]>>(features: &[V]) -> Result<FeatureNormalizer> {
    if features.len() < 2 {
        return Err(Error::param("normalizer needs at least 2 feature vectors"));
    }
    let dim = features[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for f in features {
        check_dim(dim, f.as_ref().len())?;
        for (m, x) in mean.iter_mut().zip(f.as_ref()) {
            *m += x;
        }
    }
    let n = features.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in features {
        for ((v, x), m) in var.iter_mut().zip(f.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| (v / (n - 1.0)).sqrt().max(NORMALIZER_FLOOR))
        .collect();
    Ok(FeatureNormalizer { scale })
}

pub fn apply_normalizer(norm: &FeatureNormalizer, f: &SpamFeatures) -> Result<Vec<f64>> {
    norm.apply(f.values())
}
