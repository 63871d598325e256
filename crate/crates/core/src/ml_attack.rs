//! Attacks against SPAM/SVM detectors and the security evaluation of
//! randomized feature selection.

use crate::error::{check_dim, Error, Result};
use crate::image::GrayImage;
use crate::manipulation::{feature_snr, psnr, DistortionReport, ManipulationKind};
use crate::reduction::{draw_rfs, ReductionKind, ReductionMap};
use crate::seed::{derive_seed, rng_from_seed};
use crate::spam::{fit_normalizer, FeatureNormalizer, SpamCache, SPAM_DIM};
use crate::svm::{train, Kernel, SvmModel, TrainConfig, TrainReport, MANIPULATED, ORIGINAL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Something the feature-domain descent can push toward the "original" side.
pub trait AttackTarget: Sync {
    fn dim(&self) -> usize;
    /// `(score, probability)`; the score decreases toward "original".
    fn evaluate(&self, v: &[f64]) -> Result<(f64, f64)>;
    fn gradient(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// Per-feature scale of the space the descent should run in (`v / scale`).
    fn scale(&self) -> Option<Vec<f64>> {
        None
    }
}

impl AttackTarget for SvmModel {
    fn dim(&self) -> usize {
        self.feature_dim
    }
    fn evaluate(&self, v: &[f64]) -> Result<(f64, f64)> {
        let g = self.discriminant(v)?;
        Ok((g, self.probability_of_score(g)))
    }
    fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        SvmModel::gradient(self, v)
    }
    fn scale(&self) -> Option<Vec<f64>> {
        self.normalizer.as_ref().map(|n| n.scale.clone())
    }
}

/// An SVM trained on `map`-reduced features, evaluated on full vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedDetector {
    pub map: ReductionMap,
    pub model: SvmModel,
}

impl ReducedDetector {
    pub fn new(map: ReductionMap, model: SvmModel) -> Result<Self> {
        check_dim(map.rows(), model.feature_dim)?;
        Ok(ReducedDetector { map, model })
    }

    /// Trains on the features selected by `map`; with `normalize` the scale is
    /// fitted on the reduced training features.
    pub fn train(
        map: ReductionMap,
        data: &LabeledFeatures,
        normalize: bool,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let (x, y) = data.training_matrix();
        let xr: Vec<Vec<f64>> = x.iter().map(|v| map.apply(v)).collect::<Result<_>>()?;
        let norm = if normalize {
            Some(fit_normalizer(&xr)?)
        } else {
            None
        };
        let (model, report, _) = train(&xr, &y, config, norm)?;
        Ok((ReducedDetector { map, model }, report))
    }

    pub fn discriminant(&self, v: &[f64]) -> Result<f64> {
        self.model.discriminant(&self.map.apply(v)?)
    }

    pub fn is_manipulated(&self, v: &[f64]) -> Result<bool> {
        Ok(self.discriminant(v)? > 0.0)
    }

    fn full_scale(&self) -> Option<Vec<f64>> {
        let norm = self.model.normalizer.as_ref()?;
        let idx = self.map.indices()?;
        let mut s = vec![1.0; self.map.cols()];
        for (j, &i) in idx.iter().enumerate() {
            s[i] = norm.scale[j];
        }
        Some(s)
    }
}

impl AttackTarget for ReducedDetector {
    fn dim(&self) -> usize {
        self.map.cols()
    }
    fn evaluate(&self, v: &[f64]) -> Result<(f64, f64)> {
        let g = self.discriminant(v)?;
        Ok((g, self.model.probability_of_score(g)))
    }
    fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.map.lift(&self.model.gradient(&self.map.apply(v)?)?)
    }
    fn scale(&self) -> Option<Vec<f64>> {
        self.full_scale()
    }
}

/// Average of several reduced detectors: score `ḡ = mean gᵢ(Sᵢ v)` and
/// probability `mean pᵢ`.
pub struct Ensemble<'a> {
    pub members: &'a [ReducedDetector],
    pub scale: Option<Vec<f64>>,
}

impl<'a> Ensemble<'a> {
    /// Ensemble descending in the raw feature space, or in `scale` units.
    pub fn new(members: &'a [ReducedDetector], scale: Option<Vec<f64>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::param("ensemble must not be empty"))?;
        let n = first.map.cols();
        if let Some(m) = members.iter().find(|m| m.map.cols() != n) {
            return Err(Error::Dimension {
                expected: n,
                actual: m.map.cols(),
            });
        }
        if let Some(s) = &scale {
            check_dim(n, s.len())?;
        }
        Ok(Ensemble { members, scale })
    }
}

impl AttackTarget for Ensemble<'_> {
    fn dim(&self) -> usize {
        self.members[0].map.cols()
    }
    fn evaluate(&self, v: &[f64]) -> Result<(f64, f64)> {
        let (mut g, mut p) = (0.0, 0.0);
        for m in self.members {
            let (gi, pi) = m.evaluate(v)?;
            g += gi;
            p += pi;
        }
        let n = self.members.len() as f64;
        Ok((g / n, p / n))
    }
    fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim()];
        for m in self.members {
            for (a, g) in acc.iter_mut().zip(m.gradient(v)?) {
                *a += g;
            }
        }
        let n = self.members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
    fn scale(&self) -> Option<Vec<f64>> {
        self.scale.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    /// The input was already on the target side; nothing was changed.
    AlreadyEvading,
    Success,
    /// No descent direction left (vanishing gradient or no improving pixel).
    Stalled,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome<P> {
    pub payload: P,
    pub iterations: usize,
    pub success: bool,
    pub status: AttackStatus,
    pub initial_probability: f64,
    pub final_probability: f64,
    pub distortion: DistortionReport,
    /// Probability after each accepted iteration, when requested.
    pub trace: Vec<f64>,
}

impl<P> AttackOutcome<P> {
    pub fn summary(&self) -> AttackSummary {
        AttackSummary {
            iterations: self.iterations,
            success: self.success,
            status: self.status,
            initial_probability: self.initial_probability,
            final_probability: self.final_probability,
            distortion: self.distortion,
        }
    }
}

/// Outcome without the payload, for manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub iterations: usize,
    pub success: bool,
    pub status: AttackStatus,
    pub initial_probability: f64,
    pub final_probability: f64,
    pub distortion: DistortionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttackConfig {
    pub epsilon: f64,
    /// Initial step as a fraction of the input norm (in descent coordinates).
    pub step_size: f64,
    pub max_iterations: usize,
    pub record_trace: bool,
    /// Shorten the final step by bisection to land just inside the target
    /// region instead of stopping after the first step that crosses it.
    #[serde(default)]
    pub refine: bool,
}

impl Default for FeatureAttackConfig {
    fn default() -> Self {
        FeatureAttackConfig {
            epsilon: 0.5,
            step_size: 0.01,
            max_iterations: 5000,
            record_trace: false,
            refine: false,
        }
    }
}

impl FeatureAttackConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        FeatureAttackConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.step_size > 0.0) || self.max_iterations == 0 {
            return Err(Error::param("step size and iteration cap must be positive"));
        }
        Ok(())
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::param(format!(
            "epsilon must be in (0, 0.5], got {eps}"
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn feature_distortion(v: &[f64], v_star: &[f64]) -> DistortionReport {
    let d: f64 = v
        .iter()
        .zip(v_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    DistortionReport {
        psnr_db: None,
        feature_snr_db: feature_snr(v, v_star).ok(),
        feature_distance: d,
    }
}

/// Normalized-gradient descent on the target score until the probability
/// drops to `epsilon`. A step that does not lower the score is halved and
/// retried; after an accepted step the step grows back toward its initial size.
pub fn attack_feature_domain<T: AttackTarget + ?Sized>(
    target: &T,
    v: &[f64],
    config: &FeatureAttackConfig,
) -> Result<AttackOutcome<Vec<f64>>> {
    config.validate()?;
    check_dim(target.dim(), v.len())?;
    let scale = target.scale().unwrap_or_else(|| vec![1.0; v.len()]);
    check_dim(v.len(), scale.len())?;
    let to_v = |x: &[f64]| -> Vec<f64> { x.iter().zip(&scale).map(|(a, s)| a * s).collect() };
    let (mut g, p0) = target.evaluate(v)?;
    let mut p = p0;
    let done = |payload: Vec<f64>, iterations, status, p_final, trace| {
        let distortion = if status == AttackStatus::AlreadyEvading {
            DistortionReport {
                psnr_db: None,
                feature_snr_db: None,
                feature_distance: 0.0,
            }
        } else {
            feature_distortion(v, &payload)
        };
        let success = p_final <= config.epsilon;
        AttackOutcome {
            payload,
            iterations,
            success,
            status,
            initial_probability: p0,
            final_probability: p_final,
            distortion,
            trace,
        }
    };
    if p <= config.epsilon {
        return Ok(done(
            v.to_vec(),
            0,
            AttackStatus::AlreadyEvading,
            p,
            Vec::new(),
        ));
    }
    let mut x: Vec<f64> = v.iter().zip(&scale).map(|(a, s)| a / s).collect();
    let x_norm = norm(&x);
    let initial_step = config.step_size * if x_norm > 0.0 { x_norm } else { 1.0 };
    let min_step = 1e-12 * initial_step;
    let mut step = initial_step;
    let mut trace = Vec::new();
    for it in 1..=config.max_iterations {
        let mut dir: Vec<f64> = target
            .gradient(&to_v(&x))?
            .iter()
            .zip(&scale)
            .map(|(gr, s)| gr * s)
            .collect();
        let dn = norm(&dir);
        if !(dn >= 1e-12) {
            let cur = to_v(&x);
            return Ok(done(cur, it - 1, AttackStatus::Stalled, p, trace));
        }
        dir.iter_mut().for_each(|d| *d /= dn);
        loop {
            let x_new: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - step * d).collect();
            let v_new = to_v(&x_new);
            let (g_new, p_new) = target.evaluate(&v_new)?;
            if p_new <= config.epsilon {
                let (xs, ps) = if config.refine {
                    refine_crossing(target, &x, &x_new, p_new, config.epsilon, &to_v)?
                } else {
                    (x_new, p_new)
                };
                if config.record_trace {
                    trace.push(ps);
                }
                return Ok(done(to_v(&xs), it, AttackStatus::Success, ps, trace));
            }
            if g_new < g {
                x = x_new;
                g = g_new;
                p = p_new;
                step = (step * 2.0).min(initial_step);
                break;
            }
            step /= 2.0;
            if step < min_step {
                let cur = to_v(&x);
                return Ok(done(cur, it, AttackStatus::Stalled, p, trace));
            }
        }
        if config.record_trace {
            trace.push(p);
        }
    }
    let cur = to_v(&x);
    Ok(done(
        cur,
        config.max_iterations,
        AttackStatus::BudgetExhausted,
        p,
        trace,
    ))
}

/// Shortest point on `[outside, inside]` still satisfying `p ≤ epsilon`.
fn refine_crossing<T: AttackTarget + ?Sized>(
    target: &T,
    outside: &[f64],
    inside: &[f64],
    p_inside: f64,
    epsilon: f64,
    to_v: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    let (mut lo, mut hi, mut p_hi) = (0.0f64, 1.0f64, p_inside);
    let at = |t: f64| -> Vec<f64> {
        outside
            .iter()
            .zip(inside)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (_, pm) = target.evaluate(&to_v(&at(mid)))?;
        if pm <= epsilon {
            hi = mid;
            p_hi = pm;
        } else {
            lo = mid;
        }
    }
    Ok((at(hi), p_hi))
}

/// Descent on the average discriminant of an ensemble of reduced detectors.
pub fn attack_eot(
    ensemble: &Ensemble<'_>,
    v: &[f64],
    config: &FeatureAttackConfig,
) -> Result<AttackOutcome<Vec<f64>>> {
    attack_feature_domain(ensemble, v, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelAttackConfig {
    pub epsilon: f64,
    pub pixel_fraction: f64,
    pub max_iterations: usize,
}

impl Default for PixelAttackConfig {
    fn default() -> Self {
        PixelAttackConfig {
            epsilon: 0.5,
            pixel_fraction: 0.2,
            max_iterations: 100,
        }
    }
}

/// Kernel-dependent per-support-vector quantity kept up to date under sparse
/// feature edits: squared distance (RBF) or inner product (others).
struct KernelState {
    kernel: Kernel,
    values: Vec<f64>,
}

impl KernelState {
    fn new(model: &SvmModel, x: &[f64]) -> Self {
        let values = model
            .support_vectors
            .iter()
            .map(|sv| match model.kernel {
                Kernel::Rbf { .. } => crate::svm::sq_dist(x, sv),
                _ => crate::svm::dot(x, sv),
            })
            .collect();
        KernelState {
            kernel: model.kernel,
            values,
        }
    }

    fn score(&self, model: &SvmModel, values: &[f64]) -> f64 {
        let k = |s: f64| match self.kernel {
            Kernel::Linear => s,
            Kernel::Polynomial { c, degree } => (s + c).powi(degree as i32),
            Kernel::Rbf { gamma } => (-gamma * s).exp(),
        };
        values
            .iter()
            .zip(&model.coefficients)
            .map(|(&s, c)| c * k(s))
            .sum::<f64>()
            + model.bias
    }

    /// Values after replacing prepared entries `x[j]` by `new`.
    fn updated(&self, model: &SvmModel, x: &[f64], changes: &[(usize, f64)], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.values);
        for (i, sv) in model.support_vectors.iter().enumerate() {
            let mut delta = 0.0;
            for &(j, new) in changes {
                delta += match self.kernel {
                    Kernel::Rbf { .. } => {
                        (new - sv[j]) * (new - sv[j]) - (x[j] - sv[j]) * (x[j] - sv[j])
                    }
                    _ => (new - x[j]) * sv[j],
                };
            }
            out[i] += delta;
        }
    }
}

fn prepared_features(model: &SvmModel, cache: &SpamCache) -> Result<Vec<f64>> {
    model.prepare(cache.features().values())
}

/// Greedy ±1 pixel attack: every iteration scores both candidate edits of
/// every pixel with exact incremental feature updates, applies the best edit
/// at the `pixel_fraction` most helpful pixels, and recounts the features.
/// If the joint edit does not lower the score, the edit set is halved.
pub fn attack_pixel_domain(
    model: &SvmModel,
    image: &GrayImage,
    config: &PixelAttackConfig,
) -> Result<AttackOutcome<GrayImage>> {
    check_epsilon(config.epsilon)?;
    if !(config.pixel_fraction > 0.0 && config.pixel_fraction <= 1.0) || config.max_iterations == 0
    {
        return Err(Error::param(
            "pixel fraction must be in (0,1] and the iteration cap positive",
        ));
    }
    check_dim(SPAM_DIM, model.feature_dim)?;
    let mut cache = SpamCache::new(image.clone())?;
    let mut x = prepared_features(model, &cache)?;
    let mut state = KernelState::new(model, &x);
    let mut g = state.score(model, &state.values);
    let p0 = model.probability_of_score(g);
    let finish =
        |img: GrayImage, iterations, status, g_final: f64| -> Result<AttackOutcome<GrayImage>> {
            let p_final = model.probability_of_score(g_final);
            let v0 = crate::spam::extract_spam(image)?.into_vec();
            let v1 = crate::spam::extract_spam(&img)?.into_vec();
            let distortion = DistortionReport {
                psnr_db: Some(psnr(image, &img)?),
                feature_snr_db: feature_snr(&v0, &v1).ok(),
                feature_distance: norm(&v0.iter().zip(&v1).map(|(a, b)| a - b).collect::<Vec<_>>()),
            };
            Ok(AttackOutcome {
                payload: img,
                iterations,
                success: p_final <= config.epsilon,
                status,
                initial_probability: p0,
                final_probability: p_final,
                distortion,
                trace: Vec::new(),
            })
        };
    if p0 <= config.epsilon {
        return finish(image.clone(), 0, AttackStatus::AlreadyEvading, g);
    }
    let (h, w) = (image.height(), image.width());
    let budget = ((config.pixel_fraction * (h * w) as f64).ceil() as usize).max(1);
    let mut changes = Vec::new();
    let mut scratch = Vec::new();
    for it in 1..=config.max_iterations {
        // (score change, row, col, new value); ranking by score change equals
        // ranking by probability change since p is increasing in g
        let mut candidates: Vec<(f64, usize, usize, u8)> = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let cur = cache.image().get(r, c);
                let mut best: Option<(f64, u8)> = None;
                for nv in [cur.checked_add(1), cur.checked_sub(1)]
                    .into_iter()
                    .flatten()
                {
                    cache.probe(r, c, nv, &mut changes)?;
                    if let Some(n) = &model.normalizer {
                        changes.iter_mut().for_each(|(j, val)| *val /= n.scale[*j]);
                    }
                    state.updated(model, &x, &changes, &mut scratch);
                    let dg = state.score(model, &scratch) - g;
                    if dg < 0.0 && best.is_none_or(|(b, _)| dg < b) {
                        best = Some((dg, nv));
                    }
                }
                if let Some((dg, nv)) = best {
                    candidates.push((dg, r, c, nv));
                }
            }
        }
        if candidates.is_empty() {
            return finish(cache.into_image(), it - 1, AttackStatus::Stalled, g);
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        candidates.truncate(budget);
        let mut take = candidates.len();
        loop {
            let mut trial = cache.image().clone();
            for &(_, r, c, nv) in &candidates[..take] {
                trial.set(r, c, nv);
            }
            let trial_cache = SpamCache::new(trial)?;
            let tx = prepared_features(model, &trial_cache)?;
            let ts = KernelState::new(model, &tx);
            let tg = ts.score(model, &ts.values);
            if tg < g {
                cache = trial_cache;
                x = tx;
                state = ts;
                g = tg;
                break;
            }
            take /= 2;
            if take == 0 {
                return finish(cache.into_image(), it, AttackStatus::Stalled, g);
            }
        }
        if model.probability_of_score(g) <= config.epsilon {
            return finish(cache.into_image(), it, AttackStatus::Success, g);
        }
    }
    finish(
        cache.into_image(),
        config.max_iterations,
        AttackStatus::BudgetExhausted,
        g,
    )
}

/// Training/test features of one manipulation, split by class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub originals: Vec<Vec<f64>>,
    pub manipulated: Vec<Vec<f64>>,
}

impl LabeledFeatures {
    /// Interleaved examples with labels `-1` (original) and `+1` (manipulated).
    pub fn training_matrix(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut x = Vec::with_capacity(self.originals.len() + self.manipulated.len());
        let mut y = Vec::with_capacity(x.capacity());
        for v in &self.originals {
            x.push(v.clone());
            y.push(ORIGINAL);
        }
        for v in &self.manipulated {
            x.push(v.clone());
            y.push(MANIPULATED);
        }
        (x, y)
    }

    pub fn dim(&self) -> Option<usize> {
        self.originals
            .first()
            .or(self.manipulated.first())
            .map(|v| v.len())
    }
}

/// Trains the full-feature detector.
pub fn train_full_detector(
    data: &LabeledFeatures,
    normalize: bool,
    config: &TrainConfig,
) -> Result<(SvmModel, TrainReport)> {
    let (x, y) = data.training_matrix();
    let norm: Option<FeatureNormalizer> = if normalize {
        Some(fit_normalizer(&x)?)
    } else {
        None
    };
    let (model, report, _) = train(&x, &y, config, norm)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityConfig {
    pub manipulation: ManipulationKind,
    pub ks: Vec<usize>,
    pub maps_per_k: usize,
    pub normalize: bool,
    pub epsilon: f64,
    pub attack_kind: String,
    pub seed: u64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityRow {
    pub manipulation: ManipulationKind,
    pub k: usize,
    pub map_seed: u64,
    pub fa: f64,
    pub md_clean: f64,
    pub md_attacked: f64,
    pub epsilon: f64,
    pub attack_kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecuritySummary {
    pub k: usize,
    pub maps: usize,
    pub fa: f64,
    pub fa_stderr: f64,
    pub md_clean: f64,
    pub md_clean_stderr: f64,
    pub md_attacked: f64,
    pub md_attacked_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityTable {
    pub rows: Vec<SecurityRow>,
    pub summary: Vec<SecuritySummary>,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

impl SecurityTable {
    pub fn summary_for(&self, k: usize) -> Option<&SecuritySummary> {
        self.summary.iter().find(|s| s.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("manipulation,k,map_seed,fa,md_clean,md_attacked,epsilon,attack_kind\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.manipulation,
                r.k,
                r.map_seed,
                r.fa,
                r.md_clean,
                r.md_attacked,
                r.epsilon,
                r.attack_kind
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "k,maps,fa,fa_stderr,md_clean,md_clean_stderr,md_attacked,md_attacked_stderr\n",
        );
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.k,
                r.maps,
                r.fa,
                r.fa_stderr,
                r.md_clean,
                r.md_clean_stderr,
                r.md_attacked,
                r.md_attacked_stderr
            );
        }
        s
    }
}

/// Fraction of `vs` that `decide` labels manipulated.
fn rate(vs: &[Vec<f64>], decide: impl Fn(&[f64]) -> Result<bool>) -> Result<f64> {
    if vs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for v in vs {
        hits += usize::from(decide(v)?);
    }
    Ok(hits as f64 / vs.len() as f64)
}

/// Seed of RFS map `index` for reduced dimension `k`.
pub fn security_map_seed(seed: u64, k: usize, index: usize) -> u64 {
    derive_seed(seed, "rfs-security-map", &[k as u64, index as u64])
}

pub fn draw_security_map(n: usize, k: usize, seed: u64) -> Result<ReductionMap> {
    Ok(draw_rfs(n, k, &mut rng_from_seed(seed))?.with_seed(seed))
}

/// For every `k` and map: train a reduced detector on the training set, then
/// measure false alarms on clean originals, missed detections on clean
/// manipulated samples and on attacked samples.
pub fn evaluate_rfs_security(
    train_set: &LabeledFeatures,
    test_set: &LabeledFeatures,
    attacked: &[Vec<f64>],
    config: &SecurityConfig,
) -> Result<SecurityTable> {
    check_epsilon(config.epsilon)?;
    let n = train_set
        .dim()
        .ok_or_else(|| Error::param("empty training set"))?;
    if config.maps_per_k == 0 || config.ks.is_empty() {
        return Err(Error::param("need at least one k and one map per k"));
    }
    if let Some(&k) = config.ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::param(format!("k = {k} outside 1..={n}")));
    }
    let tasks: Vec<(usize, usize)> = config
        .ks
        .iter()
        .flat_map(|&k| (0..config.maps_per_k).map(move |m| (k, m)))
        .collect();
    let rows: Vec<SecurityRow> = tasks
        .par_iter()
        .map(|&(k, m)| {
            let map_seed = security_map_seed(config.seed, k, m);
            let run = || -> Result<SecurityRow> {
                let map = draw_security_map(n, k, map_seed)?;
                let tc = TrainConfig {
                    seed: map_seed,
                    ..config.train.clone()
                };
                let (det, _) = ReducedDetector::train(map, train_set, config.normalize, &tc)?;
                Ok(SecurityRow {
                    manipulation: config.manipulation,
                    k,
                    map_seed,
                    fa: rate(&test_set.originals, |v| det.is_manipulated(v))?,
                    md_clean: rate(&test_set.manipulated, |v| det.is_manipulated(v).map(|b| !b))?,
                    md_attacked: rate(attacked, |v| det.is_manipulated(v).map(|b| !b))?,
                    epsilon: config.epsilon,
                    attack_kind: config.attack_kind.clone(),
                })
            };
            run().map_err(|e| e.context(format!("k = {k}, map seed {map_seed}")))
        })
        .collect::<Result<_>>()?;
    let summary = config
        .ks
        .iter()
        .map(|&k| {
            let sel: Vec<&SecurityRow> = rows.iter().filter(|r| r.k == k).collect();
            let col = |f: fn(&SecurityRow) -> f64| {
                mean_stderr(&sel.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (fa, fa_se) = col(|r| r.fa);
            let (mc, mc_se) = col(|r| r.md_clean);
            let (ma, ma_se) = col(|r| r.md_attacked);
            SecuritySummary {
                k,
                maps: sel.len(),
                fa,
                fa_stderr: fa_se,
                md_clean: mc,
                md_clean_stderr: mc_se,
                md_attacked: ma,
                md_attacked_stderr: ma_se,
            }
        })
        .collect();
    Ok(SecurityTable { rows, summary })
}

/// Trains `count` reduced detectors with RFS maps drawn under `stage`.
pub fn train_rfs_detectors(
    data: &LabeledFeatures,
    k: usize,
    count: usize,
    normalize: bool,
    config: &TrainConfig,
    seed: u64,
    stage: &str,
) -> Result<Vec<ReducedDetector>> {
    let n = data
        .dim()
        .ok_or_else(|| Error::param("empty training set"))?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, stage, &[k as u64, i as u64]);
            let map = draw_rfs(n, k, &mut rng_from_seed(s))?.with_seed(s);
            let tc = TrainConfig {
                seed: s,
                ..config.clone()
            };
            ReducedDetector::train(map, data, normalize, &tc)
                .map(|(d, _)| d)
                .map_err(|e| e.context(format!("k = {k}, map seed {s}")))
        })
        .collect()
}

/// Fraction of attacked vectors that each fresh detector labels original,
/// averaged over detectors.
pub fn transfer_rate(attacked: &[Vec<f64>], fresh: &[ReducedDetector]) -> Result<f64> {
    let mut rates = Vec::with_capacity(fresh.len());
    for d in fresh {
        rates.push(rate(attacked, |v| d.is_manipulated(v).map(|b| !b))?);
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

pub fn reduction_label(map: &ReductionMap) -> &'static str {
    match map.kind() {
        ReductionKind::Rfs => "rfs",
        ReductionKind::Rp => "rp",
    }
}
