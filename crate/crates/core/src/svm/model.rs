use super::kernel::{dot, sq_dist, Gram, Kernel};
use super::smo::{self, SmoParams};
use crate::error::{check_dim, Error, Result};
use crate::seed::derive_seed;
use crate::spam::FeatureNormalizer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Label of a manipulated (H0) training example; originals use `-1`.
pub const MANIPULATED: f64 = 1.0;
pub const ORIGINAL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    /// RBF bandwidths tried by cross-validation; ignored when `kernel` is set.
    pub gamma_grid: Vec<f64>,
    /// Extra C values folded into the cross-validation; empty means `c` only.
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub smo_tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Fixed kernel, skipping model selection.
    pub kernel: Option<Kernel>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 100.0,
            gamma_grid: Vec::new(),
            c_grid: Vec::new(),
            folds: 5,
            smo_tolerance: 1e-3,
            max_iterations: 1_000_000,
            seed: 0,
            kernel: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::param("C must be positive"));
        }
        if self.folds < 2 {
            return Err(Error::param("need at least 2 folds"));
        }
        if self.gamma_grid.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::param("gamma grid values must be positive"));
        }
        if !(self.smo_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::param(
                "SMO tolerance and iteration cap must be positive",
            ));
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢyᵢ` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    /// Slope `A` of `p = 1/(1 + exp(−A g))`.
    pub prob_slope: f64,
    pub feature_dim: usize,
    pub normalizer: Option<FeatureNormalizer>,
}

/// Diagnostics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub kkt_gap: f64,
    pub max_kkt_residual: f64,
    pub n_support: usize,
    pub n_train: usize,
    pub training_accuracy: f64,
}

impl SvmModel {
    pub fn new(
        kernel: Kernel,
        support_vectors: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        bias: f64,
        prob_slope: f64,
        feature_dim: usize,
        normalizer: Option<FeatureNormalizer>,
    ) -> Result<Self> {
        let m = SvmModel {
            kernel,
            support_vectors,
            coefficients,
            bias,
            prob_slope,
            feature_dim,
            normalizer,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.coefficients.len() != self.support_vectors.len() {
            return Err(Error::Schema {
                field: "coefficients".into(),
                message: format!(
                    "{} coefficients for {} support vectors",
                    self.coefficients.len(),
                    self.support_vectors.len()
                ),
            });
        }
        if let Some(bad) = self
            .support_vectors
            .iter()
            .position(|sv| sv.len() != self.feature_dim)
        {
            return Err(Error::Schema {
                field: "support_vectors".into(),
                message: format!(
                    "vector {bad} has length {}, expected {}",
                    self.support_vectors[bad].len(),
                    self.feature_dim
                ),
            });
        }
        let sum: f64 = self.coefficients.iter().sum();
        let scale: f64 = self
            .coefficients
            .iter()
            .map(|c| c.abs())
            .sum::<f64>()
            .max(1.0);
        if sum.abs() > 1e-6 * scale {
            return Err(Error::Schema {
                field: "coefficients".into(),
                message: format!("signed coefficients sum to {sum:e}, expected 0"),
            });
        }
        if !(self.prob_slope > 0.0 && self.prob_slope.is_finite()) {
            return Err(Error::Schema {
                field: "prob_slope".into(),
                message: format!("must be positive, got {}", self.prob_slope),
            });
        }
        if !self.bias.is_finite() {
            return Err(Error::Schema {
                field: "bias".into(),
                message: "must be finite".into(),
            });
        }
        if let Some(n) = &self.normalizer {
            if n.dim() != self.feature_dim {
                return Err(Error::Schema {
                    field: "normalizer".into(),
                    message: format!("has {} scales for {} features", n.dim(), self.feature_dim),
                });
            }
        }
        Ok(())
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    /// Input mapped into the space the support vectors live in.
    pub fn prepare(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.feature_dim, v.len())?;
        match &self.normalizer {
            Some(n) => n.apply(v),
            None => Ok(v.to_vec()),
        }
    }

    /// `g` on an already prepared input.
    pub fn discriminant_prepared(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval(x, sv))
            .sum::<f64>()
            + self.bias
    }

    pub fn discriminant(&self, v: &[f64]) -> Result<f64> {
        Ok(self.discriminant_prepared(&self.prepare(v)?))
    }

    /// `∇g` in the input space (chained through the normalizer when present).
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        let x = self.prepare(v)?;
        let mut g = self.gradient_prepared(&x);
        if let Some(n) = &self.normalizer {
            for (gi, s) in g.iter_mut().zip(&n.scale) {
                *gi /= s;
            }
        }
        Ok(g)
    }

    /// `∇g` with respect to the prepared input.
    pub fn gradient_prepared(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match self.kernel {
            Kernel::Linear => {
                for (sv, c) in self.support_vectors.iter().zip(&self.coefficients) {
                    for (gi, s) in g.iter_mut().zip(sv) {
                        *gi += c * s;
                    }
                }
            }
            Kernel::Polynomial { c: off, degree } => {
                let p = f64::from(degree);
                for (sv, c) in self.support_vectors.iter().zip(&self.coefficients) {
                    let w = c * p * (dot(x, sv) + off).powi(degree as i32 - 1);
                    for (gi, s) in g.iter_mut().zip(sv) {
                        *gi += w * s;
                    }
                }
            }
            Kernel::Rbf { gamma } => {
                for (sv, c) in self.support_vectors.iter().zip(&self.coefficients) {
                    let w = -2.0 * gamma * c * (-gamma * sq_dist(x, sv)).exp();
                    for ((gi, xi), s) in g.iter_mut().zip(x).zip(sv) {
                        *gi += w * (xi - s);
                    }
                }
            }
        }
        g
    }

    pub fn probability(&self, v: &[f64]) -> Result<f64> {
        Ok(self.probability_of_score(self.discriminant(v)?))
    }

    pub fn probability_of_score(&self, g: f64) -> f64 {
        sigmoid(self.prob_slope * g)
    }

    /// `true` when `v` is classified manipulated (`g > 0`).
    pub fn is_manipulated(&self, v: &[f64]) -> Result<bool> {
        Ok(self.discriminant(v)? > 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let obj = raw.as_object().ok_or_else(|| Error::Schema {
            field: "<root>".into(),
            message: "expected an object".into(),
        })?;
        for field in [
            "version",
            "kernel",
            "support_vectors",
            "coefficients",
            "bias",
            "prob_slope",
            "feature_dim",
        ] {
            if !obj.contains_key(field) {
                return Err(Error::Schema {
                    field: field.into(),
                    message: "missing".into(),
                });
            }
        }
        let file: ModelFile = serde_json::from_value(raw)?;
        if file.version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema {
                field: "version".into(),
                message: format!("unsupported version {}", file.version),
            });
        }
        SvmModel::new(
            file.kernel,
            file.support_vectors,
            file.coefficients,
            file.bias,
            file.prob_slope,
            file.feature_dim,
            file.normalizer,
        )
    }

    /// Stable digest of the serialized model.
    pub fn content_hash(&self) -> Result<String> {
        let text = serde_json::to_string(&ModelFile::from(self))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    kernel: Kernel,
    support_vectors: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    bias: f64,
    prob_slope: f64,
    feature_dim: usize,
    #[serde(default)]
    normalizer: Option<FeatureNormalizer>,
}

impl From<&SvmModel> for ModelFile {
    fn from(m: &SvmModel) -> Self {
        ModelFile {
            version: MODEL_SCHEMA_VERSION,
            kernel: m.kernel,
            support_vectors: m.support_vectors.clone(),
            coefficients: m.coefficients.clone(),
            bias: m.bias,
            prob_slope: m.prob_slope,
            feature_dim: m.feature_dim,
            normalizer: m.normalizer.clone(),
        }
    }
}

pub fn save_model(model: &SvmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SvmModel::from_json(&text).map_err(|e| e.context(path.display().to_string()))
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Slope `A > 0` of a zero-intercept sigmoid fitted by maximum likelihood to
/// the scores, with smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)` so that
/// separable scores still give a finite slope.
pub fn fit_slope(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Training("slope fit needs both classes".into()));
    }
    let (t_pos, t_neg) = ((n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0));
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.0 { t_pos } else { t_neg })
        .collect();
    // derivative of the negative log-likelihood, increasing in A
    let deriv = |a: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&g, &t)| (sigmoid(a * g) - t) * g)
            .sum()
    };
    const FLOOR: f64 = 1e-9;
    if deriv(FLOOR) >= 0.0 {
        log::warn!("scores do not separate the classes; probability slope set to {FLOOR}");
        return Ok(FLOOR);
    }
    let (mut lo, mut hi) = (FLOOR, 1.0);
    while deriv(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(hi);
        }
    }
    let mut a = 0.5 * (lo + hi);
    for _ in 0..200 {
        let d = deriv(a);
        if d < 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let h: f64 = scores
            .iter()
            .map(|&g| {
                let p = sigmoid(a * g);
                p * (1.0 - p) * g * g
            })
            .sum();
        let newton = a - d / h;
        a = if h > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-12 * hi || d.abs() < 1e-14 {
            break;
        }
    }
    Ok(a)
}

/// Permutation of the training set that depends on example content and the
/// seed only, never on the input order.
fn canonical_order(x: &[Vec<f64>], y: &[f64], seed: u64) -> Vec<usize> {
    let key = |i: usize| -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(y[i].to_le_bytes());
        for v in &x[i] {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    };
    let mut idx: Vec<(usize, [u8; 32])> = (0..x.len()).map(|i| (i, key(i))).collect();
    idx.sort_by_key(|a| a.1);
    idx.into_iter().map(|(i, _)| i).collect()
}

pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    check_dim(x.len(), y.len())?;
    let dim = x
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Training("empty training set".into()))?;
    if let Some(v) = x.iter().find(|v| v.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: v.len(),
        });
    }
    if y.iter().any(|&l| l != MANIPULATED && l != ORIGINAL) {
        return Err(Error::Training(
            "labels must be +1 (manipulated) or -1 (original)".into(),
        ));
    }
    let pos = y.iter().filter(|&&l| l > 0.0).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::Training(format!(
            "need at least 2 examples per class, got {pos} manipulated and {} original",
            y.len() - pos
        )));
    }
    Ok(dim)
}

/// Trains on prepared features with a fixed kernel and a precomputed Gram
/// matrix over the same examples.
pub(crate) fn train_with_gram(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: Kernel,
    gram: &Gram,
    c: f64,
    config: &TrainConfig,
) -> Result<(SvmModel, TrainReport)> {
    let dim = check_training_set(x, y)?;
    let order = canonical_order(x, y, derive_seed(config.seed, "svm-order", &[]));
    let k = gram.subset(&order);
    let yo: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let sol = smo::solve(
        &k,
        &yo,
        SmoParams {
            c,
            tolerance: config.smo_tolerance,
            max_iterations: config.max_iterations,
        },
    )?;
    let residuals = smo::kkt_residuals(&k, &yo, &sol.alpha, sol.bias, c);
    let scores: Vec<f64> = (0..yo.len())
        .map(|t| {
            k.row(t)
                .iter()
                .zip(&sol.alpha)
                .zip(&yo)
                .map(|((kv, a), yy)| a * yy * kv)
                .sum::<f64>()
                + sol.bias
        })
        .collect();
    let correct = scores
        .iter()
        .zip(&yo)
        .filter(|(g, l)| (**g > 0.0) == (**l > 0.0))
        .count();
    let slope = fit_slope(&scores, &yo)?;
    let mut svs = Vec::new();
    let mut coefs = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            svs.push(x[order[t]].clone());
            coefs.push(a * yo[t]);
        }
    }
    let report = TrainReport {
        iterations: sol.iterations,
        converged: sol.converged,
        kkt_gap: sol.kkt_gap,
        max_kkt_residual: residuals.iter().cloned().fold(0.0, f64::max),
        n_support: svs.len(),
        n_train: yo.len(),
        training_accuracy: correct as f64 / yo.len() as f64,
    };
    let model = SvmModel::new(kernel, svs, coefs, sol.bias, slope, dim, None)?;
    Ok((model, report))
}

/// Trains with a fixed kernel and C on raw features; the normalizer, when
/// given, is applied to the inputs and stored in the model.
pub fn train_fixed(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: Kernel,
    c: f64,
    normalizer: Option<FeatureNormalizer>,
    config: &TrainConfig,
) -> Result<(SvmModel, TrainReport)> {
    kernel.validate()?;
    let prepared: Vec<Vec<f64>> = match &normalizer {
        Some(n) => x.iter().map(|v| n.apply(v)).collect::<Result<_>>()?,
        None => x.to_vec(),
    };
    let gram = Gram::kernel(&kernel, &prepared);
    let (mut model, report) = train_with_gram(&prepared, y, kernel, &gram, c, config)?;
    if let Some(n) = normalizer {
        check_dim(model.feature_dim, n.dim())?;
        model.normalizer = Some(n);
    }
    Ok((model, report))
}
