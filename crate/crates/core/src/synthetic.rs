//! Gaussian feature models for the two hypotheses.
//!
//! Under `H0` (manipulated) features follow `N(u, Σ)`, under `H1` (original)
//! they follow `N(-u, Σ)`. The covariance is shared by both hypotheses.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{condition_number, SpdFactor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Iid,
    Dependent,
    DependentNormalized,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Iid => "iid",
            Regime::Dependent => "dependent",
            Regime::DependentNormalized => "dependent_normalized",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "iid" => Ok(Regime::Iid),
            "dependent" => Ok(Regime::Dependent),
            "dependent_normalized" => Ok(Regime::DependentNormalized),
            _ => Err(Error::param(format!(
                "unknown regime `{s}`; expected iid, dependent or dependent-normalized"
            ))),
        }
    }
}

/// The two detection hypotheses. `H0` is "the image is manipulated".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0Manipulated,
    H1Original,
}

impl Hypothesis {
    /// Sign of the mean vector under this hypothesis.
    pub fn mean_sign(self) -> f64 {
        match self {
            Hypothesis::H0Manipulated => 1.0,
            Hypothesis::H1Original => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianHypothesisModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    regime: Regime,
    seed: Option<u64>,
    factor: SpdFactor,
    // row-major copy of the Cholesky factor for the sampling loop
    l_rows: Vec<f64>,
    diag_sqrt: Option<Vec<f64>>,
}

impl GaussianHypothesisModel {
    /// Validates and builds a model. The covariance must be exactly symmetric and positive definite.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, regime: Regime) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::param("model dimension must be positive"));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::model(format!(
                "covariance is {}x{} but mean has length {n}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if covariance[(i, j)] != covariance[(j, i)] {
                    return Err(Error::model(format!(
                        "covariance is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::model("mean has non-finite entries"));
        }
        let factor = SpdFactor::new(&covariance)?;
        let l = factor.lower();
        let mut l_rows = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l_rows[i * n + j] = l[(i, j)];
            }
        }
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || covariance[(i, j)] == 0.0));
        let diag_sqrt = is_diag.then(|| (0..n).map(|i| covariance[(i, i)].sqrt()).collect());
        Ok(GaussianHypothesisModel {
            mean,
            covariance,
            regime,
            seed: None,
            factor,
            l_rows,
            diag_sqrt,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Same covariance with the mean scaled by `c`.
    pub fn scaled_mean(&self, c: f64) -> Result<Self> {
        let mut m = self.clone();
        m.mean *= c;
        Ok(m)
    }

    /// Draws one feature vector under hypothesis `h`.
    pub fn sample<R: Rng + ?Sized>(&self, h: Hypothesis, rng: &mut R) -> DVector<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.sample_into(h, rng, &mut scratch, &mut out);
        DVector::from_vec(out)
    }

    /// Allocation-free sampling: `scratch` receives the standard-normal draws, `out` the sample.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        h: Hypothesis,
        rng: &mut R,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let n = self.dim();
        debug_assert!(scratch.len() == n && out.len() == n);
        for g in scratch.iter_mut() {
            *g = StandardNormal.sample(rng);
        }
        let sign = h.mean_sign();
        match &self.diag_sqrt {
            Some(d) => {
                for i in 0..n {
                    out[i] = sign * self.mean[i] + d[i] * scratch[i];
                }
            }
            None => {
                for i in 0..n {
                    let row = &self.l_rows[i * n..i * n + i + 1];
                    let mut s = 0.0;
                    for (a, b) in row.iter().zip(&scratch[..=i]) {
                        s += a * b;
                    }
                    out[i] = sign * self.mean[i] + s;
                }
            }
        }
    }

    pub fn to_json(&self) -> ModelJson {
        let n = self.dim();
        let mut cov = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                cov.push(self.covariance[(i, j)]);
            }
        }
        ModelJson {
            dim: n,
            mean: self.mean.iter().cloned().collect(),
            covariance: cov,
            regime: self.regime,
            seed: self.seed,
        }
    }

    pub fn from_json(j: &ModelJson) -> Result<Self> {
        check_dim(j.dim, j.mean.len())?;
        check_dim(j.dim * j.dim, j.covariance.len())?;
        let cov = DMatrix::from_row_slice(j.dim, j.dim, &j.covariance);
        let m = Self::new(DVector::from_vec(j.mean.clone()), cov, j.regime)?;
        Ok(match j.seed {
            Some(s) => m.with_seed(s),
            None => m,
        })
    }
}

/// On-disk model schema: covariance stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelJson {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub regime: Regime,
    pub seed: Option<u64>,
}

/// i.i.d. unit-variance features with equal means, scaled so that `z = target_z`.
pub fn make_iid_model(n: usize, target_z: f64) -> Result<GaussianHypothesisModel> {
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    if !(target_z > 0.0) || !target_z.is_finite() {
        return Err(Error::param(format!(
            "target z must be positive, got {target_z}"
        )));
    }
    let m = target_z / (n as f64).sqrt();
    GaussianHypothesisModel::new(
        DVector::from_element(n, m),
        DMatrix::identity(n, n),
        Regime::Iid,
    )
}

/// Knobs for the dependent-feature generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependentModelConfig {
    /// Range of the uniformly drawn eigenvalues before rotation.
    pub diag_range: (f64, f64),
    /// The constant mean is rescaled so the realized z lands inside this window (at its midpoint).
    pub z_window: (f64, f64),
    /// Draws whose covariance condition number exceeds this are rejected.
    pub max_condition: f64,
    pub max_redraws: usize,
}

impl Default for DependentModelConfig {
    fn default() -> Self {
        DependentModelConfig {
            diag_range: (0.5, 1.5),
            z_window: (4.5, 5.5),
            max_condition: 1e8,
            max_redraws: 100,
        }
    }
}

/// Random covariance `Rᵀ D R` with constant mean.
///
/// When `normalized` is false, feature `i` is additionally scaled by `sqrt(s_i)`
/// with `s_i ~ U(0,1)`, i.e. `u ← T u`, `Σ ← T Σ T` with `T = diag(sqrt(s_i))`.
pub fn make_dependent_model<R: Rng + ?Sized>(
    n: usize,
    normalized: bool,
    rng: &mut R,
) -> Result<GaussianHypothesisModel> {
    make_dependent_model_with(n, normalized, &DependentModelConfig::default(), rng)
}

pub fn make_dependent_model_with<R: Rng + ?Sized>(
    n: usize,
    normalized: bool,
    cfg: &DependentModelConfig,
    rng: &mut R,
) -> Result<GaussianHypothesisModel> {
    if n < 2 {
        return Err(Error::param("dependent models need n >= 2"));
    }
    let (lo, hi) = cfg.diag_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::param("diagonal range must satisfy 0 < lo < hi"));
    }
    let (zlo, zhi) = cfg.z_window;
    if !(zlo > 0.0 && zhi >= zlo) {
        return Err(Error::param("z window must satisfy 0 < lo <= hi"));
    }
    let diag_dist = Uniform::new(lo, hi).map_err(|e| Error::param(e.to_string()))?;
    let scale_dist = Uniform::new(0.0, 1.0).map_err(|e| Error::param(e.to_string()))?;
    for _ in 0..cfg.max_redraws.max(1) {
        let d: Vec<f64> = (0..n).map(|_| diag_dist.sample(rng)).collect();
        let (dmin, dmax) = min_max(&d);
        let r = haar_rotation(n, rng)?;
        let mut rt_d = r.transpose();
        for (j, dj) in d.iter().enumerate() {
            rt_d.column_mut(j).scale_mut(*dj);
        }
        let mut cov = rt_d * &r;
        let mut mean = DVector::from_element(n, 1.0);
        // eigenvalues of the rotated matrix are exactly d
        let mut cond_bound = dmax / dmin;
        if !normalized {
            let s: Vec<f64> = (0..n).map(|_| scale_dist.sample(rng)).collect();
            let (smin, smax) = min_max(&s);
            cond_bound *= smax / smin;
            for i in 0..n {
                let ti = s[i].sqrt();
                mean[i] *= ti;
                for j in 0..n {
                    cov[(i, j)] *= ti * s[j].sqrt();
                }
            }
        }
        symmetrize(&mut cov);
        if cond_bound > cfg.max_condition && condition_number(&cov) > cfg.max_condition {
            continue;
        }
        let regime = if normalized {
            Regime::DependentNormalized
        } else {
            Regime::Dependent
        };
        let model = match GaussianHypothesisModel::new(mean, cov, regime) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let z = model.factor().inv_quadratic(model.mean()).sqrt();
        let target = 0.5 * (zlo + zhi);
        return model.scaled_mean(target / z);
    }
    Err(Error::model(format!(
        "no well-conditioned covariance after {} draws",
        cfg.max_redraws
    )))
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Averages `A` with its transpose so the result is exactly symmetric.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Haar-distributed rotation (orthogonal, determinant +1) via QR of a Gaussian matrix.
pub fn haar_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::param("rotation dimension must be positive"));
    }
    if n == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix on diag(R) makes the distribution exactly Haar on O(n)
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn iid_model_shape() {
        let m = make_iid_model(300, 4.0).unwrap();
        assert!((m.mean().norm() - 4.0).abs() < 1e-12);
        let m1 = make_iid_model(1, 2.0).unwrap();
        assert_eq!(m1.mean()[0], 2.0);
        assert_eq!(m1.covariance()[(0, 0)], 1.0);
        let m4 = make_iid_model(4, 1.0).unwrap();
        assert!(m4.mean().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn iid_rejects_bad_params() {
        assert!(make_iid_model(0, 1.0).is_err());
        assert!(make_iid_model(3, 0.0).is_err());
        assert!(make_iid_model(3, -1.0).is_err());
    }

    #[test]
    fn rotation_is_orthogonal_and_proper() {
        let mut rng = rng_from_seed(3);
        let r = haar_rotation(5, &mut rng).unwrap();
        let e = r.transpose() * &r - DMatrix::identity(5, 5);
        assert!(e.amax() < 1e-10);
        assert!((r.determinant() - 1.0).abs() < 1e-10);
        let again = haar_rotation(5, &mut rng_from_seed(3)).unwrap();
        assert_eq!(r, again);
        assert_eq!(haar_rotation(1, &mut rng).unwrap(), DMatrix::identity(1, 1));
    }

    #[test]
    fn dependent_models_are_spd_and_symmetric() {
        for seed in 0..5 {
            for &norm in &[true, false] {
                let m = make_dependent_model(2, norm, &mut rng_from_seed(seed)).unwrap();
                let c = m.covariance();
                assert_eq!(c, &c.transpose());
                assert!(SpdFactor::new(c).is_ok());
            }
        }
        assert!(make_dependent_model(1, true, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn dependent_model_z_is_calibrated() {
        let m = make_dependent_model(60, true, &mut rng_from_seed(11)).unwrap();
        let z = m.factor().inv_quadratic(m.mean()).sqrt();
        assert!((z - 5.0).abs() < 1e-9);
        assert_eq!(m.regime(), Regime::DependentNormalized);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = make_dependent_model(6, false, &mut rng_from_seed(1)).unwrap();
        let a = m.sample(Hypothesis::H0Manipulated, &mut rng_from_seed(9));
        let b = m.sample(Hypothesis::H0Manipulated, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_mean_identity_sample_mean() {
        let m =
            GaussianHypothesisModel::new(DVector::zeros(3), DMatrix::identity(3, 3), Regime::Iid)
                .unwrap();
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let mut acc = DVector::zeros(3);
        for _ in 0..n {
            acc += m.sample(Hypothesis::H0Manipulated, &mut rng);
        }
        acc /= n as f64;
        let tol = 4.0 / (n as f64).sqrt();
        assert!(acc.iter().all(|x| x.abs() < tol), "{acc}");
    }

    #[test]
    fn json_round_trip() {
        let m = make_dependent_model(4, false, &mut rng_from_seed(2))
            .unwrap()
            .with_seed(2);
        let j = serde_json::to_string(&m.to_json()).unwrap();
        let back = GaussianHypothesisModel::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
        assert_eq!(back.mean(), m.mean());
        assert_eq!(back.covariance(), m.covariance());
        assert_eq!(back.seed(), Some(2));
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(GaussianHypothesisModel::new(DVector::zeros(2), c, Regime::Dependent).is_err());
    }
}
