//! Optimal linear detection under the Gaussian model and its analytics.

use crate::error::{check_dim, Error, Result};
use crate::reduction::ReductionMap;
use crate::stats::q_function;
use crate::synthetic::{GaussianHypothesisModel, Hypothesis};
use nalgebra::DVector;
use std::sync::Arc;

/// Correlation detector `ρ = wᵀv` with `w = Σ⁻¹u`; decides `H0` iff `ρ > 0`.
#[derive(Debug, Clone)]
pub struct LinearDetector {
    weights: DVector<f64>,
    model: Arc<GaussianHypothesisModel>,
}

impl LinearDetector {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
    pub fn source_model(&self) -> &GaussianHypothesisModel {
        &self.model
    }

    /// Detector with the same source model and rescaled weights.
    pub fn scaled(&self, c: f64) -> Self {
        LinearDetector {
            weights: &self.weights * c,
            model: Arc::clone(&self.model),
        }
    }

    pub fn score(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.weights.iter().zip(v).map(|(w, x)| w * x).sum())
    }
}

/// Solves `Σ w = u` by Cholesky.
pub fn build_detector(model: &GaussianHypothesisModel) -> Result<LinearDetector> {
    let weights = model.factor().solve(model.mean());
    Ok(LinearDetector {
        weights,
        model: Arc::new(model.clone()),
    })
}

/// `H0` iff `wᵀv > 0`; an exact zero score goes to `H1`.
pub fn decide(d: &LinearDetector, v: &[f64]) -> Result<Hypothesis> {
    Ok(if d.score(v)? > 0.0 {
        Hypothesis::H0Manipulated
    } else {
        Hypothesis::H1Original
    })
}

/// `z = (uᵀ Σ⁻¹ u)^{1/2}`.
pub fn z_value(model: &GaussianHypothesisModel) -> f64 {
    model.factor().inv_quadratic(model.mean()).sqrt()
}

/// Ratio of reduced to full squared z-values, `(u_rᵀ Σ_r⁻¹ u_r) / (uᵀ Σ⁻¹ u)`.
pub fn eta(model: &GaussianHypothesisModel, map: &ReductionMap) -> Result<f64> {
    let x = model.factor().inv_quadratic(model.mean());
    if !(x > 0.0) {
        return Err(Error::DegenerateInput(
            "model mean is zero, eta is undefined".into(),
        ));
    }
    let reduced = map.reduce_model(model)?;
    let y = reduced.factor().inv_quadratic(reduced.mean());
    Ok(y / x)
}

/// Equal-prior error probability `Q(z)` of a detector with z-value `z`.
pub fn error_probability(z: f64) -> f64 {
    q_function(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorAnalytics {
    pub z: f64,
    pub z_r: f64,
    pub eta: f64,
    pub p_error_no_attack: f64,
}

pub fn analyze(model: &GaussianHypothesisModel, map: &ReductionMap) -> Result<DetectorAnalytics> {
    let z = z_value(model);
    let eta = eta(model, map)?;
    let z_r = eta.sqrt() * z;
    Ok(DetectorAnalytics {
        z,
        z_r,
        eta,
        p_error_no_attack: error_probability(z_r),
    })
}
