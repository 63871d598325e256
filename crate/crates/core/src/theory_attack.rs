//! The minimum-distortion attack against the full-feature detector and its
//! effect on randomized reduced detectors.
//!
//! The attacked statistics assume the attack is applied to every `H0` sample,
//! including those the full detector already misclassifies.

use crate::detector::{z_value, LinearDetector};
use crate::error::{check_dim, Error, Result};
use crate::reduction::ReductionMap;
use crate::stats::q_function;
use crate::synthetic::GaussianHypothesisModel;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub alpha: f64,
}

impl AttackConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::param(format!(
                "attack strength must be >= 1, got {alpha}"
            )));
        }
        Ok(AttackConfig { alpha })
    }
}

/// Moments of the reduced statistic `ρ_r` under `H0` after the attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackedStatistics {
    /// `uᵀ Σ⁻¹ u`
    pub x: f64,
    /// `u_rᵀ Σ_r⁻¹ u_r`
    pub y: f64,
    pub theta: f64,
    pub mean_rho_r: f64,
    pub var_rho_r: f64,
    /// `mean/sqrt(var)`; `±inf` when the variance vanishes with nonzero mean, NaN for 0/0.
    pub z_att: f64,
}

impl AttackedStatistics {
    pub fn eta(&self) -> f64 {
        self.y / self.x
    }

    /// Probability that the reduced detector misses an attacked `H0` sample.
    pub fn missed_detection(&self) -> f64 {
        if self.var_rho_r > 1e-12 * self.x {
            q_function(self.z_att)
        } else if self.mean_rho_r > 0.0 {
            0.0
        } else {
            // ρ_r is (numerically) the constant 0 or negative; ties go to H1
            1.0
        }
    }
}

fn weight_norm_sq(d: &LinearDetector) -> Result<f64> {
    let nw = d.weights().norm_squared();
    if nw > 0.0 {
        Ok(nw)
    } else {
        Err(Error::DegenerateDetector)
    }
}

/// `v* = v - α (wᵀv / ‖w‖²) w`, applied whatever the sign of `wᵀv`.
pub fn optimal_attack(d: &LinearDetector, v: &[f64], alpha: f64) -> Result<DVector<f64>> {
    AttackConfig::new(alpha)?;
    check_dim(d.dim(), v.len())?;
    let nw = weight_norm_sq(d)?;
    let w = d.weights();
    let c = alpha * d.score(v)? / nw;
    Ok(DVector::from_iterator(
        v.len(),
        v.iter().zip(w.iter()).map(|(x, wi)| x - c * wi),
    ))
}

/// Splits the attack into a scale `a = α wᵀv/‖w‖` and unit direction `w/‖w‖`.
pub fn decompose_attack(d: &LinearDetector, v: &[f64], alpha: f64) -> Result<(f64, DVector<f64>)> {
    AttackConfig::new(alpha)?;
    check_dim(d.dim(), v.len())?;
    let nw = weight_norm_sq(d)?.sqrt();
    Ok((alpha * d.score(v)? / nw, d.weights() / nw))
}

pub fn attacked_statistics(
    model: &GaussianHypothesisModel,
    map: &ReductionMap,
    alpha: f64,
) -> Result<AttackedStatistics> {
    AttackConfig::new(alpha)?;
    check_dim(map.cols(), model.dim())?;
    let w = model.factor().solve(model.mean());
    let x = w.dot(model.mean());
    let nw = w.norm_squared();
    if !(nw > 0.0) {
        return Err(Error::DegenerateDetector);
    }
    let reduced = map.reduce_model(model)?;
    let w_red = reduced.factor().solve(reduced.mean());
    let y = w_red.dot(reduced.mean());
    let w_r = map.apply_vec(&w)?;
    let theta = alpha * w_red.dot(&w_r) / nw;
    let mean = y - theta * x;
    let var = y + theta * theta * x - 2.0 * theta * y;
    let z_att = if var > 0.0 {
        mean / var.sqrt()
    } else if mean == 0.0 {
        f64::NAN
    } else {
        mean.signum() * f64::INFINITY
    };
    Ok(AttackedStatistics {
        x,
        y,
        theta,
        mean_rho_r: mean,
        var_rho_r: var,
        z_att,
    })
}

/// Closed form of `z_att` for i.i.d. equal-variance features under RFS.
pub fn z_att_iid(eta: f64, alpha: f64, z: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param(format!("eta must be in (0,1], got {eta}")));
    }
    AttackConfig::new(alpha)?;
    let den = eta + alpha * alpha * eta * eta - 2.0 * alpha * eta * eta;
    if !(den > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "z_att denominator is {den} (eta = {eta}, alpha = {alpha})"
        )));
    }
    Ok(z * eta * (1.0 - alpha) / den.sqrt())
}

/// Angle in degrees, folded to `[0, 90]`, between the reduced detector's
/// boundary normal `Σ_r⁻¹u_r` and the projected full attack direction `S Σ⁻¹ u`.
pub fn angle_mismatch(model: &GaussianHypothesisModel, map: &ReductionMap) -> Result<f64> {
    check_dim(map.cols(), model.dim())?;
    let reduced = map.reduce_model(model)?;
    let e_rfs = reduced.factor().solve(reduced.mean());
    let e_att = map.apply_vec(&model.factor().solve(model.mean()))?;
    let (a, b) = (e_rfs.norm(), e_att.norm());
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::DegenerateInput(
            "zero direction in angle mismatch".into(),
        ));
    }
    let c = (e_rfs.dot(&e_att) / (a * b)).abs();
    if c >= 1.0 - 4.0 * f64::EPSILON {
        // coincident directions up to rounding
        return Ok(0.0);
    }
    Ok(c.acos().to_degrees())
}

/// Full-feature `z` paired with the attacked statistics, for reporting.
pub fn z_and_attacked(
    model: &GaussianHypothesisModel,
    map: &ReductionMap,
    alpha: f64,
) -> Result<(f64, AttackedStatistics)> {
    Ok((z_value(model), attacked_statistics(model, map, alpha)?))
}
