//! Error-probability sweeps over `k` and angle-mismatch histograms for the
//! Gaussian model.
//!
//! Seeds: the model of repetition `r` comes from `("theory-model", [r])`, the
//! map from `("theory-map", [kind, k, r])` and the samples from
//! `("theory-samples", [kind, k, alpha_index, r])`, all derived from the
//! master seed with [`crate::seed::derive_seed`]. Every sweep point can thus be
//! recomputed on its own.

use crate::detector::{analyze, build_detector};
use crate::error::{Error, Result};
use crate::reduction::{draw, ReductionKind};
use crate::seed::{derive_seed, rng_from_seed};
use crate::stats::binomial_stderr;
use crate::synthetic::{
    make_dependent_model_with, make_iid_model, DependentModelConfig, GaussianHypothesisModel,
    Hypothesis, Regime,
};
use crate::theory_attack::{angle_mismatch, attacked_statistics};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheorySweepConfig {
    pub n: usize,
    /// Target z for i.i.d. models; dependent models use `dependent.z_window`.
    pub z_target: f64,
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
    pub kinds: Vec<ReductionKind>,
    pub regime: Regime,
    pub repetitions: usize,
    /// Monte Carlo samples drawn under `H0` for every (point, repetition); 0 disables the empirical estimate.
    pub samples_per_point: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub dependent: DependentModelConfig,
}

impl Default for TheorySweepConfig {
    fn default() -> Self {
        TheorySweepConfig {
            n: 300,
            z_target: 4.0,
            alphas: vec![1.2, 2.0],
            ks: vec![1, 2, 5, 10, 20, 50, 100, 150, 200, 250, 300],
            kinds: vec![ReductionKind::Rfs, ReductionKind::Rp],
            regime: Regime::Iid,
            repetitions: 200,
            samples_per_point: 10_000,
            master_seed: 0,
            dependent: DependentModelConfig::default(),
        }
    }
}

impl TheorySweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n must be positive"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.n) {
            return Err(Error::param(format!("k = {k} outside [1, {}]", self.n)));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be >= 1"));
        }
        if self.alphas.iter().any(|&a| !(a >= 1.0)) {
            return Err(Error::param("all alphas must be >= 1"));
        }
        if self.kinds.is_empty() || self.ks.is_empty() || self.alphas.is_empty() {
            return Err(Error::param("kinds, ks and alphas must be nonempty"));
        }
        Ok(())
    }
}

/// One aggregated sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: ReductionKind,
    pub k: usize,
    pub alpha: f64,
    /// Analytic `Q(z_r)` averaged over repetitions.
    pub p_md_no_attack: f64,
    /// Analytic `Q(z_att)` averaged over repetitions.
    pub p_md_attack: f64,
    pub realized_z: f64,
    pub mean_eta: f64,
    pub samples: usize,
    pub emp_md_no_attack: Option<f64>,
    pub emp_md_attack: Option<f64>,
    /// Attack applied only when the full detector still decides `H0`.
    pub emp_md_attack_realistic: Option<f64>,
    pub stderr_no_attack: Option<f64>,
    pub stderr_attack: Option<f64>,
    pub stderr_attack_realistic: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn find(&self, kind: ReductionKind, k: usize, alpha: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.k == k && r.alpha == alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "# p_md_* analytic averages over repetitions; emp_* Monte Carlo under H0 (always-attack and realistic modes)\n\
             kind,k,alpha,p_md_no_attack,p_md_attack,realized_z,mean_eta,samples,emp_md_no_attack,emp_md_attack,emp_md_attack_realistic,stderr_no_attack,stderr_attack,stderr_attack_realistic\n",
        );
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6e},{:.6e},{:.6},{:.6e},{},{},{},{},{},{},{}",
                r.kind.label(),
                r.k,
                r.alpha,
                r.p_md_no_attack,
                r.p_md_attack,
                r.realized_z,
                r.mean_eta,
                r.samples,
                opt(r.emp_md_no_attack),
                opt(r.emp_md_attack),
                opt(r.emp_md_attack_realistic),
                opt(r.stderr_no_attack),
                opt(r.stderr_attack),
                opt(r.stderr_attack_realistic)
            );
        }
        s
    }
}

fn kind_index(kind: ReductionKind) -> u64 {
    match kind {
        ReductionKind::Rfs => 0,
        ReductionKind::Rp => 1,
    }
}

/// Model for repetition `rep` of a sweep.
pub fn sweep_model(
    regime: Regime,
    n: usize,
    z_target: f64,
    dep: &DependentModelConfig,
    master_seed: u64,
    rep: usize,
) -> Result<GaussianHypothesisModel> {
    match regime {
        Regime::Iid => make_iid_model(n, z_target),
        Regime::Dependent | Regime::DependentNormalized => {
            let seed = derive_seed(master_seed, "theory-model", &[rep as u64]);
            let m = make_dependent_model_with(
                n,
                regime == Regime::DependentNormalized,
                dep,
                &mut rng_from_seed(seed),
            )?;
            Ok(m.with_seed(seed))
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    total: usize,
    md_clean: usize,
    md_attack: usize,
    md_realistic: usize,
}

fn point(
    cfg: &TheorySweepConfig,
    model: &GaussianHypothesisModel,
    full_w: &[f64],
    kind: ReductionKind,
    k: usize,
    rep: usize,
) -> Result<Vec<(f64, f64, f64, Counts)>> {
    let map_seed = derive_seed(
        cfg.master_seed,
        "theory-map",
        &[kind_index(kind), k as u64, rep as u64],
    );
    let map = draw(kind, cfg.n, k, &mut rng_from_seed(map_seed))?.with_seed(map_seed);
    let an = analyze(model, &map)?;
    let reduced = map.reduce_model(model)?;
    let red_det = build_detector(&reduced)?;
    // reduced detector evaluated on S v equals (Sᵀ w_r)ᵀ v
    let lifted = map.lift(red_det.weights().as_slice())?;
    let nw: f64 = full_w.iter().map(|x| x * x).sum();
    let n = cfg.n;
    let mut out = Vec::with_capacity(cfg.alphas.len());
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let st = attacked_statistics(model, &map, alpha)?;
        let mut c = Counts::default();
        if cfg.samples_per_point > 0 {
            let seed = derive_seed(
                cfg.master_seed,
                "theory-samples",
                &[kind_index(kind), k as u64, ai as u64, rep as u64],
            );
            let mut rng = rng_from_seed(seed);
            let mut g = vec![0.0; n];
            let mut v = vec![0.0; n];
            let mut att = vec![0.0; n];
            for _ in 0..cfg.samples_per_point {
                model.sample_into(Hypothesis::H0Manipulated, &mut rng, &mut g, &mut v);
                let rho: f64 = dot(full_w, &v);
                let rho_r = dot(&lifted, &v);
                let step = alpha * rho / nw;
                for i in 0..n {
                    att[i] = v[i] - step * full_w[i];
                }
                let rho_att = dot(&lifted, &att);
                c.total += 1;
                if rho_r <= 0.0 {
                    c.md_clean += 1;
                }
                if rho_att <= 0.0 {
                    c.md_attack += 1;
                }
                let realistic = if rho > 0.0 { rho_att } else { rho_r };
                if realistic <= 0.0 {
                    c.md_realistic += 1;
                }
            }
        }
        out.push((an.p_error_no_attack, st.missed_detection(), an.eta, c));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the sweep; rows are sorted by (kind, k, alpha).
pub fn run_error_sweep(cfg: &TheorySweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let models: Vec<(GaussianHypothesisModel, Vec<f64>, f64)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let m = sweep_model(
                cfg.regime,
                cfg.n,
                cfg.z_target,
                &cfg.dependent,
                cfg.master_seed,
                rep,
            )
            .map_err(|e| e.context(format!("repetition {rep}")))?;
            let w = build_detector(&m)?
                .weights()
                .iter()
                .cloned()
                .collect::<Vec<_>>();
            let z = crate::detector::z_value(&m);
            Ok((m, w, z))
        })
        .collect::<Result<_>>()?;
    let mean_z = models.iter().map(|m| m.2).sum::<f64>() / models.len() as f64;

    let mut tasks = Vec::new();
    for &kind in &cfg.kinds {
        for &k in &cfg.ks {
            for rep in 0..cfg.repetitions {
                tasks.push((kind, k, rep));
            }
        }
    }
    let results: Vec<((ReductionKind, usize, usize), Vec<(f64, f64, f64, Counts)>)> = tasks
        .into_par_iter()
        .map(|(kind, k, rep)| {
            let (m, w, _) = &models[rep];
            point(cfg, m, w, kind, k, rep)
                .map(|r| ((kind, k, rep), r))
                .map_err(|e| e.context(format!("kind {} k {k} repetition {rep}", kind.label())))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        for &k in &cfg.ks {
            for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                let mut p0 = 0.0;
                let mut p1 = 0.0;
                let mut eta = 0.0;
                let mut c = Counts::default();
                let mut reps = 0usize;
                for ((kd, kk, _), r) in &results {
                    if *kd == kind && *kk == k {
                        let (a, b, e, cc) = r[ai];
                        p0 += a;
                        p1 += b;
                        eta += e;
                        c.total += cc.total;
                        c.md_clean += cc.md_clean;
                        c.md_attack += cc.md_attack;
                        c.md_realistic += cc.md_realistic;
                        reps += 1;
                    }
                }
                let r = reps as f64;
                let emp = |x: usize| (c.total > 0).then(|| x as f64 / c.total as f64);
                let se = |p: Option<f64>| p.map(|p| binomial_stderr(p, c.total));
                let (e0, e1, e2) = (emp(c.md_clean), emp(c.md_attack), emp(c.md_realistic));
                rows.push(SweepRow {
                    kind,
                    k,
                    alpha,
                    p_md_no_attack: p0 / r,
                    p_md_attack: p1 / r,
                    realized_z: mean_z,
                    mean_eta: eta / r,
                    samples: c.total,
                    emp_md_no_attack: e0,
                    emp_md_attack: e1,
                    emp_md_attack_realistic: e2,
                    stderr_no_attack: se(e0),
                    stderr_attack: se(e1),
                    stderr_attack_realistic: se(e2),
                });
            }
        }
    }
    Ok(SweepResult { rows })
}

/// Angle-mismatch histogram for one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub k: usize,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_angle: f64,
    pub angles: Vec<f64>,
}

/// Histograms of the angle mismatch, one per `k`. Each draw generates a fresh
/// model (shared by all `k` of that draw) and a fresh RFS map per `k`.
pub fn run_angle_histogram(
    n: usize,
    ks: &[usize],
    draws: usize,
    regime: Regime,
    bins: usize,
    master_seed: u64,
) -> Result<Vec<AngleHistogram>> {
    if draws == 0 {
        return Err(Error::param("draws must be >= 1"));
    }
    if bins == 0 {
        return Err(Error::param("bins must be >= 1"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::param(format!("k = {k} outside [1, {n}]")));
    }
    let dep = DependentModelConfig::default();
    let per_draw: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let model = match regime {
                Regime::Iid => make_iid_model(n, 4.0)?,
                _ => {
                    let seed = derive_seed(master_seed, "angle-model", &[d as u64]);
                    make_dependent_model_with(
                        n,
                        regime == Regime::DependentNormalized,
                        &dep,
                        &mut rng_from_seed(seed),
                    )?
                }
            };
            ks.iter()
                .map(|&k| {
                    let seed = derive_seed(master_seed, "angle-map", &[k as u64, d as u64]);
                    let map = draw(ReductionKind::Rfs, n, k, &mut rng_from_seed(seed))?;
                    angle_mismatch(&model, &map)
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(|e| e.context(format!("draw {d}")))
        })
        .collect::<Result<_>>()?;
    let width = 90.0 / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    Ok(ks
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let angles: Vec<f64> = per_draw.iter().map(|a| a[ki]).collect();
            let mut counts = vec![0usize; bins];
            for &a in &angles {
                let b = ((a / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let mean_angle = angles.iter().sum::<f64>() / angles.len() as f64;
            AngleHistogram {
                k,
                bin_edges: edges.clone(),
                counts,
                mean_angle,
                angles,
            }
        })
        .collect())
}

pub fn histograms_to_csv(hists: &[AngleHistogram], regime: Regime) -> String {
    let mut s = String::from("# angle mismatch in degrees between projected attack and reduced boundary normal\nregime,k,bin_lo,bin_hi,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                regime.label(),
                h.k,
                h.bin_edges[i],
                h.bin_edges[i + 1],
                c
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::q_function;

    fn small_iid() -> TheorySweepConfig {
        TheorySweepConfig {
            n: 40,
            z_target: 3.0,
            alphas: vec![1.2],
            ks: vec![1, 40],
            kinds: vec![ReductionKind::Rfs],
            regime: Regime::Iid,
            repetitions: 5,
            samples_per_point: 2000,
            master_seed: 1,
            dependent: Default::default(),
        }
    }

    #[test]
    fn full_k_attack_is_near_certain() {
        let r = run_error_sweep(&small_iid()).unwrap();
        let full = r.find(ReductionKind::Rfs, 40, 1.2).unwrap();
        assert!((full.p_md_attack - q_function(-3.0)).abs() < 1e-9);
        assert!((full.p_md_no_attack - q_function(3.0)).abs() < 1e-9);
        assert_eq!(full.emp_md_attack_realistic, Some(1.0));
    }

    #[test]
    fn sweep_is_reproducible() {
        let a = run_error_sweep(&small_iid()).unwrap();
        let b = run_error_sweep(&small_iid()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = small_iid();
        c.ks = vec![41];
        assert!(run_error_sweep(&c).is_err());
        let mut c = small_iid();
        c.repetitions = 0;
        assert!(run_error_sweep(&c).is_err());
    }

    #[test]
    fn iid_histogram_all_zero() {
        let h = run_angle_histogram(30, &[5, 10], 10, Regime::Iid, 45, 3).unwrap();
        for hist in &h {
            assert_eq!(hist.counts[0], 10);
            assert_eq!(hist.mean_angle, 0.0);
        }
        let csv = histograms_to_csv(&h, Regime::Iid);
        assert!(csv.lines().nth(2).unwrap().starts_with("iid,5,0,2,10"));
    }
}
