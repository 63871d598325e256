mod common;

use common::{gaussian, random_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfs_forensics::svm::{
    fit_slope, load_model, save_model, select_hyperparameters, smo, stratified_folds, train,
    train_fixed, Gram, Kernel, SvmModel, TrainConfig,
};

fn toy(rng: &mut ChaCha8Rng, per_class: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (label, cx) in [(1.0, 2.0), (-1.0, -2.0)] {
        for _ in 0..per_class {
            let p = gaussian(rng, 2, spread);
            x.push(vec![cx + p[0], p[1]]);
            y.push(label);
        }
    }
    (x, y)
}

#[test]
fn separable_toy_set_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, y) = toy(&mut rng, 30, 0.3);
    let cfg = TrainConfig {
        kernel: Some(Kernel::Rbf { gamma: 0.5 }),
        ..Default::default()
    };
    let (model, report, _) = train(&x, &y, &cfg, None).unwrap();
    assert_eq!(report.training_accuracy, 1.0);
    assert!(report.converged);
    assert!(
        report.max_kkt_residual <= cfg.smo_tolerance,
        "{}",
        report.max_kkt_residual
    );
    for (v, l) in x.iter().zip(&y) {
        assert_eq!(model.is_manipulated(v).unwrap(), *l > 0.0);
    }
    assert!(model.coefficients.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn kkt_residuals_within_tolerance_on_overlapping_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y) = toy(&mut rng, 60, 2.0);
    for (kernel, c) in [
        (Kernel::Rbf { gamma: 0.7 }, 1.0),
        (Kernel::Linear, 10.0),
        (Kernel::Polynomial { c: 1.0, degree: 3 }, 0.5),
    ] {
        for tol in [1e-3, 1e-5] {
            let cfg = TrainConfig {
                smo_tolerance: tol,
                ..Default::default()
            };
            let (_, report) = train_fixed(&x, &y, kernel, c, None, &cfg).unwrap();
            assert!(report.converged);
            assert!(
                report.max_kkt_residual <= tol,
                "{kernel:?}: {} > {tol}",
                report.max_kkt_residual
            );
        }
    }
}

#[test]
fn smo_matches_closed_form_two_points() {
    // two points ±e1 under a linear kernel: α = 1/2 each, b = 0, margin 1
    let k = Gram::from_fn(2, |i, j| if i == j { 1.0 } else { -1.0 });
    let sol = smo::solve(
        &k,
        &[1.0, -1.0],
        smo::SmoParams {
            c: 10.0,
            tolerance: 1e-9,
            max_iterations: 100,
        },
    )
    .unwrap();
    assert!((sol.alpha[0] - 0.5).abs() < 1e-12 && (sol.alpha[1] - 0.5).abs() < 1e-12);
    assert!(sol.bias.abs() < 1e-12);
}

#[test]
fn single_class_is_rejected() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0]];
    let cfg = TrainConfig {
        kernel: Some(Kernel::Linear),
        ..Default::default()
    };
    assert!(train(&x, &[1.0, 1.0, 1.0], &cfg, None).is_err());
}

#[test]
fn discriminant_examples() {
    let zero = SvmModel::new(
        Kernel::Rbf { gamma: 1.0 },
        vec![vec![1.0, 2.0], vec![0.0, 0.0]],
        vec![0.0, 0.0],
        0.37,
        1.0,
        2,
        None,
    )
    .unwrap();
    assert_eq!(zero.discriminant(&[5.0, 5.0]).unwrap(), 0.37);
    let one = SvmModel::new(
        Kernel::Rbf { gamma: 3.0 },
        vec![vec![1.0, 2.0]],
        vec![0.0],
        -0.1,
        1.0,
        2,
        None,
    )
    .unwrap();
    assert_eq!(one.discriminant(&[1.0, 2.0]).unwrap(), -0.1);
    assert!(zero.discriminant(&[1.0]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kernel in [
        Kernel::Linear,
        Kernel::Polynomial { c: 0.5, degree: 2 },
        Kernel::Rbf { gamma: 0.2 },
    ] {
        let m = random_model(&mut rng, kernel, 6, 9, false);
        let v = gaussian(&mut rng, 6, 1.0);
        let direct: f64 = m
            .support_vectors
            .iter()
            .zip(&m.coefficients)
            .map(|(sv, c)| {
                let d: f64 = v.iter().zip(sv).map(|(a, b)| a * b).sum();
                let s: f64 = v.iter().zip(sv).map(|(a, b)| (a - b).powi(2)).sum();
                c * match kernel {
                    Kernel::Linear => d,
                    Kernel::Polynomial { c, degree } => (d + c).powi(degree as i32),
                    Kernel::Rbf { gamma } => (-gamma * s).exp(),
                }
            })
            .sum::<f64>()
            + m.bias;
        assert!((m.discriminant(&v).unwrap() - direct).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    for trial in 0..30 {
        let kernel = match trial % 3 {
            0 => Kernel::Linear,
            1 => Kernel::Polynomial { c: 1.0, degree: 3 },
            _ => Kernel::Rbf { gamma: 0.1 },
        };
        let m = random_model(&mut rng, kernel, 5, 7, trial % 2 == 0);
        let v = gaussian(&mut rng, 5, 1.0);
        let g = m.gradient(&v).unwrap();
        let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..5 {
            let (mut p, mut q) = (v.clone(), v.clone());
            p[i] += h;
            q[i] -= h;
            let fd = (m.discriminant(&p).unwrap() - m.discriminant(&q).unwrap()) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-3 * scale),
                "{kernel:?} coord {i}: {fd} vs {}",
                g[i]
            );
        }
    }
}

#[test]
fn gradient_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lin = random_model(&mut rng, Kernel::Linear, 4, 5, false);
    assert_eq!(
        lin.gradient(&gaussian(&mut rng, 4, 1.0)).unwrap(),
        lin.gradient(&gaussian(&mut rng, 4, 1.0)).unwrap()
    );
    let one = SvmModel::new(
        Kernel::Rbf { gamma: 2.0 },
        vec![vec![0.3, -0.2]],
        vec![0.0],
        0.0,
        1.0,
        2,
        None,
    )
    .unwrap();
    assert_eq!(one.gradient(&[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn probability_mapping() {
    let mut m = SvmModel::new(
        Kernel::Linear,
        vec![vec![1.0]],
        vec![0.0],
        0.0,
        1.0,
        1,
        None,
    )
    .unwrap();
    assert_eq!(m.probability(&[4.0]).unwrap(), 0.5);
    m.bias = 3f64.ln();
    assert!((m.probability(&[0.0]).unwrap() - 0.75).abs() < 1e-15);
    m.bias = 1e6;
    assert_eq!(m.probability(&[0.0]).unwrap(), 1.0);
    m.prob_slope = 0.37;
    for g in [-50.0, -1.0, -1e-12, 0.0, 1e-12, 2.0, 40.0] {
        m.bias = g;
        let p = m.probability(&[0.0]).unwrap();
        assert_eq!(g > 0.0, p > 0.5, "g={g}");
    }
}

#[test]
fn slope_fit_is_finite_and_positive() {
    let scores = [3.0, 2.0, 4.0, -3.0, -2.5, -5.0];
    let labels = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
    let a = fit_slope(&scores, &labels).unwrap();
    assert!(a > 0.0 && a.is_finite());
    // stationarity of the smoothed log-likelihood
    let (tp, tn) = (4.0 / 5.0, 1.0 / 5.0);
    let d: f64 = scores
        .iter()
        .zip(&labels)
        .map(|(&g, &l)| (1.0 / (1.0 + (-a * g).exp()) - if l > 0.0 { tp } else { tn }) * g)
        .sum();
    assert!(d.abs() < 1e-9);
    assert!(fit_slope(&[1.0, 2.0], &[1.0, 1.0]).is_err());
}

#[test]
fn gamma_selection_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = toy(&mut rng, 20, 0.2);
    let one = TrainConfig {
        gamma_grid: vec![0.7],
        ..Default::default()
    };
    assert_eq!(select_hyperparameters(&x, &y, &one).unwrap().gamma, 0.7);
    let two = TrainConfig {
        gamma_grid: vec![1.0, 1e-3],
        ..Default::default()
    };
    let s = select_hyperparameters(&x, &y, &two).unwrap();
    assert!(s.grid.iter().all(|p| p.cv_accuracy == 1.0));
    assert_eq!(s.gamma, 1e-3);
    let auto = TrainConfig {
        seed: 9,
        ..Default::default()
    };
    assert_eq!(
        select_hyperparameters(&x, &y, &auto).unwrap(),
        select_hyperparameters(&x, &y, &auto).unwrap()
    );
}

#[test]
fn folds_are_stratified() {
    let y: Vec<f64> = (0..53)
        .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
        .collect();
    let f = stratified_folds(&y, 5, 7);
    for fold in 0..5 {
        let pos = (0..53).filter(|&i| f[i] == fold && y[i] > 0.0).count();
        assert!((3..=4).contains(&pos));
    }
}

#[test]
fn training_ignores_example_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = toy(&mut rng, 25, 1.5);
    let cfg = TrainConfig {
        kernel: Some(Kernel::Rbf { gamma: 0.3 }),
        c: 5.0,
        seed: 4,
        ..Default::default()
    };
    let (a, _, _) = train(&x, &y, &cfg, None).unwrap();
    let perm: Vec<usize> = (0..x.len()).rev().collect();
    let xr: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
    let yr: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let (b, _, _) = train(&xr, &yr, &cfg, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn model_json_round_trip_and_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = random_model(&mut rng, Kernel::Rbf { gamma: 0.4 }, 4, 6, true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    for _ in 0..100 {
        let v = gaussian(&mut rng, 4, 2.0);
        assert!((m.discriminant(&v).unwrap() - back.discriminant(&v).unwrap()).abs() < 1e-12);
    }
    let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    doc["coefficients"].as_array_mut().unwrap().pop();
    let err = SvmModel::from_json(&doc.to_string())
        .unwrap_err()
        .to_string();
    assert!(err.contains("coefficients"), "{err}");
    let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    doc.as_object_mut().unwrap().remove("prob_slope");
    let err = SvmModel::from_json(&doc.to_string())
        .unwrap_err()
        .to_string();
    assert!(err.contains("prob_slope"), "{err}");
}
