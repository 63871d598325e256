mod common;

use common::gaussian;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfs_forensics::corpus::{generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::ml_attack::{
    attack_eot, attack_feature_domain, attack_pixel_domain, evaluate_rfs_security,
    train_full_detector, train_rfs_detectors, AttackStatus, AttackTarget, Ensemble,
    FeatureAttackConfig, LabeledFeatures, PixelAttackConfig, SecurityConfig,
};
use rfs_forensics::spam::extract_spam;
use rfs_forensics::svm::{Kernel, SvmModel, TrainConfig};

/// Two Gaussian classes in `dim` dimensions whose means differ along every axis.
fn blobs(seed: u64, dim: usize, per_class: usize) -> LabeledFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class = |shift: f64| -> Vec<Vec<f64>> {
        (0..per_class)
            .map(|_| {
                gaussian(&mut rng, dim, 1.0)
                    .into_iter()
                    .map(|x| x + shift)
                    .collect()
            })
            .collect()
    };
    let originals = class(-0.6);
    let manipulated = class(0.6);
    LabeledFeatures {
        originals,
        manipulated,
    }
}

fn rbf_config(gamma: f64) -> TrainConfig {
    TrainConfig {
        c: 10.0,
        kernel: Some(Kernel::Rbf { gamma }),
        ..TrainConfig::default()
    }
}

fn blob_model() -> (SvmModel, LabeledFeatures) {
    let data = blobs(1, 12, 40);
    let (model, _) = train_full_detector(&data, false, &rbf_config(0.05)).unwrap();
    (model, blobs(2, 12, 20))
}

#[test]
fn already_evading_inputs_are_returned_unchanged() {
    let (model, test) = blob_model();
    let v = test
        .originals
        .iter()
        .find(|v| model.evaluate(v).unwrap().1 <= 0.5)
        .expect("some original is classified as original");
    let out = attack_feature_domain(&model, v, &FeatureAttackConfig::default()).unwrap();
    assert_eq!(out.status, AttackStatus::AlreadyEvading);
    assert_eq!(out.iterations, 0);
    assert_eq!(&out.payload, v);
    assert!(out.success);
    assert_eq!(out.distortion.feature_distance, 0.0);
}

#[test]
fn success_means_probability_at_most_epsilon() {
    let (model, test) = blob_model();
    for eps in [0.5, 0.3, 0.1] {
        for v in &test.manipulated {
            let out =
                attack_feature_domain(&model, v, &FeatureAttackConfig::with_epsilon(eps)).unwrap();
            let p = model.evaluate(&out.payload).unwrap().1;
            assert_eq!(
                out.success,
                p <= eps + 1e-12,
                "eps {eps}: p {p}, {:?}",
                out.status
            );
            assert!((p - out.final_probability).abs() < 1e-12);
        }
    }
}

#[test]
fn probability_trace_never_increases() {
    let (model, test) = blob_model();
    let cfg = FeatureAttackConfig {
        record_trace: true,
        step_size: 0.002,
        ..FeatureAttackConfig::with_epsilon(0.1)
    };
    for v in &test.manipulated {
        let out = attack_feature_domain(&model, v, &cfg).unwrap();
        let mut prev = out.initial_probability;
        for &p in &out.trace {
            assert!(p <= prev + 1e-15, "{p} after {prev}");
            prev = p;
        }
    }
}

#[test]
fn refined_attack_stops_just_inside() {
    let (model, test) = blob_model();
    let coarse = FeatureAttackConfig {
        step_size: 0.2,
        ..FeatureAttackConfig::with_epsilon(0.3)
    };
    let fine = FeatureAttackConfig {
        refine: true,
        ..coarse.clone()
    };
    for v in &test.manipulated {
        let a = attack_feature_domain(&model, v, &coarse).unwrap();
        let b = attack_feature_domain(&model, v, &fine).unwrap();
        if a.status == AttackStatus::Success {
            assert!(b.success && b.final_probability <= 0.3);
            assert_eq!(b.iterations, a.iterations);
        }
    }
}

#[test]
fn single_member_ensemble_equals_the_reduced_attack() {
    let data = blobs(3, 10, 30);
    let members = train_rfs_detectors(&data, 4, 1, false, &rbf_config(0.1), 7, "test").unwrap();
    let ensemble = Ensemble::new(&members, None).unwrap();
    let test = blobs(4, 10, 8);
    let cfg = FeatureAttackConfig::with_epsilon(0.3);
    for v in &test.manipulated {
        let single = attack_feature_domain(&members[0], v, &cfg).unwrap();
        let eot = attack_eot(&ensemble, v, &cfg).unwrap();
        assert_eq!(single, eot);
    }
    assert!(Ensemble::new(&[], None).is_err());
}

#[test]
fn ensemble_averages_scores_and_probabilities() {
    let data = blobs(5, 10, 30);
    let members = train_rfs_detectors(&data, 3, 4, false, &rbf_config(0.1), 9, "test").unwrap();
    let ensemble = Ensemble::new(&members, None).unwrap();
    let v = &blobs(6, 10, 1).manipulated[0];
    let (g, p) = ensemble.evaluate(v).unwrap();
    let each: Vec<(f64, f64)> = members.iter().map(|m| m.evaluate(v).unwrap()).collect();
    assert!((g - each.iter().map(|e| e.0).sum::<f64>() / 4.0).abs() < 1e-12);
    assert!((p - each.iter().map(|e| e.1).sum::<f64>() / 4.0).abs() < 1e-12);
}

#[test]
fn attacks_transfer_less_to_small_random_subsets() {
    let data = blobs(7, 30, 40);
    let test = blobs(8, 30, 20);
    let (model, _) = train_full_detector(&data, false, &rbf_config(0.02)).unwrap();
    let attacked: Vec<Vec<f64>> = test
        .manipulated
        .iter()
        .map(|v| {
            attack_feature_domain(&model, v, &FeatureAttackConfig::default())
                .unwrap()
                .payload
        })
        .collect();
    let full_md = attacked
        .iter()
        .filter(|v| !model.is_manipulated(v).unwrap())
        .count() as f64
        / attacked.len() as f64;
    let cfg = SecurityConfig {
        manipulation: ManipulationKind::Mf3,
        ks: vec![2],
        maps_per_k: 10,
        normalize: false,
        epsilon: 0.5,
        attack_kind: "feature".into(),
        seed: 3,
        train: rbf_config(0.1),
    };
    let table = evaluate_rfs_security(&data, &test, &attacked, &cfg).unwrap();
    assert_eq!(table.rows.len(), 10);
    let reduced_md = table.summary_for(2).unwrap().md_attacked;
    assert!(full_md >= reduced_md, "full {full_md} reduced {reduced_md}");
    let csv = table.to_csv();
    assert_eq!(
        csv.lines().next().unwrap(),
        "manipulation,k,map_seed,fa,md_clean,md_attacked,epsilon,attack_kind"
    );
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(
        table.summary_csv().lines().next().unwrap(),
        "k,maps,fa,fa_stderr,md_clean,md_clean_stderr,md_attacked,md_attacked_stderr"
    );
}

#[test]
fn pixel_attack_returns_a_valid_nearby_image() {
    let corpus = CorpusConfig {
        width: 32,
        height: 32,
        count: 24,
        ..CorpusConfig::default()
    };
    let images = generate_corpus(&corpus).unwrap();
    let kind = ManipulationKind::Mf3;
    let mut data = LabeledFeatures::default();
    for img in &images[..20] {
        data.originals.push(extract_spam(img).unwrap().into_vec());
        data.manipulated
            .push(extract_spam(&kind.apply(img).unwrap()).unwrap().into_vec());
    }
    let (model, _) = train_full_detector(&data, false, &TrainConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for img in &images[20..] {
        let target = kind.apply(img).unwrap();
        let cfg = PixelAttackConfig {
            pixel_fraction: rng.random_range(0.05..0.3),
            ..PixelAttackConfig::default()
        };
        let out = attack_pixel_domain(&model, &target, &cfg).unwrap();
        let attacked = &out.payload;
        assert_eq!((attacked.width(), attacked.height()), (32, 32));
        let (_, p) = model
            .evaluate(&extract_spam(attacked).unwrap().into_vec())
            .unwrap();
        assert!((p - out.final_probability).abs() < 1e-9);
        assert_eq!(out.success, p <= cfg.epsilon);
        if out.status != AttackStatus::AlreadyEvading {
            assert!(out.distortion.psnr_db.is_some());
        }
        // every pixel moves by at most one gray level per iteration
        let max_change = attacked
            .pixels()
            .iter()
            .zip(target.pixels())
            .map(|(a, b)| (i32::from(*a) - i32::from(*b)).unsigned_abs() as usize)
            .max()
            .unwrap();
        assert!(max_change <= out.iterations);
    }
}
