//! Security of randomized feature selection: attack the full detector in the
//! feature domain, then measure how often reduced detectors on secret
//! feature subsets are still fooled.
//!
//! cargo run --release --example rfs_security -- [mf3|ahe|...] [maps_per_k] [epsilon] [--normalize]

use rfs_forensics::corpus::{generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::ml_attack::{
    attack_feature_domain, evaluate_rfs_security, train_full_detector, FeatureAttackConfig,
    LabeledFeatures, SecurityConfig,
};
use rfs_forensics::spam::extract_spam;
use rfs_forensics::svm::TrainConfig;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ManipulationKind = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(ManipulationKind::Mf3);
    let maps: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let epsilon: f64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let normalize = args.iter().any(|a| a == "--normalize");

    let images = generate_corpus(&CorpusConfig {
        count: 300,
        seed: 1,
        ..Default::default()
    })?;
    let mut train = LabeledFeatures::default();
    let mut test = LabeledFeatures::default();
    for (i, img) in images.iter().enumerate() {
        let set = if i < 200 { &mut train } else { &mut test };
        set.originals.push(extract_spam(img)?.into_vec());
        set.manipulated
            .push(extract_spam(&kind.apply(img)?)?.into_vec());
    }
    let (full, _) = train_full_detector(&train, normalize, &TrainConfig::default())?;
    let attack = FeatureAttackConfig::with_epsilon(epsilon);
    let attacked: Vec<Vec<f64>> = test
        .manipulated
        .iter()
        .map(|v| attack_feature_domain(&full, v, &attack).map(|o| o.payload))
        .collect::<Result<_, _>>()?;

    let config = SecurityConfig {
        manipulation: kind,
        ks: vec![1, 5, 10, 20, 50, 100, 200, 400, 600, 686],
        maps_per_k: maps,
        normalize,
        epsilon,
        attack_kind: "feature".into(),
        seed: 7,
        train: TrainConfig::default(),
    };
    let t = Instant::now();
    let table = evaluate_rfs_security(&train, &test, &attacked, &config)?;
    print!("{}", table.summary_csv());
    println!("sweep: {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
