//! Feature-domain attack against a full-feature detector at several
//! thresholds, reporting success rate and feature SNR.
//!
//! cargo run --release --example feature_attack -- [mf3|mf5|mf7|ahe] [train] [test] [--normalize]

use rfs_forensics::corpus::{generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::{mean_finite, ManipulationKind};
use rfs_forensics::ml_attack::{
    attack_feature_domain, train_full_detector, FeatureAttackConfig, LabeledFeatures,
};
use rfs_forensics::spam::extract_spam;
use rfs_forensics::svm::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ManipulationKind = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(ManipulationKind::Ahe);
    let n_train: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let n_test: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let normalize = args.iter().any(|a| a == "--normalize");

    let images = generate_corpus(&CorpusConfig {
        count: n_train + n_test,
        seed: 1,
        ..Default::default()
    })?;
    let mut train = LabeledFeatures::default();
    let mut test = LabeledFeatures::default();
    for (i, img) in images.iter().enumerate() {
        let set = if i < n_train { &mut train } else { &mut test };
        set.originals.push(extract_spam(img)?.into_vec());
        set.manipulated
            .push(extract_spam(&kind.apply(img)?)?.into_vec());
    }
    let (model, report) = train_full_detector(&train, normalize, &TrainConfig::default())?;
    println!(
        "{kind}: {} support vectors of {}",
        report.n_support, report.n_train
    );

    for eps in [0.5, 0.3, 0.1] {
        let cfg = FeatureAttackConfig::with_epsilon(eps);
        let mut successes = 0;
        let mut attacked = 0;
        let mut snrs = Vec::new();
        let mut iters = 0;
        for v in &test.manipulated {
            let out = attack_feature_domain(&model, v, &cfg)?;
            if out.iterations == 0 {
                continue;
            }
            attacked += 1;
            iters += out.iterations;
            successes += usize::from(out.success);
            snrs.extend(out.distortion.feature_snr_db);
        }
        println!(
            "eps {eps}: success {successes}/{attacked}, mean feature SNR {:.2} dB, mean iterations {:.1}",
            mean_finite(snrs).unwrap_or(f64::NAN),
            iters as f64 / attacked.max(1) as f64
        );
    }
    Ok(())
}
