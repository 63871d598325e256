//! Ensemble attack: descend on the average of N reduced detectors trained on
//! random feature subsets, then test the result on fresh subsets.
//!
//! cargo run --release --example eot_attack -- [k] [N] [fresh]

use rfs_forensics::corpus::{generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::ml_attack::{
    attack_eot, train_rfs_detectors, transfer_rate, Ensemble, FeatureAttackConfig, LabeledFeatures,
};
use rfs_forensics::spam::extract_spam;
use rfs_forensics::svm::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let size: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let fresh: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(20);

    let kind = ManipulationKind::Mf3;
    let images = generate_corpus(&CorpusConfig {
        count: 150,
        seed: 1,
        ..Default::default()
    })?;
    let mut train = LabeledFeatures::default();
    let mut test = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let m = extract_spam(&kind.apply(img)?)?.into_vec();
        if i < 100 {
            train.originals.push(extract_spam(img)?.into_vec());
            train.manipulated.push(m);
        } else {
            test.push(m);
        }
    }
    let svm = TrainConfig::default();
    let attackers = train_rfs_detectors(&train, k, size, false, &svm, 0, "attacker")?;
    let defenders = train_rfs_detectors(&train, k, fresh, false, &svm, 0, "defender")?;
    let ensemble = Ensemble::new(&attackers, None)?;
    let cfg = FeatureAttackConfig::with_epsilon(0.5);
    let mut attacked = Vec::new();
    let mut succeeded = 0;
    for v in &test {
        let o = attack_eot(&ensemble, v, &cfg)?;
        succeeded += usize::from(o.success);
        attacked.push(o.payload);
    }
    println!(
        "k={k}, N={size}: fooled the ensemble on {succeeded}/{} images",
        test.len()
    );
    println!(
        "missed detection by {fresh} fresh detectors: clean {:.3}, attacked {:.3}",
        transfer_rate(&test, &defenders)?,
        transfer_rate(&attacked, &defenders)?
    );
    Ok(())
}
