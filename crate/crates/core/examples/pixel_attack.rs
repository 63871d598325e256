//! Pixel-domain attack on a few test images against a full-feature
//! detector, reporting success, iterations and PSNR.
//!
//! cargo run --release --example pixel_attack -- [mf3|mf5|mf7|ahe] [images] [epsilon]

use rfs_forensics::corpus::{corpus_image, generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::ml_attack::{
    attack_pixel_domain, train_full_detector, LabeledFeatures, PixelAttackConfig,
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
    let n_attack: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let epsilon: f64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0.5);

    let corpus = CorpusConfig {
        count: 200,
        seed: 1,
        ..Default::default()
    };
    let mut train = LabeledFeatures::default();
    for img in generate_corpus(&corpus)? {
        train.originals.push(extract_spam(&img)?.into_vec());
        train
            .manipulated
            .push(extract_spam(&kind.apply(&img)?)?.into_vec());
    }
    let (model, _) = train_full_detector(&train, false, &TrainConfig::default())?;

    let cfg = PixelAttackConfig {
        epsilon,
        ..Default::default()
    };
    for i in 0..n_attack {
        let target = kind.apply(&corpus_image(&corpus, 200 + i)?)?;
        let t = Instant::now();
        let out = attack_pixel_domain(&model, &target, &cfg)?;
        println!(
            "image {i}: p {:.3} -> {:.3}, {:?} after {} iterations, PSNR {:.2} dB, {:.1}s",
            out.initial_probability,
            out.final_probability,
            out.status,
            out.iterations,
            out.distortion.psnr_db.unwrap_or(f64::NAN),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
