//! Trains a full-feature SPAM detector for one manipulation on a synthetic
//! corpus and reports test accuracy.
//!
//! cargo run --release --example train_detector -- [mf3|mf5|mf7|ahe] [train] [test] [--normalize]

use rfs_forensics::corpus::{generate_corpus, CorpusConfig};
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::spam::{extract_spam, fit_normalizer};
use rfs_forensics::svm::{train, TrainConfig, MANIPULATED, ORIGINAL};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ManipulationKind = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(ManipulationKind::Mf3);
    let n_train: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let n_test: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let normalize = args.iter().any(|a| a == "--normalize");

    let t0 = Instant::now();
    let images = generate_corpus(&CorpusConfig {
        count: n_train + n_test,
        seed: 1,
        ..Default::default()
    })?;
    let mut feats = Vec::new();
    for img in &images {
        let orig = extract_spam(img)?.into_vec();
        let man = extract_spam(&kind.apply(img)?)?.into_vec();
        feats.push((orig, man));
    }
    println!("corpus + features: {:.1}s", t0.elapsed().as_secs_f64());

    let (train_set, test_set) = feats.split_at(n_train);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (o, m) in train_set {
        x.push(o.clone());
        y.push(ORIGINAL);
        x.push(m.clone());
        y.push(MANIPULATED);
    }
    let norm = if normalize {
        Some(fit_normalizer(&x)?)
    } else {
        None
    };
    let t1 = Instant::now();
    let (model, report, sel) = train(&x, &y, &TrainConfig::default(), norm)?;
    println!(
        "training: {:.1}s, gamma {:.4e}, C {}",
        t1.elapsed().as_secs_f64(),
        sel.gamma,
        sel.c
    );
    for p in &sel.grid {
        println!("  gamma {:.4e}  cv accuracy {:.4}", p.gamma, p.cv_accuracy);
    }
    println!(
        "support vectors {} / {} ({:.3}), training accuracy {:.4}, slope {:.3}",
        report.n_support,
        report.n_train,
        report.n_support as f64 / report.n_train as f64,
        report.training_accuracy,
        model.prob_slope
    );

    let (mut fa, mut md) = (0, 0);
    for (o, m) in test_set {
        fa += usize::from(model.is_manipulated(o)?);
        md += usize::from(!model.is_manipulated(m)?);
    }
    let n = test_set.len() as f64;
    println!(
        "{kind}: test accuracy {:.4} (false alarm {:.3}, missed detection {:.3})",
        1.0 - (fa + md) as f64 / (2.0 * n),
        fa as f64 / n,
        md as f64 / n
    );
    Ok(())
}
