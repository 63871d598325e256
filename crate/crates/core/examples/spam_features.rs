//! SPAM features of an image (a file, or a synthetic image when no path is
//! given) before and after each manipulation, and an incremental update.
//!
//! cargo run --release --example spam_features -- [image.pgm|png|jpg]

use rfs_forensics::corpus::{generate_image, CorpusConfig};
use rfs_forensics::image::read_image;
use rfs_forensics::manipulation::ManipulationKind;
use rfs_forensics::seed::task_rng;
use rfs_forensics::spam::{extract_spam, SpamCache, BLOCK};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = match std::env::args().nth(1) {
        Some(path) => read_image(path)?,
        None => {
            let c = CorpusConfig::default();
            generate_image(
                c.width,
                c.height,
                c.noise_sigma,
                &mut task_rng(0, "example", &[]),
            )?
        }
    };
    println!("{}x{} image", img.width(), img.height());
    // index of the all-zero difference triple in each block
    let flat = 3 * 49 + 3 * 7 + 3;
    let describe = |name: &str, f: &[f64]| {
        println!(
            "{name:<9} P(0,0,0) straight {:.4} diagonal {:.4}",
            f[flat],
            f[BLOCK + flat]
        );
    };
    describe("original", extract_spam(&img)?.values());
    for kind in ManipulationKind::ALL {
        describe(kind.label(), extract_spam(&kind.apply(&img)?)?.values());
    }

    let mut cache = SpamCache::new(img)?;
    let before = cache.features();
    let v = cache.image().get(10, 10).wrapping_add(1);
    let after = cache.update(10, 10, v)?;
    let changed = before
        .values()
        .iter()
        .zip(after.values())
        .filter(|(a, b)| a != b)
        .count();
    println!(
        "one pixel edit changed {changed} of {} features",
        after.values().len()
    );
    Ok(())
}
