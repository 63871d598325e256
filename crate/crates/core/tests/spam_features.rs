mod common;

use common::{naive_spam, random_image};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfs_forensics::image::GrayImage;
use rfs_forensics::spam::{extract_spam, SpamCache, BLOCK, SPAM_DIM};

#[test]
fn matches_naive_definition_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (i, spread) in [3u8, 6, 20, 255].iter().cycle().take(12).enumerate() {
        let img = random_image(&mut rng, 16 + i % 3, 16 + i % 5, *spread);
        let fast = extract_spam(&img).unwrap();
        let slow = naive_spam(&img);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn incremental_updates_match_recompute() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_image(&mut rng, 24, 19, 8);
    let mut cache = SpamCache::new(img).unwrap();
    let mut probe_out = Vec::new();
    for _ in 0..50 {
        let r = rng.random_range(0..19);
        let c = rng.random_range(0..24);
        let v: u8 = rng.random();
        let before = cache.features();
        cache.probe(r, c, v, &mut probe_out).unwrap();
        let mut expected = before.values().to_vec();
        for &(i, val) in &probe_out {
            expected[i] = val;
        }
        let updated = cache.update(r, c, v).unwrap();
        let recomputed = extract_spam(cache.image()).unwrap();
        for ((a, b), e) in updated
            .values()
            .iter()
            .zip(recomputed.values())
            .zip(&expected)
        {
            assert!((a - b).abs() < 1e-12);
            assert!((a - e).abs() < 1e-12);
        }
    }
    cache.validate().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_are_conditional_probabilities(
        w in 4usize..14, h in 4usize..14, seed in any::<u64>(), spread in 1u8..=255
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, w, h, spread);
        let f = extract_spam(&img).unwrap();
        prop_assert_eq!(f.values().len(), SPAM_DIM);
        prop_assert!(f.values().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let cache = SpamCache::new(img).unwrap();
        for dir in 0..8 {
            let m = cache.counts().direction_transitions(dir);
            for ctx in 0..49 {
                let s: f64 = m[ctx * 7..ctx * 7 + 7].iter().sum();
                if cache.counts().context_count(dir, ctx) > 0 {
                    prop_assert!((s - 1.0).abs() < 1e-12);
                } else {
                    prop_assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn shift_invariance(w in 4usize..12, h in 4usize..12, seed in any::<u64>(), shift in 0u8..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, w, h, 200);
        let shifted = GrayImage::new(w, h, img.pixels().iter().map(|&p| p.min(215) + shift).collect()).unwrap();
        let clipped = GrayImage::new(w, h, img.pixels().iter().map(|&p| p.min(215)).collect()).unwrap();
        prop_assert_eq!(extract_spam(&clipped).unwrap(), extract_spam(&shifted).unwrap());
    }
}

#[test]
fn block_layout() {
    let img = GrayImage::filled(8, 8, 3).unwrap();
    let f = extract_spam(&img).unwrap();
    assert_eq!(f.values()[171], 1.0);
    assert_eq!(f.values()[BLOCK + 171], 1.0);
    assert_eq!(f.values().iter().sum::<f64>(), 2.0);
}
