use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfs_forensics::image::GrayImage;
use rfs_forensics::manipulation::{clahe, downsample4, median_filter, psnr, ManipulationKind};

/// Clip-and-redistribute written loop by loop, 1-based like the reference tool.
fn oracle_clip(hist: &mut [i64], clip: i64) {
    let nb = hist.len() as i64;
    let mut total: i64 = hist.iter().map(|&h| (h - clip).max(0)).sum();
    let avg = total / nb;
    let upper = clip - avg;
    for k in 1..=hist.len() {
        let h = hist[k - 1];
        if h > clip {
            hist[k - 1] = clip;
        } else if h > upper {
            total -= clip - h;
            hist[k - 1] = clip;
        } else {
            total -= avg;
            hist[k - 1] = h + avg;
        }
    }
    let mut k = 1i64;
    while total != 0 {
        let step = (nb / total).max(1);
        let mut m = k;
        while m <= nb {
            if hist[(m - 1) as usize] < clip {
                hist[(m - 1) as usize] += 1;
                total -= 1;
                if total == 0 {
                    break;
                }
            }
            m += step;
        }
        k += 1;
        if k > nb {
            k = 1;
        }
    }
}

/// CLAHE for images whose sides are multiples of 8, blending tiles with
/// clamped hat weights over all 64 tile centers.
fn oracle_clahe(img: &GrayImage, clip_limit: f64) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    assert!(h % 8 == 0 && w % 8 == 0);
    let (th, tw) = (h / 8, w / 8);
    let n = (th * tw) as i64;
    let mut maps = vec![vec![0.0f64; 256]; 64];
    for ti in 0..8 {
        for tj in 0..8 {
            let mut hist = vec![0i64; 256];
            for r in 0..th {
                for c in 0..tw {
                    hist[img.get(ti * th + r, tj * tw + c) as usize] += 1;
                }
            }
            let min_clip = (n + 255) / 256;
            let clip = min_clip + (clip_limit * (n - min_clip) as f64).round() as i64;
            oracle_clip(&mut hist, clip);
            let mut acc = 0i64;
            for v in 0..256 {
                acc += hist[v];
                maps[ti * 8 + tj][v] = (acc as f64 * 255.0 / n as f64).min(255.0);
            }
        }
    }
    let hat = |x: f64, size: usize, i: usize| {
        let size = size as f64;
        let first = (size - 1.0) / 2.0;
        let last = first + 7.0 * size;
        let xc = x.clamp(first, last);
        let center = first + i as f64 * size;
        (1.0 - (xc - center).abs() / size).max(0.0)
    };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let v = img.get(r, c) as usize;
            let mut s = 0.0;
            for ti in 0..8 {
                let wy = hat(r as f64, th, ti);
                if wy == 0.0 {
                    continue;
                }
                for tj in 0..8 {
                    s += wy * hat(c as f64, tw, tj) * maps[ti * 8 + tj][v];
                }
            }
            out.push(s);
        }
    }
    out
}

/// Exact agreement except where the blended value sits on a rounding tie.
fn assert_matches_oracle(img: &GrayImage, clip_limit: f64) {
    let got = clahe(img, clip_limit).unwrap();
    let want = oracle_clahe(img, clip_limit);
    for (i, (&g, &v)) in got.pixels().iter().zip(&want).enumerate() {
        let g = f64::from(g);
        if ((v - v.floor()) - 0.5).abs() < 1e-9 {
            assert!(g == v.floor() || g == v.ceil(), "pixel {i}: {g} vs {v}");
        } else {
            assert_eq!(g, v.round(), "pixel {i}: clip {clip_limit}");
        }
    }
}

fn oracle_median(img: &GrayImage, window: usize) -> GrayImage {
    let rad = (window / 2) as isize;
    let sym = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let j = if i < 0 {
            -i - 1
        } else if i >= n {
            2 * n - i - 1
        } else {
            i
        };
        j as usize
    };
    GrayImage::from_fn(img.width(), img.height(), |r, c| {
        let mut vals = Vec::new();
        for dr in -rad..=rad {
            for dc in -rad..=rad {
                vals.push(img.get(
                    sym(r as isize + dr, img.height()),
                    sym(c as isize + dc, img.width()),
                ));
            }
        }
        vals.sort();
        vals[vals.len() / 2]
    })
    .unwrap()
}

fn random_image(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
}

#[test]
fn clahe_checkerboard_matches_oracle() {
    let board = GrayImage::from_fn(
        64,
        64,
        |r, c| if (r / 4 + c / 4) % 2 == 0 { 60 } else { 190 },
    )
    .unwrap();
    assert_matches_oracle(&board, 0.02);
    let fine = GrayImage::from_fn(64, 64, |r, c| if (r + c) % 2 == 0 { 100 } else { 110 }).unwrap();
    assert_matches_oracle(&fine, 0.02);
}

#[test]
fn clahe_random_and_textured_match_oracle() {
    for (i, clip) in [0.0, 0.01, 0.02, 0.2, 1.0].iter().enumerate() {
        let img = random_image(i as u64, 48, 32);
        assert_matches_oracle(&img, *clip);
    }
    let grad = GrayImage::from_fn(128, 96, |r, c| ((r * 2 + c) / 3 % 256) as u8).unwrap();
    assert_matches_oracle(&grad, 0.02);
}

#[test]
fn median_matches_sort_oracle() {
    for (seed, window) in [(1u64, 3usize), (2, 5), (3, 7), (4, 5)] {
        let img = random_image(seed, 16, 16);
        assert_eq!(
            median_filter(&img, window).unwrap(),
            oracle_median(&img, window)
        );
    }
    let small = random_image(9, 3, 2);
    assert_eq!(median_filter(&small, 7).unwrap().width(), 3);
}

#[test]
fn downsample_matches_block_mean() {
    let img = random_image(17, 23, 18);
    let d = downsample4(&img).unwrap();
    for r in 0..d.height() {
        for c in 0..d.width() {
            let mut s = 0.0;
            for dr in 0..4 {
                for dc in 0..4 {
                    s += f64::from(img.get(4 * r + dr, 4 * c + dc));
                }
            }
            assert_eq!(d.get(r, c), (s / 16.0 + 0.5).floor() as u8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn manipulations_keep_shape(seed in any::<u64>(), w in 8usize..40, h in 8usize..40) {
        let img = random_image(seed, w, h);
        for kind in ManipulationKind::ALL {
            let out = kind.apply(&img).unwrap();
            prop_assert_eq!((out.width(), out.height()), (w, h));
        }
    }

    #[test]
    fn median_fixed_points_are_stable(seed in any::<u64>(), window in prop::sample::select(vec![3usize, 5, 7])) {
        let img = random_image(seed, 20, 17);
        let mut cur = median_filter(&img, window).unwrap();
        for _ in 0..30 {
            let next = median_filter(&cur, window).unwrap();
            if next == cur {
                prop_assert_eq!(median_filter(&next, window).unwrap(), next);
                break;
            }
            cur = next;
        }
    }

    #[test]
    fn psnr_symmetric(seed in any::<u64>()) {
        let a = random_image(seed, 12, 9);
        let b = random_image(seed ^ 1, 12, 9);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn clahe_mapping_monotone_in_value(seed in any::<u64>(), r in 0usize..32, c in 0usize..32) {
        let img = random_image(seed, 32, 32);
        let lo = img.get(r, c);
        let mut brighter = img.clone();
        brighter.set(r, c, lo.saturating_add(1));
        // one histogram count moves up a bin; clipping can cost at most a level
        let a = clahe(&img, 0.02).unwrap().get(r, c);
        let b = clahe(&brighter, 0.02).unwrap().get(r, c);
        prop_assert!(u16::from(b) + 1 >= u16::from(a));
    }
}
