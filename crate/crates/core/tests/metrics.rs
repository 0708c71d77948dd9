use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visir::metrics::{evaluate_pair, format_value, mse, psnr, psnr_from_mse, ssim, SsimParams};
use visir::{Error, Image};

fn img(h: usize, w: usize, c: usize, v: &[f64]) -> Image {
    Image::new(h, w, c, v.to_vec()).unwrap()
}

fn random_image(seed: u64, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(h, w, c, (0..h * w * c).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Whole-channel SSIM written straight from the definition, averaged over channels.
fn ssim_reference(a: &Image, b: &Image) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let (x, y) = (a.channel(ch), b.channel(ch));
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
        let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
        let cov = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
        total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total / a.channels() as f64
}

#[test]
fn mse_examples() {
    let a = random_image(1, 5, 4, 3, 0.0, 1.0);
    assert_eq!(mse(&a, &a).unwrap(), 0.0);
    assert_eq!(mse(&Image::filled(3, 3, 3, 0.0), &Image::filled(3, 3, 3, 1.0)).unwrap(), 1.0);
    let hand = mse(&img(2, 2, 1, &[0.0, 0.5, 1.0, 0.25]), &img(2, 2, 1, &[0.1, 0.5, 0.8, 0.25])).unwrap();
    assert!((hand - 0.0125).abs() < 1e-15);
    assert!(matches!(mse(&a, &Image::filled(4, 5, 3, 0.0)), Err(Error::Shape { .. })));
}

#[test]
fn psnr_examples() {
    assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
    assert_eq!(psnr_from_mse(1.0, 1.0), 0.0);
    let a = random_image(2, 4, 4, 3, 0.0, 1.0);
    let p = psnr(&a, &a, 1.0).unwrap();
    assert_eq!(p, f64::INFINITY);
    assert_eq!(format_value(p), "inf");
    assert!(psnr(&a, &a, 0.0).is_err());
}

#[test]
fn ssim_examples() {
    let half = Image::filled(4, 4, 3, 0.5);
    assert_eq!(ssim(&half, &half, SsimParams::default()).unwrap(), 1.0);

    // zero-mean ramp shifted into [0, 1] against its flip
    let ramp: Vec<f64> = (0..16).map(|i| 0.5 + (i as f64 - 7.5) / 16.0).collect();
    let flipped: Vec<f64> = ramp.iter().map(|v| 1.0 - v).collect();
    let (a, b) = (img(4, 4, 1, &ramp), img(4, 4, 1, &flipped));
    let s = ssim(&a, &b, SsimParams::default()).unwrap();
    assert!(s < 0.0);
    assert!((s - ssim_reference(&a, &b)).abs() < 1e-12);

    let (x, y) = (random_image(3, 6, 7, 3, 0.0, 1.0), random_image(4, 6, 7, 3, 0.0, 1.0));
    assert!((ssim(&x, &y, SsimParams::default()).unwrap() - ssim_reference(&x, &y)).abs() < 1e-12);
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// A shared offset moves the luminance factor (2·μa·μb + C1)/(μa² + μb² + C1)
// whenever the means differ, so shift invariance only holds for equal means.
#[test]
fn shared_shift_changes_ssim_when_means_differ() {
    let a = img(1, 2, 1, &[0.1, 0.3]);
    let b = img(1, 2, 1, &[0.5, 0.7]);
    let up = |i: &Image| Image::new(1, 2, 1, i.data().iter().map(|v| v + 0.2).collect()).unwrap();
    let p = SsimParams::default();
    let (s0, s1) = (ssim(&a, &b, p).unwrap(), ssim(&up(&a), &up(&b), p).unwrap());
    assert!((s1 - s0).abs() > 1e-3);
    assert!((s0 - ssim_reference(&a, &b)).abs() < 1e-12);
    assert!((s1 - ssim_reference(&up(&a), &up(&b))).abs() < 1e-12);
}

#[test]
fn evaluate_pair_examples() {
    let a = random_image(5, 4, 4, 3, 0.0, 1.0);
    let r = evaluate_pair(&a, &a).unwrap();
    assert_eq!((r.mse, r.psnr, r.ssim), (0.0, f64::INFINITY, 1.0));

    let b = random_image(6, 4, 4, 3, 0.0, 1.0);
    let r = evaluate_pair(&a, &b).unwrap();
    assert_eq!(r.mse, mse(&a, &b).unwrap());
    assert_eq!(r.psnr, psnr(&a, &b, 1.0).unwrap());
    assert_eq!(r.ssim, ssim(&a, &b, SsimParams::default()).unwrap());

    let r = evaluate_pair(&img(2, 2, 1, &[0.0, 0.5, 1.0, 0.25]), &img(2, 2, 1, &[0.1, 0.5, 0.8, 0.25])).unwrap();
    assert!((r.psnr - 10.0 * (1.0f64 / 0.0125).log10()).abs() < 1e-12);
    assert!((r.psnr - 19.03).abs() < 0.01);
}

proptest! {
    #[test]
    fn metric_properties(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, shift in -0.2f64..0.2) {
        let a = random_image(seed, h, w, 3, 0.25, 0.75);
        let b = random_image(seed.wrapping_add(1), h, w, 3, 0.25, 0.75);
        let p = SsimParams::default();
        let (ab, ba) = (ssim(&a, &b, p).unwrap(), ssim(&b, &a, p).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ssim(&a, &a, p).unwrap() - 1.0).abs() < 1e-9);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert!(mse(&a, &b).unwrap() > 0.0);

        let shifted = |i: &Image| Image::new(h, w, 3, i.data().iter().map(|v| v + shift).collect()).unwrap();
        prop_assert!((mse(&shifted(&a), &shifted(&b)).unwrap() - mse(&a, &b).unwrap()).abs() < 1e-12);

        // with matching channel means the luminance factor is 1 before and after the shift
        let mut matched = b.clone();
        for ch in 0..3 {
            let (ma, mb) = (mean(&a.channel(ch)), mean(&b.channel(ch)));
            for y in 0..h {
                for x in 0..w {
                    matched.set(y, x, ch, b.get(y, x, ch) - mb + ma);
                }
            }
        }
        let before = ssim(&a, &matched, p).unwrap();
        let after = ssim(&shifted(&a), &shifted(&matched), p).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_mse(m1 in 1e-9f64..10.0, m2 in 1e-9f64..10.0) {
        prop_assume!(m1 < m2);
        prop_assert!(psnr_from_mse(m1, 1.0) > psnr_from_mse(m2, 1.0));
    }
}
