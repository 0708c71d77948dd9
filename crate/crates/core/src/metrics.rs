//! Reconstruction quality: mean squared error, peak signal-to-noise ratio and
//! whole-image structural similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Unit-interval images.
pub const DEFAULT_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// Decibels; `+inf` when `mse == 0`.
    pub psnr: f64,
    pub ssim: f64,
}

/// Stabilizing constants and dynamic range for [`ssim`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub max: f64,
}

impl SsimParams {
    pub fn for_range(max: f64) -> Self {
        SsimParams { c1: (0.01 * max).powi(2), c2: (0.03 * max).powi(2), max }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_range(DEFAULT_MAX)
    }
}

fn check_dims(a: &Image, b: &Image, op: &'static str) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Mean over every pixel and channel of the squared difference.
pub fn mse(original: &Image, reconstructed: &Image) -> Result<f64> {
    check_dims(original, reconstructed, "mse")?;
    let sum: f64 = original
        .data()
        .iter()
        .zip(reconstructed.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / original.len() as f64)
}

/// `10·log10(max² / mse)`; `+inf` for a perfect reconstruction.
pub fn psnr_from_mse(mse: f64, max: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max * max / mse).log10()
    }
}

pub fn psnr(original: &Image, reconstructed: &Image, max: f64) -> Result<f64> {
    if max <= 0.0 {
        return Err(Error::Contract(format!("psnr max must be positive, got {max}")));
    }
    Ok(psnr_from_mse(mse(original, reconstructed)?, max))
}

/// Structural similarity from global per-channel statistics, averaged over channels.
pub fn ssim(original: &Image, reconstructed: &Image, params: SsimParams) -> Result<f64> {
    check_dims(original, reconstructed, "ssim")?;
    let channels = original.channels();
    let n = (original.height() * original.width()) as f64;
    let mut total = 0.0;
    for c in 0..channels {
        let x = original.channel(c);
        let y = reconstructed.channel(c);
        let mu_x = x.iter().sum::<f64>() / n;
        let mu_y = y.iter().sum::<f64>() / n;
        let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(&y) {
            let (dx, dy) = (a - mu_x, b - mu_y);
            var_x += dx * dx;
            var_y += dy * dy;
            cov += dx * dy;
        }
        var_x /= n;
        var_y /= n;
        cov /= n;
        let numerator = (2.0 * mu_x * mu_y + params.c1) * (2.0 * cov + params.c2);
        let denominator = (mu_x * mu_x + mu_y * mu_y + params.c1) * (var_x + var_y + params.c2);
        total += numerator / denominator;
    }
    Ok(total / channels as f64)
}

pub fn evaluate_pair(original: &Image, reconstructed: &Image) -> Result<MetricsReport> {
    let mse = mse(original, reconstructed)?;
    Ok(MetricsReport {
        mse,
        psnr: psnr_from_mse(mse, DEFAULT_MAX),
        ssim: ssim(original, reconstructed, SsimParams::default())?,
    })
}

/// Decimal rendering used by every CSV writer; infinities print as `inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, c: usize, data: &[f64]) -> Image {
        Image::new(h, w, c, data.to_vec()).unwrap()
    }

    #[test]
    fn mse_hand_case() {
        let a = img(2, 2, 1, &[0.0, 0.5, 1.0, 0.25]);
        let b = img(2, 2, 1, &[0.1, 0.5, 0.8, 0.25]);
        // (0.01 + 0 + 0.04 + 0) / 4
        let expected = ((0.0f64 - 0.1).powi(2) + (1.0f64 - 0.8).powi(2)) / 4.0;
        assert_eq!(mse(&a, &b).unwrap(), expected);
        assert!((expected - 0.0125).abs() < 1e-15);
        let r = evaluate_pair(&a, &b).unwrap();
        assert!((r.psnr - 19.030_899_869_919_434).abs() < 1e-9);
    }

    #[test]
    fn extremes() {
        let zeros = Image::filled(3, 4, 3, 0.0);
        let ones = Image::filled(3, 4, 3, 1.0);
        assert_eq!(mse(&zeros, &ones).unwrap(), 1.0);
        assert_eq!(psnr(&zeros, &ones, 1.0).unwrap(), 0.0);
        assert_eq!(psnr(&ones, &ones, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
    }

    #[test]
    fn identical_images_report() {
        let a = Image::from_fn(5, 5, 3, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f64 / 10.0).unwrap();
        let r = evaluate_pair(&a, &a).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.psnr, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(format_value(r.psnr), "inf");
    }

    #[test]
    fn constant_images_are_similar() {
        let a = Image::filled(4, 4, 1, 0.5);
        assert_eq!(ssim(&a, &a, SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn anticorrelated_pair_has_negative_ssim() {
        let ramp: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let flipped: Vec<f64> = ramp.iter().map(|v| 1.0 - v).collect();
        let a = img(4, 4, 1, &ramp);
        let b = img(4, 4, 1, &flipped);
        // Direct evaluation: both means 0.5, equal variances, covariance = -variance.
        let var = ramp.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / 16.0;
        let p = SsimParams::default();
        let expected = (0.5 + p.c1) * (-2.0 * var + p.c2) / ((0.5 + p.c1) * (2.0 * var + p.c2));
        let got = ssim(&a, &b, p).unwrap();
        assert!(got < 0.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Image::filled(2, 2, 1, 0.0);
        let b = Image::filled(2, 3, 1, 0.0);
        assert!(mse(&a, &b).is_err());
        assert!(ssim(&a, &b, SsimParams::default()).is_err());
        assert!(psnr(&a, &a, 0.0).is_err());
    }
}
