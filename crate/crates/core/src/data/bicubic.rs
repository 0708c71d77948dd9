//! Integer-factor bicubic reduction with the Catmull–Rom kernel.
//!
//! The kernel is stretched by the reduction factor so every input pixel under
//! an output pixel contributes (antialiased reduction). Taps falling outside
//! the image are clamped to the nearest edge pixel, and weights are
//! renormalized to sum to one.

use crate::error::{Error, Result};
use crate::image::Image;

const A: f64 = -0.5;

pub fn cubic_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per output position: clamped source indices and normalized weights.
fn axis_weights(n_in: usize, factor: usize) -> Vec<Vec<(usize, f64)>> {
    let s = factor as f64;
    let n_out = n_in / factor;
    (0..n_out)
        .map(|i| {
            let centre = (i as f64 + 0.5) * s - 0.5;
            let lo = (centre - 2.0 * s).floor() as i64;
            let hi = (centre + 2.0 * s).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let w = cubic_kernel((j as f64 - centre) / s);
                    (w != 0.0).then(|| (j.clamp(0, n_in as i64 - 1) as usize, w))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Weighted sum written relative to the first tap, so a constant input
/// reproduces the constant exactly.
fn resample(taps: &[(usize, f64)], get: impl Fn(usize) -> f64) -> f64 {
    let base = get(taps[0].0);
    base + taps.iter().map(|&(j, w)| w * (get(j) - base)).sum::<f64>()
}

/// Reduces both spatial dimensions by `factor`; output is clamped to `[0, 1]`.
pub fn bicubic_downsample(img: &Image, factor: usize) -> Result<Image> {
    let (h, w, c) = img.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Tiling(format!("factor {factor} does not divide {h}×{w}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let wx = axis_weights(w, factor);
    let wy = axis_weights(h, factor);

    let mut horizontal = vec![0.0; h * ow * c];
    for y in 0..h {
        for (x, taps) in wx.iter().enumerate() {
            for ch in 0..c {
                horizontal[(y * ow + x) * c + ch] = resample(taps, |j| img.get(y, j, ch));
            }
        }
    }
    let mut out = vec![0.0; oh * ow * c];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..ow {
            for ch in 0..c {
                let v = resample(taps, |j| horizontal[(j * ow + x) * c + ch]);
                out[(y * ow + x) * c + ch] = v.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(oh, ow, c, out)
}
