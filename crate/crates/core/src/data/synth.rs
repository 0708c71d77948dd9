//! Synthetic stand-ins for gridded model output: sums of plane waves with
//! controllable frequency content plus an optional smooth background.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::FieldGrid;
use crate::error::{Error, Result};

/// Plane wave `amplitude · cos(2π·frequency·(u cosθ + v sinθ) + φ)` with
/// `u = x/width`, `v = y/height`; frequency is in cycles per grid span and
/// the phase φ is drawn from the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub amplitude: f64,
    pub frequency: f64,
    /// Radians; 0 varies along x.
    pub orientation: f64,
}

/// Random low-frequency waves drawn from the seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub amplitude: f64,
    pub max_frequency: f64,
    pub terms: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub components: Vec<SpectralComponent>,
    pub background: Option<Background>,
}

impl SpectrumSpec {
    /// Smooth background with a few fixed sharper waves on top.
    pub fn climate_like() -> Self {
        SpectrumSpec {
            components: vec![
                SpectralComponent { amplitude: 0.6, frequency: 2.0, orientation: 0.3 },
                SpectralComponent { amplitude: 0.3, frequency: 9.0, orientation: 1.1 },
                SpectralComponent { amplitude: 0.15, frequency: 23.0, orientation: 2.2 },
            ],
            background: Some(Background { amplitude: 1.0, max_frequency: 3.0, terms: 6 }),
        }
    }

    /// Sinusoids just below the Nyquist limit of a 4× reduction of 128-pixel
    /// sources, over a smooth background.
    pub fn high_frequency() -> Self {
        SpectrumSpec {
            components: vec![
                SpectralComponent { amplitude: 0.5, frequency: 2.0, orientation: 0.4 },
                SpectralComponent { amplitude: 0.35, frequency: 12.0, orientation: 1.0 },
                SpectralComponent { amplitude: 0.25, frequency: 9.6, orientation: 2.3 },
            ],
            background: Some(Background { amplitude: 0.5, max_frequency: 3.0, terms: 4 }),
        }
    }

    fn is_empty(&self) -> bool {
        self.components.is_empty() && self.background.is_none_or(|b| b.terms == 0)
    }
}

struct Wave {
    amplitude: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

/// Samples the spectrum on an `h × w` grid; identical seeds give identical fields.
pub fn synth_field(seed: u64, h: usize, w: usize, spec: &SpectrumSpec, units: &str) -> Result<FieldGrid> {
    if spec.is_empty() {
        return Err(Error::Empty("spectrum spec"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waves: Vec<Wave> = spec
        .components
        .iter()
        .map(|c| Wave {
            amplitude: c.amplitude,
            kx: 2.0 * PI * c.frequency * c.orientation.cos() / w as f64,
            ky: 2.0 * PI * c.frequency * c.orientation.sin() / h as f64,
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect();
    if let Some(bg) = spec.background {
        let per_term = bg.amplitude / (bg.terms.max(1) as f64).sqrt();
        for _ in 0..bg.terms {
            let f = rng.gen_range(0.0..=bg.max_frequency);
            let theta = rng.gen_range(0.0..PI);
            waves.push(Wave {
                amplitude: per_term * rng.gen_range(0.5..1.0),
                kx: 2.0 * PI * f * theta.cos() / w as f64,
                ky: 2.0 * PI * f * theta.sin() / h as f64,
                phase: rng.gen_range(0.0..2.0 * PI),
            });
        }
    }
    let mut values = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            values.push(waves.iter().map(|wv| wv.amplitude * (wv.kx * xf + wv.ky * yf + wv.phase).cos()).sum());
        }
    }
    FieldGrid::new(h, w, values, units)
}

/// SplitMix64 finalizer; used to derive independent sub-seeds and split hashes.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Surface temperature, shortwave and longwave flux for one synthetic month.
pub fn synth_source(seed: u64, index: usize, h: usize, w: usize, spec: &SpectrumSpec) -> Result<[FieldGrid; 3]> {
    // (offset, scale, units) per physical field
    let physical = [(288.0, 12.0, "K"), (180.0, 90.0, "W m-2"), (340.0, 40.0, "W m-2")];
    let make = |k: usize| -> Result<FieldGrid> {
        let (offset, scale, units) = physical[k];
        let mut f = synth_field(mix_seed(seed, index as u64, k as u64), h, w, spec, units)?;
        f.values.iter_mut().for_each(|v| *v = offset + scale * *v);
        Ok(f)
    };
    Ok([make(0)?, make(1)?, make(2)?])
}
