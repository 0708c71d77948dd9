use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// One physical quantity sampled on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub units: String,
}

impl FieldGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::shape("field", format!("{height}×{width} with {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field grid"));
        }
        Ok(FieldGrid { height, width, values, units: units.into() })
    }
}

/// Physical range mapped onto `[0, 1]`; kept so normalized data can be mapped back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub units: String,
    pub min: f64,
    pub max: f64,
}

impl NormRange {
    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Min–max scales a field onto the unit interval.
pub fn normalize_field(f: &FieldGrid) -> Result<(Vec<f64>, NormRange)> {
    let (min, max) = f
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return Err(Error::DegenerateRange(min));
    }
    let span = max - min;
    let values = f.values.iter().map(|v| (v - min) / span).collect();
    Ok((values, NormRange { units: f.units.clone(), min, max }))
}

/// Red = surface temperature, green = shortwave flux, blue = longwave flux.
pub fn assemble_rgb(height: usize, width: usize, temperature: &[f64], shortwave: &[f64], longwave: &[f64]) -> Result<Image> {
    Image::from_planes(height, width, &[temperature, shortwave, longwave])
}

/// Splits an image back into its channel planes.
pub fn split_channels(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels()).map(|c| img.channel(c)).collect()
}
