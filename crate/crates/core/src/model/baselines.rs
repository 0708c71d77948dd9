//! Coordinate-based sine network fitted to a single image.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{apply_stack, Activation, Affine, Output};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// Normalized pixel-centre coordinates `(x, y) ∈ [-1, 1]²` of an `h × w` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordGrid {
    height: usize,
    width: usize,
    coords: Tensor,
}

impl CoordGrid {
    pub fn pixel_centers(height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 2);
        for y in 0..height {
            for x in 0..width {
                data.push(2.0 * (x as f64 + 0.5) / width as f64 - 1.0);
                data.push(2.0 * (y as f64 + 0.5) / height as f64 - 1.0);
            }
        }
        Ok(CoordGrid { height, width, coords: Tensor::new(vec![height * width, 2], data)? })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }
}

/// Shape of a coordinate network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InrConfig {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub channels: usize,
    pub omega0: f64,
}

/// Sine stack mapping a 2-D coordinate to `channels` intensities.
#[derive(Clone, Debug)]
pub struct SirenInr {
    config: InrConfig,
    params: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
}

impl SirenInr {
    pub fn init(config: InrConfig, seed: u64) -> Result<Self> {
        if config.hidden_dim == 0 || config.channels == 0 || !(1..=6).contains(&config.hidden_layers) {
            return Err(Error::config("siren_hidden_layers", format!("invalid coordinate network {config:?}")));
        }
        if !(config.omega0.is_finite() && config.omega0 > 0.0) {
            return Err(Error::config("omega0", format!("{} must be positive", config.omega0)));
        }
        let widths: Vec<usize> = std::iter::once(2)
            .chain(std::iter::repeat(config.hidden_dim).take(config.hidden_layers))
            .chain(std::iter::once(config.channels))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        for j in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[j], widths[j + 1]);
            let fi = fan_in as f64;
            let w_bound = if j == 0 { 1.0 / fi } else { (6.0 / fi).sqrt() / config.omega0 };
            let b_bound = 1.0 / fi.sqrt();
            let mut sample = |n: usize, bound: f64| -> Vec<f64> {
                let dist = Uniform::new_inclusive(-bound, bound);
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            let w = Tensor::new(vec![fan_out, fan_in], sample(fan_out * fan_in, w_bound))?;
            let b = Tensor::new(vec![fan_out], sample(fan_out, b_bound))?;
            let wi = params.insert(format!("inr.{j}.weight"), w)?;
            let bi = params.insert(format!("inr.{j}.bias"), b)?;
            layers.push((wi, bi));
        }
        Ok(SirenInr { config, params, layers })
    }

    pub fn config(&self) -> &InrConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Binds the parameters and returns the layer handles plus the raw vars in store order.
    pub fn bind(&self, tape: &mut Tape) -> (Vec<Affine>, Vec<Var>) {
        let vars = self.params.bind(tape);
        let layers = self.layers.iter().map(|&(w, b)| Affine { weight: vars[w.0], bias: vars[b.0] }).collect();
        (layers, vars)
    }

    /// Evaluates the network at every coordinate; returns `[points × channels]` in `[0, 1]`.
    pub fn apply(&self, tape: &mut Tape, layers: &[Affine], coords: &CoordGrid) -> Result<Var> {
        let x = tape.constant(coords.coords.clone());
        apply_stack(tape, x, layers, Activation::Sine(self.config.omega0), Output::UnitInterval)
    }
}

/// Renders the coordinate network on `coords`.
pub fn siren_inr_forward(coords: &CoordGrid, inr: &SirenInr) -> Result<Image> {
    let mut tape = Tape::new();
    let (layers, _) = inr.bind(&mut tape);
    let out = inr.apply(&mut tape, &layers, coords)?;
    Image::new(coords.height, coords.width, inr.config.channels, tape.value(out).to_vec())
}
