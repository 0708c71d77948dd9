use crate::data::SRPair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{siren_inr_forward, CoordGrid, InrConfig, SirenInr};
use crate::numerics::{adam_step, OptimizerState, Tape};
use crate::par::Parallelism;

use super::evaluate::{evaluate_with, Evaluation};

/// Budget for fitting one coordinate network to one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Fits a coordinate network to the pixels of `img` (full batch).
pub fn fit_siren_inr(img: &Image, inr: InrConfig, fit: &FitConfig) -> Result<SirenInr> {
    if inr.channels != img.channels() {
        return Err(Error::shape("fit_siren_inr", format!("{} channels vs image {}", inr.channels, img.channels())));
    }
    let mut net = SirenInr::init(inr, fit.seed)?;
    let coords = CoordGrid::pixel_centers(img.height(), img.width())?;
    let mut state = OptimizerState::new(net.params().tensors(), fit.learning_rate);
    for step in 1..=fit.steps {
        let mut tape = Tape::new();
        let (layers, vars) = net.bind(&mut tape);
        let loss = net
            .apply(&mut tape, &layers, &coords)
            .and_then(|out| tape.mse(out, img.data()))
            .map_err(|_| Error::Divergence { step, loss: f64::NAN })?;
        let mut grads = tape.backward(loss)?;
        let grads = net.params().collect_grads(&mut grads, &vars);
        net.params_mut().set_grads(grads)?;
        adam_step(net.params_mut().tensors_mut(), &mut state)?;
        if !net.params().all_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
    }
    Ok(net)
}

/// Per-image baseline: fit on each low-resolution input, render on the high-resolution grid.
pub fn evaluate_siren_inr(pairs: &[SRPair], inr: InrConfig, fit: &FitConfig, mode: Parallelism) -> Result<Evaluation> {
    evaluate_with(pairs, mode, |pair| {
        let net = fit_siren_inr(&pair.lr, inr, fit)?;
        let (h, w, _) = pair.hr.dims();
        siren_inr_forward(&CoordGrid::pixel_centers(h, w)?, &net)
    })
}
