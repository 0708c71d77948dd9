use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SRPair;
use crate::error::{Error, Result};
use crate::model::VisirModel;
use crate::numerics::{adam_step, OptimizerState, ParamStore, Tape, DEFAULT_LEARNING_RATE};
use crate::par::{self, Parallelism};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// A loss-curve point is recorded every this many steps (and at the last step).
    pub eval_interval: usize,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            steps: 1000,
            batch_size: 4,
            seed: 0,
            eval_interval: 1,
            parallelism: Parallelism::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// `(step, mean training MSE)` points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<(usize, f64)>,
}

impl LossCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (step, loss) in &self.points {
            writeln!(out, "{step},{loss}").expect("writing to a String");
        }
        out
    }
}

pub struct TrainOutcome {
    pub model: VisirModel,
    pub curve: LossCurve,
}

/// Loss and parameter gradients for one pair.
fn sample_gradient(model: &VisirModel, pair: &SRPair) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = bound.vars().to_vec();
    let out = bound.predict(&mut tape, &pair.lr)?;
    let loss = tape.mse(out, pair.hr.data())?;
    let value = tape.value(loss)[0];
    let mut grads = tape.backward(loss)?;
    Ok((value, model.params().collect_grads(&mut grads, &vars)))
}

/// Mean loss and mean gradient over a batch. Per-sample work may run in
/// parallel; the reduction is always in batch order.
pub fn batch_gradient(model: &VisirModel, batch: &[&SRPair], mode: Parallelism) -> Result<(f64, Vec<Vec<f64>>)> {
    let results = par::map(mode, batch, |pair| sample_gradient(model, pair));
    let mut total_loss = 0.0;
    let mut total: Option<Vec<Vec<f64>>> = None;
    for r in results {
        let (loss, grads) = r?;
        total_loss += loss;
        match &mut total {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(grads) {
                    a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                }
            }
        }
    }
    let n = batch.len() as f64;
    let mut grads = total.ok_or(Error::Empty("batch"))?;
    grads.iter_mut().flatten().for_each(|g| *g /= n);
    Ok((total_loss / n, grads))
}

fn apply_update(params: &mut ParamStore, grads: Vec<Vec<f64>>, state: &mut OptimizerState) -> Result<()> {
    params.set_grads(grads)?;
    adam_step(params.tensors_mut(), state)?;
    params.zero_grads();
    Ok(())
}

/// Minimizes MSE between reconstructions and high-resolution targets with Adam.
pub fn train(mut model: VisirModel, pairs: &[SRPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(model.params().tensors(), cfg.learning_rate);
    let mut order: Vec<usize> = Vec::new();
    let mut curve = LossCurve::default();
    let mut window = (0.0, 0usize);

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..pairs.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(&pairs[order.pop().expect("refilled above")]);
        }
        let (loss, grads) = match batch_gradient(&model, &batch, cfg.parallelism) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(Error::Divergence { step, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        apply_update(model.params_mut(), grads, &mut state)?;
        if !model.params().all_finite() {
            return Err(Error::Divergence { step, loss });
        }
        window.0 += loss;
        window.1 += 1;
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            curve.points.push((step, window.0 / window.1 as f64));
            window = (0.0, 0);
        }
    }
    Ok(TrainOutcome { model, curve })
}
