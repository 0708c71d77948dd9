use std::fmt::Write as _;

use crate::data::SRPair;
use crate::error::{Error, Result};
use crate::metrics::format_value;
use crate::model::{init_parameters, ModelConfig};
use crate::par::{self, Parallelism};

use super::evaluate::evaluate;
use super::train::{train, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub frequencies: Vec<f64>,
    pub hidden_layers: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { frequencies: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0], hidden_layers: (1..=6).collect() }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::config("frequencies", "at least one value required"));
        }
        if self.hidden_layers.is_empty() {
            return Err(Error::config("hidden_layers", "at least one value required"));
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::config("frequencies", format!("{f} must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Psnr(f64),
    Failed(String),
}

impl Cell {
    pub fn psnr(&self) -> Option<f64> {
        match self {
            Cell::Psnr(v) => Some(*v),
            Cell::Failed(_) => None,
        }
    }
}

/// Mean test PSNR per `(hidden_layers, ω0)` cell; `cells[row][col]`, rows follow `hidden_layers`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub frequencies: Vec<f64>,
    pub hidden_layers: Vec<usize>,
    pub cells: Vec<Vec<Cell>>,
}

impl SweepGrid {
    /// Best finite cell as `(hidden_layers, ω0, psnr)`.
    pub fn argmax(&self) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (row, &layers) in self.cells.iter().zip(&self.hidden_layers) {
            for (cell, &freq) in row.iter().zip(&self.frequencies) {
                if let Some(v) = cell.psnr() {
                    if best.map_or(true, |b| v > b.2) {
                        best = Some((layers, freq, v));
                    }
                }
            }
        }
        best
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.psnr().is_none()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("hidden_layers");
        for f in &self.frequencies {
            write!(out, ",omega0={f}").expect("writing to a String");
        }
        out.push('\n');
        for (row, layers) in self.cells.iter().zip(&self.hidden_layers) {
            write!(out, "{layers}").expect("writing to a String");
            for cell in row {
                match cell {
                    Cell::Psnr(v) => write!(out, ",{}", format_value(*v)),
                    Cell::Failed(_) => write!(out, ",failed"),
                }
                .expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

/// Trains and scores one model per cell with the same seed and step budget.
/// A cell that diverges or is otherwise invalid is marked failed; the sweep continues.
pub fn sweep(base: &ModelConfig, train_pairs: &[SRPair], test_pairs: &[SRPair], spec: &SweepSpec, cfg: &TrainConfig) -> Result<SweepGrid> {
    spec.validate()?;
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if test_pairs.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let cols = spec.frequencies.len();
    let run = |idx: usize| -> Cell {
        let mut model_cfg = base.clone();
        model_cfg.siren_hidden_layers = spec.hidden_layers[idx / cols];
        model_cfg.omega0 = spec.frequencies[idx % cols];
        let inner = TrainConfig { parallelism: Parallelism::Sequential, ..cfg.clone() };
        let result = init_parameters(&model_cfg, cfg.seed)
            .and_then(|m| train(m, train_pairs, &inner))
            .and_then(|out| evaluate(&out.model, test_pairs, Parallelism::Sequential));
        match result {
            Ok(eval) if !eval.mean_psnr().is_nan() => Cell::Psnr(eval.mean_psnr()),
            Ok(_) => Cell::Failed("mean PSNR is NaN".into()),
            Err(e) => Cell::Failed(e.to_string()),
        }
    };
    let flat = par::map_range(cfg.parallelism, spec.hidden_layers.len() * cols, run);
    let cells = flat.chunks(cols).map(|r| r.to_vec()).collect();
    Ok(SweepGrid { frequencies: spec.frequencies.clone(), hidden_layers: spec.hidden_layers.clone(), cells })
}
