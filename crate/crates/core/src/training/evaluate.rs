use std::fmt::Write as _;

use crate::data::SRPair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{evaluate_pair, format_value, MetricsReport};
use crate::par::{self, Parallelism};

/// Max, mean and min of one metric column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
}

impl Stat {
    /// Infinite values take part in max/min but not in the mean; if every
    /// value is infinite the mean is that infinity. Returns the stat and how
    /// many values were left out of the mean.
    pub fn of(values: &[f64]) -> (Stat, usize) {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let excluded = values.len() - finite.len();
        let mean = if finite.is_empty() { max } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        (Stat { max, mean, min }, excluded)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mse: Stat,
    pub psnr: Stat,
    pub ssim: Stat,
    /// Perfect reconstructions whose `+inf` PSNR is left out of the mean.
    pub psnr_infinite: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_image: Vec<(String, MetricsReport)>,
    pub summary: Summary,
}

impl Evaluation {
    pub fn from_reports(per_image: Vec<(String, MetricsReport)>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Empty("evaluation split"));
        }
        let column = |f: fn(&MetricsReport) -> f64| per_image.iter().map(|(_, r)| f(r)).collect::<Vec<_>>();
        let (mse, _) = Stat::of(&column(|r| r.mse));
        let (psnr, psnr_infinite) = Stat::of(&column(|r| r.psnr));
        let (ssim, _) = Stat::of(&column(|r| r.ssim));
        Ok(Evaluation { per_image, summary: Summary { mse, psnr, ssim, psnr_infinite } })
    }

    pub fn mean_psnr(&self) -> f64 {
        self.summary.psnr.mean
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,mse,psnr,ssim\n");
        for (id, r) in &self.per_image {
            writeln!(out, "{id},{},{},{}", format_value(r.mse), format_value(r.psnr), format_value(r.ssim))
                .expect("writing to a String");
        }
        out
    }

    /// Max/Mean/Min rows in MSE, PSNR, SSIM order.
    pub fn summary_table(&self) -> String {
        let s = &self.summary;
        let mut out = format!("{:<6} {:>14} {:>14} {:>14}\n", "metric", "max", "mean", "min");
        for (name, stat) in [("MSE", s.mse), ("PSNR", s.psnr), ("SSIM", s.ssim)] {
            writeln!(
                out,
                "{name:<6} {:>14} {:>14} {:>14}",
                format_value(stat.max),
                format_value(stat.mean),
                format_value(stat.min)
            )
            .expect("writing to a String");
        }
        if s.psnr_infinite > 0 {
            writeln!(out, "note: {} perfect reconstruction(s) excluded from mean PSNR", s.psnr_infinite)
                .expect("writing to a String");
        }
        out
    }
}

/// Scores `reconstruct(lr)` against every pair's high-resolution target.
pub fn evaluate_with<F>(pairs: &[SRPair], mode: Parallelism, reconstruct: F) -> Result<Evaluation>
where
    F: Fn(&SRPair) -> Result<Image> + Sync + Send,
{
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let reports = par::map(mode, pairs, |pair| -> Result<(String, MetricsReport)> {
        let out = reconstruct(pair)?;
        Ok((pair.id.clone(), evaluate_pair(&pair.hr, &out)?))
    });
    Evaluation::from_reports(reports.into_iter().collect::<Result<Vec<_>>>()?)
}

pub fn evaluate(model: &crate::model::VisirModel, pairs: &[SRPair], mode: Parallelism) -> Result<Evaluation> {
    evaluate_with(pairs, mode, |pair| model.predict(&pair.lr))
}
