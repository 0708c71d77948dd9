use std::fs;
use std::path::Path;

use visir::data::io::{read_image, write_png};
use visir::data::{build_dataset, DatasetManifest, SRPair, Split, MANIFEST_FILE};
use visir::metrics::{evaluate_pair, format_value};
use visir::model::{init_parameters, ModelConfig, VisirModel};
use visir::training::{evaluate, load_checkpoint, save_checkpoint, sweep, train};
use visir::{Error, Image};

use crate::config::RunConfig;
use crate::Failure;

type CmdResult = Result<(), Failure>;

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_split(run: &RunConfig, split: Split) -> Result<(DatasetManifest, Vec<SRPair>), Error> {
    let dir = run.data_dir();
    let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))?;
    let pairs = manifest.load_pairs(&dir, split)?;
    Ok((manifest, pairs))
}

/// Dimensions come from the dataset; everything else from the run config.
fn model_for(run: &RunConfig, manifest: &DatasetManifest, base: ModelConfig) -> Result<ModelConfig, Error> {
    let cfg = ModelConfig {
        lr_height: manifest.lr_height,
        lr_width: manifest.lr_width,
        channels: manifest.channels,
        scale: manifest.scale,
        ..base
    };
    run.model_config(cfg)
}

/// Loads the checkpoint and rejects it if any configured key disagrees with it.
fn load_matching(run: &RunConfig, manifest: Option<&DatasetManifest>) -> Result<VisirModel, Error> {
    let model = load_checkpoint(&run.checkpoint())?;
    let stored = model.config().clone();
    let expected = match manifest {
        Some(m) => model_for(run, m, stored.clone())?,
        None => run.model_config(stored.clone())?,
    };
    if expected != stored {
        return Err(Error::ConfigMismatch(format!("checkpoint holds {stored:?}, run asks for {expected:?}")));
    }
    Ok(model)
}

pub fn build_data(run: &RunConfig) -> CmdResult {
    let cfg = run.dataset_config()?;
    let out = run.out_dir("data");
    create_dir(&out)?;
    let manifest = build_dataset(&cfg, &out, run.parallelism())?;
    let count = |s| manifest.entries(s).count();
    println!("{} pairs", manifest.pairs.len());
    println!("train {} / test {}", count(Split::Train), count(Split::Test));
    println!(
        "hr {}x{}, lr {}x{}, scale {}",
        manifest.hr_height, manifest.hr_width, manifest.lr_height, manifest.lr_width, manifest.scale
    );
    println!("wrote {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

pub fn train_cmd(run: &RunConfig) -> CmdResult {
    let tcfg = run.train_config()?;
    let (manifest, pairs) = load_split(run, Split::Train)?;
    let mcfg = model_for(run, &manifest, ModelConfig::default())?;
    let model = init_parameters(&mcfg, run.seed)?;
    println!("{} parameters, {} training pairs, {} steps", model.parameter_count(), pairs.len(), tcfg.steps);
    let outcome = train(model, &pairs, &tcfg)?;

    let out = run.out_dir("run");
    create_dir(&out)?;
    let ckpt = out.join("checkpoint.vsck");
    save_checkpoint(&outcome.model, &ckpt)?;
    write_text(&out.join("loss.csv"), &outcome.curve.to_csv())?;
    match outcome.curve.last() {
        Some(loss) => println!("final train loss: {}", format_value(loss)),
        None => println!("final train loss: n/a (no steps taken)"),
    }
    println!("wrote {}", ckpt.display());
    Ok(())
}

pub fn eval_cmd(run: &RunConfig) -> CmdResult {
    let split = run.split()?;
    let (manifest, pairs) = load_split(run, split)?;
    let model = load_matching(run, Some(&manifest))?;
    let result = evaluate(&model, &pairs, run.parallelism())?;

    let out = run.out_dir("eval");
    create_dir(&out)?;
    let csv = out.join("metrics.csv");
    write_text(&csv, &result.to_csv())?;
    println!("{} images", result.per_image.len());
    print!("{}", result.summary_table());
    println!("wrote {}", csv.display());
    Ok(())
}

pub fn sweep_cmd(run: &RunConfig) -> CmdResult {
    let spec = run.sweep_spec()?;
    let tcfg = run.train_config()?;
    let (manifest, train_pairs) = load_split(run, Split::Train)?;
    let (_, test_pairs) = load_split(run, Split::Test)?;
    let base = model_for(run, &manifest, ModelConfig::default())?;
    let grid = sweep(&base, &train_pairs, &test_pairs, &spec, &tcfg)?;

    let out = run.out_dir("sweep");
    create_dir(&out)?;
    let csv = out.join("sweep.csv");
    let text = grid.to_csv();
    write_text(&csv, &text)?;
    print!("{text}");
    for (row, layers) in grid.cells.iter().zip(&grid.hidden_layers) {
        for (cell, omega0) in row.iter().zip(&grid.frequencies) {
            if let visir::training::Cell::Failed(why) = cell {
                println!("failed: hidden_layers={layers} omega0={omega0}: {why}");
            }
        }
    }
    let total = grid.frequencies.len() * grid.hidden_layers.len();
    println!("{} of {} cells succeeded", total - grid.failures(), total);
    println!("wrote {}", csv.display());
    match grid.argmax() {
        Some((layers, omega0, psnr)) => {
            println!("best: hidden_layers={layers} omega0={omega0} psnr={}", format_value(psnr));
            Ok(())
        }
        None => Err(Failure::NoCellSucceeded),
    }
}

/// `|a − b|` per pixel and channel.
fn abs_error(a: &Image, b: &Image) -> Result<Image, Error> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).collect();
    Image::new(a.height(), a.width(), a.channels(), data)
}

/// Images of equal height placed left to right.
fn side_by_side(images: &[&Image]) -> Result<Image, Error> {
    let (h, c) = (images[0].height(), images[0].channels());
    let w: usize = images.iter().map(|i| i.width()).sum();
    let mut out = Image::filled(h, w, c, 0.0);
    let mut x0 = 0;
    for img in images {
        for y in 0..h {
            for x in 0..img.width() {
                for ch in 0..c {
                    out.set(y, x0 + x, ch, img.get(y, x, ch));
                }
            }
        }
        x0 += img.width();
    }
    Ok(out)
}

pub fn reconstruct_cmd(run: &RunConfig) -> CmdResult {
    let input = run.paths.input.clone().ok_or_else(|| Error::config("input", "a low-resolution input is required"))?;
    let model = load_matching(run, None)?;
    let lr = read_image(&input)?;
    let cfg = model.config();
    if lr.dims() != (cfg.lr_height, cfg.lr_width, cfg.channels) {
        return Err(Error::ConfigMismatch(format!(
            "input is {:?} but the checkpoint expects {}x{}x{}",
            lr.dims(),
            cfg.lr_height,
            cfg.lr_width,
            cfg.channels
        ))
        .into());
    }
    let rec = model.predict(&lr)?;

    let out = run.out_dir("reconstruct");
    create_dir(&out)?;
    let rec_path = out.join("reconstruction.png");
    write_png(&rec_path, &rec)?;
    println!("wrote {} ({}x{})", rec_path.display(), rec.height(), rec.width());

    let Some(hr_path) = &run.paths.hr else {
        println!("no hr given; metrics skipped");
        return Ok(());
    };
    let hr = read_image(hr_path)?;
    if !hr.same_dims(&rec) {
        return Err(Error::config("hr", format!("{:?} does not match reconstruction {:?}", hr.dims(), rec.dims())).into());
    }
    let err = abs_error(&hr, &rec)?;
    let max_err = err.data().iter().copied().fold(0.0, f64::max);
    write_png(&out.join("error.png"), &err)?;
    write_png(&out.join("comparison.png"), &side_by_side(&[&rec, &hr, &err])?)?;
    let report = evaluate_pair(&hr, &rec)?;
    println!("max abs error: {}", format_value(max_err));
    println!("mse {}", format_value(report.mse));
    println!("psnr {}", format_value(report.psnr));
    println!("ssim {}", format_value(report.ssim));
    println!("wrote {}", out.join("error.png").display());
    Ok(())
}
