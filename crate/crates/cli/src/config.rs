//! Run configuration: a sectioned TOML file merged under `--key value` flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::{DeserializeOwned, IntoDeserializer};
use serde::Deserialize;
use visir::data::{DatasetConfig, SourceSpec, SpectrumSpec, Split};
use visir::model::ModelConfig;
use visir::par::Parallelism;
use visir::training::{SweepSpec, TrainConfig};
use visir::Error;

use crate::Failure;

/// One table of the config file. Every field doubles as a `--field value`
/// flag; `or` keeps `self` where set and falls back to `lower`.
macro_rules! section {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident: $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Args, Deserialize, Clone, Debug, Default, PartialEq)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[arg(long = stringify!($field))]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            pub fn or(self, lower: Self) -> Self {
                $name { $($field: self.$field.or(lower.$field),)* }
            }
        }
    };
}

section!(DataSection {
    /// Number of generated sources
    source_count: usize,
    /// Height of each generated source in pixels
    source_height: usize,
    /// Width of each generated source in pixels
    source_width: usize,
    /// Generated spectrum: climate-like | high-frequency
    spectrum: String,
    /// Three-channel grid files to tile instead of generated sources
    #[arg(value_delimiter = ',', num_args = 1..)]
    sources: Vec<PathBuf>,
    /// High-resolution tile height
    tile_height: usize,
    /// High-resolution tile width
    tile_width: usize,
    /// Downsampling factor
    scale: usize,
    /// Fraction of pairs held out for testing
    test_fraction: f64,
});

section!(ModelSection {
    /// visir | vit-mlp
    architecture: String,
    patch_size: usize,
    /// Encoder blocks
    num_layers: usize,
    num_heads: usize,
    embed_dim: usize,
    /// Sine frequency
    omega0: f64,
    /// Hidden layers in each sine head
    siren_hidden_layers: usize,
    /// Hidden width of the decoder head
    siren_hidden_dim: usize,
    /// Hidden width of the feed-forward head
    ffn_hidden_dim: usize,
    /// per-token | global-pooled
    decoder_mode: String,
    /// pre-norm | post-norm
    norm_order: String,
    layer_norm_eps: f64,
});

section!(TrainSection {
    learning_rate: f64,
    steps: usize,
    batch_size: usize,
    /// Steps per loss-curve point
    eval_interval: usize,
    /// Spread per-sample work over threads (true | false)
    parallel: bool,
});

section!(SweepSection {
    /// Comma-separated omega0 values
    #[arg(value_delimiter = ',', num_args = 1..)]
    frequencies: Vec<f64>,
    /// Comma-separated hidden-layer counts
    #[arg(value_delimiter = ',', num_args = 1..)]
    hidden_layers: Vec<usize>,
});

section!(PathsSection {
    /// Dataset directory holding manifest.json
    data_dir: PathBuf,
    /// Checkpoint to read
    checkpoint: PathBuf,
    /// Low-resolution input (grid file or PNG)
    input: PathBuf,
    /// Matching high-resolution image for metrics
    hr: PathBuf,
});

section!(EvalSection {
    /// train | test
    split: String,
});

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Config file (TOML with [data], [model], [train], [sweep], [paths], [eval] tables)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten, next_help_heading = "Data")]
    pub data: DataSection,
    #[command(flatten, next_help_heading = "Model")]
    pub model: ModelSection,
    #[command(flatten, next_help_heading = "Training")]
    pub train: TrainSection,
    #[command(flatten, next_help_heading = "Sweep")]
    pub sweep: SweepSection,
    #[command(flatten, next_help_heading = "Paths")]
    pub paths: PathsSection,
    #[command(flatten, next_help_heading = "Evaluation")]
    pub eval: EvalSection,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    paths: PathsSection,
    #[serde(default)]
    eval: EvalSection,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::ConfigFile(path.to_path_buf(), e.to_string()))?;
        // relative paths in a file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.out.iter_mut().for_each(rebase);
        cfg.data.sources.iter_mut().flatten().for_each(rebase);
        let paths = &mut cfg.paths;
        for p in [&mut paths.data_dir, &mut paths.checkpoint, &mut paths.input, &mut paths.hr] {
            p.iter_mut().for_each(rebase);
        }
        Ok(cfg)
    }
}

/// Flags merged over the config file; unset keys fall back to library defaults.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub paths: PathsSection,
    pub eval: EvalSection,
}

fn parse_enum<T: DeserializeOwned>(key: &str, value: &str, allowed: &str) -> Result<T, Error> {
    T::deserialize(value.into_deserializer())
        .map_err(|_: serde::de::value::Error| Error::config(key, format!("`{value}` is not one of {allowed}")))
}

impl RunConfig {
    pub fn resolve(flags: Common) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(RunConfig {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out: flags.out.or(file.out),
            data: flags.data.or(file.data),
            model: flags.model.or(file.model),
            train: flags.train.or(file.train),
            sweep: flags.sweep.or(file.sweep),
            paths: flags.paths.or(file.paths),
            eval: flags.eval.or(file.eval),
        })
    }

    pub fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| PathBuf::from("run/checkpoint.vsck"))
    }

    pub fn parallelism(&self) -> Parallelism {
        match self.train.parallel {
            Some(false) => Parallelism::Sequential,
            Some(true) => Parallelism::Parallel,
            None => Parallelism::default(),
        }
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig, Error> {
        let d = &self.data;
        let mut cfg = DatasetConfig { seed: self.seed, ..DatasetConfig::default() };
        cfg.source = match &d.sources {
            Some(files) => SourceSpec::Files(files.clone()),
            None => {
                let SourceSpec::Synthetic { count, height, width, spectrum } = cfg.source else {
                    unreachable!("default source is synthetic")
                };
                let spectrum = match d.spectrum.as_deref() {
                    None | Some("climate-like") => spectrum,
                    Some("high-frequency") => SpectrumSpec::high_frequency(),
                    Some(other) => {
                        return Err(Error::config("spectrum", format!("`{other}` is not one of climate-like, high-frequency")))
                    }
                };
                SourceSpec::Synthetic {
                    count: d.source_count.unwrap_or(count),
                    height: d.source_height.unwrap_or(height),
                    width: d.source_width.unwrap_or(width),
                    spectrum,
                }
            }
        };
        cfg.tile_height = d.tile_height.unwrap_or(cfg.tile_height);
        cfg.tile_width = d.tile_width.unwrap_or(cfg.tile_width);
        cfg.scale = d.scale.unwrap_or(cfg.scale);
        cfg.test_fraction = d.test_fraction.unwrap_or(cfg.test_fraction);
        cfg.validate()?;
        Ok(cfg)
    }

    /// `base` with every model key that was set applied over it.
    pub fn model_config(&self, mut cfg: ModelConfig) -> Result<ModelConfig, Error> {
        let m = &self.model;
        if let Some(v) = &m.architecture {
            cfg.architecture = parse_enum("architecture", v, "visir, vit-mlp")?;
        }
        if let Some(v) = &m.decoder_mode {
            cfg.decoder_mode = parse_enum("decoder_mode", v, "per-token, global-pooled")?;
        }
        if let Some(v) = &m.norm_order {
            cfg.norm_order = parse_enum("norm_order", v, "pre-norm, post-norm")?;
        }
        cfg.patch_size = m.patch_size.unwrap_or(cfg.patch_size);
        cfg.num_layers = m.num_layers.unwrap_or(cfg.num_layers);
        cfg.num_heads = m.num_heads.unwrap_or(cfg.num_heads);
        cfg.embed_dim = m.embed_dim.unwrap_or(cfg.embed_dim);
        cfg.omega0 = m.omega0.unwrap_or(cfg.omega0);
        cfg.siren_hidden_layers = m.siren_hidden_layers.unwrap_or(cfg.siren_hidden_layers);
        cfg.siren_hidden_dim = m.siren_hidden_dim.unwrap_or(cfg.siren_hidden_dim);
        cfg.ffn_hidden_dim = m.ffn_hidden_dim.unwrap_or(cfg.ffn_hidden_dim);
        cfg.layer_norm_eps = m.layer_norm_eps.unwrap_or(cfg.layer_norm_eps);
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, Error> {
        let t = &self.train;
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            steps: t.steps.unwrap_or(d.steps),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            seed: self.seed,
            eval_interval: t.eval_interval.unwrap_or(d.eval_interval),
            parallelism: self.parallelism(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, Error> {
        let d = SweepSpec::default();
        let spec = SweepSpec {
            frequencies: self.sweep.frequencies.clone().unwrap_or(d.frequencies),
            hidden_layers: self.sweep.hidden_layers.clone().unwrap_or(d.hidden_layers),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn split(&self) -> Result<Split, Error> {
        match &self.eval.split {
            None => Ok(Split::Test),
            Some(v) => parse_enum("split", v, "train, test"),
        }
    }
}
