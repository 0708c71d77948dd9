use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bicubic::bicubic_downsample;
use super::field::{assemble_rgb, normalize_field, FieldGrid, NormRange};
use super::io::{read_grid, write_grid};
use super::synth::{mix_seed, synth_source, SpectrumSpec};
use super::tiling::tile_image;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par::{self, Parallelism};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const NORMALIZED_UNITS: &str = "normalized";

/// Where the full-resolution grids come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSpec {
    /// `count` generated months of `height × width` fields.
    Synthetic { count: usize, height: usize, width: usize, spectrum: SpectrumSpec },
    /// Three-channel grid files holding temperature, shortwave and longwave flux.
    Files(Vec<PathBuf>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub source: SourceSpec,
    pub tile_height: usize,
    pub tile_width: usize,
    pub scale: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: SourceSpec::Synthetic { count: 10, height: 720, width: 1440, spectrum: SpectrumSpec::climate_like() },
            tile_height: 240,
            tile_width: 240,
            scale: 4,
            seed: 0,
            test_fraction: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::config("scale", "must be at least 1"));
        }
        for (key, tile) in [("tile_height", self.tile_height), ("tile_width", self.tile_width)] {
            if tile == 0 || tile % self.scale != 0 {
                return Err(Error::config(key, format!("{tile} is not a positive multiple of scale {}", self.scale)));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction", format!("{} is outside [0, 1)", self.test_fraction)));
        }
        match &self.source {
            SourceSpec::Synthetic { count, height, width, .. } => {
                if *count == 0 {
                    return Err(Error::config("source_count", "at least one source is required"));
                }
                if *height == 0 || height % self.tile_height != 0 {
                    return Err(Error::config("tile_height", format!("{} does not divide source height {height}", self.tile_height)));
                }
                if *width == 0 || width % self.tile_width != 0 {
                    return Err(Error::config("tile_width", format!("{} does not divide source width {width}", self.tile_width)));
                }
            }
            SourceSpec::Files(files) if files.is_empty() => {
                return Err(Error::config("sources", "at least one source is required"));
            }
            SourceSpec::Files(_) => {}
        }
        Ok(())
    }
}

/// Aligned high/low resolution tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct SRPair {
    pub id: String,
    pub hr: Image,
    pub lr: Image,
    pub scale: usize,
    pub source: usize,
    pub tile: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: String,
    pub source: usize,
    pub tile: usize,
    pub hr: String,
    pub lr: String,
    pub split: Split,
}

/// Physical ranges of one source's three fields, in channel order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRanges {
    pub source: usize,
    pub label: String,
    pub channels: Vec<NormRange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub scale: usize,
    pub channels: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    pub lr_height: usize,
    pub lr_width: usize,
    pub normalization: Vec<SourceRanges>,
    pub pairs: Vec<PairEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", manifest.version)));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest is always serializable");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &PairEntry> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    /// Reads every pair of a split; paths are relative to `base_dir`.
    pub fn load_pairs(&self, base_dir: &Path, split: Split) -> Result<Vec<SRPair>> {
        self.entries(split)
            .map(|e| {
                let (hr, _) = read_grid(&base_dir.join(&e.hr))?;
                let (lr, _) = read_grid(&base_dir.join(&e.lr))?;
                if hr.height() != lr.height() * self.scale || hr.width() != lr.width() * self.scale {
                    return Err(Error::shape("load_pairs", format!("pair {} is not a {}× pair", e.id, self.scale)));
                }
                Ok(SRPair { id: e.id.clone(), hr, lr, scale: self.scale, source: e.source, tile: e.tile })
            })
            .collect()
    }
}

fn source_fields(config: &DatasetConfig, index: usize) -> Result<([FieldGrid; 3], String)> {
    match &config.source {
        SourceSpec::Synthetic { height, width, spectrum, .. } => {
            Ok((synth_source(config.seed, index, *height, *width, spectrum)?, format!("synthetic-{index:03}")))
        }
        SourceSpec::Files(files) => {
            let path = &files[index];
            let (img, units) = read_grid(path)?;
            if img.channels() != 3 {
                return Err(Error::shape("source grid", format!("{} has {} channels, expected 3", path.display(), img.channels())));
            }
            let planes = img.channel(0);
            let make = |values| FieldGrid::new(img.height(), img.width(), values, units.clone());
            Ok(([make(planes)?, make(img.channel(1))?, make(img.channel(2))?], path.display().to_string()))
        }
    }
}

fn source_count(config: &DatasetConfig) -> usize {
    match &config.source {
        SourceSpec::Synthetic { count, .. } => *count,
        SourceSpec::Files(files) => files.len(),
    }
}

/// Normalizes, assembles, reduces and tiles every source. Pairs come back in
/// (source, tile) order regardless of the parallelism mode.
pub fn build_pairs(config: &DatasetConfig, mode: Parallelism) -> Result<(Vec<SRPair>, Vec<SourceRanges>)> {
    config.validate()?;
    let per_source = par::map_range(mode, source_count(config), |index| -> Result<_> {
        let (fields, label) = source_fields(config, index)?;
        let mut planes = Vec::with_capacity(3);
        let mut ranges = Vec::with_capacity(3);
        for f in &fields {
            let (values, range) = normalize_field(f)?;
            planes.push(values);
            ranges.push(range);
        }
        let (h, w) = (fields[0].height, fields[0].width);
        if fields.iter().any(|f| (f.height, f.width) != (h, w)) {
            return Err(Error::shape("assemble_rgb", "fields of one source differ in size"));
        }
        let hr = assemble_rgb(h, w, &planes[0], &planes[1], &planes[2])?;
        let lr = bicubic_downsample(&hr, config.scale)?;
        let hr_tiles = tile_image(&hr, config.tile_height, config.tile_width)?;
        let lr_tiles = tile_image(&lr, config.tile_height / config.scale, config.tile_width / config.scale)?;
        let pairs: Vec<SRPair> = hr_tiles
            .into_iter()
            .zip(lr_tiles)
            .enumerate()
            .map(|(tile, (hr, lr))| SRPair { id: format!("s{index:03}_t{tile:02}"), hr, lr, scale: config.scale, source: index, tile })
            .collect();
        Ok((pairs, SourceRanges { source: index, label, channels: ranges }))
    });
    let mut pairs = Vec::new();
    let mut ranges = Vec::new();
    for result in per_source {
        let (p, r) = result?;
        pairs.extend(p);
        ranges.push(r);
    }
    Ok((pairs, ranges))
}

/// Deterministic split: pairs ranked by a seeded hash of (source, tile); the
/// lowest `round(n · test_fraction)` go to test, keeping at least one pair in
/// each split whenever there are two or more.
pub fn assign_splits(pairs: &[SRPair], seed: u64, test_fraction: f64) -> Vec<Split> {
    let n = pairs.len();
    let mut n_test = (n as f64 * test_fraction).round() as usize;
    if n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    } else {
        n_test = 0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (mix_seed(seed, pairs[i].source as u64, pairs[i].tile as u64), i));
    let mut splits = vec![Split::Train; n];
    for &i in &order[..n_test] {
        splits[i] = Split::Test;
    }
    splits
}

/// Writes all pairs as grid files under `out_dir/pairs/` plus `out_dir/manifest.json`.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path, mode: Parallelism) -> Result<DatasetManifest> {
    let (pairs, normalization) = build_pairs(config, mode)?;
    let splits = assign_splits(&pairs, config.seed, config.test_fraction);
    let pair_dir = out_dir.join("pairs");
    fs::create_dir_all(&pair_dir).map_err(|e| Error::io(&pair_dir, e))?;

    let writes = par::map(mode, &pairs, |p| -> Result<()> {
        write_grid(&pair_dir.join(format!("{}_hr.vsgr", p.id)), &p.hr, NORMALIZED_UNITS)?;
        write_grid(&pair_dir.join(format!("{}_lr.vsgr", p.id)), &p.lr, NORMALIZED_UNITS)
    });
    writes.into_iter().collect::<Result<Vec<()>>>()?;

    let first = pairs.first().ok_or(Error::Empty("dataset sources"))?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: config.seed,
        scale: config.scale,
        channels: first.hr.channels(),
        hr_height: first.hr.height(),
        hr_width: first.hr.width(),
        lr_height: first.lr.height(),
        lr_width: first.lr.width(),
        normalization,
        pairs: pairs
            .iter()
            .zip(splits)
            .map(|(p, split)| PairEntry {
                id: p.id.clone(),
                source: p.source,
                tile: p.tile,
                hr: format!("pairs/{}_hr.vsgr", p.id),
                lr: format!("pairs/{}_lr.vsgr", p.id),
                split,
            })
            .collect(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
