//! Raw grid files (`VSGR`) and 8-bit PNG export.
//!
//! Grid layout: magic `VSGR`, then `u32` version, height, width and channel
//! count, a `u32`-length-prefixed UTF-8 unit string, then `h·w·c`
//! little-endian `f64` values in row-major, channel-interleaved order.

use std::fs;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::image::Image;

pub const GRID_MAGIC: &[u8; 4] = b"VSGR";
pub const GRID_VERSION: u32 = 1;

pub fn encode_grid(img: &Image, units: &str) -> Vec<u8> {
    let mut w = Writer::default();
    w.raw(GRID_MAGIC);
    w.u32(GRID_VERSION);
    w.u32(img.height() as u32);
    w.u32(img.width() as u32);
    w.u32(img.channels() as u32);
    w.string(units);
    w.f64s(img.data());
    w.buf
}

pub fn decode_grid(bytes: &[u8]) -> Result<(Image, String)> {
    let mut r = Reader::new(bytes);
    r.magic(GRID_MAGIC)?;
    let version = r.u32()?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let units = r.string()?;
    let values = r.f64s(h * w * c)?;
    r.finish()?;
    Ok((Image::new(h, w, c, values)?, units))
}

pub fn write_grid(path: &Path, img: &Image, units: &str) -> Result<()> {
    fs::write(path, encode_grid(img, units)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<(Image, String)> {
    decode_grid(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// `round_half_up(255 · v)` after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes a one-channel image as grayscale, three channels as RGB.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.channels() {
        1 => ::image::GrayImage::from_raw(w, h, bytes).expect("buffer sized from image").save(path)?,
        3 => ::image::RgbImage::from_raw(w, h, bytes).expect("buffer sized from image").save(path)?,
        c => return Err(Error::shape("write_png", format!("{c} channels; expected 1 or 3"))),
    }
    Ok(())
}

/// Reads a PNG as RGB with values divided by 255.
pub fn read_png(path: &Path) -> Result<Image> {
    let rgb = ::image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Image::new(h as usize, w as usize, 3, data)
}

/// Loads an image from a grid file or a PNG, chosen by extension.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => read_png(path),
        _ => Ok(read_grid(path)?.0),
    }
}
