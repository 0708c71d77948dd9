use crate::error::{Error, Result};
use crate::image::Image;

/// Cuts an image into non-overlapping tiles, row-major.
pub fn tile_image(img: &Image, tile_h: usize, tile_w: usize) -> Result<Vec<Image>> {
    let (h, w, c) = img.dims();
    if tile_h == 0 || tile_w == 0 || h % tile_h != 0 || w % tile_w != 0 {
        return Err(Error::Tiling(format!("{tile_h}×{tile_w} tiles do not divide {h}×{w}")));
    }
    let mut tiles = Vec::with_capacity((h / tile_h) * (w / tile_w));
    for ty in 0..h / tile_h {
        for tx in 0..w / tile_w {
            let mut data = Vec::with_capacity(tile_h * tile_w * c);
            for y in ty * tile_h..(ty + 1) * tile_h {
                let start = (y * w + tx * tile_w) * c;
                data.extend_from_slice(&img.data()[start..start + tile_w * c]);
            }
            tiles.push(Image::new(tile_h, tile_w, c, data)?);
        }
    }
    Ok(tiles)
}

/// Inverse of [`tile_image`] for a `rows × cols` arrangement.
pub fn untile(tiles: &[Image], rows: usize, cols: usize) -> Result<Image> {
    let first = tiles.first().ok_or(Error::Empty("tile list"))?;
    let (th, tw, c) = first.dims();
    if tiles.len() != rows * cols || tiles.iter().any(|t| t.dims() != first.dims()) {
        return Err(Error::Tiling(format!("{} tiles cannot form a {rows}×{cols} grid", tiles.len())));
    }
    let (h, w) = (rows * th, cols * tw);
    let mut data = vec![0.0; h * w * c];
    for (i, tile) in tiles.iter().enumerate() {
        let (ty, tx) = (i / cols, i % cols);
        for y in 0..th {
            let dst = ((ty * th + y) * w + tx * tw) * c;
            data[dst..dst + tw * c].copy_from_slice(&tile.data()[y * tw * c..(y + 1) * tw * c]);
        }
    }
    Image::new(h, w, c, data)
}
