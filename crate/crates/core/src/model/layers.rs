//! Building blocks of the encoder and decoder, expressed as tape operations.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Tape, Tensor, Var};

/// Weight `[out × in]` and bias `[out]` of one affine layer, bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub weight: Var,
    pub bias: Var,
}

/// Projections of one multi-head self-attention sublayer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
    pub output: Affine,
    pub heads: usize,
}

/// Hidden-layer nonlinearity of a head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    /// `sin(omega0 · (Wx + b))`
    Sine(f64),
    Gelu,
}

/// What follows the final affine layer of a stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Output {
    /// Nothing: the result is unbounded (feed-forward sublayers).
    Affine,
    /// The hidden activation again, then mapped into `[0, 1]`.
    UnitInterval,
}

/// Splits an image into non-overlapping `p × p` patches in row-major patch
/// order, each flattened as `(row, column, channel)`. Returns `[N × p²·C]`.
pub fn extract_patches(img: &Image, p: usize) -> Result<Tensor> {
    let (h, w, c) = img.dims();
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Tiling(format!("patch size {p} does not divide {h}×{w}")));
    }
    let (rows, cols) = (h / p, w / p);
    let len = p * p * c;
    let mut data = Vec::with_capacity(rows * cols * len);
    for ty in 0..rows {
        for tx in 0..cols {
            for py in 0..p {
                let start = ((ty * p + py) * w + tx * p) * c;
                data.extend_from_slice(&img.data()[start..start + p * c]);
            }
        }
    }
    Tensor::new(vec![rows * cols, len], data)
}

/// Inverse of [`extract_patches`].
pub fn assemble_patches(patches: &Tensor, h: usize, w: usize, c: usize, p: usize) -> Result<Image> {
    let index = patch_placement(h / p.max(1), w / p.max(1), p, c);
    if h % p != 0 || w % p != 0 || patches.numel() != index.len() {
        return Err(Error::shape("assemble_patches", format!("{:?} into {h}×{w}×{c}", patches.shape())));
    }
    Image::new(h, w, c, index.iter().map(|&i| patches.data()[i]).collect())
}

/// For every element of a `(rows·side) × (cols·side) × c` image, the flat
/// index into a `[rows·cols × side²·c]` matrix of row-major patches.
pub fn patch_placement(rows: usize, cols: usize, side: usize, c: usize) -> Vec<usize> {
    let (h, w) = (rows * side, cols * side);
    let len = side * side * c;
    let mut index = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let token = (y / side) * cols + x / side;
            let within = ((y % side) * side + x % side) * c;
            for ch in 0..c {
                index.push(token * len + within + ch);
            }
        }
    }
    index
}

/// `token_i = W_p · patch_i + b_p`.
pub fn embed_patches(tape: &mut Tape, patches: Var, embedding: Affine) -> Result<Var> {
    tape.linear(patches, embedding.weight, Some(embedding.bias))
}

pub fn add_positional_encoding(tape: &mut Tape, tokens: Var, pos: Var) -> Result<Var> {
    tape.add(tokens, pos)
}

/// Scaled dot-product attention per head, heads concatenated, then the output projection.
pub fn mhsa(tape: &mut Tape, tokens: Var, attn: &AttentionVars) -> Result<Var> {
    let d = tape.shape(tokens)[1];
    if attn.heads == 0 || d % attn.heads != 0 {
        return Err(Error::shape("mhsa", format!("width {d} with {} heads", attn.heads)));
    }
    let head_dim = d / attn.heads;
    let q = tape.linear(tokens, attn.query.weight, Some(attn.query.bias))?;
    let k = tape.linear(tokens, attn.key.weight, Some(attn.key.bias))?;
    let v = tape.linear(tokens, attn.value.weight, Some(attn.value.bias))?;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut heads = Vec::with_capacity(attn.heads);
    for h in 0..attn.heads {
        let qh = tape.slice_cols(q, h * head_dim, head_dim)?;
        let kh = tape.slice_cols(k, h * head_dim, head_dim)?;
        let vh = tape.slice_cols(v, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale)?;
        let weights = tape.softmax(scores, 1)?;
        heads.push(tape.matmul(weights, vh)?);
    }
    let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    tape.linear(joined, attn.output.weight, Some(attn.output.bias))
}

/// Runs affine layers with `hidden` between them; the last layer is followed by `output`.
pub fn apply_stack(tape: &mut Tape, x: Var, layers: &[Affine], hidden: Activation, output: Output) -> Result<Var> {
    let (last, body) = layers.split_last().ok_or(Error::Empty("layer stack"))?;
    let mut h = x;
    for layer in body {
        h = tape.linear(h, layer.weight, Some(layer.bias))?;
        h = activate(tape, h, hidden)?;
    }
    let y = tape.linear(h, last.weight, Some(last.bias))?;
    match output {
        Output::Affine => Ok(y),
        Output::UnitInterval => match hidden {
            Activation::Sine(omega0) => {
                let s = tape.sine(y, omega0)?;
                let s = tape.add_scalar(s, 1.0)?;
                tape.scale(s, 0.5)
            }
            Activation::Gelu => tape.sigmoid(y),
        },
    }
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Sine(omega0) => tape.sine(x, omega0),
        Activation::Gelu => tape.gelu(x),
    }
}

/// Feed-forward sublayer with sine hidden activations and an unbounded affine output.
pub fn siren_ffn(tape: &mut Tape, x: Var, layers: &[Affine], omega0: f64) -> Result<Var> {
    apply_stack(tape, x, layers, Activation::Sine(omega0), Output::Affine)
}

/// Mean over tokens, as a `[1 × D]` feature row.
pub fn pool_tokens(tape: &mut Tape, tokens: Var) -> Result<Var> {
    tape.mean_rows(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_counts() {
        let img = Image::filled(60, 60, 3, 0.25);
        let p = extract_patches(&img, 6).unwrap();
        assert_eq!(p.shape(), &[100, 108]);
        let small = Image::filled(8, 8, 1, 0.0);
        assert_eq!(extract_patches(&small, 4).unwrap().shape(), &[4, 16]);
        let odd = Image::filled(10, 10, 1, 0.0);
        assert!(matches!(extract_patches(&odd, 3), Err(Error::Tiling(_))));
    }

    #[test]
    fn patches_reassemble_exactly() {
        let img = Image::from_fn(6, 9, 2, |y, x, c| (y * 100 + x * 10 + c) as f64 / 1000.0).unwrap();
        let p = extract_patches(&img, 3).unwrap();
        // first patch, first row: pixels (0,0), (0,1), (0,2) with 2 channels
        assert_eq!(&p.data()[..6], &[0.0, 0.001, 0.01, 0.011, 0.02, 0.021]);
        assert_eq!(assemble_patches(&p, 6, 9, 2, 3).unwrap(), img);
    }

    #[test]
    fn unit_interval_stack_with_zero_weights_is_half() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(vec![2, 3], 0.7));
        let layer = |tape: &mut Tape, o: usize, i: usize| Affine {
            weight: tape.constant(Tensor::zeros(vec![o, i])),
            bias: tape.constant(Tensor::zeros(vec![o])),
        };
        let layers = [layer(&mut tape, 4, 3), layer(&mut tape, 5, 4)];
        let y = apply_stack(&mut tape, x, &layers, Activation::Sine(20.0), Output::UnitInterval).unwrap();
        assert!(tape.value(y).iter().all(|&v| v == 0.5));
        let z = siren_ffn(&mut tape, x, &layers, 20.0).unwrap();
        assert!(tape.value(z).iter().all(|&v| v == 0.0));
        assert!(matches!(apply_stack(&mut tape, x, &[], Activation::Gelu, Output::Affine), Err(Error::Empty(_))));
    }
}
