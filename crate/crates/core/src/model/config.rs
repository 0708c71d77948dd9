use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the decoder turns encoder tokens into the high-resolution image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderMode {
    /// Average all tokens into one feature vector and decode the whole image from it.
    GlobalPooled,
    /// Decode each token into its own upscaled patch with a shared head.
    PerToken,
}

/// Placement of layer normalization relative to the residual branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormOrder {
    /// `x + f(norm(x))`
    PreNorm,
    /// `norm(x + f(x))`
    PostNorm,
}

/// Which nonlinearity the feed-forward and decoder heads use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Sine activations with frequency `omega0`.
    Visir,
    /// GELU hidden layers and a sigmoid output.
    VitMlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub lr_height: usize,
    pub lr_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub embed_dim: usize,
    pub omega0: f64,
    pub siren_hidden_layers: usize,
    /// Width of the decoder's hidden layers.
    pub siren_hidden_dim: usize,
    /// Width of the feed-forward sublayer's hidden layers.
    pub ffn_hidden_dim: usize,
    pub scale: usize,
    pub decoder_mode: DecoderMode,
    pub norm_order: NormOrder,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Visir,
            lr_height: 16,
            lr_width: 16,
            channels: 3,
            patch_size: 4,
            num_layers: 1,
            num_heads: 2,
            embed_dim: 32,
            omega0: 20.0,
            siren_hidden_layers: 2,
            siren_hidden_dim: 64,
            ffn_hidden_dim: 64,
            scale: 4,
            decoder_mode: DecoderMode::PerToken,
            norm_order: NormOrder::PreNorm,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_height", self.lr_height),
            ("lr_width", self.lr_width),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
            ("num_heads", self.num_heads),
            ("embed_dim", self.embed_dim),
            ("siren_hidden_dim", self.siren_hidden_dim),
            ("ffn_hidden_dim", self.ffn_hidden_dim),
            ("scale", self.scale),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::config(
                "num_heads",
                format!("embed_dim {} is not divisible by {} heads", self.embed_dim, self.num_heads),
            ));
        }
        if self.lr_height % self.patch_size != 0 || self.lr_width % self.patch_size != 0 {
            return Err(Error::config(
                "patch_size",
                format!("{} does not divide {}×{}", self.patch_size, self.lr_height, self.lr_width),
            ));
        }
        if !(1..=6).contains(&self.siren_hidden_layers) {
            return Err(Error::config("siren_hidden_layers", format!("{} is outside 1..=6", self.siren_hidden_layers)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::config("omega0", format!("{} must be positive", self.omega0)));
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps > 0.0) {
            return Err(Error::config("layer_norm_eps", "must be positive"));
        }
        Ok(())
    }

    /// Token count `(H/P)·(W/P)`.
    pub fn num_tokens(&self) -> usize {
        (self.lr_height / self.patch_size) * (self.lr_width / self.patch_size)
    }

    pub fn grid_width(&self) -> usize {
        self.lr_width / self.patch_size
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        (self.lr_height * self.scale, self.lr_width * self.scale)
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Output width of the decoder head.
    pub fn decoder_out_dim(&self) -> usize {
        match self.decoder_mode {
            DecoderMode::PerToken => (self.patch_size * self.scale).pow(2) * self.channels,
            DecoderMode::GlobalPooled => {
                let (h, w) = self.hr_dims();
                h * w * self.channels
            }
        }
    }
}
