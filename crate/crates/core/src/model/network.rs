use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, DecoderMode, ModelConfig, NormOrder};
use super::layers::{self, Activation, Affine, AttentionVars, Output};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
enum Init {
    Zeros,
    Ones,
    Uniform(f64),
}

#[derive(Clone, Copy, Debug)]
struct AffineIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct BlockIds {
    norm1: (ParamId, ParamId),
    query: AffineIds,
    key: AffineIds,
    value: AffineIds,
    output: AffineIds,
    norm2: (ParamId, ParamId),
    ffn: Vec<AffineIds>,
}

#[derive(Clone, Debug)]
struct Layout {
    embed: AffineIds,
    pos: ParamId,
    blocks: Vec<BlockIds>,
    decoder: Vec<AffineIds>,
}

/// Collects parameter names, shapes and initializers in a fixed order.
struct LayoutBuilder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        self.specs.push((name, shape, init));
        ParamId(self.specs.len() - 1)
    }

    fn affine(&mut self, prefix: &str, fan_in: usize, fan_out: usize, w: Init, b: Init) -> AffineIds {
        AffineIds {
            weight: self.push(format!("{prefix}.weight"), vec![fan_out, fan_in], w),
            bias: self.push(format!("{prefix}.bias"), vec![fan_out], b),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> (ParamId, ParamId) {
        (
            self.push(format!("{prefix}.gain"), vec![d], Init::Ones),
            self.push(format!("{prefix}.shift"), vec![d], Init::Zeros),
        )
    }

    /// `hidden_layers` activated layers followed by one output layer.
    fn stack(&mut self, prefix: &str, dims: StackDims, arch: Architecture, omega0: f64, output: Output) -> Vec<AffineIds> {
        let widths: Vec<usize> = std::iter::once(dims.input)
            .chain(std::iter::repeat(dims.hidden).take(dims.hidden_layers))
            .chain(std::iter::once(dims.output))
            .collect();
        let last = widths.len() - 2;
        (0..=last)
            .map(|j| {
                let (fan_in, fan_out) = (widths[j], widths[j + 1]);
                let fi = fan_in as f64;
                let (w, b) = match arch {
                    Architecture::Visir if j == 0 => (Init::Uniform(1.0 / fi), Init::Uniform(1.0 / fi.sqrt())),
                    Architecture::Visir => {
                        (Init::Uniform((6.0 / fi).sqrt() / omega0), Init::Uniform(1.0 / fi.sqrt()))
                    }
                    Architecture::VitMlp => (Init::Uniform(1.0 / fi.sqrt()), Init::Uniform(1.0 / fi.sqrt())),
                };
                let b = if j == last && output == Output::Affine { Init::Zeros } else { b };
                self.affine(&format!("{prefix}.{j}"), fan_in, fan_out, w, b)
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
struct StackDims {
    input: usize,
    hidden: usize,
    hidden_layers: usize,
    output: usize,
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let mut b = LayoutBuilder { specs: Vec::new() };
    let d = cfg.embed_dim;
    let patch_len = cfg.patch_len();
    let attn_bound = Init::Uniform(1.0 / (d as f64).sqrt());

    let embed = b.affine("patch_embed", patch_len, d, Init::Uniform(1.0 / (patch_len as f64).sqrt()), Init::Zeros);
    let pos = b.push("pos_embed".into(), vec![cfg.num_tokens(), d], Init::Uniform(0.1));
    let blocks = (0..cfg.num_layers)
        .map(|i| {
            let p = format!("blocks.{i}");
            BlockIds {
                norm1: b.norm(&format!("{p}.norm1"), d),
                query: b.affine(&format!("{p}.attn.query"), d, d, attn_bound, Init::Zeros),
                key: b.affine(&format!("{p}.attn.key"), d, d, attn_bound, Init::Zeros),
                value: b.affine(&format!("{p}.attn.value"), d, d, attn_bound, Init::Zeros),
                output: b.affine(&format!("{p}.attn.output"), d, d, attn_bound, Init::Zeros),
                norm2: b.norm(&format!("{p}.norm2"), d),
                ffn: b.stack(
                    &format!("{p}.ffn"),
                    StackDims { input: d, hidden: cfg.ffn_hidden_dim, hidden_layers: cfg.siren_hidden_layers, output: d },
                    cfg.architecture,
                    cfg.omega0,
                    Output::Affine,
                ),
            }
        })
        .collect();
    let decoder_in = d;
    let decoder = b.stack(
        "decoder",
        StackDims {
            input: decoder_in,
            hidden: cfg.siren_hidden_dim,
            hidden_layers: cfg.siren_hidden_layers,
            output: cfg.decoder_out_dim(),
        },
        cfg.architecture,
        cfg.omega0,
        Output::UnitInterval,
    );
    (Layout { embed, pos, blocks, decoder }, b.specs)
}

/// The hybrid encoder–decoder network and its parameters.
#[derive(Clone, Debug)]
pub struct VisirModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

/// Number of scalar parameters a config produces.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    build_layout(cfg).1.iter().map(|(_, shape, _)| shape.iter().product::<usize>()).sum()
}

/// Samples a fresh model. Identical `(config, seed)` pairs give bit-identical parameters.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<VisirModel> {
    config.validate()?;
    let (layout, specs) = build_layout(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    for (name, shape, init) in specs {
        let numel: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; numel],
            Init::Ones => vec![1.0; numel],
            Init::Uniform(bound) => {
                let dist = Uniform::new_inclusive(-bound, bound);
                (0..numel).map(|_| dist.sample(&mut rng)).collect()
            }
        };
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(VisirModel { config: config.clone(), params, layout })
}

impl VisirModel {
    /// Reassembles a model from stored parameters, checking names and shapes against the config.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        if specs.len() != params.len() {
            return Err(Error::ConfigMismatch(format!(
                "config expects {} parameter tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape, _), (got_name, t)) in specs.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "expected `{name}` {shape:?}, found `{got_name}` {:?}",
                    t.shape()
                )));
            }
        }
        Ok(VisirModel { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Named parameter lookup, mainly for tests and tooling.
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.find(name).map(|id| self.params.get(id))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.find(name).map(|id| self.params.get_mut(id))
    }

    /// Places every parameter on `tape`.
    pub fn bind<'m>(&'m self, tape: &mut Tape) -> BoundModel<'m> {
        BoundModel { model: self, vars: self.params.bind(tape) }
    }

    /// Inference with whichever head family the config selects.
    pub fn predict(&self, img_lr: &Image) -> Result<Image> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let out = bound.predict(&mut tape, img_lr)?;
        Image::from_tensor(&tape.tensor(out))
    }
}

/// A model whose parameters live on a tape.
pub struct BoundModel<'m> {
    model: &'m VisirModel,
    vars: Vec<Var>,
}

impl<'m> BoundModel<'m> {
    pub fn model(&self) -> &'m VisirModel {
        self.model
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn affine(&self, ids: AffineIds) -> Affine {
        Affine { weight: self.var(ids.weight), bias: self.var(ids.bias) }
    }

    fn stack(&self, ids: &[AffineIds]) -> Vec<Affine> {
        ids.iter().map(|&a| self.affine(a)).collect()
    }

    fn hidden_activation(&self) -> Activation {
        match self.model.config.architecture {
            Architecture::Visir => Activation::Sine(self.model.config.omega0),
            Architecture::VitMlp => Activation::Gelu,
        }
    }

    /// Patch embedding, positional encoding and the transformer blocks. Returns `[N × D]`.
    pub fn encode(&self, tape: &mut Tape, img_lr: &Image) -> Result<Var> {
        let cfg = &self.model.config;
        if img_lr.dims() != (cfg.lr_height, cfg.lr_width, cfg.channels) {
            return Err(Error::ConfigMismatch(format!(
                "input {:?} but model expects {}×{}×{}",
                img_lr.dims(),
                cfg.lr_height,
                cfg.lr_width,
                cfg.channels
            )));
        }
        let layout = &self.model.layout;
        let patches = tape.constant(layers::extract_patches(img_lr, cfg.patch_size)?);
        let tokens = layers::embed_patches(tape, patches, self.affine(layout.embed))?;
        let mut x = layers::add_positional_encoding(tape, tokens, self.var(layout.pos))?;
        let act = self.hidden_activation();
        let eps = cfg.layer_norm_eps;
        for block in &layout.blocks {
            let attn = AttentionVars {
                query: self.affine(block.query),
                key: self.affine(block.key),
                value: self.affine(block.value),
                output: self.affine(block.output),
                heads: cfg.num_heads,
            };
            let ffn = self.stack(&block.ffn);
            let (g1, s1) = (self.var(block.norm1.0), self.var(block.norm1.1));
            let (g2, s2) = (self.var(block.norm2.0), self.var(block.norm2.1));
            x = match cfg.norm_order {
                NormOrder::PreNorm => {
                    let n = tape.layer_norm(x, g1, s1, eps)?;
                    let a = layers::mhsa(tape, n, &attn)?;
                    let x1 = tape.add(x, a)?;
                    let n = tape.layer_norm(x1, g2, s2, eps)?;
                    let f = layers::apply_stack(tape, n, &ffn, act, Output::Affine)?;
                    tape.add(x1, f)?
                }
                NormOrder::PostNorm => {
                    let a = layers::mhsa(tape, x, &attn)?;
                    let r = tape.add(x, a)?;
                    let x1 = tape.layer_norm(r, g1, s1, eps)?;
                    let f = layers::apply_stack(tape, x1, &ffn, act, Output::Affine)?;
                    let r = tape.add(x1, f)?;
                    tape.layer_norm(r, g2, s2, eps)?
                }
            };
        }
        Ok(x)
    }

    /// Maps encoder tokens to the `[H·s × W·s × C]` image, every value in `[0, 1]`.
    pub fn decode_hr(&self, tape: &mut Tape, tokens: Var) -> Result<Var> {
        let cfg = &self.model.config;
        if tape.shape(tokens) != [cfg.num_tokens(), cfg.embed_dim] {
            return Err(Error::ConfigMismatch(format!(
                "tokens {:?}, decoder expects [{}, {}]",
                tape.shape(tokens),
                cfg.num_tokens(),
                cfg.embed_dim
            )));
        }
        let decoder = self.stack(&self.model.layout.decoder);
        let act = self.hidden_activation();
        let (h, w) = cfg.hr_dims();
        match cfg.decoder_mode {
            DecoderMode::GlobalPooled => {
                let feature = layers::pool_tokens(tape, tokens)?;
                let out = layers::apply_stack(tape, feature, &decoder, act, Output::UnitInterval)?;
                tape.reshape(out, vec![h, w, cfg.channels])
            }
            DecoderMode::PerToken => {
                let out = layers::apply_stack(tape, tokens, &decoder, act, Output::UnitInterval)?;
                let side = cfg.patch_size * cfg.scale;
                let rows = cfg.lr_height / cfg.patch_size;
                let index = layers::patch_placement(rows, cfg.grid_width(), side, cfg.channels);
                tape.gather(out, index, vec![h, w, cfg.channels])
            }
        }
    }

    pub fn predict(&self, tape: &mut Tape, img_lr: &Image) -> Result<Var> {
        let tokens = self.encode(tape, img_lr)?;
        self.decode_hr(tape, tokens)
    }
}

fn require(model: &VisirModel, arch: Architecture) -> Result<()> {
    if model.config.architecture != arch {
        return Err(Error::ConfigMismatch(format!(
            "model was built as {:?}, called as {arch:?}",
            model.config.architecture
        )));
    }
    Ok(())
}

/// Full super-resolution pass of the sine-headed model.
pub fn forward(img_lr: &Image, model: &VisirModel) -> Result<Image> {
    require(model, Architecture::Visir)?;
    model.predict(img_lr)
}

/// The transformer baseline: same pipeline with GELU heads and a sigmoid output.
pub fn vit_mlp_forward(img_lr: &Image, model: &VisirModel) -> Result<Image> {
    require(model, Architecture::VitMlp)?;
    model.predict(img_lr)
}
