use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visir::model::layers::{
    add_positional_encoding, assemble_patches, embed_patches, extract_patches, mhsa, pool_tokens, siren_ffn, Affine,
    AttentionVars,
};
use visir::model::{
    forward, init_parameters, parameter_count, siren_inr_forward, vit_mlp_forward, Architecture, CoordGrid, DecoderMode,
    InrConfig, ModelConfig, NormOrder,
};
use visir::numerics::{Tape, Tensor, Var};
use visir::training::{fit_siren_inr, FitConfig};
use visir::{Error, Image};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_image(seed: u64, h: usize, w: usize, c: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(h, w, c, (0..h * w * c).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        lr_height: 8,
        lr_width: 8,
        patch_size: 2,
        embed_dim: 8,
        num_heads: 2,
        siren_hidden_dim: 8,
        ffn_hidden_dim: 8,
        siren_hidden_layers: 1,
        scale: 2,
        ..ModelConfig::default()
    }
}

fn affine(tape: &mut Tape, w: &Tensor, b: &Tensor) -> Affine {
    Affine { weight: tape.leaf(w), bias: tape.leaf(b) }
}

/// `x · wᵀ + b` for row-major `x [n × i]`, `w [o × i]`.
fn dense(x: &[f64], n: usize, i: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let o = w.shape()[0];
    let mut out = vec![0.0; n * o];
    for r in 0..n {
        for c in 0..o {
            out[r * o + c] = b.data()[c] + (0..i).map(|k| x[r * i + k] * w.data()[c * i + k]).sum::<f64>();
        }
    }
    out
}

#[test]
fn patch_extraction() {
    let p = extract_patches(&Image::filled(60, 60, 3, 0.1), 6).unwrap();
    assert_eq!(p.shape(), &[100, 108]);
    assert_eq!(extract_patches(&Image::filled(8, 8, 1, 0.0), 4).unwrap().shape(), &[4, 16]);
    assert!(matches!(extract_patches(&Image::filled(10, 10, 1, 0.0), 3), Err(Error::Tiling(_))));

    let img = random_image(1, 12, 8, 3);
    let patches = extract_patches(&img, 4).unwrap();
    assert_eq!(assemble_patches(&patches, 12, 8, 3, 4).unwrap(), img);
    // second patch starts at column 4 of the first row
    assert_eq!(patches.data()[48], img.get(0, 4, 0));
}

#[test]
fn patch_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, b) = (random(&mut rng, &[3, 6]), random(&mut rng, &[3, 6]));
    let (w, bias) = (random(&mut rng, &[4, 6]), random(&mut rng, &[4]));
    let embed = |x: &Tensor, w: &Tensor, bias: &Tensor| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let layer = affine(&mut tape, w, bias);
        let out = embed_patches(&mut tape, xv, layer).unwrap();
        tape.tensor(out)
    };

    let v = Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
    let constant = embed(&a, &Tensor::zeros(vec![4, 6]), &v);
    for row in constant.data().chunks(4) {
        assert_eq!(row, v.data());
    }

    let sum = Tensor::new(vec![3, 6], a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).unwrap();
    let (ea, eb, es) = (embed(&a, &w, &bias), embed(&b, &w, &bias), embed(&sum, &w, &bias));
    for (i, s) in es.data().iter().enumerate() {
        let want = ea.data()[i] + eb.data()[i] - bias.data()[i % 4];
        assert!((s - want).abs() < 1e-12);
    }
    for (g, r) in ea.data().iter().zip(dense(a.data(), 3, 6, &w, &bias)) {
        assert!((g - r).abs() < 1e-12);
    }
}

#[test]
fn positional_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (tokens, pos) = (random(&mut rng, &[3, 4]), random(&mut rng, &[3, 4]));
    let add = |t: &Tensor, p: &Tensor| {
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(t), tape.leaf(p));
        let out = add_positional_encoding(&mut tape, a, b).unwrap();
        tape.tensor(out)
    };
    assert_eq!(add(&tokens, &Tensor::zeros(vec![3, 4])), tokens);
    assert_eq!(add(&Tensor::zeros(vec![3, 4]), &pos), pos);

    // swapping two token rows changes the sum unless the position rows move too
    let swap = |t: &Tensor| {
        let mut d = t.data().to_vec();
        let (first, rest) = d.split_at_mut(4);
        first.swap_with_slice(&mut rest[..4]);
        Tensor::new(vec![3, 4], d).unwrap()
    };
    let base = add(&tokens, &pos);
    assert_ne!(add(&swap(&tokens), &pos), base);
    assert_eq!(add(&swap(&tokens), &swap(&pos)), swap(&base));

    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(&tokens), tape.leaf(&Tensor::zeros(vec![2, 4])));
    assert!(add_positional_encoding(&mut tape, a, b).is_err());
}

struct AttnParams {
    ws: Vec<Tensor>,
    bs: Vec<Tensor>,
}

impl AttnParams {
    fn random(rng: &mut ChaCha8Rng, d: usize) -> Self {
        AttnParams {
            ws: (0..4).map(|_| random(rng, &[d, d])).collect(),
            bs: (0..4).map(|_| random(rng, &[d])).collect(),
        }
    }

    fn run(&self, x: &Tensor, heads: usize) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let l: Vec<Affine> = (0..4).map(|i| affine(&mut tape, &self.ws[i], &self.bs[i])).collect();
        let attn = AttentionVars { query: l[0], key: l[1], value: l[2], output: l[3], heads };
        let out = mhsa(&mut tape, xv, &attn).unwrap();
        tape.tensor(out)
    }
}

#[test]
fn attention_single_token_is_value_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = AttnParams::random(&mut rng, 4);
    let x = random(&mut rng, &[1, 4]);
    let out = p.run(&x, 2);
    let v = dense(x.data(), 1, 4, &p.ws[2], &p.bs[2]);
    let want = dense(&v, 1, 4, &p.ws[3], &p.bs[3]);
    for (g, w) in out.data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn attention_identical_tokens_give_identical_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = AttnParams::random(&mut rng, 6);
    let row = random(&mut rng, &[6]);
    let x = Tensor::new(vec![5, 6], row.data().repeat(5)).unwrap();
    let out = p.run(&x, 3);
    for r in out.data().chunks(6).skip(1) {
        assert_eq!(r, &out.data()[..6]);
    }
}

#[test]
fn attention_hand_rolled_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = AttnParams::random(&mut rng, 2);
    let x = random(&mut rng, &[2, 2]);
    let out = p.run(&x, 1);

    let q = dense(x.data(), 2, 2, &p.ws[0], &p.bs[0]);
    let k = dense(x.data(), 2, 2, &p.ws[1], &p.bs[1]);
    let v = dense(x.data(), 2, 2, &p.ws[2], &p.bs[2]);
    let mut mixed = vec![0.0; 4];
    for i in 0..2 {
        let s: Vec<f64> = (0..2).map(|j| (q[i * 2] * k[j * 2] + q[i * 2 + 1] * k[j * 2 + 1]) / 2f64.sqrt()).collect();
        let z = s[0].exp() + s[1].exp();
        let a = [s[0].exp() / z, s[1].exp() / z];
        for c in 0..2 {
            mixed[i * 2 + c] = a[0] * v[c] + a[1] * v[2 + c];
        }
    }
    let want = dense(&mixed, 2, 2, &p.ws[3], &p.bs[3]);
    for (g, w) in out.data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-10);
    }
}

fn run_ffn(x: &Tensor, layers: &[(Tensor, Tensor)], omega0: f64) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let l: Vec<Affine> = layers.iter().map(|(w, b)| affine(&mut tape, w, b)).collect();
    let out = siren_ffn(&mut tape, xv, &l, omega0).unwrap();
    tape.tensor(out)
}

#[test]
fn siren_ffn_examples() {
    let zeros = vec![(Tensor::zeros(vec![5, 3]), Tensor::zeros(vec![5])), (Tensor::zeros(vec![3, 5]), Tensor::zeros(vec![3]))];
    let x = random(&mut ChaCha8Rng::seed_from_u64(7), &[2, 3]);
    assert!(run_ffn(&x, &zeros, 20.0).data().iter().all(|&v| v == 0.0));

    let one = |v: f64| Tensor::new(vec![1, 1], vec![v]).unwrap();
    let scalar = vec![(one(1.0), Tensor::zeros(vec![1])), (one(1.0), Tensor::zeros(vec![1]))];
    let out = run_ffn(&one(PI / 40.0), &scalar, 20.0);
    assert!((out.data()[0] - 1.0).abs() < 1e-15);
}

#[test]
fn siren_ffn_gradient_two_hidden_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, &[3, 4]);
    // flat [w0, b0, w1, b1, w2, b2]
    let mut params: Vec<Tensor> = Vec::new();
    for (w, b) in [([6, 4], 6), ([5, 6], 5), ([4, 5], 4)] {
        let wt = random(&mut rng, &w);
        params.push(Tensor::new(w.to_vec(), wt.data().iter().map(|v| v * 0.1).collect()).unwrap());
        params.push(random(&mut rng, &[b]));
    }
    let pairs = |ps: &[Tensor]| -> Vec<(Tensor, Tensor)> { ps.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect() };
    let loss_of = |ps: &[Tensor]| -> f64 { run_ffn(&x, &pairs(ps), 20.0).data().iter().map(|v| v * v).sum() };

    let mut tape = Tape::new();
    let xv = tape.leaf(&x);
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(&p.clone().with_grad())).collect();
    let layers: Vec<Affine> = vars.chunks(2).map(|v| Affine { weight: v[0], bias: v[1] }).collect();
    let out = siren_ffn(&mut tape, xv, &layers, 20.0).unwrap();
    let sq = tape.mul(out, out).unwrap();
    let loss = tape.sum(sq).unwrap();
    let grads = tape.backward(loss).unwrap();

    let h = 1e-5;
    for (t, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).unwrap();
        for i in 0..analytic.len() {
            let mut up = params.clone();
            up[t].data_mut()[i] += h;
            let mut down = params.clone();
            down[t].data_mut()[i] -= h;
            let numeric = (loss_of(&up) - loss_of(&down)) / (2.0 * h);
            let tol = 1e-3 * analytic[i].abs().max(numeric.abs()) + 1e-8;
            assert!((analytic[i] - numeric).abs() <= tol, "param {t}[{i}]: {} vs {numeric}", analytic[i]);
        }
    }
}

#[test]
fn pooling() {
    let pool = |t: &Tensor| {
        let mut tape = Tape::new();
        let v = tape.leaf(t);
        let out = pool_tokens(&mut tape, v).unwrap();
        tape.tensor(out)
    };
    let single = Tensor::new(vec![1, 3], vec![0.5, -2.0, 4.0]).unwrap();
    assert_eq!(pool(&single).data(), single.data());
    let two = Tensor::new(vec![2, 2], vec![0.0, 1.0, 2.0, -3.0]).unwrap();
    assert_eq!(pool(&two).data(), &[1.0, -1.0]);
    let swapped = Tensor::new(vec![2, 2], vec![2.0, -3.0, 0.0, 1.0]).unwrap();
    assert_eq!(pool(&swapped).data(), pool(&two).data());
}

#[test]
fn encoder_examples() {
    // L = 0: embedding plus position only
    let cfg = ModelConfig { num_layers: 0, ..small_config() };
    let model = init_parameters(&cfg, 3).unwrap();
    let img = random_image(9, 8, 8, 3);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let tokens = bound.encode(&mut tape, &img).unwrap();
    let tokens = tape.tensor(tokens);
    let patches = extract_patches(&img, 2).unwrap();
    let w = model.param("patch_embed.weight").unwrap();
    let b = model.param("patch_embed.bias").unwrap();
    let pos = model.param("pos_embed").unwrap();
    let want: Vec<f64> = dense(patches.data(), 16, 12, w, b).iter().zip(pos.data()).map(|(e, p)| e + p).collect();
    for (g, r) in tokens.data().iter().zip(&want) {
        assert!((g - r).abs() < 1e-12);
    }

    let cfg = ModelConfig { lr_height: 60, lr_width: 60, patch_size: 6, embed_dim: 64, num_heads: 4, ..ModelConfig::default() };
    let model = init_parameters(&cfg, 1).unwrap();
    let img = random_image(10, 60, 60, 3);
    let encode = || {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let t = bound.encode(&mut tape, &img).unwrap();
        tape.tensor(t)
    };
    let (a, b) = (encode(), encode());
    assert_eq!(a.shape(), &[100, 64]);
    assert_eq!(a, b);
}

#[test]
fn decoder_output_size_at_paper_scale() {
    let cfg = ModelConfig { lr_height: 60, lr_width: 60, patch_size: 6, embed_dim: 16, scale: 4, siren_hidden_dim: 16, ..ModelConfig::default() };
    let model = init_parameters(&cfg, 1).unwrap();
    let out = forward(&random_image(11, 60, 60, 3), &model).unwrap();
    assert_eq!(out.dims(), (240, 240, 3));
}

#[test]
fn zero_decoder_gives_mid_grey() {
    for mode in [DecoderMode::PerToken, DecoderMode::GlobalPooled] {
        let cfg = ModelConfig { decoder_mode: mode, ..small_config() };
        let mut model = init_parameters(&cfg, 2).unwrap();
        let names: Vec<String> =
            model.params().iter().map(|(n, _)| n.to_string()).filter(|n| n.starts_with("decoder.")).collect();
        for n in names {
            model.param_mut(&n).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = forward(&random_image(12, 8, 8, 3), &model).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn per_token_decoding_is_local_without_attention() {
    let cfg = ModelConfig { num_layers: 0, ..small_config() };
    let model = init_parameters(&cfg, 4).unwrap();
    let img = random_image(13, 8, 8, 3);
    let mut changed = img.clone();
    // patch (row 1, col 2) covers LR pixels y 2..4, x 4..6
    changed.set(3, 5, 1, 1.0 - img.get(3, 5, 1));
    let (a, b) = (forward(&img, &model).unwrap(), forward(&changed, &model).unwrap());
    for y in 0..16 {
        for x in 0..16 {
            for c in 0..3 {
                let inside = (4..8).contains(&y) && (8..12).contains(&x);
                if !inside {
                    assert_eq!(a.get(y, x, c), b.get(y, x, c), "pixel ({y}, {x}) changed");
                }
            }
        }
    }
    assert_ne!(a, b);
}

#[test]
fn forward_contracts_across_variants() {
    for mode in [DecoderMode::PerToken, DecoderMode::GlobalPooled] {
        for order in [NormOrder::PreNorm, NormOrder::PostNorm] {
            let cfg = ModelConfig { decoder_mode: mode, norm_order: order, num_layers: 2, ..small_config() };
            let model = init_parameters(&cfg, 5).unwrap();
            let img = random_image(14, 8, 8, 3);
            let out = forward(&img, &model).unwrap();
            assert_eq!(out.dims(), (16, 16, 3));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(out, forward(&img, &model).unwrap());
        }
    }
    let model = init_parameters(&small_config(), 5).unwrap();
    assert!(matches!(forward(&random_image(1, 4, 4, 3), &model), Err(Error::ConfigMismatch(_))));
}

#[test]
fn degenerate_single_token() {
    let cfg = ModelConfig { patch_size: 8, ..small_config() };
    let model = init_parameters(&cfg, 6).unwrap();
    assert_eq!(forward(&random_image(15, 8, 8, 3), &model).unwrap().dims(), (16, 16, 3));
}

#[test]
fn vit_baseline_contracts() {
    let visir_cfg = small_config();
    let vit_cfg = ModelConfig { architecture: Architecture::VitMlp, ..visir_cfg.clone() };
    let model = init_parameters(&vit_cfg, 7).unwrap();
    let img = random_image(16, 8, 8, 3);
    let out = vit_mlp_forward(&img, &model).unwrap();
    assert_eq!(out.dims(), (16, 16, 3));
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(out, vit_mlp_forward(&img, &model).unwrap());

    let (a, b) = (parameter_count(&visir_cfg) as f64, parameter_count(&vit_cfg) as f64);
    assert!((a - b).abs() <= 0.01 * a);
    assert_eq!(model.parameter_count(), parameter_count(&vit_cfg));
}

#[test]
fn initialization() {
    let cfg = small_config();
    let (a, b, c) = (init_parameters(&cfg, 1).unwrap(), init_parameters(&cfg, 1).unwrap(), init_parameters(&cfg, 2).unwrap());
    assert!(a.params().tensors().iter().zip(b.params().tensors()).all(|(x, y)| x == y));
    assert!(a.params().tensors().iter().zip(c.params().tensors()).any(|(x, y)| x != y));

    let bound = (6.0f64 / 64.0).sqrt() / 20.0;
    assert!((bound - 0.01531).abs() < 1e-5);
    let cfg = ModelConfig { siren_hidden_layers: 3, ..ModelConfig::default() };
    let model = init_parameters(&cfg, 3).unwrap();
    // decoder.1 and decoder.2 are deeper sine layers with fan_in 64
    for name in ["decoder.1.weight", "decoder.2.weight"] {
        let w = model.param(name).unwrap();
        assert_eq!(w.shape()[1], 64);
        let max = w.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound && max > 0.8 * bound, "{name}: {max}");
    }
    let first = model.param("decoder.0.weight").unwrap();
    let fan_in = first.shape()[1] as f64;
    assert!(first.data().iter().all(|v| v.abs() <= 1.0 / fan_in));

    assert!(init_parameters(&ModelConfig { num_heads: 3, ..cfg }, 0).is_err());
}

#[test]
fn coordinate_network_examples() {
    let inr_cfg = InrConfig { hidden_dim: 16, hidden_layers: 2, channels: 3, omega0: 20.0 };
    let inr = visir::model::SirenInr::init(inr_cfg, 1).unwrap();
    let out = siren_inr_forward(&CoordGrid::pixel_centers(6, 9).unwrap(), &inr).unwrap();
    assert_eq!(out.dims(), (6, 9, 3));

    // low-frequency 2-D sinusoid
    let target = Image::from_fn(16, 16, 1, |y, x, _| {
        0.5 + 0.4 * (2.0 * PI * (x as f64 / 16.0) + PI * (y as f64 / 16.0)).sin()
    })
    .unwrap();
    let cfg = InrConfig { hidden_dim: 32, hidden_layers: 2, channels: 1, omega0: 20.0 };
    let net = fit_siren_inr(&target, cfg, &FitConfig { steps: 2000, learning_rate: 1e-3, seed: 0 }).unwrap();
    let fit = siren_inr_forward(&CoordGrid::pixel_centers(16, 16).unwrap(), &net).unwrap();
    let mse = visir::metrics::mse(&target, &fit).unwrap();
    assert!(mse < 1e-3, "mse {mse}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_shape_and_range(
        grid in 1usize..4,
        patch in 1usize..4,
        scale in 1usize..4,
        heads in 1usize..3,
        hidden in 1usize..4,
        pooled in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let side = grid * patch;
        let cfg = ModelConfig {
            lr_height: side,
            lr_width: side,
            patch_size: patch,
            scale,
            num_heads: heads,
            embed_dim: 4 * heads,
            siren_hidden_layers: hidden,
            siren_hidden_dim: 6,
            ffn_hidden_dim: 6,
            decoder_mode: if pooled { DecoderMode::GlobalPooled } else { DecoderMode::PerToken },
            ..ModelConfig::default()
        };
        let model = init_parameters(&cfg, seed).unwrap();
        let out = forward(&random_image(seed, side, side, 3), &model).unwrap();
        prop_assert_eq!(out.dims(), (side * scale, side * scale, 3));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
