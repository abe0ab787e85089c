//! Model fixtures and a naive divided-attention oracle.

use minimap_oracle::fusion::EventVocab;
use minimap_oracle::model::{divided_block, Clip};
use minimap_oracle::rng::SeededRng;
use minimap_oracle::tensor::{Tape, Tensor};
use minimap_oracle::{MapSpec, ModelConfig, ModelWeights, Roster};

pub fn vocab() -> EventVocab {
    EventVocab::new(&Roster::default(), &MapSpec::split6())
}

pub fn random_clip(cfg: &ModelConfig, rng: &mut SeededRng) -> Clip {
    let mut clip = Clip::zeros(cfg.frames_per_clip, cfg.image_size);
    clip.data.iter_mut().for_each(|v| *v = rng.uniform());
    clip
}

pub fn weights(cfg: &ModelConfig, seed: u64) -> ModelWeights {
    ModelWeights::init(cfg, &vocab(), &mut SeededRng::new(seed)).unwrap()
}

pub fn param<'a>(w: &'a ModelWeights, name: &str) -> &'a [f64] {
    w.params.get(name).unwrap_or_else(|| panic!("{name}")).data()
}

pub fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mu = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
    let inv = 1.0 / (var + 1e-5).sqrt();
    x.iter().zip(g).zip(b).map(|((v, g), b)| (v - mu) * inv * g + b).collect()
}

pub fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    (0..n).map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i * n + j]).sum::<f64>()).collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Dense multi-head attention over a handful of tokens, one loop per head.
fn attend(tokens: &[Vec<f64>], w: &ModelWeights, prefix: &str, heads: usize) -> Vec<Vec<f64>> {
    let d = tokens[0].len();
    let dh = d / heads;
    let qkv: Vec<Vec<f64>> = tokens
        .iter()
        .map(|t| affine(t, param(w, &format!("{prefix}.qkv.w")), param(w, &format!("{prefix}.qkv.b"))))
        .collect();
    let mut ctx = vec![vec![0.0; d]; tokens.len()];
    for h in 0..heads {
        for (i, qi) in qkv.iter().enumerate() {
            let scores: Vec<f64> = qkv
                .iter()
                .map(|kj| (0..dh).map(|e| qi[h * dh + e] * kj[d + h * dh + e]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = ex.iter().sum();
            for (j, vj) in qkv.iter().enumerate() {
                for e in 0..dh {
                    ctx[i][h * dh + e] += ex[j] / z * vj[2 * d + h * dh + e];
                }
            }
        }
    }
    ctx.iter()
        .map(|c| affine(c, param(w, &format!("{prefix}.out.w")), param(w, &format!("{prefix}.out.b"))))
        .collect()
}

pub fn naive_block(z: &[Vec<f64>], cfg: &ModelConfig, w: &ModelWeights, l: usize) -> Vec<Vec<f64>> {
    let (t, n) = (cfg.frames_per_clip, cfg.n_patches());
    let p = |s: &str| format!("blocks.{l}.{s}");
    let tok = |f: usize, s: usize| 1 + f * n + s;

    let mut z1 = z.to_vec();
    for s in 0..n {
        let group: Vec<Vec<f64>> =
            (0..t).map(|f| ln(&z[tok(f, s)], param(w, &p("ln_time.g")), param(w, &p("ln_time.b")))).collect();
        let out = attend(&group, w, &p("time_attn"), cfg.n_heads);
        for f in 0..t {
            for (a, o) in z1[tok(f, s)].iter_mut().zip(&out[f]) {
                *a += o;
            }
        }
    }

    let norm = |x: &[f64]| ln(x, param(w, &p("ln_space.g")), param(w, &p("ln_space.b")));
    let mut z2 = z1.clone();
    let mut cls_acc = vec![0.0; cfg.d_model];
    for f in 0..t {
        let mut group = vec![norm(&z1[0])];
        group.extend((0..n).map(|s| norm(&z1[tok(f, s)])));
        let out = attend(&group, w, &p("space_attn"), cfg.n_heads);
        for (a, o) in cls_acc.iter_mut().zip(&out[0]) {
            *a += o / t as f64;
        }
        for s in 0..n {
            for (a, o) in z2[tok(f, s)].iter_mut().zip(&out[s + 1]) {
                *a += o;
            }
        }
    }
    for (a, o) in z2[0].iter_mut().zip(&cls_acc) {
        *a += o;
    }

    z2.iter()
        .map(|x| {
            let h = ln(x, param(w, &p("ln_mlp.g")), param(w, &p("ln_mlp.b")));
            let h: Vec<f64> = affine(&h, param(w, &p("mlp.fc1.w")), param(w, &p("mlp.fc1.b"))).into_iter().map(gelu).collect();
            let h = affine(&h, param(w, &p("mlp.fc2.w")), param(w, &p("mlp.fc2.b")));
            x.iter().zip(h).map(|(a, b)| a + b).collect()
        })
        .collect()
}

pub fn perturb_norms(w: &mut ModelWeights, rng: &mut SeededRng) {
    // Non-trivial LayerNorm parameters and biases so the oracle exercises them.
    for (name, t) in w.params.names().to_vec().iter().zip(0..) {
        if name.ends_with(".g") || name.ends_with(".b") {
            let tensor = &mut w.params.tensors_mut()[t];
            tensor.data_mut().iter_mut().for_each(|v| *v += rng.normal(0.0, 0.1));
        }
    }
}

/// Largest absolute difference between `divided_block` and the naive oracle
/// on a random desk-scale input and layer drawn from `seed`.
pub fn block_matches_oracle(seed: u64) -> f64 {
    let cfg = ModelConfig::desk();
    let mut rng = SeededRng::new(seed);
    let mut w = weights(&cfg, seed);
    perturb_norms(&mut w, &mut rng);
    let layer = rng.below(cfg.n_layers);
    let rows: Vec<Vec<f64>> = (0..cfg.n_tokens()).map(|_| (0..cfg.d_model).map(|_| rng.normal(0.0, 1.0)).collect()).collect();

    let mut tape = Tape::new();
    let vars = w.bind(&mut tape, false);
    let z = tape.constant(Tensor::new(&[cfg.n_tokens(), cfg.d_model], rows.concat()).unwrap());
    let out = divided_block(&mut tape, &cfg, &vars.blocks[layer], z, None).unwrap();
    let got = tape.value(out).data().to_vec();

    let want = naive_block(&rows, &cfg, &w, layer).concat();
    got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
