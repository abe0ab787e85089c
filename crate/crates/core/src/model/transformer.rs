//! Divided space-time attention classifier.
//!
//! Token layout is `[CLS, (t=0, s=0..N), (t=1, s=0..N), ...]`, i.e. one CLS row
//! followed by `T·N` frame-major patch rows of width `d_model`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Tape, Tensor, Var};

use super::params::{AttnVars, BlockVars, ModelVars};
use super::{Clip, ModelConfig};

/// Flatten non-overlapping `P×P` patches into rows of `3·P²` values, ordered
/// `(dy, dx, channel)`, each pixel standardized by the configured channel statistics.
pub fn patchify(clip: &Clip, cfg: &ModelConfig) -> Result<Tensor> {
    let (t, s, p) = (cfg.frames_per_clip, cfg.image_size, cfg.patch_size);
    if clip.frames != t || clip.size != s || clip.data.len() != t * s * s * 3 {
        return Err(Error::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "patch_embed",
            detail: format!("clip {}x{}x{}x3, expected {t}x{s}x{s}x3", clip.frames, clip.size, clip.size),
        }));
    }
    let side = s / p;
    let dim = cfg.patch_dim();
    let scale = cfg.pixel_std.map(|v| 1.0 / v);
    let mut out = Vec::with_capacity(t * side * side * dim);
    for f in 0..t {
        for py in 0..side {
            for px in 0..side {
                for dy in 0..p {
                    let row = f * s * s + (py * p + dy) * s + px * p;
                    for dx in 0..p {
                        let o = (row + dx) * 3;
                        for c in 0..3 {
                            out.push((clip.data[o + c] - cfg.pixel_mean[c]) * scale[c]);
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new(&[t * side * side, dim], out)?)
}

/// Patch tokens `[T, N, d]`: projection + fused event rows + spatial and temporal positions.
pub fn patch_embed(tape: &mut Tape, cfg: &ModelConfig, vars: &ModelVars, clip: &Clip, fused: Var) -> Result<Var> {
    let (t, n, d) = (cfg.frames_per_clip, cfg.n_patches(), cfg.d_model);
    if tape.shape(fused) != [t, d] {
        return Err(Error::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "patch_embed",
            detail: format!("fused rows {:?}, expected [{t}, {d}]", tape.shape(fused)),
        }));
    }
    let patches = tape.constant(patchify(clip, cfg)?);
    let x = tape.linear(patches, vars.patch.0, vars.patch.1)?;
    let x = tape.reshape(x, &[t, n, d])?;
    let fused = tape.reshape(fused, &[t, 1, d])?;
    let x = tape.add(x, fused)?;
    let pos_patch = tape.narrow(vars.pos_space, 0, 1, n)?;
    let x = tape.add(x, pos_patch)?;
    let pos_t = tape.reshape(vars.pos_time, &[t, 1, d])?;
    Ok(tape.add(x, pos_t)?)
}

/// Multi-head self-attention applied independently to each of `G` groups: `x [G, S, d] -> [G, S, d]`.
pub fn grouped_attention(
    tape: &mut Tape,
    x: Var,
    attn: &AttnVars,
    n_heads: usize,
    dropout_p: f64,
    rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let (g, s, d) = (shape[0], shape[1], shape[2]);
    let dh = d / n_heads;
    let qkv = tape.linear(x, attn.qkv_w, attn.qkv_b)?;
    let qkv = tape.reshape(qkv, &[g, s, 3, n_heads, dh])?;
    let qkv = tape.permute(qkv, &[2, 0, 3, 1, 4])?;
    let qkv = tape.reshape(qkv, &[3, g * n_heads, s, dh])?;
    let mut parts = [None; 3];
    for (i, part) in parts.iter_mut().enumerate() {
        let p = tape.narrow(qkv, 0, i, 1)?;
        *part = Some(tape.reshape(p, &[g * n_heads, s, dh])?);
    }
    let [q, k, v] = parts.map(|p| p.expect("filled above"));
    let scores = tape.bmm(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
    let weights = tape.softmax(scores, 2)?;
    let ctx = tape.bmm(weights, v, false)?;
    let ctx = tape.reshape(ctx, &[g, n_heads, s, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[g, s, d])?;
    let out = tape.linear(ctx, attn.out_w, attn.out_b)?;
    Ok(tape.dropout(out, dropout_p, rng)?)
}

/// One divided block on `z [1 + T·N, d]`: temporal attention per patch
/// position (CLS untouched), spatial attention per frame with a per-frame CLS
/// copy whose outputs are averaged back, then the MLP. Each sub-layer is
/// pre-norm with a residual connection.
pub fn divided_block(
    tape: &mut Tape,
    cfg: &ModelConfig,
    block: &BlockVars,
    z: Var,
    mut rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let (t, n, d) = (cfg.frames_per_clip, cfg.n_patches(), cfg.d_model);
    if tape.shape(z) != [1 + t * n, d] {
        return Err(Error::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "divided_block",
            detail: format!("tokens {:?}, expected [{}, {d}]", tape.shape(z), 1 + t * n),
        }));
    }
    let p = cfg.dropout_p;

    // Temporal attention over the T tokens sharing a spatial index.
    let cls = tape.narrow(z, 0, 0, 1)?;
    let patches = tape.narrow(z, 0, 1, t * n)?;
    let h = tape.layer_norm(patches, block.ln_time.0, block.ln_time.1)?;
    let h = tape.reshape(h, &[t, n, d])?;
    let h = tape.permute(h, &[1, 0, 2])?;
    let h = grouped_attention(tape, h, &block.time, cfg.n_heads, p, rng.as_deref_mut())?;
    let h = tape.permute(h, &[1, 0, 2])?;
    let h = tape.reshape(h, &[t * n, d])?;
    let patches = tape.add(patches, h)?;
    let z1 = tape.concat(&[cls, patches], 0)?;

    // Spatial attention within each frame, CLS replicated per frame.
    let h = tape.layer_norm(z1, block.ln_space.0, block.ln_space.1)?;
    let h_cls = tape.narrow(h, 0, 0, 1)?;
    let h_cls = tape.gather_rows(h_cls, &vec![0; t])?;
    let h_cls = tape.reshape(h_cls, &[t, 1, d])?;
    let h_patch = tape.narrow(h, 0, 1, t * n)?;
    let h_patch = tape.reshape(h_patch, &[t, n, d])?;
    let frames = tape.concat(&[h_cls, h_patch], 1)?;
    let a = grouped_attention(tape, frames, &block.space, cfg.n_heads, p, rng.as_deref_mut())?;
    let a_cls = tape.narrow(a, 1, 0, 1)?;
    let a_cls = tape.reshape(a_cls, &[t, d])?;
    let a_cls = tape.mean(a_cls, 0)?;
    let a_cls = tape.reshape(a_cls, &[1, d])?;
    let a_patch = tape.narrow(a, 1, 1, n)?;
    let a_patch = tape.reshape(a_patch, &[t * n, d])?;
    let a = tape.concat(&[a_cls, a_patch], 0)?;
    let z2 = tape.add(z1, a)?;

    // MLP.
    let h = tape.layer_norm(z2, block.ln_mlp.0, block.ln_mlp.1)?;
    let h = tape.linear(h, block.fc1.0, block.fc1.1)?;
    let h = tape.gelu(h)?;
    let h = tape.dropout(h, p, rng.as_deref_mut())?;
    let h = tape.linear(h, block.fc2.0, block.fc2.1)?;
    let h = tape.dropout(h, p, rng)?;
    Ok(tape.add(z2, h)?)
}

/// Two logits `[attacker_win, defender_win]` for one clip.
///
/// `fused` holds per-frame event rows `[T, d]`; `None` adds an all-zero
/// tensor through the same ops, so the two paths are bit-identical when the
/// event rows are zero. Dropout is active only when `rng` is given.
pub fn forward_classify(
    tape: &mut Tape,
    cfg: &ModelConfig,
    vars: &ModelVars,
    clip: &Clip,
    fused: Option<Var>,
    mut rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let (t, d) = (cfg.frames_per_clip, cfg.d_model);
    let fused = match fused {
        Some(f) => f,
        None => tape.constant(Tensor::zeros(&[t, d])),
    };
    let x = patch_embed(tape, cfg, vars, clip, fused)?;
    let x = tape.reshape(x, &[t * cfg.n_patches(), d])?;
    let pos_cls = tape.narrow(vars.pos_space, 0, 0, 1)?;
    let cls = tape.add(vars.cls, pos_cls)?;
    let z = tape.concat(&[cls, x], 0)?;
    let mut z = tape.dropout(z, cfg.dropout_p, rng.as_deref_mut())?;
    for block in &vars.blocks {
        z = divided_block(tape, cfg, block, z, rng.as_deref_mut())?;
    }
    let cls = tape.narrow(z, 0, 0, 1)?;
    let cls = tape.layer_norm(cls, vars.norm.0, vars.norm.1)?;
    let logits = tape.linear(cls, vars.head.0, vars.head.1)?;
    Ok(tape.reshape(logits, &[cfg.n_classes])?)
}

/// Class with the larger logit; ties go to defender win (class 1).
pub fn argmax_class(logits: &[f64]) -> usize {
    if logits[0] > logits[1] {
        0
    } else {
        1
    }
}
