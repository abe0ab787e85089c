//! Finite-difference checks of single tape ops on random inputs.

use minimap_oracle::rng::SeededRng;
use minimap_oracle::tensor::{grad_check, GradCheckOptions, Tape, Tensor, TensorError, Var};

pub fn randn(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal(0.0, 1.0))
}

/// Weighted sum with fixed pseudo-random weights so every output entry matters.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.shape(x).to_vec();
    let mut rng = SeededRng::new(seed);
    let w = tape.constant(randn(&shape, &mut rng));
    let p = tape.mul(x, w).unwrap();
    tape.sum_all(p).unwrap()
}

pub fn check(params: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>) -> f64 {
    grad_check(params, &GradCheckOptions::default(), f).unwrap().max_relative_error
}

#[derive(Debug, Clone, Copy)]
pub enum OpKind {
    Gelu,
    SoftmaxAxis0,
    SoftmaxLast,
    MeanAxis0,
    MeanLast,
    Permute,
    NarrowConcat,
    Bmm,
    BmmTrans,
    BroadcastAdd,
    BroadcastMul,
    LayerNorm,
    Matmul,
    Gather,
    Reshape,
}

pub const KINDS: [OpKind; 15] = [
    OpKind::Gelu,
    OpKind::SoftmaxAxis0,
    OpKind::SoftmaxLast,
    OpKind::MeanAxis0,
    OpKind::MeanLast,
    OpKind::Permute,
    OpKind::NarrowConcat,
    OpKind::Bmm,
    OpKind::BmmTrans,
    OpKind::BroadcastAdd,
    OpKind::BroadcastMul,
    OpKind::LayerNorm,
    OpKind::Matmul,
    OpKind::Gather,
    OpKind::Reshape,
];

pub fn run_op(kind: OpKind, d0: usize, d1: usize, d2: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    match kind {
        OpKind::Gelu => check(&[randn(&[d0, d1], &mut rng)], |t, v| {
            let y = t.gelu(v[0])?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::SoftmaxAxis0 | OpKind::SoftmaxLast => {
            let axis = if matches!(kind, OpKind::SoftmaxAxis0) { 0 } else { 2 };
            check(&[randn(&[d0, d1, d2], &mut rng)], move |t, v| {
                let y = t.softmax(v[0], axis)?;
                Ok(weighted_sum(t, y, seed))
            })
        }
        OpKind::MeanAxis0 | OpKind::MeanLast => {
            let axis = if matches!(kind, OpKind::MeanAxis0) { 0 } else { 2 };
            check(&[randn(&[d0, d1, d2], &mut rng)], move |t, v| {
                let y = t.mean(v[0], axis)?;
                Ok(weighted_sum(t, y, seed))
            })
        }
        OpKind::Permute => check(&[randn(&[d0, d1, d2], &mut rng)], |t, v| {
            let y = t.permute(v[0], &[1, 2, 0])?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::NarrowConcat => check(&[randn(&[d0, d1 + 1, d2], &mut rng)], |t, v| {
            let a = t.narrow(v[0], 1, 1, d1)?;
            let b = t.narrow(v[0], 1, 0, 1)?;
            let y = t.concat(&[a, b, a], 1)?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::Bmm => check(&[randn(&[d0, d1, d2], &mut rng), randn(&[d0, d2, d1], &mut rng)], |t, v| {
            let y = t.bmm(v[0], v[1], false)?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::BmmTrans => check(&[randn(&[d0, d1, d2], &mut rng), randn(&[d0, d1, d2], &mut rng)], |t, v| {
            let y = t.bmm(v[0], v[1], true)?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::BroadcastAdd => check(&[randn(&[d0, d1, d2], &mut rng), randn(&[d0, 1, d2], &mut rng)], |t, v| {
            let y = t.add(v[0], v[1])?;
            let y = t.gelu(y)?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::BroadcastMul => check(&[randn(&[d0, d1, d2], &mut rng), randn(&[d2], &mut rng)], |t, v| {
            let y = t.mul(v[0], v[1])?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::LayerNorm => check(
            &[randn(&[d0, d1, d2 + 1], &mut rng), randn(&[d2 + 1], &mut rng), randn(&[d2 + 1], &mut rng)],
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                Ok(weighted_sum(t, y, seed))
            },
        ),
        OpKind::Matmul => check(&[randn(&[d0, d1, d2], &mut rng), randn(&[d2, d0], &mut rng)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::Gather => check(&[randn(&[d0, d1], &mut rng)], |t, v| {
            let ids: Vec<usize> = (0..d2).map(|i| (i * 7) % d0).collect();
            let y = t.gather_rows(v[0], &ids)?;
            Ok(weighted_sum(t, y, seed))
        }),
        OpKind::Reshape => check(&[randn(&[d0, d1, d2], &mut rng)], |t, v| {
            let y = t.reshape(v[0], &[d1 * d0, d2])?;
            let y = t.softmax(y, 1)?;
            Ok(weighted_sum(t, y, seed))
        }),
    }
}
