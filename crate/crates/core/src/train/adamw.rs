use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moments for every parameter plus the number of applied steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        Self { m: params.iter().map(z).collect(), v: params.iter().map(z).collect(), step: 0 }
    }
}

/// One AdamW update of a flat parameter: decoupled decay `w ← w − lr·wd·w`
/// (when `decay`), then the bias-corrected adaptive step. `t` is the 1-based
/// step number.
pub fn adamw_update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, hp: &AdamHyper, decay: bool) {
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    let shrink = if decay { 1.0 - hp.lr * hp.weight_decay } else { 1.0 };
    for i in 0..w.len() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        w[i] = w[i] * shrink - hp.lr * mhat / (vhat.sqrt() + hp.eps);
    }
}

/// Apply one AdamW step to every parameter. Any non-finite gradient rejects
/// the whole step: nothing is modified and the offending parameter is named.
pub fn adamw_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, hp: &AdamHyper) -> Result<()> {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::NonFiniteGradient { param: params.names()[i].clone() });
    }
    let t = state.step + 1;
    let kinds = params.kinds().to_vec();
    for (i, w) in params.tensors_mut().iter_mut().enumerate() {
        adamw_update(
            w.data_mut(),
            grads[i].data(),
            state.m[i].data_mut(),
            state.v[i].data_mut(),
            t,
            hp,
            kinds[i].decays(),
        );
    }
    state.step = t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HP: AdamHyper = AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };

    fn one(w: f64, g: f64, hp: &AdamHyper, decay: bool) -> f64 {
        let (mut w, mut m, mut v) = ([w], [0.0], [0.0]);
        adamw_update(&mut w, &[g], &mut m, &mut v, 1, hp, decay);
        w[0]
    }

    #[test]
    fn hand_computed_first_step() {
        // m = 0.1, v = 0.001; both bias corrections give exactly 1.
        let hp = AdamHyper { weight_decay: 0.01, ..HP };
        let (mut w, mut m, mut v) = ([1.0], [0.0], [0.0]);
        adamw_update(&mut w, &[1.0], &mut m, &mut v, 1, &hp, true);
        assert!((m[0] - 0.1).abs() < 1e-15 && (v[0] - 0.001).abs() < 1e-15);
        let expect = 1.0 * (1.0 - 1e-3 * 0.01) - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((w[0] - expect).abs() < 1e-15, "{} vs {expect}", w[0]);
    }

    #[test]
    fn second_step_matches_hand_values() {
        let (mut w, mut m, mut v) = ([0.5], [0.0], [0.0]);
        adamw_update(&mut w, &[2.0], &mut m, &mut v, 1, &HP, false);
        adamw_update(&mut w, &[-1.0], &mut m, &mut v, 2, &HP, false);
        let m2: f64 = 0.9 * 0.2 + 0.1 * -1.0;
        let v2: f64 = 0.999 * 0.004 + 0.001 * 1.0;
        let step2 = 1e-3 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.998001)).sqrt() + 1e-8);
        let expect = 0.5 - 1e-3 * 2.0 / (2.0 + 1e-8) - step2;
        assert!((w[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        assert_eq!(one(0.37, 0.0, &HP, true), 0.37);
    }

    #[test]
    fn zero_grad_decay_is_exponential_shrink() {
        let hp = AdamHyper { weight_decay: 0.1, ..HP };
        let (mut w, mut m, mut v) = ([2.0], [0.0], [0.0]);
        for t in 1..=50 {
            adamw_update(&mut w, &[0.0], &mut m, &mut v, t, &hp, true);
        }
        assert!((w[0] - 2.0 * (1.0 - 1e-4f64).powi(50)).abs() < 1e-14);
        // Bias-like parameters are not decayed.
        assert_eq!(one(2.0, 0.0, &hp, false), 2.0);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        use crate::fusion::EventVocab;
        use crate::map::{MapSpec, Roster};
        use crate::model::{ModelConfig, ModelWeights};
        let cfg = ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, image_size: 16, event_dim: 4, ..ModelConfig::desk() };
        let mut wts = ModelWeights::zeros(&cfg, &EventVocab::new(&Roster::default(), &MapSpec::split6())).unwrap();
        let before = wts.clone();
        let mut grads: Vec<Tensor> = wts.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        grads[3].data_mut()[0] = f64::NAN;
        let mut st = AdamState::zeros_like(wts.params.tensors());
        let err = adamw_step(&mut wts.params, &grads, &mut st, &HP).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { .. }));
        assert_eq!(wts, before);
        assert_eq!(st.step, 0);
    }

    proptest! {
        #[test]
        fn single_step_opposes_gradient(w in -5.0f64..5.0, g in prop::num::f64::NORMAL.prop_filter("nonzero", |g| g.abs() > 1e-6 && g.abs() < 1e6)) {
            let w1 = one(w, g, &HP, false);
            prop_assert!((w1 - w) * g < 0.0);
        }

        #[test]
        fn no_decay_equals_adam(w in -5.0f64..5.0, g in -3.0f64..3.0) {
            let hp = AdamHyper { weight_decay: 0.5, ..HP };
            prop_assert_eq!(one(w, g, &hp, false), one(w, g, &HP, true));
        }
    }
}
