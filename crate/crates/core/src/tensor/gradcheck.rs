//! Central finite-difference verification of tape gradients.

use super::{Result, Tape, Tensor, TensorError, Var};
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check at most this many randomly chosen entries per parameter; `None` checks all.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, max_entries_per_param: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over checked entries of `|analytic - numeric| / max(1, |analytic|, |numeric|)`
    pub max_relative_error: f64,
    pub entries_checked: usize,
    /// (parameter index, flat entry, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compare the tape gradient of a scalar computation against central differences.
///
/// `f` receives a fresh tape and the parameter handles (in `params` order) and
/// returns the scalar output. It must be deterministic; two evaluations at the
/// unperturbed point are compared bitwise first.
pub fn grad_check<F>(params: &[Tensor], opts: &GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).data()[0];
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    drop(tape);

    if eval(params)?.to_bits() != base.to_bits() {
        return Err(TensorError::NonDeterministic);
    }

    let mut rng = SeededRng::derive(opts.seed, 0x6772_6164);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport { max_relative_error: 0.0, entries_checked: 0, worst: None };
    for pi in 0..params.len() {
        let n = params[pi].numel();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(k) if k < n => {
                let mut all: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut all);
                all.truncate(k);
                all.sort_unstable();
                all
            }
            _ => (0..n).collect(),
        };
        for e in entries {
            let orig = params[pi].data()[e];
            work[pi].data_mut()[e] = orig + opts.step;
            let plus = eval(&work)?;
            work[pi].data_mut()[e] = orig - opts.step;
            let minus = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[pi][e];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.entries_checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(rel);
                report.worst = Some((pi, e, a, numeric));
            }
        }
    }
    Ok(report)
}
