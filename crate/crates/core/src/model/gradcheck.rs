//! Central finite-difference probe of [`HsdModel::backward`].
//!
//! Errors are measured normwise per tensor: `|analytic_i − fd_i| / max(‖analytic‖∞, |fd_i|)`
//! where the norm runs over the whole tensor. Entrywise ratios are also reported; they are
//! dominated by cancellation noise (about ε·|loss|/h) on coordinates whose gradient is several
//! orders of magnitude below the rest of their tensor.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HsdModel;
use crate::{Cochain, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub tensor: String,
    pub probes: usize,
    /// Largest normwise relative error over the probes.
    pub max_rel_error: f64,
    /// Largest `|analytic − fd| / max(|analytic|, |fd|)` over the probes.
    pub max_entry_rel_error: f64,
    pub max_abs_error: f64,
    /// `‖analytic gradient‖∞` over the tensor.
    pub grad_scale: f64,
}

/// `½ ‖out − target‖²_*` and its gradient with respect to the output.
pub fn hodge_mse(model: &HsdModel<f64>, out: &DVector<f64>, target: &DVector<f64>) -> (f64, DVector<f64>) {
    let r = out - target;
    let g = r.component_mul(model.context.subspace.star());
    (0.5 * r.dot(&g), g)
}

/// Compares reverse-mode gradients against central differences with step `h` on
/// `per_tensor` random coordinates of every tensor.
pub fn gradient_check(
    model: &mut HsdModel<f64>,
    input: &Cochain<f64>,
    target: &DVector<f64>,
    per_tensor: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<GradCheckRow>> {
    let trace = model.forward(input)?;
    let (_, g_out) = hodge_mse(model, trace.output(), target);
    let mut grad = vec![0.0; model.param_count()];
    model.backward(&trace, &g_out, &mut grad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for spec in model.manifest().to_vec() {
        let n = spec.len();
        let picks = sample(&mut rng, n, per_tensor.min(n)).into_vec();
        let scale = grad[spec.offset..spec.offset + n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut row = GradCheckRow {
            tensor: spec.name.clone(),
            probes: picks.len(),
            max_rel_error: 0.0,
            max_entry_rel_error: 0.0,
            max_abs_error: 0.0,
            grad_scale: scale,
        };
        for i in &picks {
            let idx = spec.offset + i;
            let orig = model.params[idx];
            let mut eval = |v: f64| -> Result<f64> {
                model.params[idx] = v;
                let t = model.forward(input)?;
                Ok(hodge_mse(model, t.output(), target).0)
            };
            let lp = eval(orig + h)?;
            let lm = eval(orig - h)?;
            model.params[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grad[idx];
            let err = (an - fd).abs();
            let ratio = |den: f64| if den > 0.0 { err / den } else if err > 0.0 { f64::INFINITY } else { 0.0 };
            row.max_abs_error = row.max_abs_error.max(err);
            row.max_rel_error = row.max_rel_error.max(ratio(scale.max(fd.abs())));
            row.max_entry_rel_error = row.max_entry_rel_error.max(ratio(an.abs().max(fd.abs())));
        }
        rows.push(row);
    }
    Ok(rows)
}
