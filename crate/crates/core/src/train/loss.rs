//! Training objectives with their gradients with respect to the prediction.

use nalgebra::DVector;

use crate::spectrum::SpectralSubspace;
use crate::tasks::TaskKind;
use crate::{Cochain, Dec64, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_flux: f64,
    pub lambda_div: f64,
    /// Weight of the L1 term on spectral coefficients (scalar tasks).
    pub l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_flux: 1.0, lambda_div: 0.1, l1: 1e-4 }
    }
}

/// Loss terms for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// Relative squared Hodge error `‖p − t‖²_* / ‖t‖²_*`.
    pub relative: f64,
    /// Divergence mismatch `‖δ(p − t)‖²_*` (vector tasks).
    pub divergence: f64,
    /// `Σ |c_i(p − t)|` (scalar tasks).
    pub spectral_l1: f64,
    pub total: f64,
}

fn expect(pred: &Cochain<f64>, target: &Cochain<f64>, kind: TaskKind) -> Result<()> {
    target.expect_degree(kind.target_degree())?;
    pred.expect_degree(target.degree)?;
    pred.expect_len(target.len())
}

/// Task loss.
///
/// Vector tasks: `λ_flux ‖p − t‖²_*/‖t‖²_* + λ_div ‖δ(p − t)‖²_*`. Scalar tasks: the same
/// relative term plus `l1 Σ|c_i|` over the spectral coefficients of `p − t`.
///
/// The divergence term compares against the target's divergence so that targets which are not
/// coclosed (the Poisson gradients) are not penalized; for coclosed targets it is `‖δp‖²_*`.
pub fn loss(
    pred: &Cochain<f64>,
    target: &Cochain<f64>,
    dec: &Dec64,
    subspace: Option<&SpectralSubspace<f64>>,
    kind: TaskKind,
    w: &LossWeights,
) -> Result<LossTerms> {
    loss_and_grad(pred, target, dec, subspace, kind, w).map(|(t, _)| t)
}

/// [`loss`] and its gradient with respect to `pred.values`.
pub fn loss_and_grad(
    pred: &Cochain<f64>,
    target: &Cochain<f64>,
    dec: &Dec64,
    subspace: Option<&SpectralSubspace<f64>>,
    kind: TaskKind,
    w: &LossWeights,
) -> Result<(LossTerms, DVector<f64>)> {
    expect(pred, target, kind)?;
    let k = target.degree;
    let s = dec.star(k);
    let tn = target.values.component_mul(&target.values).dot(s);
    if !(tn > 0.0) {
        return Err(Error::ZeroNormTarget);
    }
    let r = &pred.values - &target.values;
    let sr = r.component_mul(s);
    let mut terms = LossTerms { relative: r.dot(&sr) / tn, ..Default::default() };
    let mut grad = &sr * (2.0 / tn);
    if kind.is_vector() {
        terms.total = w.lambda_flux * terms.relative;
        grad *= w.lambda_flux;
        if k > 0 && w.lambda_div != 0.0 {
            let delta = dec.codiff(k);
            let dr = delta.mul_vec(&r);
            let sdr = dr.component_mul(dec.star(k - 1));
            terms.divergence = dr.dot(&sdr);
            terms.total += w.lambda_div * terms.divergence;
            grad += delta.tr_mul_vec(&sdr) * (2.0 * w.lambda_div);
        }
    } else {
        terms.total = terms.relative;
        if w.l1 != 0.0 {
            let sub = subspace.ok_or_else(|| {
                Error::InvalidParameter("scalar loss needs the spectral subspace for its L1 term".into())
            })?;
            sub.spectral_coeffs(&Cochain::new(k, r.clone()))?;
            let c = sub.analysis() * &r;
            terms.spectral_l1 = c.iter().map(|v| v.abs()).sum();
            terms.total += w.l1 * terms.spectral_l1;
            let sign = c.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
            grad += sub.analysis().tr_mul(&sign) * w.l1;
        }
    }
    Ok((terms, grad))
}
