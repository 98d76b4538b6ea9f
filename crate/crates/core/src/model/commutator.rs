//! The scalar commutator `[L₀, diag(κ)]` that the corrector is meant to absorb.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dec::DecOperators;
use crate::{Cochain, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    /// ‖L₀(κ⊙u) − κ⊙(L₀u)‖∞.
    pub commutator_norm: f64,
    /// ‖A − B‖∞ with B from the explicitly assembled commutator matrix.
    pub brute_force_residual: f64,
    /// ‖A‖∞ with κ replaced by its mean (a multiple of the identity).
    pub constant_kappa_norm: f64,
}

fn apply<T: Real>(dec: &DecOperators<T>, kappa: &[T], u: &[T]) -> Vec<T> {
    let l = dec.laplacian(0);
    let ku: Vec<T> = kappa.iter().zip(u).map(|(&k, &x)| k * x).collect();
    let lku = l.mul_slice(&ku);
    let lu = l.mul_slice(u);
    lku.iter().zip(&lu).zip(kappa).map(|((&a, &b), &k)| a - k * b).collect()
}

fn amax<T: Real>(v: &[T]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs().to_f64()))
}

/// Compares the two evaluations of `L₀ diag(κ) − diag(κ) L₀` on `u`.
pub fn commutator_identity_check<T: Real>(
    dec: &DecOperators<T>,
    kappa: &Cochain<T>,
    u: &Cochain<T>,
) -> Result<CommutatorReport> {
    kappa.expect_degree(0)?;
    u.expect_degree(0)?;
    let n = dec.count(0);
    kappa.expect_len(n)?;
    u.expect_len(n)?;
    let k = kappa.values.as_slice();
    let a = apply(dec, k, u.values.as_slice());
    let l = dec.laplacian(0).to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| l[(i, j)] * k[j] - k[i] * l[(i, j)]);
    let b = &m * &u.values;
    let diff: Vec<T> = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
    let mean = k.iter().fold(T::zero(), |s, &x| s + x) / T::of(n.max(1) as f64);
    let constant = apply(dec, &vec![mean; n], u.values.as_slice());
    Ok(CommutatorReport {
        commutator_norm: amax(&a),
        brute_force_residual: amax(&diff),
        constant_kappa_norm: amax(&constant),
    })
}
