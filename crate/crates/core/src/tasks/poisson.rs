//! Graph Poisson analogue of magnetostatics: `L₀ φ = ρ`, `B = −d₀ φ (+ B_harm)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{eigen_bump_field, harmonic_basis, normal, sample_rng, sample_seed, vertex_modes, Dataset, Sample, TaskSpec};
use crate::linalg::preconditioned_cg;
use crate::{Cochain, Complex64, Dec64, Error, Result};

/// Bound on `‖L₀φ − ρ‖_*` accepted from the solver.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonSpec {
    pub samples: usize,
    pub seed: u64,
    /// Non-constant L₀ eigenmodes mixed into the source.
    pub eigen_modes: usize,
    pub bumps: usize,
    pub bump_width: f64,
    /// Norm of the added harmonic 1-form relative to `‖d₀φ‖_*`; 0 disables it.
    pub harmonic_amplitude: f64,
}

impl Default for PoissonSpec {
    fn default() -> Self {
        Self { samples: 200, seed: 0, eigen_modes: 8, bumps: 3, bump_width: 0.25, harmonic_amplitude: 0.0 }
    }
}

/// Mean-zero solution of `L₀ φ = ρ` for mean-zero `ρ` on a connected complex.
///
/// Solves `(B₁ *₁ B₁ᵀ) φ = *₀ ρ` by Jacobi-preconditioned CG and checks the residual.
pub fn solve_poisson(complex: &Complex64, dec: &Dec64, rho: &DVector<f64>) -> Result<DVector<f64>> {
    let (components, _) = complex.connected_components();
    if components != 1 {
        return Err(Error::NonConnected(components));
    }
    let s0 = dec.star(0);
    let mass = rho.dot(s0);
    if mass.abs() > 1e-10 * rho.abs().dot(s0).max(1e-300) {
        return Err(Error::SingularSystem(format!("source has non-zero mean (mass {mass:e})")));
    }
    let b1 = dec.boundary(1);
    let s1 = dec.star(1);
    let op = |x: &DVector<f64>| b1.mul_vec(&b1.tr_mul_vec(x).component_mul(s1));
    let mut diag = DVector::zeros(s0.len());
    for (r, c, v) in b1.triplets() {
        diag[r] += v * v * s1[c];
    }
    let inv = diag.map(|d: f64| if d > 0.0 { 1.0 / d } else { 1.0 });
    let rhs = rho.component_mul(s0);
    let (mut phi, _) = preconditioned_cg(op, Some(&inv), &rhs, 1e-14, 20 * s0.len() + 100)?;
    let mean = phi.dot(s0) / s0.sum();
    phi.add_scalar_mut(-mean);
    let res = dec.laplacian(0).mul_vec(&phi) - rho;
    let res = res.component_mul(&res).dot(s0).sqrt();
    if res > RESIDUAL_TOL {
        return Err(Error::SolverFailure(format!("Poisson residual {res:e} above {RESIDUAL_TOL:e}")));
    }
    Ok(phi)
}

pub(crate) fn generate(spec: &PoissonSpec, complex: &Complex64, dec: &Dec64) -> Result<Dataset<f64>> {
    let modes = vertex_modes(dec, spec.eigen_modes + 1)?;
    let harm = if spec.harmonic_amplitude > 0.0 { Some(harmonic_basis(dec, 1)?) } else { None };
    let s0 = dec.star(0);
    let hash = complex.content_hash();
    let samples = (0..spec.samples)
        .map(|i| {
            let seed = sample_seed(spec.seed, i);
            let mut rng = sample_rng(seed);
            let mut rho = eigen_bump_field(&mut rng, complex, s0, &modes, 1, spec.bumps, spec.bump_width);
            let mean = rho.dot(s0) / s0.sum();
            rho.add_scalar_mut(-mean);
            let phi = solve_poisson(complex, dec, &rho)?;
            let mut b = -dec.d(0).mul_vec(&phi);
            if let Some(h) = harm.as_ref().filter(|h| h.ncols() > 0) {
                let coef = DVector::from_fn(h.ncols(), |_, _| normal(&mut rng));
                let hb = h * coef;
                let norm = |x: &DVector<f64>| x.component_mul(x).dot(dec.star(1)).sqrt();
                let target = spec.harmonic_amplitude * norm(&b).max(1e-12);
                b += hb.clone() * (target / norm(&hb).max(1e-300));
            }
            Ok(Sample { seed, input: Cochain::new(0, rho), target: Cochain::new(1, b), complex_id: hash.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(TaskSpec::Poisson(spec.clone()), hash, samples))
}
