//! Advection-diffusion `∂u/∂t + ∇·(vu) = νΔu` of a vertex scalar.
//!
//! Each step does an explicit first-order upwind flux update across dual edges followed by a
//! backward-Euler diffusion solve `(*₀ + νΔt B₁ *₁ B₁ᵀ) u⁺ = *₀ u*`, which is
//! `(I + νΔt L₀) u⁺ = u*` multiplied through by `*₀`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{eigen_bump_field, sample_rng, sample_seed, vertex_modes, Dataset, Sample, TaskSpec};
use crate::complex::TORUS_MAJOR;
use crate::linalg::SkylineCholesky;
use crate::sparse::CsrMatrix;
use crate::spectrum::hodge_decompose;
use crate::{Cochain, Complex64, Dec64, Error, Result};

/// Largest admissible `v_max Δt / h_min`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSpec {
    pub samples: usize,
    pub seed: u64,
    /// Diffusivity ν.
    pub nu: f64,
    /// Final time T.
    pub horizon: f64,
    pub steps: usize,
    /// Peak tangential speed of the velocity field.
    pub v_max: f64,
    /// Number of L₀ eigenmodes (constant included) mixed into the initial field.
    pub eigen_modes: usize,
    pub bumps: usize,
    pub bump_width: f64,
}

impl Default for TransportSpec {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            nu: 0.01,
            horizon: 1.0,
            steps: 50,
            v_max: 1.0,
            eigen_modes: 9,
            bumps: 2,
            bump_width: 0.25,
        }
    }
}

/// Harmonic part of `dθ + dφ` (toroidal plus poloidal angle increments, wrapped to (-π, π]),
/// scaled so that the largest tangential speed `|v_e| / ℓ_e` equals `v_max`.
///
/// Angles are measured about the z axis and the tube centre circle of radius [`TORUS_MAJOR`], so
/// this is meant for the generated tori; any complex works as long as the field has a non-zero
/// harmonic part.
pub fn torus_velocity(complex: &Complex64, dec: &Dec64, v_max: f64) -> Result<DVector<f64>> {
    if complex.dims() < 1 {
        return Err(Error::InvalidParameter("velocity needs edges".into()));
    }
    let wrap = |a: f64| {
        let mut a = a % (2.0 * PI);
        if a > PI {
            a -= 2.0 * PI;
        } else if a <= -PI {
            a += 2.0 * PI;
        }
        a
    };
    let angles: Vec<(f64, f64)> = complex
        .coords()
        .iter()
        .map(|p| {
            let rho = p[0].hypot(p[1]);
            (p[1].atan2(p[0]), p[2].atan2(rho - TORUS_MAJOR))
        })
        .collect();
    let raw = DVector::from_iterator(
        complex.count(1),
        complex.simplices(1).iter().map(|e| {
            let (a, b) = (angles[e[0]], angles[e[1]]);
            wrap(b.0 - a.0) + wrap(b.1 - a.1)
        }),
    );
    let v = hodge_decompose(dec, &Cochain::new(1, raw))?.harmonic.values;
    let lengths = &complex.compute_geometry()?.simplex_measures[1];
    let peak = v.iter().zip(lengths).map(|(x, l)| x.abs() / l).fold(0.0, f64::max);
    if !(peak > 1e-12) {
        return Err(Error::InvalidParameter("complex carries no harmonic 1-form to transport along".into()));
    }
    Ok(v * (v_max / peak))
}

/// Reference solver for one velocity field and time discretization.
#[derive(Clone, Debug)]
pub struct TransportSolver {
    star0: DVector<f64>,
    b1: CsrMatrix<f64>,
    /// `*₁ v`: flux through the dual of each edge per unit upwind value.
    flux: DVector<f64>,
    edges: Vec<[usize; 2]>,
    diffusion: Option<SkylineCholesky<f64>>,
    dt: f64,
    steps: usize,
    /// `v_max Δt / h_min`.
    pub cfl: f64,
}

impl TransportSolver {
    pub fn new(complex: &Complex64, dec: &Dec64, velocity: &DVector<f64>, nu: f64, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) || !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need steps > 0, T > 0, ν ≥ 0 (got {steps}, {horizon}, {nu})"
            )));
        }
        if velocity.len() != dec.count(1) {
            return Err(Error::DimensionMismatch { expected: dec.count(1), got: velocity.len() });
        }
        let dt = horizon / steps as f64;
        let lengths = &complex.compute_geometry()?.simplex_measures[1];
        let h_min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let v_max = velocity.iter().zip(lengths).map(|(x, l)| x.abs() / l).fold(0.0, f64::max);
        let cfl = v_max * dt / h_min;
        if cfl >= CFL_LIMIT {
            return Err(Error::CflViolation(cfl));
        }
        let b1 = dec.boundary(1).clone();
        let star0 = dec.star(0).clone();
        let diffusion = if nu > 0.0 {
            let lap = b1.scale_cols(dec.star(1).as_slice()).matmul(dec.d(0));
            let a = CsrMatrix::identity(star0.len(), 1.0)
                .scale_rows(star0.as_slice())
                .add(&lap.map(|v| v * nu * dt));
            Some(SkylineCholesky::factor(&a).map_err(|e| Error::SolverFailure(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            star0,
            b1,
            flux: velocity.component_mul(dec.star(1)),
            edges: complex.simplices(1).iter().map(|e| [e[0], e[1]]).collect(),
            diffusion,
            dt,
            steps,
            cfl,
        })
    }

    /// Upwind advection alone: `u + Δt *₀⁻¹ B₁ F(u)`.
    pub fn advect(&self, u: &DVector<f64>) -> DVector<f64> {
        let f = DVector::from_iterator(
            self.edges.len(),
            self.edges.iter().zip(self.flux.iter()).map(|(e, &w)| w * if w > 0.0 { u[e[0]] } else { u[e[1]] }),
        );
        u + (self.b1.mul_vec(&f) * self.dt).component_div(&self.star0)
    }

    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let adv = self.advect(u);
        let next = match &self.diffusion {
            Some(f) => f.solve(&adv.component_mul(&self.star0)),
            None => adv,
        };
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::SolverFailure("transport step produced non-finite values".into()))
        }
    }

    pub fn evolve(&self, u0: &DVector<f64>) -> Result<DVector<f64>> {
        let mut u = u0.clone();
        for _ in 0..self.steps {
            u = self.step(&u)?;
        }
        Ok(u)
    }

    /// Total mass `Σ *₀ u`.
    pub fn mass(&self, u: &DVector<f64>) -> f64 {
        u.dot(&self.star0)
    }
}

pub(crate) fn generate(spec: &TransportSpec, complex: &Complex64, dec: &Dec64) -> Result<Dataset<f64>> {
    let velocity = torus_velocity(complex, dec, spec.v_max)?;
    let solver = TransportSolver::new(complex, dec, &velocity, spec.nu, spec.horizon, spec.steps)?;
    let modes = vertex_modes(dec, spec.eigen_modes.max(1))?;
    let hash = complex.content_hash();
    let samples = (0..spec.samples)
        .map(|i| {
            let seed = sample_seed(spec.seed, i);
            let mut rng = sample_rng(seed);
            let u0 = eigen_bump_field(&mut rng, complex, dec.star(0), &modes, 0, spec.bumps, spec.bump_width);
            let ut = solver.evolve(&u0)?;
            Ok(Sample { seed, input: Cochain::new(0, u0), target: Cochain::new(0, ut), complex_id: hash.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(TaskSpec::Transport(spec.clone()), hash, samples))
}
