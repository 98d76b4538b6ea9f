//! Harmonic recovery: input `h + d₀α + δ₂β`, target the harmonic part of the input.
//!
//! The potentials `α` and `β` are either independent standard normals per vertex / face
//! ([`NoiseKind::White`]) or random sums of plane waves sampled at vertices and face
//! barycentres ([`NoiseKind::Waves`]), which gives the same continuous noise on any mesh of the
//! surface but concentrates it in the low Hodge modes.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{harmonic_basis, normal, sample_rng, sample_seed, Dataset, Sample, TaskSpec};
use crate::spectrum::hodge_decompose;
use crate::{Cochain, Complex64, Dec64, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    White,
    Waves,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonicSpec {
    pub samples: usize,
    pub seed: u64,
    /// `‖noise‖_* / ‖h‖_*`, split evenly (in energy) between exact and coexact parts.
    pub noise: f64,
    pub noise_kind: NoiseKind,
    /// Plane waves per potential.
    pub waves: usize,
    /// Wavenumber range of the plane waves (radians per unit length).
    pub min_wavenumber: f64,
    pub max_wavenumber: f64,
}

impl Default for HarmonicSpec {
    fn default() -> Self {
        Self { samples: 200, seed: 0, noise: 1.0, noise_kind: NoiseKind::White, waves: 6, min_wavenumber: 1.0, max_wavenumber: 6.0 }
    }
}

/// Sum of random plane waves `Σ a sin(k·x + p)`.
#[derive(Clone, Debug)]
pub struct WaveField {
    waves: Vec<(Vector3<f64>, f64, f64)>,
}

impl WaveField {
    pub fn random(rng: &mut ChaCha8Rng, count: usize, kmin: f64, kmax: f64) -> Self {
        let waves = (0..count)
            .map(|_| {
                let dir = Vector3::new(normal(rng), normal(rng), normal(rng));
                let dir = dir / dir.norm().max(1e-12);
                let k = dir * rng.random_range(kmin..=kmax);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (k, phase, normal(rng))
            })
            .collect();
        Self { waves }
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let x = Vector3::from(*x);
        self.waves.iter().map(|(k, p, a)| a * (k.dot(&x) + p).sin()).sum()
    }
}

pub(crate) fn generate(spec: &HarmonicSpec, complex: &Complex64, dec: &Dec64) -> Result<Dataset<f64>> {
    if complex.dims() < 1 {
        return Err(Error::InvalidParameter("harmonic recovery needs 1-forms".into()));
    }
    let basis = harmonic_basis(dec, 1)?;
    if basis.ncols() == 0 {
        return Err(Error::InvalidParameter("harmonic recovery needs b_1 ≥ 1".into()));
    }
    if !(spec.min_wavenumber > 0.0 && spec.max_wavenumber >= spec.min_wavenumber) || !(spec.noise >= 0.0) {
        return Err(Error::InvalidParameter("bad noise parameters".into()));
    }
    let geometry = complex.compute_geometry()?;
    let s1 = dec.star(1);
    let norm = |x: &DVector<f64>| x.component_mul(x).dot(s1).sqrt();
    let faces = complex.dims() >= 2;
    let hash = complex.content_hash();
    let samples = (0..spec.samples)
        .map(|i| {
            let seed = sample_seed(spec.seed, i);
            let mut rng = sample_rng(seed);
            let coef = DVector::from_fn(basis.ncols(), |_, _| normal(&mut rng));
            let h = &basis * coef;
            let alpha = WaveField::random(&mut rng, spec.waves, spec.min_wavenumber, spec.max_wavenumber);
            let beta = WaveField::random(&mut rng, spec.waves, spec.min_wavenumber, spec.max_wavenumber);
            let mut input = h.clone();
            let budget = spec.noise * norm(&h);
            if budget > 0.0 {
                let parts: f64 = if faces { 2.0 } else { 1.0 };
                let a = match spec.noise_kind {
                    NoiseKind::White => DVector::from_fn(complex.count(0), |_, _| normal(&mut rng)),
                    NoiseKind::Waves => {
                        DVector::from_iterator(complex.count(0), complex.coords().iter().map(|p| alpha.eval(p)))
                    }
                };
                let exact = dec.d(0).mul_vec(&a);
                input += exact.clone() * (budget / parts.sqrt() / norm(&exact).max(1e-300));
                if faces {
                    // β as a 2-cochain: density times area, so *₂β is the sampled density
                    let density: Vec<f64> = match spec.noise_kind {
                        NoiseKind::White => (0..complex.count(2)).map(|_| normal(&mut rng)).collect(),
                        NoiseKind::Waves => geometry.barycenters[2].iter().map(|x| beta.eval(x)).collect(),
                    };
                    let b = DVector::from_iterator(
                        complex.count(2),
                        density.iter().zip(&geometry.simplex_measures[2]).map(|(d, area)| d * area),
                    );
                    let coexact = dec.codiff(2).mul_vec(&b);
                    input += coexact.clone() * (budget / parts.sqrt() / norm(&coexact).max(1e-300));
                }
            }
            let input = Cochain::new(1, input);
            let target = hodge_decompose(dec, &input)?.harmonic;
            Ok(Sample { seed, input, target, complex_id: hash.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(TaskSpec::HarmonicRecovery(spec.clone()), hash, samples))
}
