//! Synthetic datasets with independent reference solvers.
//!
//! Three families: advection-diffusion of a scalar on a torus ([`transport`]), a graph Poisson
//! problem producing a gradient 1-form ([`poisson`]), and recovery of the harmonic part of a
//! noisy 1-form ([`harmonic`]). Generation runs in double precision and is bit-deterministic
//! given the seed; each sample draws from its own ChaCha stream so that regenerating on a
//! refined mesh reuses the same random choices.

pub mod harmonic;
pub mod io;
pub mod poisson;
pub mod transport;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::complex::{OrientedSimplicialComplex, ShapeSpec};
use crate::dec::DecOperators;
use crate::spectrum::{eigensolve, EigenMethod};
use crate::{Cochain, Complex64, Dec64, Error, Real, Result};

pub use harmonic::{HarmonicSpec, NoiseKind};
pub use io::{load_dataset, save_dataset, DatasetMeta};
pub use poisson::PoissonSpec;
pub use transport::{torus_velocity, TransportSolver, TransportSpec};

pub const TRAIN_FRACTION: f64 = 0.68;
pub const VAL_FRACTION: f64 = 0.12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Transport,
    Poisson,
    HarmonicRecovery,
}

impl TaskKind {
    pub fn input_degree(self) -> usize {
        match self {
            TaskKind::Transport | TaskKind::Poisson => 0,
            TaskKind::HarmonicRecovery => 1,
        }
    }

    pub fn target_degree(self) -> usize {
        match self {
            TaskKind::Transport => 0,
            TaskKind::Poisson | TaskKind::HarmonicRecovery => 1,
        }
    }

    /// Vector tasks predict a form of positive degree; scalar tasks predict vertex values.
    pub fn is_vector(self) -> bool {
        self.target_degree() > 0
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Transport => "transport",
            TaskKind::Poisson => "poisson",
            TaskKind::HarmonicRecovery => "harmonic_recovery",
        })
    }
}

/// Task family and its generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Transport(TransportSpec),
    Poisson(PoissonSpec),
    HarmonicRecovery(HarmonicSpec),
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Transport(_) => TaskKind::Transport,
            TaskSpec::Poisson(_) => TaskKind::Poisson,
            TaskSpec::HarmonicRecovery(_) => TaskKind::HarmonicRecovery,
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            TaskSpec::Transport(s) => s.samples,
            TaskSpec::Poisson(s) => s.samples,
            TaskSpec::HarmonicRecovery(s) => s.samples,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            TaskSpec::Transport(s) => s.seed,
            TaskSpec::Poisson(s) => s.seed,
            TaskSpec::HarmonicRecovery(s) => s.seed,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        match &mut self {
            TaskSpec::Transport(s) => s.samples = n,
            TaskSpec::Poisson(s) => s.samples = n,
            TaskSpec::HarmonicRecovery(s) => s.samples = n,
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            TaskSpec::Transport(s) => s.seed = seed,
            TaskSpec::Poisson(s) => s.seed = seed,
            TaskSpec::HarmonicRecovery(s) => s.seed = seed,
        }
        self
    }

    /// Default parameters of a family.
    pub fn default_for(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Transport => TaskSpec::Transport(TransportSpec::default()),
            TaskKind::Poisson => TaskSpec::Poisson(PoissonSpec::default()),
            TaskKind::HarmonicRecovery => TaskSpec::HarmonicRecovery(HarmonicSpec::default()),
        }
    }

    pub fn generate(&self, complex: &Complex64) -> Result<Dataset<f64>> {
        let dec = DecOperators::from_complex(complex, crate::dec::StarMode::LumpedVolume)?;
        self.generate_with(complex, &dec)
    }

    pub fn generate_with(&self, complex: &Complex64, dec: &Dec64) -> Result<Dataset<f64>> {
        match self {
            TaskSpec::Transport(s) => transport::generate(s, complex, dec),
            TaskSpec::Poisson(s) => poisson::generate(s, complex, dec),
            TaskSpec::HarmonicRecovery(s) => harmonic::generate(s, complex, dec),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T: Real> {
    pub seed: u64,
    pub input: Cochain<T>,
    pub target: Cochain<T>,
    /// Content hash of the complex the cochains live on.
    pub complex_id: String,
}

/// Disjoint, exhaustive sample indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle cut into ⌊0.68n⌋ / ⌊0.12n⌋ / rest.
    pub fn new(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
        let n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
        let n_val = (VAL_FRACTION * n as f64).floor() as usize;
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Self { train: idx, val, test }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!("sample {i} appears in two splits")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter("splits do not cover every sample".into()));
        }
        Ok(())
    }
}

/// Keeps the split stream distinct from the per-sample streams.
const SPLIT_SALT: u64 = 0x5eed_0000_0000_5711;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    pub task: TaskSpec,
    pub complex_hash: String,
    pub samples: Vec<Sample<T>>,
    pub split: Split,
}

impl<T: Real> Dataset<T> {
    pub fn new(task: TaskSpec, complex_hash: String, samples: Vec<Sample<T>>) -> Self {
        let split = Split::new(samples.len(), task.seed());
        Self { task, complex_hash, samples, split }
    }

    pub fn kind(&self) -> TaskKind {
        self.task.kind()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn train(&self) -> impl Iterator<Item = &Sample<T>> + '_ {
        self.split.train.iter().map(|&i| &self.samples[i])
    }

    pub fn val(&self) -> impl Iterator<Item = &Sample<T>> + '_ {
        self.split.val.iter().map(|&i| &self.samples[i])
    }

    pub fn test(&self) -> impl Iterator<Item = &Sample<T>> + '_ {
        self.split.test.iter().map(|&i| &self.samples[i])
    }

    /// Checks degrees, lengths, finiteness, complex ids and the split.
    pub fn validate(&self, complex: &OrientedSimplicialComplex<T>) -> Result<()> {
        let hash = complex.content_hash();
        if hash != self.complex_hash {
            return Err(Error::ComplexMismatch(self.complex_hash.clone(), hash));
        }
        let kind = self.kind();
        for s in &self.samples {
            if s.complex_id != hash {
                return Err(Error::ComplexMismatch(s.complex_id.clone(), hash.clone()));
            }
            s.input.expect_degree(kind.input_degree())?;
            s.target.expect_degree(kind.target_degree())?;
            s.input.expect_len(complex.count(kind.input_degree()))?;
            s.target.expect_len(complex.count(kind.target_degree()))?;
            if !s.input.is_finite() || !s.target.is_finite() {
                return Err(Error::InvalidParameter(format!("sample {} has non-finite values", s.seed)));
            }
        }
        self.split.validate(self.samples.len())
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            task: self.task.clone(),
            complex_hash: self.complex_hash.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    seed: s.seed,
                    input: s.input.cast(),
                    target: s.target.cast(),
                    complex_id: s.complex_id.clone(),
                })
                .collect(),
            split: self.split.clone(),
        }
    }
}

/// Seed of sample `i` of a dataset with base seed `seed`.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

pub(crate) fn sample_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Hodge-orthonormal basis of the harmonic k-forms (N_k x b_k).
pub fn harmonic_basis(dec: &Dec64, k: usize) -> Result<DMatrix<f64>> {
    let n = dec.count(k);
    let mut m = 8.min(n);
    loop {
        let spec = eigensolve(dec, k, m, EigenMethod::Auto)?;
        if spec.nullspace_resolved() || m == n {
            return Ok(spec.basis.select_columns(&spec.harmonic_indices));
        }
        m = (2 * m).min(n);
    }
}

/// Lowest `count` eigenvectors of L_0 (Hodge-orthonormal), the constant mode first.
pub(crate) fn vertex_modes(dec: &Dec64, count: usize) -> Result<DMatrix<f64>> {
    Ok(eigensolve(dec, 0, count.min(dec.count(0)), EigenMethod::Auto)?.basis)
}

/// Random mixture of the given eigenvectors plus Gaussian bumps centred on random vertices.
///
/// Mode `j` gets a N(0, 1/(1+j)) coefficient scaled by the square root of the total vertex
/// volume, so that field values are O(1) regardless of mesh size.
pub(crate) fn eigen_bump_field(
    rng: &mut ChaCha8Rng,
    complex: &Complex64,
    star0: &DVector<f64>,
    modes: &DMatrix<f64>,
    skip: usize,
    bumps: usize,
    width: f64,
) -> DVector<f64> {
    let scale = star0.sum().sqrt();
    let mut u = DVector::zeros(complex.count(0));
    for j in skip..modes.ncols() {
        let c = normal(rng) / ((1 + j) as f64).sqrt();
        u.axpy(c * scale, &modes.column(j), 1.0);
    }
    let coords = complex.coords();
    for _ in 0..bumps {
        let centre = Vector3::from(coords[rng.random_range(0..coords.len())]);
        let amp = rng.random_range(0.5..1.5);
        for (v, p) in coords.iter().enumerate() {
            let r2 = (Vector3::from(*p) - centre).norm_squared();
            u[v] += amp * (-r2 / (2.0 * width * width)).exp();
        }
    }
    u
}

/// Refined counterpart of a generated shape: grids scaled by `factor`, icospheres subdivided once
/// more per doubling.
pub fn refine_shape(shape: &ShapeSpec, factor: f64) -> Result<ShapeSpec> {
    if !(factor >= 1.0) {
        return Err(Error::InvalidParameter(format!("refinement factor {factor} < 1")));
    }
    let up = |n: usize| (n as f64 * factor).round() as usize;
    Ok(match shape {
        ShapeSpec::Cycle(n) => ShapeSpec::Cycle(up(*n)),
        ShapeSpec::TorusGrid(n, m) => ShapeSpec::TorusGrid(up(*n), up(*m)),
        ShapeSpec::TetGrid(n) => ShapeSpec::TetGrid(up(*n)),
        ShapeSpec::Icosphere(s) => ShapeSpec::Icosphere(s + factor.log2().round() as usize),
        ShapeSpec::DisjointUnion(a, b) => {
            ShapeSpec::DisjointUnion(Box::new(refine_shape(a, factor)?), Box::new(refine_shape(b, factor)?))
        }
    })
}

/// Generates the refined complex and regenerates the dataset on it with the same seeds.
pub fn refine_and_transfer(
    shape: &ShapeSpec,
    task: &TaskSpec,
    factor: f64,
) -> Result<(ShapeSpec, Complex64, Dataset<f64>)> {
    let fine = refine_shape(shape, factor)?;
    let complex = Complex64::generate(&fine)?;
    let data = task.generate(&complex)?;
    Ok((fine, complex, data))
}
