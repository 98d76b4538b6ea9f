//! Everything the network needs from a particular complex that is not learned: the spectral
//! subspace, lift operators and their normalization, and the occupancy channel.
//!
//! Parameters only depend on [`ModelDims`], so a trained model can be moved onto a refined
//! complex by building a new context there.

use nalgebra::{DMatrix, DVector, Vector3};

use super::params::ModelDims;
use super::ModelConfig;
use crate::ambient::{AmbientGrid, LiftOperator, ModeSet};
use crate::complex::OrientedSimplicialComplex;
use crate::dec::DecOperators;
use crate::sparse::CsrMatrix;
use crate::spectrum::{subspace_for_degree, SpectralSubspace};
use crate::{Cochain, Error, Real, Result};

#[derive(Clone, Debug)]
pub struct HsdContext<T: Real> {
    pub subspace: SpectralSubspace<T>,
    pub lift: LiftOperator<T>,
    /// Multiplies both `S` and `R` (see [`lift_normalization`]).
    pub lift_scale: T,
    pub cond: Option<(LiftOperator<T>, T)>,
    pub modes: ModeSet<T>,
    pub complex_hash: String,
    pub input_degree: usize,
    /// Maps the raw input into degree k when the degrees differ (`d` or `δ`).
    source_map: Option<CsrMatrix<T>>,
    occupancy: Vec<T>,
    /// `lift_scale² R S`, the lift round trip on cochains.
    roundtrip: CsrMatrix<T>,
}

impl<T: Real> HsdContext<T> {
    pub fn new(complex: &OrientedSimplicialComplex<T>, config: &ModelConfig) -> Result<Self> {
        let dec = DecOperators::from_complex(complex, config.star_mode)?;
        Self::with_dec(complex, &dec, config)
    }

    pub fn with_dec(
        complex: &OrientedSimplicialComplex<T>,
        dec: &DecOperators<T>,
        config: &ModelConfig,
    ) -> Result<Self> {
        let k = config.degree;
        let kin = config.input_degree;
        if k > complex.dims() || kin > complex.dims() {
            return Err(Error::DegreeMismatch { expected: complex.dims(), got: k.max(kin) });
        }
        let source_map = match (kin, k) {
            (a, b) if a == b => None,
            (a, b) if a + 1 == b => Some(dec.d(a).clone()),
            (a, b) if a == b + 1 => Some(dec.codiff(a).clone()),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "input degree {kin} cannot be mapped to output degree {k}"
                )))
            }
        };
        let subspace = subspace_for_degree(dec, k, config.modes, config.eigen_method)?;
        let geometry = complex.compute_geometry()?;
        let grid = AmbientGrid::enclosing(&geometry, config.grid_resolution)?;
        let lift = LiftOperator::new(k, &geometry, dec.star(k), &grid, config.kernel)?;
        let lift_scale = lift_normalization(&lift, &probes(complex, k), dec.star(k));
        let cond = if kin != k {
            let op = LiftOperator::new(kin, &geometry, dec.star(kin), &grid, config.kernel)?;
            let s = lift_normalization(&op, &probes(complex, kin), dec.star(kin));
            Some((op, s))
        } else {
            None
        };
        let ones = LiftOperator::new(0, &geometry, dec.star(0), &grid, config.kernel)?
            .splat_matrix()
            .mul_slice(&vec![T::one(); complex.count(0)]);
        let peak = ones.iter().fold(T::zero(), |m, &v| m.max(v));
        let occupancy = ones.iter().map(|&v| v / peak).collect();
        let modes = ModeSet::new(config.grid_resolution, config.fiber_modes)?;
        let roundtrip = lift
            .pullback_matrix()
            .matmul(lift.splat_matrix())
            .map(|v| v * lift_scale * lift_scale);
        Ok(Self {
            subspace,
            lift,
            lift_scale,
            cond,
            modes,
            complex_hash: complex.content_hash(),
            input_degree: kin,
            source_map,
            occupancy,
            roundtrip,
        })
    }

    pub fn degree(&self) -> usize {
        self.subspace.degree()
    }

    pub fn len(&self) -> usize {
        self.subspace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspace.is_empty()
    }

    pub fn voxels(&self) -> usize {
        self.lift.grid.voxels()
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            modes: self.subspace.modes(),
            modes_up: self.subspace.m_d.nrows(),
            modes_down: self.subspace.m_delta.nrows(),
            lift_channels: self.lift.channels,
            cond_channels: self.cond.as_ref().map_or(0, |(op, _)| op.channels),
            fourier_modes: self.modes.count(),
        }
    }

    pub fn occupancy(&self) -> &[T] {
        &self.occupancy
    }

    pub fn roundtrip(&self) -> &CsrMatrix<T> {
        &self.roundtrip
    }

    /// `(ω₀, f)`: the state the layers start from and the conditioning field, if any.
    ///
    /// Same-degree inputs are used directly. Otherwise ω₀ = Π_base(map(f)) with `map` the
    /// exterior derivative or codifferential, and `f` is lifted as a conditioning channel.
    pub fn prepare(&self, input: &Cochain<T>) -> Result<(DVector<T>, Option<DVector<T>>)> {
        input.expect_degree(self.input_degree)?;
        match &self.source_map {
            None => {
                input.expect_len(self.len())?;
                Ok((input.values.clone(), None))
            }
            Some(map) => {
                input.expect_len(map.ncols())?;
                let mapped = map.mul_vec(&input.values);
                Ok((self.subspace.project_base_raw(&mapped), Some(input.values.clone())))
            }
        }
    }

    /// Normalized lift `lift_scale · S ω` as a (voxels x channels) matrix.
    pub(crate) fn lift_field(&self, w: &DVector<T>) -> DMatrix<T> {
        let v = self.lift.splat_matrix().mul_slice(w.as_slice());
        DMatrix::from_vec(self.voxels(), self.lift.channels, v) * self.lift_scale
    }

    pub(crate) fn cond_field(&self, f: &DVector<T>) -> Option<DMatrix<T>> {
        self.cond.as_ref().map(|(op, s)| {
            let v = op.splat_matrix().mul_slice(f.as_slice());
            DMatrix::from_vec(self.voxels(), op.channels, v) * *s
        })
    }

    /// Adjoint of [`Self::lift_field`] under the Euclidean inner product.
    pub(crate) fn lift_field_adjoint(&self, g: &[T]) -> DVector<T> {
        DVector::from_vec(self.lift.splat_matrix().tr_mul_slice(g)) * self.lift_scale
    }

    /// Normalized pullback `lift_scale · R G`.
    pub(crate) fn pull_field(&self, g: &DMatrix<T>) -> DVector<T> {
        DVector::from_vec(self.lift.pullback_matrix().mul_slice(g.as_slice())) * self.lift_scale
    }

    pub(crate) fn pull_field_adjoint(&self, g: &DVector<T>) -> DMatrix<T> {
        let v = self.lift.pullback_matrix().tr_mul_slice(g.as_slice());
        DMatrix::from_vec(self.voxels(), self.lift.channels, v) * self.lift_scale
    }
}

/// Scale `s` such that `s·S` is an isometry on average over smooth probe cochains:
/// `Σ vox‖s S p‖² = Σ ‖p‖²_*`.
///
/// The raw mass-normalized splat grows with mesh density, so without this the fiber branch
/// would see inputs whose magnitude depends on the resolution. Applying the same `s` to the
/// pullback keeps the pair adjoint, and the round trip then has unit mean Rayleigh quotient on
/// the probes.
pub fn lift_normalization<T: Real>(op: &LiftOperator<T>, probes: &[DVector<T>], star: &DVector<T>) -> T {
    let vox = op.grid.voxel_volume();
    let mut num = T::zero();
    let mut den = T::zero();
    for p in probes {
        num += p.component_mul(p).dot(star);
        let f = op.splat_matrix().mul_vec(p);
        den += f.norm_squared() * vox;
    }
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        T::one()
    }
}

/// Cochains obtained by integrating constant fields over each k-simplex: ones for vertices,
/// edge vectors for edges, projected areas for triangles, signed volumes for tetrahedra.
pub fn probes<T: Real>(complex: &OrientedSimplicialComplex<T>, k: usize) -> Vec<DVector<T>> {
    let pts = |s: &[usize]| -> Vec<Vector3<T>> {
        s.iter().map(|&v| Vector3::from(complex.coords()[v])).collect::<Vec<_>>()
    };
    let n = complex.count(k);
    let simplices = complex.simplices(k);
    let half = T::of(0.5);
    match k {
        0 => vec![DVector::from_element(n, T::one())],
        1 | 2 => (0..3)
            .map(|a| {
                DVector::from_iterator(
                    n,
                    simplices.iter().map(|s| {
                        let p = pts(s);
                        if k == 1 {
                            p[1][a] - p[0][a]
                        } else {
                            (p[1] - p[0]).cross(&(p[2] - p[0]))[a] * half
                        }
                    }),
                )
            })
            .collect(),
        _ => vec![DVector::from_iterator(
            n,
            simplices.iter().map(|s| {
                let p = pts(s);
                (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / T::of(6.0)
            }),
        )],
    }
}
