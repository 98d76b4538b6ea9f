//! Hodge spectral duality (HSD) neural operators on oriented simplicial complexes.
//!
//! The crate is organised bottom-up:
//!
//! - [`complex`]: oriented simplicial complexes, signed boundary matrices, geometry and mesh I/O.
//! - [`dec`]: discrete exterior calculus (Hodge stars, `d`, `δ`, Hodge Laplacians).
//! - [`spectrum`]: Hodge eigenbases, base/fiber projections, spectral derivative matrices and the
//!   discrete Hodge decomposition.
//! - [`ambient`]: lifting cochains onto a voxel grid, pulling them back, and truncated spectral
//!   convolution on that grid.
//! - [`model`]: the layered HSD network with hand-written reverse-mode gradients.
//! - [`tasks`]: synthetic datasets with independent reference solvers.
//! - [`train`]: losses, metrics, AdamW training and ablations.
//!
//! All numerical code is generic over [`Real`] (implemented for `f32` and `f64`); the aliases at
//! the bottom of this file pin the double-precision types used by the CLI and the training loop.

pub mod ambient;
pub mod cochain;
pub mod complex;
pub mod dec;
pub mod error;
pub mod linalg;
pub mod model;
pub mod sparse;
pub mod spectrum;
pub mod tasks;
pub mod train;

pub use cochain::Cochain;
pub use error::{Error, Result};

use nalgebra::RealField;

/// Floating point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Conversions go through `f64` so that constants can be
/// written once.
pub trait Real: RealField + Copy + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar type.
    fn of(x: f64) -> Self;
    /// Widens to `f64`.
    fn to_f64(self) -> f64;
    /// Machine epsilon of the underlying type, as `f64`.
    const EPS: f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            const EPS: f64 = <$t>::EPSILON as f64;
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Double-precision aliases.
pub type Complex64 = complex::OrientedSimplicialComplex<f64>;
pub type Geometry64 = complex::MeshGeometry<f64>;
pub type Cochain64 = Cochain<f64>;
pub type Dec64 = dec::DecOperators<f64>;
pub type Spectrum64 = spectrum::HodgeSpectrum<f64>;
pub type Subspace64 = spectrum::SpectralSubspace<f64>;
pub type Model64 = model::HsdModel<f64>;
pub type Dataset64 = tasks::Dataset<f64>;

/// Single-precision aliases, for inference and memory-bound experiments.
pub type Complex32 = complex::OrientedSimplicialComplex<f32>;
pub type Dec32 = dec::DecOperators<f32>;
