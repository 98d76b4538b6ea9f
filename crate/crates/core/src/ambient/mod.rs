//! Regular voxel grid around a complex: splatting cochains onto it, pulling grid fields back as
//! the exact Hodge adjoint, and truncated-mode spectral convolution.
//!
//! Grid fields are flat buffers laid out channel-major with the last axis fastest:
//! `index = ((c * R + i) * R + j) * R + l`.

mod spectral;

use serde::{Deserialize, Serialize};

pub use spectral::{mix, mix_backward, spectral_conv, ModeSet, SpectralKernel};

use crate::complex::MeshGeometry;
use crate::sparse::CsrMatrix;
use crate::{Cochain, Error, Real, Result};

pub const DEFAULT_RESOLUTION: usize = 16;
/// Margin added on each side of the bounding box, as a fraction of its largest extent.
pub const BOX_MARGIN: f64 = 0.1;

/// Cubic voxel box with `resolution` nodes per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientGrid<T: Real> {
    pub lo: [T; 3],
    pub hi: [T; 3],
    pub resolution: usize,
    pub spacing: T,
}

impl<T: Real> AmbientGrid<T> {
    /// Cube centred on the bounding box, side = largest extent plus a 10% margin per side.
    ///
    /// A cube (rather than a tight box) keeps the bandwidth limit `ε < extent / 4` satisfiable
    /// for thin shapes such as the torus.
    pub fn enclosing(geometry: &MeshGeometry<T>, resolution: usize) -> Result<Self> {
        if resolution < 4 {
            return Err(Error::InvalidParameter(format!("grid resolution {resolution} < 4")));
        }
        let (lo, hi) = (geometry.bbox_min, geometry.bbox_max);
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(T::zero(), |m, e| m.max(e));
        let extent = if extent > T::zero() { extent } else { T::one() };
        let half = extent * T::of(0.5 + BOX_MARGIN);
        let mut glo = [T::zero(); 3];
        let mut ghi = [T::zero(); 3];
        for a in 0..3 {
            let c = (lo[a] + hi[a]) * T::of(0.5);
            glo[a] = c - half;
            ghi[a] = c + half;
        }
        let spacing = (half + half) / T::of((resolution - 1) as f64);
        Ok(Self { lo: glo, hi: ghi, resolution, spacing })
    }

    pub fn voxels(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn voxel_volume(&self) -> T {
        self.spacing * self.spacing * self.spacing
    }

    pub fn min_extent(&self) -> T {
        (0..3).map(|a| self.hi[a] - self.lo[a]).fold(T::max_value().unwrap(), |m, e| m.min(e))
    }

    pub fn node(&self, i: usize, j: usize, l: usize) -> [T; 3] {
        let h = self.spacing;
        [
            self.lo[0] + h * T::of(i as f64),
            self.lo[1] + h * T::of(j as f64),
            self.lo[2] + h * T::of(l as f64),
        ]
    }

    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.resolution + j) * self.resolution + l
    }

    pub fn contains(&self, p: &[T; 3]) -> bool {
        (0..3).all(|a| p[a] > self.lo[a] && p[a] < self.hi[a])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    /// Trilinear weights on the 8 surrounding nodes; effective bandwidth is one spacing.
    TrilinearHat,
    /// Gaussian with σ = ε/2, truncated at radius ε; `eps` in units of the grid spacing.
    Gaussian { eps_cells: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Gaussian { eps_cells: 2.0 }
    }
}

impl Kernel {
    /// Bandwidth in length units on `grid`.
    pub fn bandwidth<T: Real>(&self, grid: &AmbientGrid<T>) -> T {
        match *self {
            Kernel::TrilinearHat => grid.spacing,
            Kernel::Gaussian { eps_cells } => grid.spacing * T::of(eps_cells),
        }
    }

    /// Normalized weights (summing to 1) of a unit mass at `p`.
    fn weights<T: Real>(&self, grid: &AmbientGrid<T>, p: &[T; 3]) -> Vec<(usize, T)> {
        let r = grid.resolution;
        let h = grid.spacing;
        let local = |a: usize| (p[a] - grid.lo[a]) / h;
        let mut out = Vec::new();
        match *self {
            Kernel::TrilinearHat => {
                let mut base = [0usize; 3];
                let mut frac = [T::zero(); 3];
                for a in 0..3 {
                    let t = local(a);
                    let f = t.floor().to_f64().clamp(0.0, (r - 2) as f64) as usize;
                    base[a] = f;
                    frac[a] = (t - T::of(f as f64)).max(T::zero()).min(T::one());
                }
                for corner in 0..8 {
                    let mut w = T::one();
                    let mut idx = [0usize; 3];
                    for a in 0..3 {
                        let bit = (corner >> (2 - a)) & 1;
                        idx[a] = base[a] + bit;
                        w *= if bit == 1 { frac[a] } else { T::one() - frac[a] };
                    }
                    if w > T::zero() {
                        out.push((grid.index(idx[0], idx[1], idx[2]), w));
                    }
                }
            }
            Kernel::Gaussian { eps_cells } => {
                let eps = T::of(eps_cells);
                let sigma = eps * T::of(0.5);
                let reach = eps.ceil().to_f64() as i64;
                let mut ranges = [(0usize, 0usize); 3];
                for (a, range) in ranges.iter_mut().enumerate() {
                    let c = local(a).round().to_f64() as i64;
                    let lo = (c - reach).max(0) as usize;
                    let hi = ((c + reach).min(r as i64 - 1)).max(0) as usize;
                    *range = (lo, hi);
                }
                for i in ranges[0].0..=ranges[0].1 {
                    for j in ranges[1].0..=ranges[1].1 {
                        for l in ranges[2].0..=ranges[2].1 {
                            let d = [
                                local(0) - T::of(i as f64),
                                local(1) - T::of(j as f64),
                                local(2) - T::of(l as f64),
                            ];
                            let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                            if d2 <= eps * eps {
                                let w = (-d2 / (T::of(2.0) * sigma * sigma)).exp();
                                out.push((grid.index(i, j, l), w));
                            }
                        }
                    }
                }
                if out.is_empty() {
                    let c: Vec<usize> =
                        (0..3).map(|a| local(a).round().to_f64().clamp(0.0, (r - 1) as f64) as usize).collect();
                    out.push((grid.index(c[0], c[1], c[2]), T::one()));
                }
            }
        }
        let total = out.iter().fold(T::zero(), |s, (_, w)| s + *w);
        for (_, w) in &mut out {
            *w /= total;
        }
        out
    }
}

/// Number of grid channels used for a k-form on a complex of dimension `dims`.
pub fn lift_channels(k: usize, dims: usize) -> usize {
    match k {
        1 | 2 if k <= dims => 3,
        _ => 1,
    }
}

/// Splat matrix `S` (C·R³ x N_k) and its Hodge adjoint `R = vox · *⁻¹ Sᵀ`.
#[derive(Clone, Debug)]
pub struct LiftOperator<T: Real> {
    pub degree: usize,
    pub channels: usize,
    pub kernel: Kernel,
    pub bandwidth: T,
    pub grid: AmbientGrid<T>,
    splat: CsrMatrix<T>,
    pullback: CsrMatrix<T>,
}

impl<T: Real> LiftOperator<T> {
    /// `star` is the diagonal of `*_k`.
    pub fn new(
        degree: usize,
        geometry: &MeshGeometry<T>,
        star: &nalgebra::DVector<T>,
        grid: &AmbientGrid<T>,
        kernel: Kernel,
    ) -> Result<Self> {
        let dims = geometry.simplex_measures.len() - 1;
        if degree > dims {
            return Err(Error::DegreeMismatch { expected: dims, got: degree });
        }
        let eps = kernel.bandwidth(grid);
        let limit = grid.min_extent() / T::of(4.0);
        if eps >= limit {
            return Err(Error::BandwidthTooLarge { eps: eps.to_f64(), extent: grid.min_extent().to_f64() });
        }
        let n = geometry.simplex_measures[degree].len();
        if star.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: star.len() });
        }
        let channels = lift_channels(degree, dims);
        let vox = grid.voxels();
        let mut trips = Vec::new();
        for (s, p) in geometry.barycenters[degree].iter().enumerate() {
            let dir: Vec<T> = match (degree, channels) {
                (1, 3) => geometry.edge_directions[s].to_vec(),
                (2, 3) => geometry.face_normals[s].to_vec(),
                _ => vec![T::one()],
            };
            for (v, w) in kernel.weights(grid, p) {
                for (c, &dc) in dir.iter().enumerate() {
                    trips.push((c * vox + v, s, w * dc));
                }
            }
        }
        let splat = CsrMatrix::from_triplets(channels * vox, n, trips);
        let scale: Vec<T> = star.iter().map(|&s| grid.voxel_volume() / s).collect();
        let pullback = splat.transpose().scale_rows(&scale);
        Ok(Self { degree, channels, kernel, bandwidth: eps, grid: grid.clone(), splat, pullback })
    }

    pub fn field_len(&self) -> usize {
        self.channels * self.grid.voxels()
    }

    pub fn splat_matrix(&self) -> &CsrMatrix<T> {
        &self.splat
    }

    pub fn pullback_matrix(&self) -> &CsrMatrix<T> {
        &self.pullback
    }

    /// ι(ω) = S ω.
    pub fn lift(&self, w: &Cochain<T>) -> Result<Vec<T>> {
        w.expect_degree(self.degree)?;
        w.expect_len(self.splat.ncols())?;
        Ok(self.splat.mul_vec(&w.values).as_slice().to_vec())
    }

    /// R(v) = vox · *⁻¹ Sᵀ v.
    pub fn pullback(&self, field: &[T]) -> Result<Cochain<T>> {
        if field.len() != self.field_len() {
            return Err(Error::ShapeMismatch(format!(
                "grid field has {} entries, expected {}",
                field.len(),
                self.field_len()
            )));
        }
        let v = nalgebra::DVector::from_column_slice(field);
        Ok(Cochain::new(self.degree, self.pullback.mul_vec(&v)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub pass: bool,
    pub spacing: f64,
    pub bandwidth: f64,
    pub messages: Vec<String>,
    /// `sqrt(mean edge length · bbox diagonal)`.
    pub suggested_bandwidth: f64,
}

/// Checks `h ≤ ε/2` (and `ε < reach` when a reach is supplied). Never fails.
pub fn validate_resolution<T: Real>(
    grid: &AmbientGrid<T>,
    bandwidth: T,
    geometry: &MeshGeometry<T>,
    reach: Option<T>,
) -> ResolutionReport {
    let h = grid.spacing.to_f64();
    let eps = bandwidth.to_f64();
    let mut messages = Vec::new();
    let mut pass = true;
    if h > eps / 2.0 * (1.0 + 1e-12) {
        pass = false;
        messages.push(format!("grid spacing {h:.4e} exceeds ε/2 = {:.4e}", eps / 2.0));
    }
    if let Some(r) = reach {
        if eps >= r.to_f64() {
            pass = false;
            messages.push(format!("bandwidth {eps:.4e} not below reach {:.4e}", r.to_f64()));
        }
    }
    let suggested = (geometry.mean_edge_length() * geometry.bbox_diagonal()).to_f64().sqrt();
    messages.push(format!("suggested bandwidth ≈ {suggested:.4e}"));
    ResolutionReport { pass, spacing: h, bandwidth: eps, messages, suggested_bandwidth: suggested }
}
