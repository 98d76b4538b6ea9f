//! Discrete exterior calculus: diagonal Hodge stars, `d`, `δ`, Hodge Laplacians.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::complex::{MeshGeometry, OrientedSimplicialComplex};
use crate::sparse::CsrMatrix;
use crate::{Cochain, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StarMode {
    /// All diagonals 1: the combinatorial setting.
    Identity,
    /// Barycentric dual volume over primal measure.
    #[default]
    LumpedVolume,
}

#[derive(Clone, Debug)]
pub struct HodgeStar<T: Real> {
    pub degree: usize,
    pub diag: DVector<T>,
}

/// Hodge stars of every degree `0..=dims`.
pub fn assemble_hodge_star<T: Real>(
    complex: &OrientedSimplicialComplex<T>,
    geometry: Option<&MeshGeometry<T>>,
    mode: StarMode,
) -> Result<Vec<HodgeStar<T>>> {
    let n = complex.dims();
    match mode {
        StarMode::Identity => Ok((0..=n)
            .map(|k| HodgeStar { degree: k, diag: DVector::from_element(complex.count(k), T::one()) })
            .collect()),
        StarMode::LumpedVolume => {
            let owned;
            let geometry = match geometry {
                Some(g) => g,
                None => {
                    owned = complex.compute_geometry()?;
                    &owned
                }
            };
            if !complex.is_pure() {
                return Err(Error::InvalidParameter(
                    "lumped Hodge stars need every simplex to lie in a top-dimensional simplex".into(),
                ));
            }
            let dual = barycentric_dual_volumes(complex, geometry);
            (0..=n)
                .map(|k| {
                    let diag = DVector::from_iterator(
                        complex.count(k),
                        dual[k].iter().zip(&geometry.simplex_measures[k]).map(|(&d, &m)| d / m),
                    );
                    if let Some(i) = diag.iter().position(|&v| v <= T::zero()) {
                        return Err(Error::DegenerateSimplex(format!(
                            "{k}-simplex {i} has zero dual volume"
                        )));
                    }
                    Ok(HodgeStar { degree: k, diag })
                })
                .collect()
        }
    }
}

/// Barycentric dual cell volumes: for a k-simplex σ, the sum over flags σ ⊂ … ⊂ τ (τ top-dimensional)
/// of the (n-k)-volume of the simplex spanned by the barycenters along the flag.
fn barycentric_dual_volumes<T: Real>(
    complex: &OrientedSimplicialComplex<T>,
    geometry: &MeshGeometry<T>,
) -> Vec<Vec<T>> {
    let n = complex.dims();
    let mut dual: Vec<Vec<T>> = (0..=n).map(|k| vec![T::zero(); complex.count(k)]).collect();
    let perms = permutations(n + 1);
    let fact = |k: usize| -> f64 { (1..=k).map(|i| i as f64).product() };
    let mut prefix_idx = vec![0usize; n + 1];
    let mut pts: Vec<Vector3<T>> = Vec::with_capacity(n + 1);
    for top in complex.simplices(n) {
        for perm in &perms {
            // every ordering of the top simplex is a full flag; prefixes are its faces
            for j in 0..=n {
                let mut face: Vec<usize> = perm[..=j].iter().map(|&p| top[p]).collect();
                face.sort_unstable();
                prefix_idx[j] = complex.simplex_index(&face).expect("face of a simplex in complex");
            }
            for k in 0..=n {
                pts.clear();
                for (j, &idx) in prefix_idx.iter().enumerate().skip(k) {
                    let b = geometry.barycenters[j][idx];
                    pts.push(Vector3::new(b[0], b[1], b[2]));
                }
                let vol = crate::complex::simplex_volume(&pts);
                // each flag from σ is reached by (k+1)! orderings of σ's own vertices
                dual[k][prefix_idx[k]] += vol / T::of(fact(k + 1));
            }
        }
    }
    dual
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Assembled operators of one complex under one choice of Hodge stars.
#[derive(Clone, Debug)]
pub struct DecOperators<T: Real> {
    dims: usize,
    counts: Vec<usize>,
    complex_hash: String,
    stars: Vec<HodgeStar<T>>,
    /// `boundary[k]` = B_k in floating point; `boundary[0]` is 0 x N_0.
    boundary: Vec<CsrMatrix<T>>,
    /// `d[k]` = B_{k+1}ᵀ (N_{k+1} x N_k); `d[n]` is 0 x N_n.
    d: Vec<CsrMatrix<T>>,
    /// `codiff[k]` = *_{k-1}⁻¹ B_k *_k (N_{k-1} x N_k); `codiff[0]` is 0 x N_0.
    codiff: Vec<CsrMatrix<T>>,
    laplacian: Vec<CsrMatrix<T>>,
}

impl<T: Real> DecOperators<T> {
    pub fn assemble(complex: &OrientedSimplicialComplex<T>, stars: Vec<HodgeStar<T>>) -> Result<Self> {
        let n = complex.dims();
        if stars.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, got: stars.len() });
        }
        for (k, s) in stars.iter().enumerate() {
            if s.degree != k {
                return Err(Error::DegreeMismatch { expected: k, got: s.degree });
            }
            if s.diag.len() != complex.count(k) {
                return Err(Error::DimensionMismatch { expected: complex.count(k), got: s.diag.len() });
            }
            if s.diag.iter().any(|&v| v <= T::zero()) {
                return Err(Error::InvalidParameter(format!("star {k} has non-positive entries")));
            }
        }
        let counts = complex.counts();
        let boundary: Vec<CsrMatrix<T>> = (0..=n).map(|k| complex.boundary(k).to_real()).collect();
        let d: Vec<CsrMatrix<T>> = (0..=n)
            .map(|k| if k < n { boundary[k + 1].transpose() } else { CsrMatrix::zeros(0, counts[n]) })
            .collect();
        let diag = |k: usize| stars[k].diag.as_slice().to_vec();
        let inv = |k: usize| stars[k].diag.iter().map(|&v| T::one() / v).collect::<Vec<T>>();
        let codiff: Vec<CsrMatrix<T>> = (0..=n)
            .map(|k| {
                if k == 0 {
                    CsrMatrix::zeros(0, counts[0])
                } else {
                    boundary[k].scale_rows(&inv(k - 1)).scale_cols(&diag(k))
                }
            })
            .collect();
        let laplacian = (0..=n)
            .map(|k| {
                let mut l = CsrMatrix::zeros(counts[k], counts[k]);
                if k > 0 {
                    l = l.add(&d[k - 1].matmul(&codiff[k]));
                }
                if k < n {
                    l = l.add(&codiff[k + 1].matmul(&d[k]));
                }
                l
            })
            .collect();
        Ok(Self { dims: n, counts, complex_hash: complex.content_hash(), stars, boundary, d, codiff, laplacian })
    }

    /// Geometry, stars and operators in one call.
    pub fn from_complex(complex: &OrientedSimplicialComplex<T>, mode: StarMode) -> Result<Self> {
        let geometry = match mode {
            StarMode::Identity => None,
            StarMode::LumpedVolume => Some(complex.compute_geometry()?),
        };
        let stars = assemble_hodge_star(complex, geometry.as_ref(), mode)?;
        Self::assemble(complex, stars)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn complex_hash(&self) -> &str {
        &self.complex_hash
    }

    pub fn star(&self, k: usize) -> &DVector<T> {
        &self.stars[k].diag
    }

    pub fn boundary(&self, k: usize) -> &CsrMatrix<T> {
        &self.boundary[k]
    }

    pub fn d(&self, k: usize) -> &CsrMatrix<T> {
        &self.d[k]
    }

    pub fn codiff(&self, k: usize) -> &CsrMatrix<T> {
        &self.codiff[k]
    }

    pub fn laplacian(&self, k: usize) -> &CsrMatrix<T> {
        &self.laplacian[k]
    }

    fn check(&self, w: &Cochain<T>) -> Result<()> {
        if w.degree > self.dims {
            return Err(Error::DegreeMismatch { expected: self.dims, got: w.degree });
        }
        w.expect_len(self.count(w.degree))
    }

    /// `d_k ω`, a (k+1)-cochain (empty for k = n).
    pub fn apply_d(&self, w: &Cochain<T>) -> Result<Cochain<T>> {
        self.check(w)?;
        Ok(Cochain::new(w.degree + 1, self.d[w.degree].mul_vec(&w.values)))
    }

    /// `δ_k ω`, a (k-1)-cochain. For k = 0 returns an empty degree-0 cochain.
    pub fn apply_codiff(&self, w: &Cochain<T>) -> Result<Cochain<T>> {
        self.check(w)?;
        Ok(Cochain::new(w.degree.saturating_sub(1), self.codiff[w.degree].mul_vec(&w.values)))
    }

    pub fn apply_laplacian(&self, w: &Cochain<T>) -> Result<Cochain<T>> {
        self.check(w)?;
        Ok(Cochain::new(w.degree, self.laplacian[w.degree].mul_vec(&w.values)))
    }

    /// Hodge inner product `aᵀ *_k b`.
    pub fn inner(&self, a: &Cochain<T>, b: &Cochain<T>) -> Result<T> {
        b.expect_degree(a.degree)?;
        self.check(a)?;
        self.check(b)?;
        Ok(weighted_dot(&a.values, self.star(a.degree), &b.values))
    }

    pub fn norm(&self, a: &Cochain<T>) -> Result<T> {
        Ok(self.inner(a, a)?.sqrt())
    }
}

/// Hodge inner product with an explicit star.
pub fn hodge_inner<T: Real>(a: &Cochain<T>, b: &Cochain<T>, star: &HodgeStar<T>) -> Result<T> {
    b.expect_degree(a.degree)?;
    a.expect_degree(star.degree)?;
    a.expect_len(star.diag.len())?;
    b.expect_len(star.diag.len())?;
    Ok(weighted_dot(&a.values, &star.diag, &b.values))
}

pub(crate) fn weighted_dot<T: Real>(a: &DVector<T>, w: &DVector<T>, b: &DVector<T>) -> T {
    a.iter().zip(w.iter()).zip(b.iter()).fold(T::zero(), |s, ((&x, &m), &y)| s + x * m * y)
}
