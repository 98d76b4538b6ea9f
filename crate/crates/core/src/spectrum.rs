//! Truncated Hodge eigenbases, base/fiber projections, spectral derivative matrices and the
//! discrete Hodge decomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dec::{weighted_dot, DecOperators};
use crate::linalg::{preconditioned_cg, SkylineCholesky};
use crate::sparse::CsrMatrix;
use crate::{Cochain, Error, Real, Result};

/// Relative zero threshold for eigenvalues.
pub const TAU_ZERO: f64 = 1e-8;
/// Shift used by the shift-invert eigensolver.
pub const SHIFT: f64 = -1e-6;
/// Above this many simplices `Auto` switches from the dense to the shift-invert path.
pub const DENSE_LIMIT: usize = 4000;
/// Default truncation dimension.
pub const DEFAULT_MODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Clone, Debug)]
pub struct HodgeSpectrum<T: Real> {
    pub degree: usize,
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// N_k x m_k, Hodge-orthonormal columns.
    pub basis: DMatrix<T>,
    pub harmonic_indices: Vec<usize>,
    /// Largest eigenvalue of L_k (or an upper bound on it for the shift-invert path).
    pub lambda_max: T,
    pub complex_hash: String,
}

impl<T: Real> HodgeSpectrum<T> {
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Harmonic count; equals b_k whenever at least one retained eigenvalue is non-harmonic.
    pub fn betti(&self) -> usize {
        self.harmonic_indices.len()
    }

    /// True when the truncation reaches past the nullspace, so `betti()` is the full b_k.
    pub fn nullspace_resolved(&self) -> bool {
        self.harmonic_indices.len() < self.eigenvalues.len()
    }

    pub fn expect_betti(&self, expected: usize) -> Result<()> {
        if self.betti() == expected {
            Ok(())
        } else {
            Err(Error::BettiMismatch { expected: vec![expected], found: vec![self.betti()] })
        }
    }

    pub fn to_record(&self) -> SpectrumRecord {
        SpectrumRecord {
            degree: self.degree,
            eigenvalues: self.eigenvalues.iter().map(|v| v.to_f64()).collect(),
            betti: self.betti(),
            harmonic_indices: self.harmonic_indices.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectrumRecord {
    pub degree: usize,
    pub eigenvalues: Vec<f64>,
    pub betti: usize,
    pub harmonic_indices: Vec<usize>,
}

/// Lowest `m` eigenpairs of L_k with Hodge-orthonormal eigenvectors.
///
/// Works on the symmetric matrix `A = *^{1/2} L *^{-1/2}` and maps back with `φ = *^{-1/2} y`.
pub fn eigensolve<T: Real>(dec: &DecOperators<T>, k: usize, m: usize, method: EigenMethod) -> Result<HodgeSpectrum<T>> {
    if k > dec.dims() {
        return Err(Error::DegreeMismatch { expected: dec.dims(), got: k });
    }
    let n = dec.count(k);
    if m == 0 || m > n {
        return Err(Error::InvalidTruncation { m, n });
    }
    let star = dec.star(k);
    let sqrt_s: Vec<T> = star.iter().map(|v| v.sqrt()).collect();
    let inv_sqrt_s: Vec<T> = sqrt_s.iter().map(|&v| T::one() / v).collect();
    let a = dec.laplacian(k).scale_rows(&sqrt_s).scale_cols(&inv_sqrt_s);
    let method = match method {
        EigenMethod::Auto if n <= DENSE_LIMIT => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::ShiftInvert,
        other => other,
    };
    let (vals, y, lambda_max) = match method {
        EigenMethod::ShiftInvert if n > m => shift_invert(&a, m)?,
        _ => dense(&a, m),
    };
    let mut basis = DMatrix::from_fn(n, m, |r, c| y[(r, c)] * inv_sqrt_s[r]);
    hodge_gram_schmidt(&mut basis, star);
    let thresh = T::of(TAU_ZERO) * lambda_max.max(T::one());
    let harmonic_indices = (0..m).filter(|&i| vals[i] < thresh).collect();
    Ok(HodgeSpectrum {
        degree: k,
        eigenvalues: vals,
        basis,
        harmonic_indices,
        lambda_max,
        complex_hash: dec.complex_hash().to_string(),
    })
}

fn symmetrized_dense<T: Real>(a: &CsrMatrix<T>) -> DMatrix<T> {
    let d = a.to_dense();
    (&d + d.transpose()) * T::of(0.5)
}

fn dense<T: Real>(a: &CsrMatrix<T>, m: usize) -> (Vec<T>, DMatrix<T>, T) {
    let eig = SymmetricEigen::new(symmetrized_dense(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let lambda_max = order.last().map_or(T::zero(), |&i| eig.eigenvalues[i]);
    let vals = order[..m].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), m, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs, lambda_max)
}

/// Block subspace iteration on `(A - σI)⁻¹` with Rayleigh–Ritz on `A`.
///
/// A block (rather than single-vector Krylov) iteration resolves repeated eigenvalues, which are
/// common on symmetric meshes.
fn shift_invert<T: Real>(a: &CsrMatrix<T>, m: usize) -> Result<(Vec<T>, DMatrix<T>, T)> {
    let n = a.nrows();
    let shifted = a.add(&CsrMatrix::identity(n, -T::of(SHIFT)));
    let chol = SkylineCholesky::factor(&shifted)?;
    let p = (2 * m).max(m + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, p, |_, _| T::of(StandardNormal.sample(&mut rng)));
    let max_iter = 50 * m;
    let gersh = (0..n)
        .map(|r| a.row(r).1.iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), |mx, v| mx.max(v));
    let mut worst = f64::INFINITY;
    for _ in 0..max_iter {
        let mut y = DMatrix::zeros(n, p);
        for j in 0..p {
            y.set_column(j, &chol.solve(&x.column(j).into_owned()));
        }
        let q = y.qr().q();
        let aq = a.mul_dense(&q);
        let h = q.transpose() * &aq;
        let eig = SymmetricEigen::new((&h + h.transpose()) * T::of(0.5));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let v = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        x = &q * &v;
        let ax = &aq * &v;
        let theta: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        worst = 0.0;
        for i in 0..m {
            let res = (ax.column(i) - x.column(i) * theta[i]).norm().to_f64();
            worst = worst.max(res / theta[i].to_f64().abs().max(1.0));
        }
        if worst < 1e-10 {
            let vecs = x.columns(0, m).into_owned();
            return Ok((theta[..m].to_vec(), vecs, gersh));
        }
    }
    Err(Error::ConvergenceFailure { iterations: max_iter, residual: worst })
}

/// Re-orthonormalizes columns under `⟨a, b⟩ = aᵀ diag(star) b` (two passes of modified Gram–Schmidt).
pub fn hodge_gram_schmidt<T: Real>(basis: &mut DMatrix<T>, star: &DVector<T>) {
    for _ in 0..2 {
        for j in 0..basis.ncols() {
            for i in 0..j {
                let bi = basis.column(i).into_owned();
                let bj = basis.column(j).into_owned();
                let proj = weighted_dot(&bi, star, &bj);
                basis.column_mut(j).axpy(-proj, &bi, T::one());
            }
            let bj = basis.column(j).into_owned();
            let nrm = weighted_dot(&bj, star, &bj).sqrt();
            basis.column_mut(j).scale_mut(T::one() / nrm);
        }
    }
}

/// A truncated spectral basis together with its projections and derivative matrices.
#[derive(Clone, Debug)]
pub struct SpectralSubspace<T: Real> {
    pub spectrum: HodgeSpectrum<T>,
    star: DVector<T>,
    /// `Φᵀ diag(*)`, cached for coefficient extraction (m x N).
    analysis: DMatrix<T>,
    /// m_{k+1} x m_k.
    pub m_d: DMatrix<T>,
    /// m_{k-1} x m_k.
    pub m_delta: DMatrix<T>,
    /// Diagonal of P_H.
    pub harmonic_mask: Vec<bool>,
}

impl<T: Real> SpectralSubspace<T> {
    /// `lower` / `upper` are the spectra at degrees k-1 and k+1; `None` gives a zero-row matrix.
    pub fn build(
        spectrum: HodgeSpectrum<T>,
        dec: &DecOperators<T>,
        lower: Option<&HodgeSpectrum<T>>,
        upper: Option<&HodgeSpectrum<T>>,
    ) -> Result<Self> {
        let k = spectrum.degree;
        let hash = dec.complex_hash();
        for s in std::iter::once(&spectrum).chain(lower).chain(upper) {
            if s.complex_hash != hash {
                return Err(Error::ComplexMismatch(s.complex_hash.clone(), hash.to_string()));
            }
        }
        if let Some(l) = lower {
            if k == 0 || l.degree + 1 != k {
                return Err(Error::DegreeMismatch { expected: k.saturating_sub(1), got: l.degree });
            }
        }
        if let Some(u) = upper {
            if u.degree != k + 1 {
                return Err(Error::DegreeMismatch { expected: k + 1, got: u.degree });
            }
        }
        let phi = &spectrum.basis;
        let m = phi.ncols();
        let m_d = match upper {
            Some(u) => {
                let dphi = dec.d(k).mul_dense(phi);
                analysis_matrix(&u.basis, dec.star(k + 1)) * dphi
            }
            None => DMatrix::zeros(0, m),
        };
        let m_delta = match lower {
            Some(l) => {
                let cphi = dec.codiff(k).mul_dense(phi);
                analysis_matrix(&l.basis, dec.star(k - 1)) * cphi
            }
            None => DMatrix::zeros(0, m),
        };
        let mut harmonic_mask = vec![false; m];
        for &i in &spectrum.harmonic_indices {
            harmonic_mask[i] = true;
        }
        let star = dec.star(k).clone();
        let analysis = analysis_matrix(phi, &star);
        Ok(Self { spectrum, star, analysis, m_d, m_delta, harmonic_mask })
    }

    pub fn degree(&self) -> usize {
        self.spectrum.degree
    }

    pub fn modes(&self) -> usize {
        self.spectrum.modes()
    }

    pub fn len(&self) -> usize {
        self.spectrum.basis.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.spectrum.basis
    }

    pub fn star(&self) -> &DVector<T> {
        &self.star
    }

    pub fn complex_hash(&self) -> &str {
        &self.spectrum.complex_hash
    }

    pub fn harmonic_indices(&self) -> &[usize] {
        &self.spectrum.harmonic_indices
    }

    /// `Φᵀ diag(*)`.
    pub fn analysis(&self) -> &DMatrix<T> {
        &self.analysis
    }

    pub fn p_h(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.modes(), self.modes(), |r, c| {
            if r == c && self.harmonic_mask[r] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    fn check(&self, w: &Cochain<T>) -> Result<()> {
        w.expect_degree(self.degree())?;
        w.expect_len(self.len())
    }

    /// `c = Φᵀ diag(*) ω`.
    pub fn spectral_coeffs(&self, w: &Cochain<T>) -> Result<DVector<T>> {
        self.check(w)?;
        Ok(self.coeffs_raw(&w.values))
    }

    pub(crate) fn coeffs_raw(&self, w: &DVector<T>) -> DVector<T> {
        &self.analysis * w
    }

    /// `Φ c`.
    pub fn reconstruct(&self, c: &DVector<T>) -> Result<Cochain<T>> {
        if c.len() != self.modes() {
            return Err(Error::DimensionMismatch { expected: self.modes(), got: c.len() });
        }
        Ok(Cochain::new(self.degree(), &self.spectrum.basis * c))
    }

    /// `Π_base ω = Φ Φᵀ diag(*) ω`.
    pub fn project_base(&self, w: &Cochain<T>) -> Result<Cochain<T>> {
        self.check(w)?;
        Ok(Cochain::new(self.degree(), self.project_base_raw(&w.values)))
    }

    /// `(I - Π_base) ω`.
    pub fn project_fiber(&self, w: &Cochain<T>) -> Result<Cochain<T>> {
        self.check(w)?;
        Ok(Cochain::new(self.degree(), &w.values - self.project_base_raw(&w.values)))
    }

    pub(crate) fn project_base_raw(&self, w: &DVector<T>) -> DVector<T> {
        &self.spectrum.basis * (&self.analysis * w)
    }

    /// Hodge inner product of degree-k value vectors.
    pub fn inner(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        weighted_dot(a, &self.star, b)
    }
}

fn analysis_matrix<T: Real>(phi: &DMatrix<T>, star: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_fn(phi.ncols(), phi.nrows(), |r, c| phi[(c, r)] * star[c])
}

/// Spectra at degrees k-1, k, k+1 and the subspace at k, with `m` modes per degree (capped at N).
pub fn subspace_for_degree<T: Real>(
    dec: &DecOperators<T>,
    k: usize,
    m: usize,
    method: EigenMethod,
) -> Result<SpectralSubspace<T>> {
    let solve = |deg: usize| -> Result<Option<HodgeSpectrum<T>>> {
        let n = dec.count(deg);
        if n == 0 {
            return Ok(None);
        }
        eigensolve(dec, deg, m.min(n), method).map(Some)
    };
    let main = eigensolve(dec, k, m.min(dec.count(k)), method)?;
    let lower = if k > 0 { solve(k - 1)? } else { None };
    let upper = if k < dec.dims() { solve(k + 1)? } else { None };
    SpectralSubspace::build(main, dec, lower.as_ref(), upper.as_ref())
}

#[derive(Clone, Debug)]
pub struct HodgeParts<T: Real> {
    pub exact: Cochain<T>,
    pub coexact: Cochain<T>,
    pub harmonic: Cochain<T>,
}

const DECOMPOSE_TOL: f64 = 1e-14;

/// Orthogonal split ω = d_{k-1}x + δ_{k+1}y + h by two least-squares solves.
pub fn hodge_decompose<T: Real>(dec: &DecOperators<T>, w: &Cochain<T>) -> Result<HodgeParts<T>> {
    let k = w.degree;
    if k > dec.dims() {
        return Err(Error::DegreeMismatch { expected: dec.dims(), got: k });
    }
    w.expect_len(dec.count(k))?;
    let s = dec.star(k);
    let n = w.len();
    let tol = DECOMPOSE_TOL.max(T::EPS * 100.0);
    let exact = if k > 0 {
        // argmin ‖B_kᵀx − ω‖_*:  (B_k * B_kᵀ) x = B_k * ω
        let b = dec.boundary(k);
        let sw = w.values.component_mul(s);
        let rhs = b.mul_vec(&sw);
        let Some(tol) = cancellation_tol(b, &sw, &rhs, tol, false) else {
            return hodge_decompose_rest(dec, w, DVector::zeros(n));
        };
        let op = |x: &DVector<T>| b.mul_vec(&b.tr_mul_vec(x).component_mul(s));
        let diag = jacobi(b, s, false);
        let (x, _) = preconditioned_cg(op, Some(&diag), &rhs, tol, 20 * b.nrows() + 100)?;
        b.tr_mul_vec(&x)
    } else {
        DVector::zeros(n)
    };
    hodge_decompose_rest(dec, w, exact)
}

/// Coexact and harmonic parts once the exact part is known.
fn hodge_decompose_rest<T: Real>(dec: &DecOperators<T>, w: &Cochain<T>, exact: DVector<T>) -> Result<HodgeParts<T>> {
    let k = w.degree;
    let s = dec.star(k);
    let n = w.len();
    let tol = DECOMPOSE_TOL.max(T::EPS * 100.0);
    let coexact = if k < dec.dims() && dec.count(k + 1) > 0 {
        // coexact = *⁻¹ B_{k+1} z with (B_{k+1}ᵀ *⁻¹ B_{k+1}) z = B_{k+1}ᵀ ω
        let b = dec.boundary(k + 1);
        let sinv = s.map(|v| T::one() / v);
        let rhs = b.tr_mul_vec(&w.values);
        match cancellation_tol(b, &w.values, &rhs, tol, true) {
            Some(tol) => {
                let op = |z: &DVector<T>| b.tr_mul_vec(&b.mul_vec(z).component_mul(&sinv));
                let diag = jacobi(b, &sinv, true);
                let (z, _) = preconditioned_cg(op, Some(&diag), &rhs, tol, 20 * b.ncols() + 100)?;
                b.mul_vec(&z).component_mul(&sinv)
            }
            None => DVector::zeros(n),
        }
    } else {
        DVector::zeros(n)
    };
    let harmonic = &w.values - &exact - &coexact;
    Ok(HodgeParts {
        exact: Cochain::new(k, exact),
        coexact: Cochain::new(k, coexact),
        harmonic: Cochain::new(k, harmonic),
    })
}

/// Relative CG tolerance for `rhs = B x` (or `Bᵀ x`), raised to the rounding level of the
/// product: entries of `rhs` that cancel below `|B||x|·ε` carry no information. `None` when the
/// whole right-hand side is at that level.
fn cancellation_tol<T: Real>(b: &CsrMatrix<T>, x: &DVector<T>, rhs: &DVector<T>, tol: f64, transposed: bool) -> Option<f64> {
    let abs_b = b.map(|v| v.abs());
    let abs_x = x.map(|v| v.abs());
    let scale = if transposed { abs_b.tr_mul_vec(&abs_x) } else { abs_b.mul_vec(&abs_x) }.norm().to_f64();
    let floor = CANCELLATION_ULPS * T::EPS * scale;
    let r = rhs.norm().to_f64();
    if r <= floor {
        None
    } else {
        Some(tol.max(floor / r))
    }
}

/// Rounding allowance, in units of ε, for the right-hand sides of the decomposition solves.
const CANCELLATION_ULPS: f64 = 64.0;

/// Inverse diagonal of `B W Bᵀ` (or `Bᵀ W B` when `transposed`), guarding empty rows.
fn jacobi<T: Real>(b: &CsrMatrix<T>, w: &DVector<T>, transposed: bool) -> DVector<T> {
    let mut diag = DVector::zeros(if transposed { b.ncols() } else { b.nrows() });
    for (r, c, v) in b.triplets() {
        if transposed {
            diag[c] += v * v * w[r];
        } else {
            diag[r] += v * v * w[c];
        }
    }
    diag.map(|d| if d > T::zero() { T::one() / d } else { T::one() })
}
