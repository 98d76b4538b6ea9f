//! Linear solvers: conjugate gradients and an envelope (skyline) Cholesky factorisation with
//! reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::sparse::CsrMatrix;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
///
/// Consistent singular systems are fine: starting from zero, iterates stay in the range of the
/// operator.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&DVector<T>) -> DVector<T>,
    b: &DVector<T>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(DVector<T>, CgOutcome)> {
    preconditioned_cg(apply, None, b, rel_tol, max_iter)
}

/// Conjugate gradients with an optional Jacobi preconditioner (`inv_diag`, entries > 0).
pub fn preconditioned_cg<T: Real>(
    apply: impl Fn(&DVector<T>) -> DVector<T>,
    inv_diag: Option<&DVector<T>>,
    b: &DVector<T>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(DVector<T>, CgOutcome)> {
    let n = b.len();
    let bnorm = b.norm().to_f64();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok((x, CgOutcome { iterations: 0, relative_residual: 0.0 }));
    }
    let precond = |r: &DVector<T>| match inv_diag {
        Some(m) => r.component_mul(m),
        None => r.clone(),
    };
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    // On singular systems the recursive residual bottoms out at rounding level and further
    // steps can blow up nullspace components, so keep the best iterate and stop on stagnation.
    let mut best = (f64::INFINITY, x.clone());
    let mut since_best = 0;
    for it in 0..max_iter {
        let rel = r.norm().to_f64() / bnorm;
        if rel <= rel_tol {
            return Ok((x, CgOutcome { iterations: it, relative_residual: rel }));
        }
        if rel < 0.5 * best.0 {
            best = (rel, x.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > STAGNATION_STEPS {
                break;
            }
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= T::zero() {
            // breakdown: direction in the nullspace
            break;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    // true residual decides
    let true_rel = |x: &DVector<T>| (b - apply(x)).norm().to_f64() / bnorm;
    let (res_x, res_best) = (true_rel(&x), true_rel(&best.1));
    let (x, res) = if res_x <= res_best { (x, res_x) } else { (best.1, res_best) };
    if res <= (rel_tol * 10.0).max(ROUNDING_FLOOR * T::EPS) {
        Ok((x, CgOutcome { iterations: max_iter, relative_residual: res }))
    } else {
        Err(Error::SolverFailure(format!(
            "conjugate gradients stalled at relative residual {res:e} (tolerance {rel_tol:e})"
        )))
    }
}

/// Iterations without halving the best residual before giving up.
const STAGNATION_STEPS: usize = 200;
/// Relative residual, in units of machine epsilon, accepted when the tolerance is below what
/// rounding allows.
const ROUNDING_FLOOR: f64 = 1e4;

/// Reverse Cuthill-McKee permutation of a structurally symmetric matrix.
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee<T>(a: &CsrMatrix<T>) -> Vec<usize>
where
    T: Copy + num_traits::Zero + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + PartialEq,
{
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap();
        let start = pseudo_peripheral(a, start, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> =
                a.row(v).0.iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral<T>(a: &CsrMatrix<T>, start: usize, degree: &[usize]) -> usize
where
    T: Copy + num_traits::Zero + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + PartialEq,
{
    let mut node = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(a, node);
        let depth = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if depth <= ecc && node != start {
            break;
        }
        ecc = depth;
        node = (0..a.nrows())
            .filter(|&i| levels[i] == Some(depth))
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
    }
    node
}

fn bfs_levels<T>(a: &CsrMatrix<T>, start: usize) -> Vec<Option<usize>>
where
    T: Copy + num_traits::Zero + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + PartialEq,
{
    let mut level = vec![None; a.nrows()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &u in a.row(v).0 {
            if level[u].is_none() {
                level[u] = Some(lv + 1);
                queue.push_back(u);
            }
        }
    }
    level
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ` of a sparse symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SkylineCholesky<T> {
    perm: Vec<usize>,
    first: Vec<usize>,
    /// Row `i` of L stored for columns `first[i]..=i`.
    rows: Vec<Vec<T>>,
}

impl<T: Real> SkylineCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!("{}x{} is not square", n, a.ncols())));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (r, c, _) in a.triplets() {
            let (i, j) = (inv[r], inv[c]);
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
        let mut rows: Vec<Vec<T>> = (0..n).map(|i| vec![T::zero(); i - first[i] + 1]).collect();
        for (r, c, v) in a.triplets() {
            let (i, j) = (inv[r], inv[c]);
            if j <= i {
                rows[i][j - first[i]] = v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = rows[i][j - fi];
                for k in lo..j {
                    s -= rows[i][k - fi] * rows[j][k - fj];
                }
                if j == i {
                    if s <= T::zero() {
                        return Err(Error::SingularSystem(format!(
                            "non-positive pivot {:e} at row {i}",
                            s.to_f64()
                        )));
                    }
                    rows[i][i - fi] = s.sqrt();
                } else {
                    rows[i][j - fi] = s / rows[j][j - fj];
                }
            }
        }
        Ok(Self { perm, first, rows })
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.perm.len();
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.rows[i][i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}
