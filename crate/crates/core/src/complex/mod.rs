//! Oriented simplicial complexes with signed boundary matrices.
//!
//! Every simplex is stored as its strictly increasing vertex tuple; the orientation is the
//! sorted order. Simplices of each dimension are kept in lexicographic order, so the indexing
//! does not depend on the order in which the input mesh lists its elements.

mod generators;
mod geometry;
pub mod io;

use std::collections::HashMap;

use sha2::{Digest, Sha256};

pub use generators::{tet_grid, ShapeSpec, TORUS_MAJOR, TORUS_MINOR};
pub use geometry::MeshGeometry;
pub(crate) use geometry::simplex_volume;

use crate::sparse::CsrMatrix;
use crate::{Error, Real, Result};

#[derive(Clone, Debug)]
pub struct OrientedSimplicialComplex<T: Real> {
    dims: usize,
    /// `simplices[k][i]` is the vertex tuple of the i-th k-simplex.
    simplices: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
    /// `boundary[k]` is B_k (N_{k-1} x N_k); `boundary[0]` is the empty 0 x N_0 map.
    boundary: Vec<CsrMatrix<i64>>,
    coords: Vec<[T; 3]>,
}

impl<T: Real> OrientedSimplicialComplex<T> {
    /// Builds a surface complex from triangles.
    pub fn build_from_triangle_mesh(vertices: Vec<[T; 3]>, faces: &[[usize; 3]]) -> Result<Self> {
        let tops: Vec<Vec<usize>> = faces.iter().map(|f| f.to_vec()).collect();
        Self::build(vertices, 2, &tops)
    }

    /// Builds a volume complex from tetrahedra.
    pub fn build_from_tet_mesh(vertices: Vec<[T; 3]>, tets: &[[usize; 4]]) -> Result<Self> {
        let tops: Vec<Vec<usize>> = tets.iter().map(|t| t.to_vec()).collect();
        Self::build(vertices, 3, &tops)
    }

    /// Builds the closure of an arbitrary list of simplices (each of dimension ≤ `dims`).
    ///
    /// `dims` may exceed the largest input simplex; the missing dimensions are then empty.
    pub fn build(vertices: Vec<[T; 3]>, dims: usize, simplices: &[Vec<usize>]) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidParameter(format!("complex dimension {dims} not in 1..=3")));
        }
        let nv = vertices.len();
        let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
        let mut sets: Vec<std::collections::BTreeSet<Vec<usize>>> =
            vec![Default::default(); dims + 1];
        for v in 0..nv {
            sets[0].insert(vec![v]);
        }
        for s in simplices {
            if s.is_empty() || s.len() > dims + 1 {
                return Err(Error::InvalidParameter(format!(
                    "simplex {s:?} does not fit a {dims}-complex"
                )));
            }
            for &v in s {
                if v >= nv {
                    return Err(Error::IndexOutOfRange { index: v, len: nv });
                }
            }
            let mut sorted = s.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::DegenerateSimplex(format!("repeated vertex in {s:?}")));
            }
            if seen.insert(sorted.clone(), ()).is_some() {
                return Err(Error::DuplicateSimplex(sorted));
            }
            for_each_face(&sorted, |face| {
                sets[face.len() - 1].insert(face.to_vec());
            });
        }
        let simplices: Vec<Vec<Vec<usize>>> =
            sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self::from_sorted(vertices, dims, simplices))
    }

    fn from_sorted(coords: Vec<[T; 3]>, dims: usize, simplices: Vec<Vec<Vec<usize>>>) -> Self {
        let index: Vec<HashMap<Vec<usize>, usize>> = simplices
            .iter()
            .map(|list| list.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        let mut boundary = vec![CsrMatrix::zeros(0, simplices[0].len())];
        for k in 1..=dims {
            let mut trips = Vec::with_capacity(simplices[k].len() * (k + 1));
            for (j, s) in simplices[k].iter().enumerate() {
                for i in 0..=k {
                    let face: Vec<usize> =
                        s.iter().enumerate().filter(|&(p, _)| p != i).map(|(_, &v)| v).collect();
                    let sign = if i % 2 == 0 { 1 } else { -1 };
                    trips.push((index[k - 1][&face], j, sign));
                }
            }
            boundary.push(CsrMatrix::from_triplets(
                simplices[k - 1].len(),
                simplices[k].len(),
                trips,
            ));
        }
        Self { dims, simplices, index, boundary, coords }
    }

    pub fn generate(shape: &ShapeSpec) -> Result<Self> {
        generators::generate(shape)
    }

    /// Maximum simplex dimension.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn count(&self, k: usize) -> usize {
        self.simplices.get(k).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..=self.dims).map(|k| self.count(k)).collect()
    }

    pub fn simplices(&self, k: usize) -> &[Vec<usize>] {
        &self.simplices[k]
    }

    /// Index of a k-simplex given by any ordering of its vertices.
    pub fn simplex_index(&self, vertices: &[usize]) -> Option<usize> {
        let mut key = vertices.to_vec();
        key.sort_unstable();
        self.index.get(key.len().checked_sub(1)?)?.get(&key).copied()
    }

    /// Signed incidence matrix B_k (N_{k-1} x N_k), for 1 ≤ k ≤ dims.
    pub fn boundary(&self, k: usize) -> &CsrMatrix<i64> {
        &self.boundary[k]
    }

    pub fn coords(&self) -> &[[T; 3]] {
        &self.coords
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.dims).map(|k| if k % 2 == 0 { 1 } else { -1 } * self.count(k) as i64).sum()
    }

    /// Connected components of the 1-skeleton; `labels[v]` is the component of vertex `v`.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let mut uf = UnionFind::new(self.count(0));
        if self.dims >= 1 {
            for e in &self.simplices[1] {
                uf.union(e[0], e[1]);
            }
        }
        uf.labels()
    }

    /// True when every simplex is a face of some top-dimensional simplex.
    pub fn is_pure(&self) -> bool {
        let n = self.dims;
        (0..n).all(|k| {
            let mut covered = vec![false; self.count(k)];
            for s in &self.simplices[k + 1] {
                for_each_face(s, |f| {
                    if f.len() == k + 1 {
                        covered[self.index[k][f]] = true;
                    }
                });
            }
            covered.into_iter().all(|c| c)
        })
    }

    /// Short content hash over counts, simplices and coordinates.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dims as u64).to_le_bytes());
        for list in &self.simplices {
            h.update((list.len() as u64).to_le_bytes());
            for s in list {
                for &v in s {
                    h.update((v as u64).to_le_bytes());
                }
            }
        }
        for p in &self.coords {
            for c in p {
                h.update(c.to_f64().to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn compute_geometry(&self) -> Result<MeshGeometry<T>> {
        MeshGeometry::compute(self)
    }

    /// Same combinatorics with a different scalar type.
    pub fn cast<U: Real>(&self) -> OrientedSimplicialComplex<U> {
        OrientedSimplicialComplex {
            dims: self.dims,
            simplices: self.simplices.clone(),
            index: self.index.clone(),
            boundary: self.boundary.clone(),
            coords: self.coords.iter().map(|p| p.map(|c| U::of(c.to_f64()))).collect(),
        }
    }
}

/// Calls `f` on every non-empty sub-tuple of a sorted simplex (including itself).
fn for_each_face(s: &[usize], mut f: impl FnMut(&[usize])) {
    let n = s.len();
    let mut buf = Vec::with_capacity(n);
    for mask in 1u32..(1 << n) {
        buf.clear();
        buf.extend((0..n).filter(|i| mask & (1 << i) != 0).map(|i| s[i]));
        f(&buf);
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }

    /// Number of sets and a dense label per element, in order of first appearance.
    pub fn labels(&mut self) -> (usize, Vec<usize>) {
        let n = self.parent.len();
        let mut map = HashMap::new();
        let mut labels = Vec::with_capacity(n);
        for x in 0..n {
            let r = self.find(x);
            let next = map.len();
            labels.push(*map.entry(r).or_insert(next));
        }
        (map.len(), labels)
    }
}
