use nalgebra::{DMatrix, Vector3};

use super::OrientedSimplicialComplex;
use crate::{Error, Real, Result};

/// Euclidean measures and reference points of every simplex.
#[derive(Clone, Debug)]
pub struct MeshGeometry<T: Real> {
    /// `simplex_measures[k][i]`: length / area / volume; 1 for vertices.
    pub simplex_measures: Vec<Vec<T>>,
    pub barycenters: Vec<Vec<[T; 3]>>,
    /// Unit vector from the lower to the higher vertex of each edge.
    pub edge_directions: Vec<[T; 3]>,
    /// Unit normal `(v1 - v0) x (v2 - v0)` of each triangle.
    pub face_normals: Vec<[T; 3]>,
    pub bbox_min: [T; 3],
    pub bbox_max: [T; 3],
}

fn vec3<T: Real>(p: &[T; 3]) -> Vector3<T> {
    Vector3::new(p[0], p[1], p[2])
}

/// k-volume of the simplex spanned by `pts` (k + 1 points), via the Gram determinant.
pub(crate) fn simplex_volume<T: Real>(pts: &[Vector3<T>]) -> T {
    let k = pts.len() - 1;
    if k == 0 {
        return T::one();
    }
    let edges = DMatrix::from_fn(3, k, |r, c| pts[c + 1][r] - pts[0][r]);
    let gram = edges.transpose() * &edges;
    let det = gram.determinant().max(T::zero());
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    det.sqrt() / T::of(fact)
}

impl<T: Real> MeshGeometry<T> {
    pub fn compute(complex: &OrientedSimplicialComplex<T>) -> Result<Self> {
        let coords = complex.coords();
        if coords.is_empty() {
            return Err(Error::InvalidParameter("complex has no vertices".into()));
        }
        let mut lo = coords[0];
        let mut hi = coords[0];
        for p in coords {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let diag = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).fold(T::zero(), |s, x| s + x).sqrt();
        let mut simplex_measures = Vec::new();
        let mut barycenters = Vec::new();
        for k in 0..=complex.dims() {
            let floor = T::of(1e-14) * diag.powi(k as i32);
            let mut meas = Vec::with_capacity(complex.count(k));
            let mut bary = Vec::with_capacity(complex.count(k));
            for s in complex.simplices(k) {
                let pts: Vec<Vector3<T>> = s.iter().map(|&v| vec3(&coords[v])).collect();
                let vol = simplex_volume(&pts);
                if k > 0 && vol <= floor {
                    return Err(Error::DegenerateSimplex(format!(
                        "{k}-simplex {s:?} has measure {:e}",
                        vol.to_f64()
                    )));
                }
                meas.push(vol);
                let c = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / T::of(pts.len() as f64);
                bary.push([c[0], c[1], c[2]]);
            }
            simplex_measures.push(meas);
            barycenters.push(bary);
        }
        let edge_directions = if complex.dims() >= 1 {
            complex
                .simplices(1)
                .iter()
                .map(|e| {
                    let d = (vec3(&coords[e[1]]) - vec3(&coords[e[0]])).normalize();
                    [d[0], d[1], d[2]]
                })
                .collect()
        } else {
            Vec::new()
        };
        let face_normals = if complex.dims() >= 2 {
            complex
                .simplices(2)
                .iter()
                .map(|f| {
                    let p0 = vec3(&coords[f[0]]);
                    let nrm = (vec3(&coords[f[1]]) - p0).cross(&(vec3(&coords[f[2]]) - p0)).normalize();
                    [nrm[0], nrm[1], nrm[2]]
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { simplex_measures, barycenters, edge_directions, face_normals, bbox_min: lo, bbox_max: hi })
    }

    pub fn bbox_diagonal(&self) -> T {
        (0..3)
            .map(|a| (self.bbox_max[a] - self.bbox_min[a]).powi(2))
            .fold(T::zero(), |s, x| s + x)
            .sqrt()
    }

    pub fn mean_edge_length(&self) -> T {
        let e = &self.simplex_measures[1];
        e.iter().fold(T::zero(), |s, &x| s + x) / T::of(e.len().max(1) as f64)
    }
}
