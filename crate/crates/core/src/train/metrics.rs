//! Evaluation metrics.
//!
//! Fidelities all have the form `exp(−α · relative error)` and equal 1 exactly when the
//! prediction matches the target. When the reference quantity of the target vanishes (for
//! example the exterior derivative of a harmonic target) the relative error is taken against
//! the value that quantity would have if the target's energy sat at the first non-zero
//! eigenvalue `λ₁` of the retained spectrum.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::complex::{MeshGeometry, OrientedSimplicialComplex, UnionFind};
use crate::spectrum::SpectralSubspace;
use crate::{Cochain, Dec64, Error, Result};

/// Fractions of the target range at which β₀ is compared.
pub const BETA0_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const IOU_LEVEL: f64 = 0.5;
/// A target quantity below this fraction of its fallback scale counts as vanishing.
const REFERENCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// `‖p − t‖_* / ‖t‖_*`.
    pub rel_l2: f64,
    pub grad_fid: f64,
    pub spec_fid: f64,
    pub energy_fid: f64,
    /// Vector tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enst_fid: Option<f64>,
    pub beta0_score: f64,
    pub iou: f64,
}

impl MetricsReport {
    /// Componentwise mean.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        let n = reports.len().max(1) as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            mse: avg(&|r| r.mse),
            rel_l2: avg(&|r| r.rel_l2),
            grad_fid: avg(&|r| r.grad_fid),
            spec_fid: avg(&|r| r.spec_fid),
            energy_fid: avg(&|r| r.energy_fid),
            enst_fid: if reports.iter().all(|r| r.enst_fid.is_some()) && !reports.is_empty() {
                Some(avg(&|r| r.enst_fid.unwrap_or(0.0)))
            } else {
                None
            },
            beta0_score: avg(&|r| r.beta0_score),
            iou: avg(&|r| r.iou),
        }
    }
}

/// Static data needed to evaluate metrics on one complex at one degree.
#[derive(Clone, Debug)]
pub struct MetricContext<'a> {
    pub dec: &'a Dec64,
    pub subspace: &'a SpectralSubspace<f64>,
    /// Spectral fidelity sharpness α.
    pub alpha: f64,
    edges: Vec<[usize; 2]>,
    /// `incident[v]`: degree-k simplices containing vertex v (k > 0).
    incident: Vec<Vec<usize>>,
    measures: Vec<f64>,
    lambda1: f64,
}

impl<'a> MetricContext<'a> {
    pub fn new(
        complex: &OrientedSimplicialComplex<f64>,
        geometry: &MeshGeometry<f64>,
        dec: &'a Dec64,
        subspace: &'a SpectralSubspace<f64>,
    ) -> Self {
        let k = subspace.degree();
        let edges = if complex.dims() >= 1 {
            complex.simplices(1).iter().map(|e| [e[0], e[1]]).collect()
        } else {
            Vec::new()
        };
        let mut incident = vec![Vec::new(); complex.count(0)];
        if k > 0 {
            for (i, s) in complex.simplices(k).iter().enumerate() {
                for &v in s {
                    incident[v].push(i);
                }
            }
        }
        let ev = &subspace.spectrum.eigenvalues;
        let lambda1 = ev
            .iter()
            .enumerate()
            .filter(|(i, _)| !subspace.harmonic_mask[*i])
            .map(|(_, &l)| l)
            .fold(f64::INFINITY, f64::min);
        let lambda1 = if lambda1.is_finite() { lambda1 } else { 1.0 };
        Self { dec, subspace, alpha: 1.0, edges, incident, measures: geometry.simplex_measures[k].clone(), lambda1 }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Scalar vertex field used for the topological metrics: the values themselves for 0-forms,
    /// otherwise the mean density `|ω_s| / |s|` over the simplices containing each vertex.
    pub fn vertex_field(&self, w: &Cochain<f64>) -> DVector<f64> {
        if w.degree == 0 {
            return w.values.clone();
        }
        DVector::from_iterator(
            self.incident.len(),
            self.incident.iter().map(|inc| {
                if inc.is_empty() {
                    0.0
                } else {
                    inc.iter().map(|&s| w.values[s].abs() / self.measures[s]).sum::<f64>() / inc.len() as f64
                }
            }),
        )
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn evaluate(&self, pred: &Cochain<f64>, target: &Cochain<f64>) -> Result<MetricsReport> {
        let k = self.subspace.degree();
        target.expect_degree(k)?;
        pred.expect_degree(k)?;
        target.expect_len(self.subspace.len())?;
        pred.expect_len(self.subspace.len())?;
        let dec = self.dec;
        let hn2 = |x: &DVector<f64>, deg: usize| x.component_mul(x).dot(dec.star(deg));
        let tn2 = hn2(&target.values, k);
        if !(tn2 > 0.0) {
            return Err(Error::ZeroNormTarget);
        }
        let r = &pred.values - &target.values;
        let mse = r.norm_squared() / r.len() as f64;
        let rel_l2 = (hn2(&r, k) / tn2).sqrt();

        let fid = |num: f64, den: f64, fallback: f64| {
            let den = if den > REFERENCE_FLOOR * fallback { den } else { fallback };
            (-num / den).exp()
        };
        let d_of = |x: &DVector<f64>| dec.d(k).mul_vec(x);
        let delta_of = |x: &DVector<f64>| dec.codiff(k).mul_vec(x);
        let has_d = k < dec.dims();
        let has_delta = k > 0;

        let grad_fid = if has_d {
            let (dp, dt) = (d_of(&pred.values), d_of(&target.values));
            fid(hn2(&(&dp - &dt), k + 1).sqrt(), hn2(&dt, k + 1).sqrt(), (self.lambda1 * tn2).sqrt())
        } else {
            1.0
        };

        let c_p = self.subspace.analysis() * &pred.values;
        let c_t = self.subspace.analysis() * &target.values;
        let weights = DVector::from_iterator(
            c_t.len(),
            (0..c_t.len()).map(|i| {
                if self.subspace.harmonic_mask[i] {
                    0.0
                } else {
                    1.0 / self.subspace.spectrum.eigenvalues[i].sqrt()
                }
            }),
        );
        let spec_num = (&c_p - &c_t).component_mul(&weights).norm();
        let spec_den = c_t.component_mul(&weights).norm();
        let spec_fid = fid(self.alpha * spec_num, spec_den, c_t.norm() / self.lambda1.sqrt());

        // Dirichlet energy ⟨ω, Lω⟩ = ‖dω‖² + ‖δω‖²
        let energy = |x: &DVector<f64>| {
            let mut e = 0.0;
            if has_d {
                e += hn2(&d_of(x), k + 1);
            }
            if has_delta {
                e += hn2(&delta_of(x), k - 1);
            }
            e
        };
        let (ep, et) = (energy(&pred.values), energy(&target.values));
        let energy_fid = fid((ep - et).abs(), et, self.lambda1 * tn2);

        let enst_fid = if k == 1 && has_d {
            let (zp, zt) = (hn2(&d_of(&pred.values), 2), hn2(&d_of(&target.values), 2));
            Some(fid((zp - zt).abs(), zt, self.lambda1 * tn2))
        } else {
            None
        };

        let fp = self.vertex_field(pred);
        let ft = self.vertex_field(target);
        let (lo, hi) = ft.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let level = |q: f64| lo + q * (hi - lo);
        let beta0_score = BETA0_LEVELS
            .iter()
            .map(|&q| beta0_term(beta0(&fp, &self.edges, level(q)), beta0(&ft, &self.edges, level(q))))
            .sum::<f64>()
            / BETA0_LEVELS.len() as f64;
        let iou = iou(&fp, &ft, level(IOU_LEVEL));
        Ok(MetricsReport { mse, rel_l2, grad_fid, spec_fid, energy_fid, enst_fid, beta0_score, iou })
    }
}

/// Connected components of the subgraph induced by `{v : f(v) ≥ threshold}`.
pub fn beta0(f: &DVector<f64>, edges: &[[usize; 2]], threshold: f64) -> usize {
    let inside: Vec<bool> = f.iter().map(|&v| v >= threshold).collect();
    let mut uf = UnionFind::new(f.len());
    for e in edges {
        if inside[e[0]] && inside[e[1]] {
            uf.union(e[0], e[1]);
        }
    }
    let mut roots: Vec<usize> = (0..f.len()).filter(|&v| inside[v]).map(|v| uf.find(v)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// `exp(−|β_pred − β_gt| / max(β_gt, 1))`.
pub fn beta0_term(pred: usize, gt: usize) -> f64 {
    (-(pred.abs_diff(gt) as f64) / gt.max(1) as f64).exp()
}

/// Intersection over union of the super-level sets; 1 when both are empty.
pub fn iou(pred: &DVector<f64>, gt: &DVector<f64>, threshold: f64) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt.iter()) {
        let (a, b) = (*p >= threshold, *g >= threshold);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
