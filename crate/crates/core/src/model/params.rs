//! Flat parameter storage: every tensor lives in one `Vec` at a fixed offset, matrices
//! column-major, in declaration order.

use nalgebra::{DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sizes that depend on the complex and feed into parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub modes: usize,
    pub modes_up: usize,
    pub modes_down: usize,
    /// Grid channels of the lifted k-form.
    pub lift_channels: usize,
    /// Grid channels of the lifted conditioning field (0 when absent).
    pub cond_channels: usize,
    /// Retained Fourier modes per channel pair.
    pub fourier_modes: usize,
}

impl ModelDims {
    pub fn q_dim(&self) -> usize {
        self.modes + self.modes_up + self.modes_down
    }

    /// `[ι ω, ι ω_base, ι f, occupancy]`.
    pub fn fiber_in(&self) -> usize {
        2 * self.lift_channels + self.cond_channels + 1
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Slot {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.off..self.off + self.len()
    }

    pub fn view<'a, T: Real>(&self, p: &'a [T]) -> DMatrixView<'a, T> {
        DMatrixView::from_slice(&p[self.range()], self.rows, self.cols)
    }

    pub fn view_mut<'a, T: Real>(&self, p: &'a mut [T]) -> DMatrixViewMut<'a, T> {
        DMatrixViewMut::from_slice(&mut p[self.range()], self.rows, self.cols)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SubSlots {
    pub kernel: Slot,
    pub w: Slot,
    pub b: Slot,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerSlots {
    pub w_g: Slot,
    pub b_g: Slot,
    pub w_c: Slot,
    pub b_c: Slot,
    pub w_out: Slot,
    pub lift_w: Slot,
    pub lift_b: Slot,
    pub subs: Vec<SubSlots>,
    pub proj_w: Slot,
    pub c_w1e: Slot,
    pub c_w1q: Slot,
    pub c_b1: Slot,
    pub c_w2: Slot,
    pub c_b2: Slot,
}

/// Number of per-simplex features seen by the corrector: `ω`, the lift round trip of `ω`, and
/// the base reconstruction.
pub(crate) const CORRECTOR_LOCAL: usize = 3;

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub layers: Vec<LayerSlots>,
    pub lambda: Slot,
    pub manifest: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig, dims: &ModelDims) -> Self {
        let mut manifest = Vec::new();
        let mut off = 0;
        let mut slot = |name: String, rows: usize, cols: usize| {
            let shape = if cols == 1 { vec![rows] } else { vec![rows, cols] };
            manifest.push(TensorSpec { name, shape, offset: off });
            let s = Slot { off, rows, cols };
            off += rows * cols;
            s
        };
        let (h, q, m) = (config.hidden, dims.q_dim(), dims.modes);
        let w = config.fiber_channels;
        let hc = config.corrector_hidden;
        let mut layers = Vec::new();
        for l in 0..config.layers {
            let w_g = slot(format!("layer{l}.base.w_g"), h, q);
            let b_g = slot(format!("layer{l}.base.b_g"), h, 1);
            let w_c = slot(format!("layer{l}.base.w_c"), h, q);
            let b_c = slot(format!("layer{l}.base.b_c"), h, 1);
            let w_out = slot(format!("layer{l}.base.w_out"), m, h);
            let lift_w = slot(format!("layer{l}.fiber.lift_w"), w, dims.fiber_in());
            let lift_b = slot(format!("layer{l}.fiber.lift_b"), w, 1);
            let subs = (0..config.fiber_depth)
                .map(|d| SubSlots {
                    kernel: slot(format!("layer{l}.fiber.sub{d}.kernel"), 2 * dims.fourier_modes * w * w, 1),
                    w: slot(format!("layer{l}.fiber.sub{d}.w"), w, w),
                    b: slot(format!("layer{l}.fiber.sub{d}.b"), w, 1),
                })
                .collect();
            let proj_w = slot(format!("layer{l}.fiber.proj_w"), dims.lift_channels, w);
            let c_w1e = slot(format!("layer{l}.corrector.w1_local"), hc, CORRECTOR_LOCAL);
            let c_w1q = slot(format!("layer{l}.corrector.w1_q"), hc, q);
            let c_b1 = slot(format!("layer{l}.corrector.b1"), hc, 1);
            let c_w2 = slot(format!("layer{l}.corrector.w2"), hc, 1);
            let c_b2 = slot(format!("layer{l}.corrector.b2"), 1, 1);
            layers.push(LayerSlots {
                w_g,
                b_g,
                w_c,
                b_c,
                w_out,
                lift_w,
                lift_b,
                subs,
                proj_w,
                c_w1e,
                c_w1q,
                c_b1,
                c_w2,
                c_b2,
            });
        }
        let lambda = slot("residual_scale".into(), 1, 1);
        Self { layers, lambda, manifest, total: off }
    }
}
