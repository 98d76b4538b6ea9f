//! The layered HSD network.
//!
//! One layer maps a k-cochain ω to
//!
//! ```text
//! c   = Φᵀ * ω                         spectral coefficients
//! q   = [c; M_d c; M_δ c]
//! c̃   = W_out (silu(W_g q + b_g) ⊙ (W_c q + b_c)) + c,   c̃[I_H] = c_ref
//! ω_b = Φ c̃
//! w̃   = R Q(sublayers(P [ι ω, ι ω_b, ι f, occupancy]))
//! r   = corrector(ω, R ι ω, ω_b; q)   per simplex
//! ω'  = ω_b + (I − Π_base)(λ w̃ + r)
//! ```
//!
//! Gradients are hand-written reverse mode over this straight-line graph; [`HsdModel::backward`]
//! consumes the [`Trace`] recorded by [`HsdModel::forward`].

mod checkpoint;
mod commutator;
mod context;
mod gradcheck;
mod params;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use commutator::{commutator_identity_check, CommutatorReport};
pub use context::{lift_normalization, probes, HsdContext};
pub use gradcheck::{gradient_check, hodge_mse, GradCheckRow};
pub use params::{ModelDims, TensorSpec};

use crate::ambient::{mix, mix_backward, Kernel};
use crate::complex::OrientedSimplicialComplex;
use crate::dec::StarMode;
use crate::spectrum::EigenMethod;
use crate::{Cochain, Error, Real, Result};
use params::{LayerSlots, Layout, Slot, CORRECTOR_LOCAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Corrector output forced to zero.
    NoCorrector,
    /// Fiber and corrector outputs added without the `(I − Π_base)` projection.
    NoProjection,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "no_corrector" => Ok(Variant::NoCorrector),
            "no_projection" => Ok(Variant::NoProjection),
            _ => Err(Error::Parse(format!("unknown variant '{s}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoCorrector => "no_corrector",
            Variant::NoProjection => "no_projection",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Degree of the predicted cochain.
    pub degree: usize,
    /// Degree of the raw input; may differ from `degree` by one.
    pub input_degree: usize,
    /// m_k, retained Hodge modes (capped at N_k).
    pub modes: usize,
    pub layers: usize,
    pub hidden: usize,
    pub fiber_channels: usize,
    pub fiber_depth: usize,
    pub fiber_modes: [usize; 3],
    pub grid_resolution: usize,
    pub kernel: Kernel,
    pub corrector_hidden: usize,
    pub star_mode: StarMode,
    pub eigen_method: EigenMethod,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            input_degree: 1,
            modes: 32,
            layers: 2,
            hidden: 32,
            fiber_channels: 12,
            fiber_depth: 3,
            fiber_modes: [4, 4, 4],
            grid_resolution: 16,
            kernel: Kernel::default(),
            corrector_hidden: 16,
            star_mode: StarMode::LumpedVolume,
            eigen_method: EigenMethod::Auto,
            variant: Variant::Full,
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub(crate) fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub(crate) fn dsilu<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

fn add_row_bias<T: Real>(m: &mut DMatrix<T>, b: &[T]) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(b[j]);
    }
}

fn add_col_sums<T: Real>(m: &DMatrix<T>, g: &mut [T]) {
    for (j, col) in m.column_iter().enumerate() {
        g[j] += col.sum();
    }
}

#[derive(Clone, Debug)]
struct FiberTrace<T: Real> {
    u0: DMatrix<T>,
    /// Input of each sublayer.
    hs: Vec<DMatrix<T>>,
    xs: Vec<Vec<Complex<T>>>,
    zs: Vec<DMatrix<T>>,
    last: DMatrix<T>,
    /// `R Q h_D`, before λ.
    out: DVector<T>,
}

#[derive(Clone, Debug)]
struct CorrectorTrace<T: Real> {
    e: DMatrix<T>,
    pre: DMatrix<T>,
    out: DVector<T>,
}

#[derive(Clone, Debug)]
pub struct LayerTrace<T: Real> {
    pub input: DVector<T>,
    q: DVector<T>,
    a: DVector<T>,
    b: DVector<T>,
    gated: DVector<T>,
    /// c̃ after the harmonic overwrite.
    pub coeffs: DVector<T>,
    /// ω_b = Φ c̃.
    pub base: DVector<T>,
    fiber: FiberTrace<T>,
    corrector: Option<CorrectorTrace<T>>,
    /// λ w̃ + r before projection.
    pub fiber_raw: DVector<T>,
    /// What is added to ω_b.
    pub fiber_out: DVector<T>,
    pub output: DVector<T>,
}

#[derive(Clone, Debug)]
pub struct Trace<T: Real> {
    pub omega0: DVector<T>,
    /// Full coefficient vector of ω₀; only the harmonic entries are imposed.
    pub c_ref: DVector<T>,
    pub layers: Vec<LayerTrace<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &DVector<T> {
        match self.layers.last() {
            Some(l) => &l.output,
            None => &self.omega0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    /// max over I_H of |c_i(ω') − c_ref,i|.
    pub harmonic_error: f64,
    /// max_j |⟨fiber_out, Φ_j⟩_*| / ‖fiber_out‖_* (0 for a zero contribution).
    pub fiber_leak: f64,
}

#[derive(Clone, Debug)]
pub struct HsdModel<T: Real> {
    pub config: ModelConfig,
    pub context: HsdContext<T>,
    layout: Layout,
    dims: ModelDims,
    pub params: Vec<T>,
}

impl<T: Real> HsdModel<T> {
    /// Randomly initialized model: Gaussian weights with std 1/√fan_in, zero biases, zero
    /// corrector output layer, λ = 1.
    pub fn new(context: HsdContext<T>, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(context, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill = |p: &mut Vec<T>, s: Slot, fan_in: usize, rng: &mut ChaCha8Rng| {
            let std = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut p[s.range()] {
                let z: f64 = StandardNormal.sample(rng);
                *v = T::of(z * std);
            }
        };
        let layers = model.layout.layers.clone();
        for s in &layers {
            fill(&mut model.params, s.w_g, s.w_g.cols, &mut rng);
            fill(&mut model.params, s.w_c, s.w_c.cols, &mut rng);
            fill(&mut model.params, s.w_out, s.w_out.cols, &mut rng);
            fill(&mut model.params, s.lift_w, s.lift_w.cols, &mut rng);
            for sub in &s.subs {
                fill(&mut model.params, sub.kernel, model.config.fiber_channels, &mut rng);
                fill(&mut model.params, sub.w, sub.w.cols, &mut rng);
            }
            fill(&mut model.params, s.proj_w, s.proj_w.cols, &mut rng);
            fill(&mut model.params, s.c_w1e, CORRECTOR_LOCAL + s.c_w1q.cols, &mut rng);
            fill(&mut model.params, s.c_w1q, CORRECTOR_LOCAL + s.c_w1q.cols, &mut rng);
        }
        model.params[model.layout.lambda.off] = T::one();
        Ok(model)
    }

    /// Every parameter zero, λ included.
    pub fn zeroed(context: HsdContext<T>, config: ModelConfig) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 || config.fiber_channels == 0 {
            return Err(Error::InvalidParameter("layers, hidden and fiber_channels must be positive".into()));
        }
        if context.degree() != config.degree {
            return Err(Error::DegreeMismatch { expected: config.degree, got: context.degree() });
        }
        let dims = context.dims();
        let layout = Layout::new(&config, &dims);
        let params = vec![T::zero(); layout.total];
        Ok(Self { config, context, layout, dims, params })
    }

    /// Builds the context on `complex` and initializes randomly.
    pub fn build(complex: &OrientedSimplicialComplex<T>, config: ModelConfig, seed: u64) -> Result<Self> {
        let ctx = HsdContext::new(complex, &config)?;
        Self::new(ctx, config, seed)
    }

    /// Moves the parameters onto another complex (zero-shot transfer).
    pub fn with_context(mut self, context: HsdContext<T>) -> Result<Self> {
        let dims = context.dims();
        if dims != self.dims {
            return Err(Error::ShapeMismatch(format!("model dims {:?} vs context dims {:?}", self.dims, dims)));
        }
        self.context = context;
        Ok(self)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn manifest(&self) -> &[TensorSpec] {
        &self.layout.manifest
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let spec = self.layout.manifest.iter().find(|t| t.name == name)?;
        Some(&self.params[spec.offset..spec.offset + spec.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let spec = self.layout.manifest.iter().find(|t| t.name == name)?;
        Some(&mut self.params[spec.offset..spec.offset + spec.len()])
    }

    pub fn residual_scale(&self) -> T {
        self.params[self.layout.lambda.off]
    }

    pub fn set_residual_scale(&mut self, v: T) {
        let off = self.layout.lambda.off;
        self.params[off] = v;
    }

    fn q_features(&self, c: &DVector<T>) -> DVector<T> {
        let sub = &self.context.subspace;
        let up = &sub.m_d * c;
        let down = &sub.m_delta * c;
        let mut q = DVector::zeros(self.dims.q_dim());
        q.rows_mut(0, c.len()).copy_from(c);
        q.rows_mut(c.len(), up.len()).copy_from(&up);
        q.rows_mut(c.len() + up.len(), down.len()).copy_from(&down);
        q
    }

    fn harmonic_ref(&self, omega0: &DVector<T>) -> DVector<T> {
        self.context.subspace.coeffs_raw(omega0)
    }

    /// Gated spectral update of coefficients `c`, with harmonic entries replaced by `c_ref`.
    pub fn base_forward(&self, layer: usize, c: &DVector<T>, c_ref: &DVector<T>) -> Result<DVector<T>> {
        let m = self.dims.modes;
        if c.len() != m || c_ref.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: if c.len() != m { c.len() } else { c_ref.len() } });
        }
        let s = self.slots(layer)?;
        let q = self.q_features(c);
        Ok(self.base_core(s, c, &q, c_ref).4)
    }

    fn base_core(
        &self,
        s: &LayerSlots,
        c: &DVector<T>,
        q: &DVector<T>,
        c_ref: &DVector<T>,
    ) -> (DVector<T>, DVector<T>, DVector<T>, DVector<T>, DVector<T>) {
        let p = &self.params;
        let a = s.w_g.view(p) * q + s.b_g.view(p).column(0);
        let b = s.w_c.view(p) * q + s.b_c.view(p).column(0);
        let gated = a.map(silu).component_mul(&b);
        let mut ct = s.w_out.view(p) * &gated + c;
        for &i in self.context.subspace.harmonic_indices() {
            ct[i] = c_ref[i];
        }
        (q.clone(), a, b, gated, ct)
    }

    fn slots(&self, layer: usize) -> Result<&LayerSlots> {
        self.layout
            .layers
            .get(layer)
            .ok_or(Error::IndexOutOfRange { index: layer, len: self.layout.layers.len() })
    }

    fn fiber_core(&self, s: &LayerSlots, w: &DVector<T>, base: &DVector<T>, cond: Option<&DMatrix<T>>) -> FiberTrace<T> {
        let ctx = &self.context;
        let p = &self.params;
        let v = ctx.voxels();
        let ck = self.dims.lift_channels;
        let width = self.config.fiber_channels;
        let nm = ctx.modes.count();
        let mut u0 = DMatrix::zeros(v, self.dims.fiber_in());
        u0.columns_mut(0, ck).copy_from(&ctx.lift_field(w));
        u0.columns_mut(ck, ck).copy_from(&ctx.lift_field(base));
        if let Some(f) = cond {
            u0.columns_mut(2 * ck, f.ncols()).copy_from(f);
        }
        u0.column_mut(self.dims.fiber_in() - 1).copy_from_slice(ctx.occupancy());
        let mut h = &u0 * s.lift_w.view(p).transpose();
        add_row_bias(&mut h, &p[s.lift_b.range()]);
        let mut hs = Vec::with_capacity(s.subs.len());
        let mut xs = Vec::with_capacity(s.subs.len());
        let mut zs = Vec::with_capacity(s.subs.len());
        for sub in &s.subs {
            let x = ctx.modes.forward(h.as_slice(), width);
            let y = mix(&p[sub.kernel.range()], nm, width, width, &x);
            let mut z = DMatrix::from_vec(v, width, ctx.modes.inverse(&y, width));
            z.gemm(T::one(), &h, &sub.w.view(p).transpose(), T::one());
            add_row_bias(&mut z, &p[sub.b.range()]);
            let next = z.map(silu);
            hs.push(std::mem::replace(&mut h, next));
            xs.push(x);
            zs.push(z);
        }
        let g = &h * s.proj_w.view(p).transpose();
        let out = ctx.pull_field(&g);
        FiberTrace { u0, hs, xs, zs, last: h, out }
    }

    fn corrector_core(&self, s: &LayerSlots, w: &DVector<T>, base: &DVector<T>, q: &DVector<T>) -> CorrectorTrace<T> {
        let p = &self.params;
        let n = w.len();
        let mut e = DMatrix::zeros(n, CORRECTOR_LOCAL);
        e.column_mut(0).copy_from(w);
        e.column_mut(1).copy_from(&self.context.roundtrip().mul_vec(w));
        e.column_mut(2).copy_from(base);
        let mut pre = &e * s.c_w1e.view(p).transpose();
        let shared = s.c_w1q.view(p) * q + s.c_b1.view(p).column(0);
        add_row_bias(&mut pre, shared.as_slice());
        let hid = pre.map(silu);
        let mut out = hid * s.c_w2.view(p).column(0);
        out.add_scalar_mut(p[s.c_b2.off]);
        CorrectorTrace { e, pre, out }
    }

    /// `(I − Π_base)(λ · R Q(...))` for layer input `w` and base reconstruction `base`
    /// (projection skipped for [`Variant::NoProjection`]).
    pub fn fiber_forward(&self, layer: usize, w: &Cochain<T>, base: &Cochain<T>, f: Option<&Cochain<T>>) -> Result<Cochain<T>> {
        let k = self.config.degree;
        w.expect_degree(k)?;
        base.expect_degree(k)?;
        w.expect_len(self.context.len())?;
        base.expect_len(self.context.len())?;
        let cond = match (f, &self.context.cond) {
            (Some(f), Some((op, _))) => {
                f.expect_degree(op.degree)?;
                self.context.cond_field(&f.values)
            }
            (None, None) => None,
            _ => return Err(Error::ShapeMismatch("conditioning field does not match the model".into())),
        };
        let s = self.slots(layer)?;
        let t = self.fiber_core(s, &w.values, &base.values, cond.as_ref());
        let raw = t.out * self.residual_scale();
        Ok(Cochain::new(k, self.project(raw)))
    }

    /// Corrector output for layer input `w`, base reconstruction `base` and features `q`,
    /// before projection.
    pub fn corrector_forward(&self, layer: usize, w: &DVector<T>, base: &DVector<T>, q: &DVector<T>) -> Result<DVector<T>> {
        let n = self.context.len();
        for v in [w, base] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        if q.len() != self.dims.q_dim() {
            return Err(Error::DimensionMismatch { expected: self.dims.q_dim(), got: q.len() });
        }
        Ok(self.corrector_core(self.slots(layer)?, w, base, q).out)
    }

    /// `[c; M_d c; M_δ c]`.
    pub fn features(&self, c: &DVector<T>) -> DVector<T> {
        self.q_features(c)
    }

    fn project(&self, raw: DVector<T>) -> DVector<T> {
        match self.config.variant {
            Variant::NoProjection => raw,
            _ => {
                let pb = self.context.subspace.project_base_raw(&raw);
                raw - pb
            }
        }
    }

    /// Runs all layers on a raw input (see [`HsdContext::prepare`]).
    pub fn forward(&self, input: &Cochain<T>) -> Result<Trace<T>> {
        let (omega0, f) = self.context.prepare(input)?;
        Ok(self.forward_prepared(omega0, f.as_ref()))
    }

    pub fn predict(&self, input: &Cochain<T>) -> Result<Cochain<T>> {
        Ok(Cochain::new(self.config.degree, self.forward(input)?.output().clone()))
    }

    fn forward_prepared(&self, omega0: DVector<T>, f: Option<&DVector<T>>) -> Trace<T> {
        let c_ref = self.harmonic_ref(&omega0);
        let cond = f.and_then(|f| self.context.cond_field(f));
        let lambda = self.residual_scale();
        let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(self.config.layers);
        for s in &self.layout.layers {
            let input = layers.last().map_or_else(|| omega0.clone(), |l| l.output.clone());
            let c = self.context.subspace.coeffs_raw(&input);
            let q = self.q_features(&c);
            let (q, a, b, gated, coeffs) = self.base_core(s, &c, &q, &c_ref);
            let base = self.context.subspace.basis() * &coeffs;
            let fiber = self.fiber_core(s, &input, &base, cond.as_ref());
            let corrector = match self.config.variant {
                Variant::NoCorrector => None,
                _ => Some(self.corrector_core(s, &input, &base, &q)),
            };
            let mut fiber_raw = &fiber.out * lambda;
            if let Some(cr) = &corrector {
                fiber_raw += &cr.out;
            }
            let fiber_out = self.project(fiber_raw.clone());
            let output = &base + &fiber_out;
            layers.push(LayerTrace { input, q, a, b, gated, coeffs, base, fiber, corrector, fiber_raw, fiber_out, output });
        }
        Trace { omega0, c_ref, layers }
    }

    pub fn diagnostics(&self, trace: &Trace<T>) -> Vec<LayerDiagnostics> {
        let sub = &self.context.subspace;
        trace
            .layers
            .iter()
            .map(|l| {
                let c = sub.coeffs_raw(&l.output);
                let harmonic_error = sub
                    .harmonic_indices()
                    .iter()
                    .map(|&i| (c[i] - trace.c_ref[i]).abs().to_f64())
                    .fold(0.0, f64::max);
                let norm = sub.inner(&l.fiber_out, &l.fiber_out).sqrt().to_f64();
                let proj = sub.coeffs_raw(&l.fiber_out);
                let fiber_leak = if norm > 0.0 { proj.amax().to_f64() / norm } else { 0.0 };
                LayerDiagnostics { harmonic_error, fiber_leak }
            })
            .collect()
    }

    /// Accumulates `∂loss/∂θ` into `grad` given `g_out = ∂loss/∂ω_out`.
    pub fn backward(&self, trace: &Trace<T>, g_out: &DVector<T>, grad: &mut [T]) -> Result<()> {
        if grad.len() != self.layout.total {
            return Err(Error::DimensionMismatch { expected: self.layout.total, got: grad.len() });
        }
        if g_out.len() != self.context.len() {
            return Err(Error::DimensionMismatch { expected: self.context.len(), got: g_out.len() });
        }
        let mut g = g_out.clone();
        for (l, t) in trace.layers.iter().enumerate().rev() {
            g = self.layer_backward(&self.layout.layers[l], t, &g, grad);
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            let name = self
                .layout
                .manifest
                .iter()
                .find(|t| i >= t.offset && i < t.offset + t.len())
                .map_or_else(|| i.to_string(), |t| t.name.clone());
            return Err(Error::NonFiniteGradient(name));
        }
        Ok(())
    }

    fn layer_backward(
        &self,
        s: &LayerSlots,
        t: &LayerTrace<T>,
        g_out: &DVector<T>,
        grad: &mut [T],
    ) -> DVector<T> {
        let sub = &self.context.subspace;
        let p = &self.params;
        let phi = sub.basis();
        let an = sub.analysis();
        let lambda = self.residual_scale();
        let g_raw = match self.config.variant {
            Variant::NoProjection => g_out.clone(),
            _ => g_out - an.tr_mul(&phi.tr_mul(g_out)),
        };
        grad[self.layout.lambda.off] += g_raw.dot(&t.fiber.out);
        let mut g_w = DVector::zeros(g_out.len());
        let mut g_base = g_out.clone();
        let mut g_q = DVector::zeros(self.dims.q_dim());
        if let Some(cr) = &t.corrector {
            self.corrector_backward(s, cr, &t.q, &g_raw, &mut g_w, &mut g_base, &mut g_q, grad);
        }
        self.fiber_backward(s, &t.fiber, &(g_raw * lambda), &mut g_w, &mut g_base, grad);

        let mut g_ct = phi.tr_mul(&g_base);
        for &i in sub.harmonic_indices() {
            g_ct[i] = T::zero();
        }
        s.w_out.view_mut(grad).ger(T::one(), &g_ct, &t.gated, T::one());
        let g_gated = s.w_out.view(p).tr_mul(&g_ct);
        let g_b = g_gated.component_mul(&t.a.map(silu));
        let g_a = g_gated.component_mul(&t.b).component_mul(&t.a.map(dsilu));
        s.w_g.view_mut(grad).ger(T::one(), &g_a, &t.q, T::one());
        s.w_c.view_mut(grad).ger(T::one(), &g_b, &t.q, T::one());
        for (dst, v) in grad[s.b_g.range()].iter_mut().zip(g_a.iter()) {
            *dst += *v;
        }
        for (dst, v) in grad[s.b_c.range()].iter_mut().zip(g_b.iter()) {
            *dst += *v;
        }
        g_q += s.w_g.view(p).tr_mul(&g_a) + s.w_c.view(p).tr_mul(&g_b);
        let m = self.dims.modes;
        let mu = self.dims.modes_up;
        let mut g_c = g_ct;
        g_c += g_q.rows(0, m);
        g_c += sub.m_d.tr_mul(&g_q.rows(m, mu));
        g_c += sub.m_delta.tr_mul(&g_q.rows(m + mu, self.dims.modes_down));
        g_w += an.tr_mul(&g_c);
        g_w
    }

    #[allow(clippy::too_many_arguments)]
    fn corrector_backward(
        &self,
        s: &LayerSlots,
        t: &CorrectorTrace<T>,
        q: &DVector<T>,
        g: &DVector<T>,
        g_w: &mut DVector<T>,
        g_base: &mut DVector<T>,
        g_q: &mut DVector<T>,
        grad: &mut [T],
    ) {
        let p = &self.params;
        let hid = t.pre.map(silu);
        s.c_w2.view_mut(grad).column_mut(0).gemv_tr(T::one(), &hid, g, T::one());
        grad[s.c_b2.off] += g.sum();
        let w2 = s.c_w2.view(p).column(0).clone_owned();
        let mut g_pre = g * w2.transpose();
        g_pre.component_mul_assign(&t.pre.map(dsilu));
        s.c_w1e.view_mut(grad).gemm_tr(T::one(), &g_pre, &t.e, T::one());
        let mut rsum = vec![T::zero(); g_pre.ncols()];
        add_col_sums(&g_pre, &mut rsum);
        let rsum = DVector::from_vec(rsum);
        s.c_w1q.view_mut(grad).ger(T::one(), &rsum, q, T::one());
        for (dst, v) in grad[s.c_b1.range()].iter_mut().zip(rsum.iter()) {
            *dst += *v;
        }
        *g_q += s.c_w1q.view(p).tr_mul(&rsum);
        let g_e = g_pre * s.c_w1e.view(p);
        *g_w += g_e.column(0);
        *g_w += self.context.roundtrip().tr_mul_vec(&g_e.column(1).clone_owned());
        *g_base += g_e.column(2);
    }

    fn fiber_backward(
        &self,
        s: &LayerSlots,
        t: &FiberTrace<T>,
        g_out: &DVector<T>,
        g_w: &mut DVector<T>,
        g_base: &mut DVector<T>,
        grad: &mut [T],
    ) {
        let ctx = &self.context;
        let p = &self.params;
        let width = self.config.fiber_channels;
        let nm = ctx.modes.count();
        let v = ctx.voxels();
        let ck = self.dims.lift_channels;
        let g_g = ctx.pull_field_adjoint(g_out);
        s.proj_w.view_mut(grad).gemm_tr(T::one(), &g_g, &t.last, T::one());
        let mut g_h = g_g * s.proj_w.view(p);
        for (d, sub) in s.subs.iter().enumerate().rev() {
            let mut g_z = g_h;
            g_z.component_mul_assign(&t.zs[d].map(dsilu));
            sub.w.view_mut(grad).gemm_tr(T::one(), &g_z, &t.hs[d], T::one());
            add_col_sums(&g_z, &mut grad[sub.b.range()]);
            let mut g_prev = &g_z * sub.w.view(p);
            let gy = ctx.modes.inverse_adjoint(g_z.as_slice(), width);
            let gx = mix_backward(&p[sub.kernel.range()], nm, width, width, &t.xs[d], &gy, &mut grad[sub.kernel.range()]);
            g_prev += DMatrix::from_vec(v, width, ctx.modes.forward_adjoint(&gx, width));
            g_h = g_prev;
        }
        s.lift_w.view_mut(grad).gemm_tr(T::one(), &g_h, &t.u0, T::one());
        add_col_sums(&g_h, &mut grad[s.lift_b.range()]);
        let g_u0 = g_h * s.lift_w.view(p);
        let flat = g_u0.as_slice();
        *g_w += ctx.lift_field_adjoint(&flat[..ck * v]);
        *g_base += ctx.lift_field_adjoint(&flat[ck * v..2 * ck * v]);
    }
}
