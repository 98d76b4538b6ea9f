//! Truncated separable discrete Fourier transforms on the voxel grid and the per-mode complex
//! channel mixing of the spectral kernel.
//!
//! Retained modes: a signed window `{-⌊M/2⌋, …, ⌈M/2⌉-1}` on the first two axes and the
//! non-negative half `{0, …, M₂-1}` on the last axis (`M₂ ≤ R/2 + 1`). Synthesis takes the real
//! part with weight 2 on the last-axis modes whose conjugates are not stored, so the full mode
//! set reproduces the input exactly.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DMatrixView};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Real, Result};

type C<T> = Complex<T>;

#[derive(Clone, Debug)]
pub struct ModeSet<T: Real> {
    res: usize,
    m: [usize; 3],
    /// `e[a][idx * R + x] = exp(-2πi k x / R)` for the first two axes.
    e: [Vec<C<T>>; 2],
    /// 2M₂ x R: rows `k₂` hold `cos`, rows `M₂ + k₂` hold `-sin`.
    t_fwd: DMatrix<T>,
    /// Synthesis weight per last-axis mode: 1 for k₂ = 0 and k₂ = R/2, else 2.
    c2: Vec<T>,
}

impl<T: Real> ModeSet<T> {
    pub fn new(res: usize, modes: [usize; 3]) -> Result<Self> {
        if modes[0] == 0 || modes[1] == 0 || modes[2] == 0 {
            return Err(Error::InvalidParameter("mode counts must be positive".into()));
        }
        if modes[0] > res || modes[1] > res || modes[2] > res / 2 + 1 {
            return Err(Error::InvalidParameter(format!(
                "modes {modes:?} exceed what a {res}-point grid resolves"
            )));
        }
        let theta = |k: i64, x: usize| 2.0 * PI * (k as f64) * (x as f64) / res as f64;
        let table = |m: usize| -> Vec<C<T>> {
            let mut t = Vec::with_capacity(m * res);
            for k in signed_window(m) {
                for x in 0..res {
                    let th = theta(k, x);
                    t.push(C::new(T::of(th.cos()), T::of(-th.sin())));
                }
            }
            t
        };
        let m2 = modes[2];
        let t_fwd = DMatrix::from_fn(2 * m2, res, |r, x| {
            let k = (r % m2) as i64;
            let th = theta(k, x);
            if r < m2 { T::of(th.cos()) } else { T::of(-th.sin()) }
        });
        let c2 = (0..m2)
            .map(|k| if k == 0 || (res % 2 == 0 && k == res / 2) { T::one() } else { T::of(2.0) })
            .collect();
        Ok(Self { res, m: modes, e: [table(modes[0]), table(modes[1])], t_fwd, c2 })
    }

    /// Every mode of a `res`-point grid.
    pub fn full(res: usize) -> Result<Self> {
        Self::new(res, [res, res, res / 2 + 1])
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn modes(&self) -> [usize; 3] {
        self.m
    }

    pub fn count(&self) -> usize {
        self.m[0] * self.m[1] * self.m[2]
    }

    /// Signed wavenumbers of mode `(a, b, k2)`.
    pub fn wavenumber(&self, a: usize, b: usize, k2: usize) -> [i64; 3] {
        [signed_window(self.m[0])[a], signed_window(self.m[1])[b], k2 as i64]
    }

    pub fn synthesis_weight(&self, k2: usize) -> T {
        self.c2[k2]
    }

    /// Truncated forward DFT of a `channels`-channel field: `X(k) = Σ_x f(x) e^{-2πi k·x/R}`.
    /// Output layout `[c][a][b][k2]`.
    pub fn forward(&self, field: &[T], channels: usize) -> Vec<C<T>> {
        let r = self.res;
        let [m0, m1, m2] = self.m;
        assert_eq!(field.len(), channels * r * r * r, "field length");
        let view = DMatrixView::from_slice(field, r, channels * r * r);
        let a = &self.t_fwd * view; // 2M2 x (C R²), column = (c, x0, x1)
        let mut b = vec![C::new(T::zero(), T::zero()); channels * r * m1 * m2];
        for c in 0..channels {
            for x0 in 0..r {
                let out = &mut b[(c * r + x0) * m1 * m2..][..m1 * m2];
                for x1 in 0..r {
                    let col = (c * r + x0) * r + x1;
                    for bi in 0..m1 {
                        let e = self.e[1][bi * r + x1];
                        for k2 in 0..m2 {
                            let v = C::new(a[(k2, col)], a[(m2 + k2, col)]);
                            out[bi * m2 + k2] += v * e;
                        }
                    }
                }
            }
        }
        let mut x = vec![C::new(T::zero(), T::zero()); channels * m0 * m1 * m2];
        for c in 0..channels {
            let out = &mut x[c * m0 * m1 * m2..][..m0 * m1 * m2];
            for x0 in 0..r {
                let src = &b[(c * r + x0) * m1 * m2..][..m1 * m2];
                for ai in 0..m0 {
                    let e = self.e[0][ai * r + x0];
                    for (o, s) in out[ai * m1 * m2..][..m1 * m2].iter_mut().zip(src) {
                        *o += *s * e;
                    }
                }
            }
        }
        x
    }

    /// `y(x) = Re Σ_k w(k₂) Z(k) e^{+2πi k·x/R}` for per-last-axis weights `w`.
    pub fn inverse_weighted(&self, z: &[C<T>], channels: usize, w: &[T]) -> Vec<T> {
        let r = self.res;
        let [m0, m1, m2] = self.m;
        assert_eq!(z.len(), channels * m0 * m1 * m2, "mode buffer length");
        let mut b = vec![C::new(T::zero(), T::zero()); channels * r * m1 * m2];
        for c in 0..channels {
            let src = &z[c * m0 * m1 * m2..][..m0 * m1 * m2];
            for x0 in 0..r {
                let out = &mut b[(c * r + x0) * m1 * m2..][..m1 * m2];
                for ai in 0..m0 {
                    let e = self.e[0][ai * r + x0].conj();
                    for (o, s) in out.iter_mut().zip(&src[ai * m1 * m2..][..m1 * m2]) {
                        *o += *s * e;
                    }
                }
            }
        }
        let mut a = DMatrix::zeros(2 * m2, channels * r * r);
        for c in 0..channels {
            for x0 in 0..r {
                let src = &b[(c * r + x0) * m1 * m2..][..m1 * m2];
                for x1 in 0..r {
                    let col = (c * r + x0) * r + x1;
                    for bi in 0..m1 {
                        let e = self.e[1][bi * r + x1].conj();
                        for k2 in 0..m2 {
                            let v = src[bi * m2 + k2] * e;
                            a[(k2, col)] += v.re;
                            a[(m2 + k2, col)] += v.im;
                        }
                    }
                }
            }
        }
        // Re(Z e^{+iθ}) = Re Z cos θ - Im Z sin θ
        let t_inv = DMatrix::from_fn(r, 2 * m2, |x, col| {
            let k = col % m2;
            let wk = w[k];
            if col < m2 { self.t_fwd[(k, x)] * wk } else { self.t_fwd[(m2 + k, x)] * wk }
        });
        let y = t_inv * a;
        y.as_slice().to_vec()
    }

    /// Real synthesis from the retained half-spectrum: weights `c(k₂) / R³`.
    pub fn inverse(&self, z: &[C<T>], channels: usize) -> Vec<T> {
        let n = T::of((self.res * self.res * self.res) as f64);
        let w: Vec<T> = self.c2.iter().map(|&c| c / n).collect();
        self.inverse_weighted(z, channels, &w)
    }

    /// Adjoint of [`forward`](Self::forward) (for real-part/imaginary-part gradients).
    pub fn forward_adjoint(&self, g: &[C<T>], channels: usize) -> Vec<T> {
        let w = vec![T::one(); self.m[2]];
        self.inverse_weighted(g, channels, &w)
    }

    /// Adjoint of [`inverse`](Self::inverse): `(c(k₂) / R³) · forward(g)`.
    pub fn inverse_adjoint(&self, g: &[T], channels: usize) -> Vec<C<T>> {
        let mut z = self.forward(g, channels);
        let n = T::of((self.res * self.res * self.res) as f64);
        let m2 = self.m[2];
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.scale(self.c2[i % m2] / n);
        }
        z
    }
}

fn signed_window(m: usize) -> Vec<i64> {
    let lo = -((m / 2) as i64);
    (0..m as i64).map(|i| lo + i).collect()
}

/// Complex weights `R_loc[mode][i][o]`, stored as interleaved real/imaginary parts.
#[derive(Clone, Debug)]
pub struct SpectralKernel<T: Real> {
    pub modes: ModeSet<T>,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<T>,
}

impl<T: Real> SpectralKernel<T> {
    pub fn zeros(modes: ModeSet<T>, c_in: usize, c_out: usize) -> Self {
        let len = 2 * modes.count() * c_in * c_out;
        Self { modes, c_in, c_out, weights: vec![T::zero(); len] }
    }

    /// Identity channel map on every retained mode.
    pub fn identity(modes: ModeSet<T>, channels: usize) -> Self {
        let mut k = Self::zeros(modes, channels, channels);
        for m in 0..k.modes.count() {
            for i in 0..channels {
                let idx = 2 * ((m * channels + i) * channels + i);
                k.weights[idx] = T::one();
            }
        }
        k
    }

    pub fn random(modes: ModeSet<T>, c_in: usize, c_out: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut k = Self::zeros(modes, c_in, c_out);
        for w in &mut k.weights {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::of(z * std);
        }
        k
    }

    pub fn param_len(modes: &ModeSet<T>, c_in: usize, c_out: usize) -> usize {
        2 * modes.count() * c_in * c_out
    }

    /// `Y_o(k) = Σ_i W_io(k) X_i(k)`; input/output layout `[c][mode]`.
    pub fn mix(&self, x: &[C<T>]) -> Vec<C<T>> {
        mix(&self.weights, self.modes.count(), self.c_in, self.c_out, x)
    }

    pub fn apply(&self, field: &[T]) -> Result<Vec<T>> {
        let r = self.modes.resolution();
        if field.len() != self.c_in * r * r * r {
            return Err(Error::ShapeMismatch(format!(
                "field has {} entries, expected {} channels of {}³",
                field.len(),
                self.c_in,
                r
            )));
        }
        let x = self.modes.forward(field, self.c_in);
        Ok(self.modes.inverse(&self.mix(&x), self.c_out))
    }
}

pub fn mix<T: Real>(w: &[T], nm: usize, c_in: usize, c_out: usize, x: &[C<T>]) -> Vec<C<T>> {
    let mut y = vec![C::new(T::zero(), T::zero()); c_out * nm];
    for m in 0..nm {
        for i in 0..c_in {
            let xi = x[i * nm + m];
            let base = (m * c_in + i) * c_out;
            for o in 0..c_out {
                let wk = C::new(w[2 * (base + o)], w[2 * (base + o) + 1]);
                y[o * nm + m] += wk * xi;
            }
        }
    }
    y
}

/// Gradients of [`mix`]: `gX_i = Σ_o conj(W_io) gY_o`, `gW_io += gY_o conj(X_i)`.
pub fn mix_backward<T: Real>(
    w: &[T],
    nm: usize,
    c_in: usize,
    c_out: usize,
    x: &[C<T>],
    gy: &[C<T>],
    gw: &mut [T],
) -> Vec<C<T>> {
    let mut gx = vec![C::new(T::zero(), T::zero()); c_in * nm];
    for m in 0..nm {
        for i in 0..c_in {
            let xi = x[i * nm + m];
            let base = (m * c_in + i) * c_out;
            let mut acc = C::new(T::zero(), T::zero());
            for o in 0..c_out {
                let g = gy[o * nm + m];
                let wk = C::new(w[2 * (base + o)], w[2 * (base + o) + 1]);
                acc += wk.conj() * g;
                let d = g * xi.conj();
                gw[2 * (base + o)] += d.re;
                gw[2 * (base + o) + 1] += d.im;
            }
            gx[i * nm + m] = acc;
        }
    }
    gx
}

/// `F⁻¹ R_loc F` applied to a real field.
pub fn spectral_conv<T: Real>(kernel: &SpectralKernel<T>, field: &[T]) -> Result<Vec<T>> {
    kernel.apply(field)
}
