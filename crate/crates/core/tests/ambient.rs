use std::f64::consts::PI;

use hsd_core::ambient::{
    mix, mix_backward, spectral_conv, validate_resolution, AmbientGrid, Kernel, LiftOperator, ModeSet,
    SpectralKernel,
};
use hsd_core::dec::StarMode;
use hsd_core::{Cochain64, Complex64, Dec64, Error};
use nalgebra::{Complex, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    complex: Complex64,
    dec: Dec64,
    grid: AmbientGrid<f64>,
}

fn setup(spec: &str, res: usize) -> Setup {
    let complex = Complex64::generate(&spec.parse().unwrap()).unwrap();
    let dec = Dec64::from_complex(&complex, StarMode::LumpedVolume).unwrap();
    let geo = complex.compute_geometry().unwrap();
    let grid = AmbientGrid::enclosing(&geo, res).unwrap();
    Setup { complex, dec, grid }
}

fn lift_op(s: &Setup, k: usize, kernel: Kernel) -> LiftOperator<f64> {
    let geo = s.complex.compute_geometry().unwrap();
    LiftOperator::new(k, &geo, s.dec.star(k), &s.grid, kernel).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn grid_encloses_the_complex() {
    let s = setup("torus:8,8", 16);
    for p in s.complex.coords() {
        assert!(s.grid.contains(p));
    }
    assert!((s.grid.hi[0] - s.grid.lo[0] - 15.0 * s.grid.spacing).abs() < 1e-12);
    assert!(matches!(
        AmbientGrid::enclosing(&s.complex.compute_geometry().unwrap(), 3),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn lift_pullback_adjointness() {
    let s = setup("torus:8,8", 16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kernel in [Kernel::TrilinearHat, Kernel::Gaussian { eps_cells: 2.0 }] {
        for k in 0..=2 {
            let op = lift_op(&s, k, kernel);
            let a = Cochain64::from_vec(k, random_vec(&mut rng, s.dec.count(k)));
            let v = random_vec(&mut rng, op.field_len());
            let lhs = s.dec.inner(&op.pullback(&v).unwrap(), &a).unwrap();
            let la = op.lift(&a).unwrap();
            let rhs = s.grid.voxel_volume() * v.iter().zip(&la).map(|(x, y)| x * y).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(rhs.abs()), "k={k}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn lift_examples() {
    let s = setup("icosphere:1", 16);
    let op = lift_op(&s, 0, Kernel::TrilinearHat);
    let zero = Cochain64::zeros(0, s.dec.count(0));
    assert!(op.lift(&zero).unwrap().iter().all(|&x| x == 0.0));
    let mut e = zero.clone();
    e.values[5] = 1.0;
    let total: f64 = op.lift(&e).unwrap().iter().sum();
    assert!((total - 1.0).abs() < 1e-14);
    assert!(op.pullback(&vec![0.0; op.field_len()]).unwrap().values.iter().all(|&x| x == 0.0));
    assert!(matches!(op.pullback(&[1.0; 3]), Err(Error::ShapeMismatch(_))));
    assert!(matches!(op.lift(&Cochain64::zeros(1, 3)), Err(Error::DegreeMismatch { .. })));
}

#[test]
fn straight_chain_lifts_into_x_channel() {
    // a zig-free path of edges along x, closed into a complex with a far-away return so it is a cycle
    let n = 8;
    let mut pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64 * 0.25, 0.0, 0.0]).collect();
    pts.push([1.0, 1.0, 0.0]);
    let edges: Vec<Vec<usize>> = (0..n - 1).map(|i| vec![i, i + 1]).chain([vec![n - 1, n], vec![n, 0]]).collect();
    let c = Complex64::build(pts, 1, &edges).unwrap();
    let dec = Dec64::from_complex(&c, StarMode::LumpedVolume).unwrap();
    let geo = c.compute_geometry().unwrap();
    let grid = AmbientGrid::enclosing(&geo, 16).unwrap();
    let op = LiftOperator::new(1, &geo, dec.star(1), &grid, Kernel::TrilinearHat).unwrap();
    let mut w = Cochain64::zeros(1, c.count(1));
    for i in 0..n - 1 {
        w.values[c.simplex_index(&[i, i + 1]).unwrap()] = 1.0;
    }
    let field = op.lift(&w).unwrap();
    let vox = grid.voxels();
    assert!(field[..vox].iter().any(|&x| x != 0.0));
    assert!(field[vox..].iter().all(|&x| x.abs() < 1e-15));
}

#[test]
fn pullback_of_lift_on_uniform_cycle() {
    let s = setup("cycle:24", 16);
    let op = lift_op(&s, 0, Kernel::Gaussian { eps_cells: 2.0 });
    let w = Cochain64::from_vec(0, vec![1.0; 24]);
    let back = op.pullback(&op.lift(&w).unwrap()).unwrap();
    // the cycle is uniform, so R ι 1 is nearly constant; the spread documents the smoothing loss
    let mean = back.values.mean();
    let dev = back.values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    assert!(mean > 0.0);
    assert!(dev / mean < 0.1, "relative deviation {}", dev / mean);
}

#[test]
fn bandwidth_limit() {
    let s = setup("torus:8,8", 16);
    let geo = s.complex.compute_geometry().unwrap();
    let too_wide = Kernel::Gaussian { eps_cells: 4.0 };
    assert!(matches!(
        LiftOperator::new(0, &geo, s.dec.star(0), &s.grid, too_wide),
        Err(Error::BandwidthTooLarge { .. })
    ));
}

#[test]
fn resolution_validation() {
    let s = setup("torus:8,8", 16);
    let geo = s.complex.compute_geometry().unwrap();
    let h = s.grid.spacing;
    assert!(validate_resolution(&s.grid, 2.0 * h, &geo, None).pass);
    let warn = validate_resolution(&s.grid, h, &geo, None);
    assert!(!warn.pass);
    assert!(warn.messages[0].contains("exceeds"));
    let expected = (geo.mean_edge_length() * geo.bbox_diagonal()).sqrt();
    assert!((warn.suggested_bandwidth - expected).abs() < 1e-12);
    assert!(!validate_resolution(&s.grid, 2.0 * h, &geo, Some(0.35)).pass);
}

/// Naive full 3D DFT of one channel.
fn naive_dft(f: &[f64], r: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); r * r * r];
    for k0 in 0..r {
        for k1 in 0..r {
            for k2 in 0..r {
                let mut acc = Complex::new(0.0, 0.0);
                for x0 in 0..r {
                    for x1 in 0..r {
                        for x2 in 0..r {
                            let th = -2.0 * PI * ((k0 * x0 + k1 * x1 + k2 * x2) as f64) / r as f64;
                            acc += Complex::from_polar(f[(x0 * r + x1) * r + x2], th);
                        }
                    }
                }
                out[(k0 * r + k1) * r + k2] = acc;
            }
        }
    }
    out
}

fn naive_idft(x: &[Complex<f64>], r: usize) -> Vec<f64> {
    let n = (r * r * r) as f64;
    let mut out = vec![0.0; r * r * r];
    for x0 in 0..r {
        for x1 in 0..r {
            for x2 in 0..r {
                let mut acc = Complex::new(0.0, 0.0);
                for k0 in 0..r {
                    for k1 in 0..r {
                        for k2 in 0..r {
                            let th = 2.0 * PI * ((k0 * x0 + k1 * x1 + k2 * x2) as f64) / r as f64;
                            acc += x[(k0 * r + k1) * r + k2] * Complex::from_polar(1.0, th);
                        }
                    }
                }
                out[(x0 * r + x1) * r + x2] = acc.re / n;
            }
        }
    }
    out
}

#[test]
fn forward_matches_naive_dft() {
    let r = 6;
    let modes = ModeSet::<f64>::new(r, [4, 3, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_vec(&mut rng, r * r * r);
    let full = naive_dft(&f, r);
    let ours = modes.forward(&f, 1);
    let [m0, m1, m2] = modes.modes();
    for a in 0..m0 {
        for b in 0..m1 {
            for k2 in 0..m2 {
                let k = modes.wavenumber(a, b, k2);
                let idx = |v: i64| v.rem_euclid(r as i64) as usize;
                let expect = full[(idx(k[0]) * r + idx(k[1])) * r + idx(k[2])];
                assert!((ours[(a * m1 + b) * m2 + k2] - expect).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn full_mode_identity_kernel_is_identity() {
    let r = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_vec(&mut rng, 2 * r * r * r);
    let kernel = SpectralKernel::identity(ModeSet::full(r).unwrap(), 2);
    let y = spectral_conv(&kernel, &f).unwrap();
    let err = y.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn truncated_identity_is_low_pass_projection() {
    let r = 8;
    let modes = ModeSet::<f64>::new(r, [4, 4, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_vec(&mut rng, r * r * r);
    let y = spectral_conv(&SpectralKernel::identity(modes.clone(), 1), &f).unwrap();
    // multiplier on the full spectrum: each retained mode and its conjugate partner carry
    // half of the synthesis weight c(k2)
    let full = naive_dft(&f, r);
    let mut mult = vec![0.0; r * r * r];
    for a in 0..4 {
        for b in 0..4 {
            for k2 in 0..4 {
                let k = modes.wavenumber(a, b, k2);
                let c = modes.synthesis_weight(k2) / 2.0;
                let idx = |v: [i64; 3]| {
                    let w = |x: i64| x.rem_euclid(r as i64) as usize;
                    (w(v[0]) * r + w(v[1])) * r + w(v[2])
                };
                mult[idx(k)] += c;
                mult[idx([-k[0], -k[1], -k[2]])] += c;
            }
        }
    }
    let filtered: Vec<Complex<f64>> = full.iter().zip(&mult).map(|(x, m)| x * *m).collect();
    let oracle = naive_idft(&filtered, r);
    let err = y.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn zero_kernel_gives_zero_field() {
    let r = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_vec(&mut rng, 3 * r * r * r);
    let k = SpectralKernel::zeros(ModeSet::new(r, [4, 4, 4]).unwrap(), 3, 2);
    assert!(spectral_conv(&k, &f).unwrap().iter().all(|&v| v == 0.0));
    assert!(matches!(spectral_conv(&k, &f[1..]), Err(Error::ShapeMismatch(_))));
}

fn cdot(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

#[test]
fn transform_adjoints() {
    let r = 8;
    let modes = ModeSet::<f64>::new(r, [4, 4, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ch = 2;
    let f = random_vec(&mut rng, ch * r * r * r);
    let z: Vec<Complex<f64>> = (0..ch * modes.count())
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    // ⟨F f, z⟩ = ⟨f, F* z⟩
    let lhs = cdot(&modes.forward(&f, ch), &z);
    let rhs: f64 = f.iter().zip(modes.forward_adjoint(&z, ch)).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    // ⟨I z, f⟩ = ⟨z, I* f⟩
    let lhs: f64 = modes.inverse(&z, ch).iter().zip(&f).map(|(a, b)| a * b).sum();
    let rhs = cdot(&z, &modes.inverse_adjoint(&f, ch));
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1e-3));
}

#[test]
fn mixing_gradients_match_finite_differences() {
    let (nm, ci, co) = (5, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = random_vec(&mut rng, 2 * nm * ci * co);
    let x: Vec<Complex<f64>> =
        (0..ci * nm).map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let gy: Vec<Complex<f64>> =
        (0..co * nm).map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let loss = |w: &[f64], x: &[Complex<f64>]| cdot(&mix(w, nm, ci, co, x), &gy);
    let mut gw = vec![0.0; w.len()];
    let gx = mix_backward(&w, nm, ci, co, &x, &gy, &mut gw);
    let h = 1e-6;
    for i in 0..w.len() {
        let (mut p, mut m) = (w.clone(), w.clone());
        p[i] += h;
        m[i] -= h;
        assert!(((loss(&p, &x) - loss(&m, &x)) / (2.0 * h) - gw[i]).abs() < 1e-8);
    }
    for i in 0..x.len() {
        for part in 0..2 {
            let (mut p, mut m) = (x.clone(), x.clone());
            let d = if part == 0 { Complex::new(h, 0.0) } else { Complex::new(0.0, h) };
            p[i] += d;
            m[i] -= d;
            let fd = (loss(&w, &p) - loss(&w, &m)) / (2.0 * h);
            let an = if part == 0 { gx[i].re } else { gx[i].im };
            assert!((fd - an).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn spectral_conv_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let r = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = SpectralKernel::random(ModeSet::new(r, [4, 4, 4]).unwrap(), 2, 3, 0.5, &mut rng);
        let x = random_vec(&mut rng, 2 * r * r * r);
        let y = random_vec(&mut rng, 2 * r * r * r);
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = spectral_conv(&k, &comb).unwrap();
        let cx = spectral_conv(&k, &x).unwrap();
        let cy = spectral_conv(&k, &y).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * cx[i] + b * cy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn lift_is_linear(seed in 0u64..1000) {
        let s = setup("icosphere:1", 12);
        let op = lift_op(&s, 1, Kernel::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DVector::from_vec(random_vec(&mut rng, s.dec.count(1)));
        let y = DVector::from_vec(random_vec(&mut rng, s.dec.count(1)));
        let l = |v: DVector<f64>| op.lift(&Cochain64::new(1, v)).unwrap();
        let (lx, ly, lxy) = (l(x.clone()), l(y.clone()), l(&x * 2.0 - &y));
        for i in 0..lx.len() {
            prop_assert!((lxy[i] - (2.0 * lx[i] - ly[i])).abs() < 1e-12);
        }
    }
}
