use hsd_core::complex::{tet_grid, ShapeSpec};
use hsd_core::dec::{assemble_hodge_star, hodge_inner, DecOperators, StarMode};
use hsd_core::{Cochain64, Complex64, Dec64, Error};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dec(s: &str, mode: StarMode) -> Dec64 {
    let c = Complex64::generate(&s.parse().unwrap()).unwrap();
    Dec64::from_complex(&c, mode).unwrap()
}

fn random(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Cochain64 {
    Cochain64::from_vec(k, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn all_decs() -> Vec<Dec64> {
    let (v, t) = tet_grid(2, 0.2, 3);
    let tet = Complex64::build_from_tet_mesh(v, &t).unwrap();
    let mut out = Vec::new();
    for mode in [StarMode::Identity, StarMode::LumpedVolume] {
        for s in ["cycle:12", "icosphere:1", "torus:8,8"] {
            out.push(dec(s, mode));
        }
        out.push(Dec64::from_complex(&tet, mode).unwrap());
    }
    out
}

#[test]
fn d_and_codiff_square_to_zero() {
    for dec in all_decs() {
        for k in 0..dec.dims().saturating_sub(1) {
            assert!(dec.d(k + 1).matmul(dec.d(k)).max_abs() < 1e-12);
        }
        for k in 2..=dec.dims() {
            assert!(dec.codiff(k - 1).matmul(dec.codiff(k)).max_abs() < 1e-12);
        }
    }
}

#[test]
fn codifferential_is_adjoint_of_d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for dec in all_decs() {
        for k in 0..dec.dims() {
            let a = random(&mut rng, k, dec.count(k));
            let b = random(&mut rng, k + 1, dec.count(k + 1));
            let lhs = dec.inner(&dec.apply_d(&a).unwrap(), &b).unwrap();
            let rhs = dec.inner(&a, &dec.apply_codiff(&b).unwrap()).unwrap();
            let scale = dec.norm(&a).unwrap() * dec.norm(&b).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * scale.max(1.0), "k={k}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn starred_laplacian_is_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for dec in all_decs() {
        for k in 0..=dec.dims() {
            let sl = dec.laplacian(k).scale_rows(dec.star(k).as_slice()).to_dense();
            let asym = (&sl - sl.transpose()).abs().max();
            assert!(asym <= 1e-10 * sl.abs().max().max(1.0));
            for _ in 0..5 {
                let x = DVector::from_fn(dec.count(k), |_, _| rng.random_range(-1.0..1.0));
                assert!(x.dot(&(&sl * &x)) >= -1e-10 * x.norm_squared());
            }
        }
    }
}

#[test]
fn identity_star_graph_laplacian() {
    let dec = dec("icosphere:1", StarMode::Identity);
    let b1 = dec.boundary(1).to_dense();
    assert_eq!(dec.laplacian(0).to_dense(), &b1 * b1.transpose());
}

#[test]
fn cycle4_spectra() {
    let dec = dec("cycle:4", StarMode::Identity);
    let mut ev: Vec<f64> = SymmetricEigen::new(dec.laplacian(0).to_dense()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip([0.0, 2.0, 2.0, 4.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    let b1 = dec.boundary(1).to_dense();
    assert_eq!(dec.laplacian(1).to_dense(), b1.transpose() * &b1);
    let l1: Vec<f64> = SymmetricEigen::new(dec.laplacian(1).to_dense()).eigenvalues.iter().copied().collect();
    assert_eq!(l1.iter().filter(|v| v.abs() < 1e-10).count(), 1);
}

#[test]
fn cycle_spectrum_matches_closed_form() {
    let n = 9;
    let dec = dec(&format!("cycle:{n}"), StarMode::Identity);
    let mut ev: Vec<f64> = SymmetricEigen::new(dec.laplacian(0).to_dense()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let mut expect: Vec<f64> =
        (0..n).map(|j| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).collect();
    expect.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identity_stars_are_one() {
    let c = Complex64::generate(&ShapeSpec::Icosphere(1)).unwrap();
    for s in assemble_hodge_star(&c, None, StarMode::Identity).unwrap() {
        assert!(s.diag.iter().all(|&v| v == 1.0));
    }
}

#[test]
fn lumped_stars_on_uniform_cycle() {
    let dec = dec("cycle:4", StarMode::LumpedVolume);
    let s1 = dec.star(1);
    assert!(s1.iter().all(|&v| (v - s1[0]).abs() < 1e-14));
    let h = 2f64.sqrt();
    assert!((s1[0] - 1.0 / h).abs() < 1e-14);
    assert!(dec.star(0).iter().all(|&v| (v - h).abs() < 1e-14));
}

/// Barycentric dual area of a vertex: the two quadrilateral halves of each adjacent triangle,
/// computed here from the vertex / edge-midpoint / centroid kite area.
fn kite_area(p: [[f64; 3]; 3]) -> f64 {
    let tri = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    };
    let mid = |a: [f64; 3], b: [f64; 3]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
    let g = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0, (p[0][2] + p[1][2] + p[2][2]) / 3.0];
    tri(p[0], mid(p[0], p[1]), g) + tri(p[0], g, mid(p[0], p[2]))
}

#[test]
fn unit_triangle_vertex_star() {
    let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let c = Complex64::build_from_triangle_mesh(p.to_vec(), &[[0, 1, 2]]).unwrap();
    let dec = Dec64::from_complex(&c, StarMode::LumpedVolume).unwrap();
    for v in 0..3 {
        assert!((dec.star(0)[v] - 1.0 / 6.0).abs() < 1e-15);
    }
    assert!((kite_area(p) - 1.0 / 6.0).abs() < 1e-15);
    assert!((dec.star(2)[0] - 2.0).abs() < 1e-14);
}

#[test]
fn vertex_star_matches_kite_oracle_on_sphere() {
    let c = Complex64::generate(&ShapeSpec::Icosphere(1)).unwrap();
    let dec = Dec64::from_complex(&c, StarMode::LumpedVolume).unwrap();
    let mut oracle = vec![0.0; c.count(0)];
    for f in c.simplices(2) {
        for r in 0..3 {
            let ordered = [f[r], f[(r + 1) % 3], f[(r + 2) % 3]];
            oracle[f[r]] += kite_area(ordered.map(|v| c.coords()[v]));
        }
    }
    for (a, b) in dec.star(0).iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn inner_product_examples() {
    let dec = dec("icosphere:0", StarMode::Identity);
    let mut e = Cochain64::zeros(1, dec.count(1));
    e.values[0] = 1.0;
    assert_eq!(dec.inner(&e, &e).unwrap(), 1.0);
    let v = Cochain64::zeros(0, dec.count(0));
    assert!(matches!(dec.inner(&e, &v), Err(Error::DegreeMismatch { .. })));
    let lumped = self::dec("icosphere:0", StarMode::LumpedVolume);
    let c = Complex64::generate(&ShapeSpec::Icosphere(0)).unwrap();
    let stars = assemble_hodge_star(&c, None, StarMode::LumpedVolume).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random(&mut rng, 1, lumped.count(1));
    let direct: f64 = a.values.iter().zip(lumped.star(1).iter()).map(|(x, s)| s * x * x).sum();
    assert!((hodge_inner(&a, &a, &stars[1]).unwrap() - direct).abs() < 1e-14);
}

#[test]
fn non_pure_complex_rejects_lumped_stars() {
    let u = Complex64::generate(&"union:icosphere:0+cycle:4".parse().unwrap()).unwrap();
    assert!(DecOperators::from_complex(&u, StarMode::LumpedVolume).is_err());
    assert!(DecOperators::from_complex(&u, StarMode::Identity).is_ok());
}

proptest! {
    #[test]
    fn hodge_inner_is_symmetric(seed in 0u64..200) {
        let dec = dec("torus:4,5", StarMode::LumpedVolume);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..=2 {
            let a = random(&mut rng, k, dec.count(k));
            let b = random(&mut rng, k, dec.count(k));
            prop_assert!((dec.inner(&a, &b).unwrap() - dec.inner(&b, &a).unwrap()).abs() < 1e-14);
            prop_assert!(dec.inner(&a, &a).unwrap() > 0.0);
        }
    }

    #[test]
    fn exact_sequence_on_random_cochains(seed in 0u64..100) {
        let dec = dec("icosphere:1", StarMode::LumpedVolume);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, 0, dec.count(0));
        let ddx = dec.apply_d(&dec.apply_d(&x).unwrap()).unwrap();
        prop_assert!(ddx.values.amax() < 1e-12 * x.values.amax());
        let y = random(&mut rng, 2, dec.count(2));
        let cc = dec.apply_codiff(&dec.apply_codiff(&y).unwrap()).unwrap();
        prop_assert!(cc.values.amax() < 1e-12 * y.values.amax());
    }
}

#[test]
fn dense_check_of_laplacian_definition() {
    let dec = dec("torus:4,4", StarMode::LumpedVolume);
    let s = |k: usize| DMatrix::from_diagonal(dec.star(k));
    let si = |k: usize| DMatrix::from_diagonal(&dec.star(k).map(|v| 1.0 / v));
    let b1 = dec.boundary(1).to_dense();
    let b2 = dec.boundary(2).to_dense();
    let l1 = b1.transpose() * si(0) * &b1 * s(1) + si(1) * &b2 * s(2) * b2.transpose();
    assert!((l1 - dec.laplacian(1).to_dense()).abs().max() < 1e-12);
}
