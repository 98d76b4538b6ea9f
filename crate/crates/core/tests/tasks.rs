use hsd_core::complex::ShapeSpec;
use hsd_core::dec::{DecOperators, StarMode};
use hsd_core::spectrum::{eigensolve, hodge_decompose, EigenMethod};
use hsd_core::tasks::poisson::solve_poisson;
use hsd_core::tasks::{
    harmonic_basis, load_dataset, refine_and_transfer, save_dataset, torus_velocity, HarmonicSpec, PoissonSpec,
    Split, TaskKind, TaskSpec, TransportSolver, TransportSpec,
};
use hsd_core::{Cochain, Complex64, Dec64, Error};
use nalgebra::DVector;
use proptest::prelude::*;

fn setup(shape: ShapeSpec) -> (Complex64, Dec64) {
    let c = Complex64::generate(&shape).unwrap();
    let d = DecOperators::from_complex(&c, StarMode::LumpedVolume).unwrap();
    (c, d)
}

fn hnorm(x: &DVector<f64>, s: &DVector<f64>) -> f64 {
    x.component_mul(x).dot(s).sqrt()
}

#[test]
fn diffusion_of_an_eigenvector_follows_the_backward_euler_factor() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(8, 8));
    let spec = eigensolve(&dec, 0, 6, EigenMethod::Dense).unwrap();
    let zero = DVector::zeros(dec.count(1));
    let (nu, t, steps) = (0.05, 1.0, 20);
    let solver = TransportSolver::new(&c, &dec, &zero, nu, t, steps).unwrap();
    for j in [1, 3, 5] {
        let phi = spec.basis.column(j).into_owned();
        let lam = spec.eigenvalues[j];
        let factor = (1.0 + nu * (t / steps as f64) * lam).powi(-(steps as i32));
        let got = solver.evolve(&phi).unwrap();
        let err = (&got - &phi * factor).amax() / phi.amax();
        assert!(err < 1e-10, "mode {j}: {err:e}");
    }
}

#[test]
fn zero_velocity_and_diffusivity_is_the_identity() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(6, 7));
    let zero = DVector::zeros(dec.count(1));
    let solver = TransportSolver::new(&c, &dec, &zero, 0.0, 1.0, 10).unwrap();
    let u0 = DVector::from_fn(dec.count(0), |i, _| (i as f64 * 0.37).sin());
    assert_eq!(solver.evolve(&u0).unwrap(), u0);
}

#[test]
fn velocity_is_harmonic_and_scaled() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(12, 12));
    let v = torus_velocity(&c, &dec, 1.0).unwrap();
    let lengths = &c.compute_geometry().unwrap().simplex_measures[1];
    let peak = v.iter().zip(lengths).map(|(x, l)| x.abs() / l).fold(0.0, f64::max);
    assert!((peak - 1.0).abs() < 1e-12);
    let div = dec.codiff(1).mul_vec(&v);
    let curl = dec.d(1).mul_vec(&v);
    assert!(div.amax() < 1e-9 * v.amax() / lengths[0], "div {:e}", div.amax());
    assert!(curl.amax() < 1e-9 * v.amax(), "curl {:e}", curl.amax());
}

#[test]
fn advection_conserves_mass() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(12, 12));
    let v = torus_velocity(&c, &dec, 1.0).unwrap();
    let u0 = DVector::from_iterator(dec.count(0), c.coords().iter().map(|p| 1.0 + (-(p[0] - 1.0).powi(2) * 4.0).exp()));
    for nu in [0.0, 0.01] {
        let solver = TransportSolver::new(&c, &dec, &v, nu, 1.0, 50).unwrap();
        let m0 = solver.mass(&u0);
        let m1 = solver.mass(&solver.evolve(&u0).unwrap());
        assert!(((m1 - m0) / m0).abs() < 1e-8, "ν={nu}: {m0} -> {m1}");
    }
}

#[test]
fn upwind_step_matches_a_per_edge_loop() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(7, 9));
    let v = torus_velocity(&c, &dec, 1.0).unwrap();
    let solver = TransportSolver::new(&c, &dec, &v, 0.0, 0.2, 10).unwrap();
    let u = DVector::from_fn(dec.count(0), |i, _| (i as f64 * 0.61).cos() + 2.0);
    let s0 = dec.star(0);
    let s1 = dec.star(1);
    let dt = 0.02;
    let mut mass: Vec<f64> = (0..u.len()).map(|i| u[i] * s0[i]).collect();
    for (e, edge) in c.simplices(1).iter().enumerate() {
        let (a, b) = (edge[0], edge[1]);
        // positive edge value = transport from the lower to the higher vertex
        let q = s1[e] * v[e] * dt * if v[e] > 0.0 { u[a] } else { u[b] };
        mass[a] -= q;
        mass[b] += q;
    }
    let got = solver.advect(&u);
    for i in 0..u.len() {
        assert!((got[i] - mass[i] / s0[i]).abs() < 1e-13);
    }
}

#[test]
fn cfl_is_enforced() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(12, 12));
    let v = torus_velocity(&c, &dec, 20.0).unwrap();
    assert!(matches!(TransportSolver::new(&c, &dec, &v, 0.01, 1.0, 50), Err(Error::CflViolation(x)) if x >= 0.5));
}

#[test]
fn transport_dataset_defaults() {
    let (c, _) = setup(ShapeSpec::TorusGrid(12, 12));
    let task = TaskSpec::Transport(TransportSpec { samples: 20, ..Default::default() });
    let data = task.generate(&c).unwrap();
    data.validate(&c).unwrap();
    assert_eq!(data.kind(), TaskKind::Transport);
    for s in &data.samples {
        assert!(s.target.values.amax() > 1e-3);
        assert!(s.input.values != s.target.values);
    }
}

#[test]
fn poisson_eigen_identity_and_residual() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(8, 10));
    let spec = eigensolve(&dec, 0, 6, EigenMethod::Dense).unwrap();
    for j in 1..6 {
        let phi = spec.basis.column(j).into_owned();
        let rho = &phi * spec.eigenvalues[j];
        let got = solve_poisson(&c, &dec, &rho).unwrap();
        assert!((&got - &phi).amax() < 1e-9 * phi.amax(), "mode {j}");
    }
    let zero = DVector::zeros(dec.count(0));
    assert_eq!(solve_poisson(&c, &dec, &zero).unwrap().amax(), 0.0);
}

#[test]
fn poisson_dataset_targets_are_gradients_of_the_solution() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(8, 8));
    let data = TaskSpec::Poisson(PoissonSpec { samples: 6, ..Default::default() }).generate(&c).unwrap();
    data.validate(&c).unwrap();
    for s in &data.samples {
        assert!(s.input.values.dot(dec.star(0)).abs() < 1e-10);
        // δ₁B = −L₀φ = −ρ
        let div = dec.codiff(1).mul_vec(&s.target.values) + &s.input.values;
        assert!(div.amax() < 1e-8 * s.input.values.amax());
        assert!(hodge_decompose(&dec, &s.target).unwrap().harmonic.values.amax() < 1e-9);
    }
    // with a harmonic component and ρ = 0 the target is purely harmonic
    let spec = PoissonSpec { samples: 3, harmonic_amplitude: 0.5, eigen_modes: 0, bumps: 0, ..Default::default() };
    for s in &TaskSpec::Poisson(spec).generate(&c).unwrap().samples {
        assert_eq!(s.input.values.amax(), 0.0);
        let parts = hodge_decompose(&dec, &s.target).unwrap();
        assert!((&parts.harmonic.values - &s.target.values).amax() < 1e-9 * s.target.values.amax());
    }
}

#[test]
fn poisson_requires_a_connected_complex() {
    let shape: ShapeSpec = "union:torus:4,4+torus:4,4".parse().unwrap();
    let (c, _) = setup(shape);
    let err = TaskSpec::Poisson(PoissonSpec { samples: 1, ..Default::default() }).generate(&c);
    assert!(matches!(err, Err(Error::NonConnected(2))));
}

#[test]
fn harmonic_targets_match_an_eigenbasis_projection() {
    let (c, dec) = setup(ShapeSpec::TorusGrid(10, 10));
    let h = harmonic_basis(&dec, 1).unwrap();
    assert_eq!(h.ncols(), 2);
    let data = TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 8, ..Default::default() }).generate(&c).unwrap();
    let s1 = dec.star(1);
    for s in &data.samples {
        // independent oracle: Hodge-orthogonal projection onto the harmonic eigenvectors
        let coef = h.transpose() * s.input.values.component_mul(s1);
        let oracle = &h * coef;
        let err = hnorm(&(&s.target.values - &oracle), s1) / hnorm(&oracle, s1);
        assert!(err < 1e-9, "{err:e}");
        let noise = &s.input.values - &s.target.values;
        let ratio = hnorm(&noise, s1) / hnorm(&s.target.values, s1);
        assert!((ratio - 1.0).abs() < 1e-6, "noise ratio {ratio}");
    }
    let clean = TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 3, noise: 0.0, ..Default::default() });
    for s in &clean.generate(&c).unwrap().samples {
        assert!((&s.target.values - &s.input.values).amax() < 1e-9 * s.input.values.amax());
    }
}

#[test]
fn pure_exact_input_has_zero_harmonic_part() {
    let (_, dec) = setup(ShapeSpec::TorusGrid(8, 8));
    let a = DVector::from_fn(dec.count(0), |i, _| (i as f64 * 1.3).sin());
    let w = Cochain::new(1, dec.d(0).mul_vec(&a));
    let h = hodge_decompose(&dec, &w).unwrap().harmonic;
    assert!(h.values.amax() < 1e-9 * w.values.amax());
}

#[test]
fn harmonic_recovery_needs_a_loop() {
    let (c, _) = setup(ShapeSpec::Icosphere(1));
    let err = TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 1, ..Default::default() }).generate(&c);
    assert!(matches!(err, Err(Error::InvalidParameter(_))));
}

#[test]
fn refinement_counts_topology_and_aligned_decay() {
    let coarse = ShapeSpec::TorusGrid(8, 8);
    let task = TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 4, ..Default::default() });
    let (fine, fc, fdata) = refine_and_transfer(&coarse, &task, 1.5).unwrap();
    assert_eq!(fine, ShapeSpec::TorusGrid(12, 12));
    let (cc, cdec) = setup(coarse);
    assert_eq!(fc.count(0) as f64 / cc.count(0) as f64, 2.25);
    let fdec = DecOperators::from_complex(&fc, StarMode::LumpedVolume).unwrap();
    for k in 0..=2 {
        let a = eigensolve(&cdec, k, 6, EigenMethod::Dense).unwrap().betti();
        let b = eigensolve(&fdec, k, 6, EigenMethod::Dense).unwrap().betti();
        assert_eq!(a, b, "degree {k}");
    }
    fdata.validate(&fc).unwrap();
    assert_eq!(fdata.samples.iter().map(|s| s.seed).collect::<Vec<_>>(), task.generate(&cc).unwrap().samples.iter().map(|s| s.seed).collect::<Vec<_>>());
    // the same eigenmode index decays at nearly the same rate on both meshes
    let (nu, steps) = (0.02, 10);
    let decay = |c: &Complex64, dec: &Dec64| {
        let spec = eigensolve(dec, 0, 2, EigenMethod::Dense).unwrap();
        let phi = spec.basis.column(1).into_owned();
        let solver = TransportSolver::new(c, dec, &DVector::zeros(dec.count(1)), nu, 1.0, steps).unwrap();
        let out = solver.evolve(&phi).unwrap();
        out.component_mul(dec.star(0)).dot(&phi)
    };
    let (a, b) = (decay(&cc, &cdec), decay(&fc, &fdec));
    assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
}

#[test]
fn generation_is_deterministic() {
    let (c, _) = setup(ShapeSpec::TorusGrid(8, 8));
    for task in [
        TaskSpec::Transport(TransportSpec { samples: 5, seed: 3, ..Default::default() }),
        TaskSpec::Poisson(PoissonSpec { samples: 5, seed: 3, ..Default::default() }),
        TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 5, seed: 3, ..Default::default() }),
    ] {
        assert_eq!(task.generate(&c).unwrap(), task.generate(&c).unwrap());
        let other = task.clone().with_seed(4).generate(&c).unwrap();
        assert_ne!(other.samples[0].input, task.generate(&c).unwrap().samples[0].input);
    }
}

#[test]
fn split_sizes() {
    let s = Split::new(200, 0);
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (136, 24, 40));
    s.validate(200).unwrap();
    assert_eq!(s, Split::new(200, 0));
    assert_ne!(s, Split::new(200, 1));
}

proptest! {
    #[test]
    fn splits_are_disjoint_and_exhaustive(n in 0usize..400, seed in any::<u64>()) {
        let s = Split::new(n, seed);
        prop_assert!(s.validate(n).is_ok());
        prop_assert_eq!(s.train.len(), (0.68 * n as f64).floor() as usize);
        prop_assert_eq!(s.val.len(), (0.12 * n as f64).floor() as usize);
    }
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (shape, task) in [
        (ShapeSpec::TorusGrid(6, 6), TaskSpec::Poisson(PoissonSpec { samples: 10, ..Default::default() })),
        (ShapeSpec::Cycle(12), TaskSpec::HarmonicRecovery(HarmonicSpec { samples: 10, ..Default::default() })),
    ] {
        let c = Complex64::generate(&shape).unwrap();
        let data = task.generate(&c).unwrap();
        let sub = dir.path().join(shape.to_string().replace([':', ','], "_"));
        save_dataset(&data, &c, Some(&shape), &sub).unwrap();
        let (back, bc) = load_dataset(&sub).unwrap();
        assert_eq!(bc.content_hash(), c.content_hash());
        assert_eq!(back, data);
        let first = std::fs::read_to_string(sub.join("train.jsonl")).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert!(line["seed"].is_u64() && line["input"]["values"].is_array() && line["target"]["degree"].is_u64());
    }
    // a tampered hash is rejected
    let sub = dir.path().join("torus_6_6");
    let meta = std::fs::read_to_string(sub.join("dataset.json")).unwrap();
    let hash = Complex64::generate(&ShapeSpec::TorusGrid(6, 6)).unwrap().content_hash();
    std::fs::write(sub.join("dataset.json"), meta.replace(&hash, "0000000000000000")).unwrap();
    assert!(matches!(load_dataset(&sub), Err(Error::ComplexMismatch(..))));
}

#[test]
fn task_spec_json() {
    let t: TaskSpec = serde_json::from_str(r#"{"kind": "transport", "samples": 7, "nu": 0.02}"#).unwrap();
    assert_eq!(t, TaskSpec::Transport(TransportSpec { samples: 7, nu: 0.02, ..Default::default() }));
    let back: TaskSpec = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
    assert!(serde_json::from_str::<TaskSpec>(r#"{"kind": "poisson", "bogus": 1}"#).is_err());
    assert!(serde_json::from_str::<TaskSpec>(r#"{"kind": "heat"}"#).is_err());
}
