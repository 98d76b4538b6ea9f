use hsd_core::ambient::Kernel;
use hsd_core::model::{gradient_check, HsdContext, HsdModel, ModelConfig, Variant};
use hsd_core::{Cochain64, Complex64};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        degree: 1,
        input_degree: 1,
        modes: 12,
        layers: 2,
        hidden: 8,
        fiber_channels: 4,
        fiber_depth: 2,
        fiber_modes: [3, 3, 3],
        grid_resolution: 12,
        kernel: Kernel::Gaussian { eps_cells: 2.0 },
        corrector_hidden: 4,
        ..ModelConfig::default()
    }
}

fn torus(n: usize) -> Complex64 {
    Complex64::generate(&format!("torus:{n},{n}").parse().unwrap()).unwrap()
}

/// Fills the tensors that start at zero (biases, corrector output layer) so that every
/// gradient is generic, and moves λ off 1.
fn randomize_zero_init(model: &mut HsdModel<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    let names: Vec<String> = model.manifest().iter().map(|t| t.name.clone()).collect();
    for name in names {
        let t = model.tensor_mut(&name).unwrap();
        if t.iter().all(|&v| v == 0.0) {
            for v in t {
                *v = rng.random_range(-scale..scale);
            }
        }
    }
    model.set_residual_scale(0.7);
}

fn random_cochain(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Cochain64 {
    Cochain64::from_vec(k, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn gradients_match_finite_differences() {
    let c = torus(6);
    for variant in [Variant::Full, Variant::NoProjection, Variant::NoCorrector] {
        let config = ModelConfig { variant, ..small_config() };
        let mut model = HsdModel::build(&c, config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        randomize_zero_init(&mut model, &mut rng, 0.3);
        let x = random_cochain(&mut rng, 1, c.count(1));
        let y = DVector::from_fn(c.count(1), |_, _| rng.random_range(-1.0..1.0));
        let rows = gradient_check(&mut model, &x, &y, 6, 1e-5, 9).unwrap();
        for r in &rows {
            let unused = variant == Variant::NoCorrector && r.tensor.contains("corrector");
            if unused {
                assert_eq!(r.max_rel_error, 0.0, "{}", r.tensor);
            } else {
                assert!(r.max_rel_error < 1e-5, "{variant}: {} rel {:e} abs {:e}", r.tensor, r.max_rel_error, r.max_abs_error);
            }
        }
    }
}

#[test]
fn gradients_with_conditioning_channel() {
    let c = torus(6);
    let config = ModelConfig { input_degree: 0, ..small_config() };
    let mut model = HsdModel::build(&c, config, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    randomize_zero_init(&mut model, &mut rng, 0.3);
    let x = random_cochain(&mut rng, 0, c.count(0));
    let y = DVector::from_fn(c.count(1), |_, _| rng.random_range(-1.0..1.0));
    for r in gradient_check(&mut model, &x, &y, 4, 1e-5, 2).unwrap() {
        assert!(r.max_rel_error < 1e-5, "{} {:e}", r.tensor, r.max_rel_error);
    }
}

#[test]
#[ignore]
fn timing() {
    let c = torus(12);
    let t0 = std::time::Instant::now();
    let model = HsdModel::build(&c, ModelConfig::default(), 1).unwrap();
    eprintln!("build {:?}", t0.elapsed());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_cochain(&mut rng, 1, c.count(1));
    let mut g = vec![0.0; model.param_count()];
    let t0 = std::time::Instant::now();
    for _ in 0..10 {
        let t = model.forward(&x).unwrap();
        model.backward(&t, &x.values, &mut g).unwrap();
    }
    eprintln!("fwd+bwd {:?} per sample, {} params", t0.elapsed() / 10, model.param_count());
}

fn harmonic_coeffs(model: &HsdModel<f64>, w: &DVector<f64>) -> Vec<f64> {
    let sub = &model.context.subspace;
    let c = sub.spectral_coeffs(&Cochain64::new(sub.degree(), w.clone())).unwrap();
    sub.harmonic_indices().iter().map(|&i| c[i]).collect()
}

#[test]
fn harmonic_constraint_after_every_layer() {
    let c = torus(6);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..4 {
        let mut model = HsdModel::build(&c, small_config(), seed).unwrap();
        randomize_zero_init(&mut model, &mut rng, 0.5);
        assert_eq!(model.context.subspace.harmonic_indices().len(), 2);
        for _ in 0..5 {
            let x = random_cochain(&mut rng, 1, c.count(1));
            let t = model.forward(&x).unwrap();
            let reference = harmonic_coeffs(&model, &x.values);
            for layer in &t.layers {
                for (a, b) in harmonic_coeffs(&model, &layer.output).iter().zip(&reference) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
                let sub = &model.context.subspace;
                let nf = sub.inner(&layer.fiber_out, &layer.fiber_out).sqrt();
                assert!(nf > 0.0);
                for j in 0..sub.modes() {
                    let phi = sub.basis().column(j).clone_owned();
                    assert!(sub.inner(&layer.fiber_out, &phi).abs() < 1e-9 * nf);
                }
                assert_eq!(layer.output, &layer.base + &layer.fiber_out);
            }
            for d in model.diagnostics(&t) {
                assert!(d.harmonic_error < 1e-12 && d.fiber_leak < 1e-9);
            }
        }
    }
}

#[test]
fn zero_weights_give_low_pass_projection() {
    let c = torus(6);
    let ctx = HsdContext::new(&c, &small_config()).unwrap();
    let model = HsdModel::zeroed(ctx, small_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_cochain(&mut rng, 1, c.count(1));
    let out = model.predict(&x).unwrap();
    let proj = model.context.subspace.project_base(&x).unwrap();
    assert!((&out.values - &proj.values).amax() < 1e-13);
}

#[test]
fn conditioned_zero_model_projects_the_mapped_source() {
    let c = torus(6);
    let config = ModelConfig { input_degree: 0, ..small_config() };
    let ctx = HsdContext::new(&c, &config).unwrap();
    let model = HsdModel::zeroed(ctx, config).unwrap();
    let dec = hsd_core::Dec64::from_complex(&c, Default::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f = random_cochain(&mut rng, 0, c.count(0));
    let out = model.predict(&f).unwrap();
    let expect = model.context.subspace.project_base(&dec.apply_d(&f).unwrap()).unwrap();
    assert!((&out.values - &expect.values).amax() < 1e-12);
}

/// Eq-by-eq recomputation of the gated update with explicit loops over the column-major tensors.
#[test]
fn base_forward_matches_loop_oracle() {
    let c = torus(6);
    let mut model = HsdModel::build(&c, small_config(), 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    randomize_zero_init(&mut model, &mut rng, 0.5);
    let m = model.dims().modes;
    let coeffs = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let c_ref = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let got = model.base_forward(1, &coeffs, &c_ref).unwrap();
    let sub = &model.context.subspace;
    let mut q = coeffs.as_slice().to_vec();
    q.extend((&sub.m_d * &coeffs).iter());
    q.extend((&sub.m_delta * &coeffs).iter());
    let (h, qd) = (small_config().hidden, q.len());
    let at = |name: &str, r: usize, col: usize, rows: usize| model.tensor(name).unwrap()[col * rows + r];
    let silu = |x: f64| x / (1.0 + (-x).exp());
    let mut gated = vec![0.0; h];
    for (i, g) in gated.iter_mut().enumerate() {
        let mut a = model.tensor("layer1.base.b_g").unwrap()[i];
        let mut b = model.tensor("layer1.base.b_c").unwrap()[i];
        for (j, qj) in q.iter().enumerate() {
            a += at("layer1.base.w_g", i, j, h) * qj;
            b += at("layer1.base.w_c", i, j, h) * qj;
        }
        *g = silu(a) * b;
    }
    assert_eq!(qd, model.features(&coeffs).len());
    for r in 0..m {
        let expect = if sub.harmonic_indices().contains(&r) {
            c_ref[r]
        } else {
            coeffs[r] + (0..h).map(|j| at("layer1.base.w_out", r, j, m) * gated[j]).sum::<f64>()
        };
        assert!((got[r] - expect).abs() < 1e-13, "row {r}");
    }
    let zero = HsdModel::zeroed(model.context.clone(), small_config()).unwrap();
    let same = zero.base_forward(0, &coeffs, &coeffs).unwrap();
    assert_eq!(same, coeffs);
}

#[test]
fn fiber_gates_and_zero_kernels() {
    let c = torus(6);
    let mut model = HsdModel::build(&c, small_config(), 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = random_cochain(&mut rng, 1, c.count(1));
    let base = model.context.subspace.project_base(&x).unwrap();
    let out = model.fiber_forward(0, &x, &base, None).unwrap();
    assert!(out.values.amax() > 0.0);
    let sub = &model.context.subspace;
    let coeffs = sub.spectral_coeffs(&out).unwrap();
    assert!(coeffs.amax() < 1e-12 * sub.inner(&out.values, &out.values).sqrt());
    model.set_residual_scale(0.0);
    assert_eq!(model.fiber_forward(0, &x, &base, None).unwrap().values.amax(), 0.0);
    model.set_residual_scale(1.0);
    let names: Vec<String> = model.manifest().iter().map(|t| t.name.clone()).filter(|n| n.starts_with("layer0.fiber")).collect();
    for n in names {
        model.tensor_mut(&n).unwrap().fill(0.0);
    }
    assert_eq!(model.fiber_forward(0, &x, &base, None).unwrap().values.amax(), 0.0);
}

#[test]
fn corrector_init_and_oracle() {
    let c = torus(6);
    let mut model = HsdModel::build(&c, small_config(), 41).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = c.count(1);
    let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let base = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let q = model.features(&model.context.subspace.spectral_coeffs(&Cochain64::new(1, w.clone())).unwrap());
    let out = model.corrector_forward(0, &w, &base, &q).unwrap();
    let z_norm = (w.norm_squared() + base.norm_squared() + q.norm_squared()).sqrt();
    assert!(out.norm() <= 1e-6 * z_norm);

    let zero = DVector::zeros(n);
    assert_eq!(model.corrector_forward(0, &zero, &zero, &DVector::zeros(q.len())).unwrap().amax(), 0.0);

    randomize_zero_init(&mut model, &mut rng, 0.5);
    let got = model.corrector_forward(0, &w, &base, &q).unwrap();
    let hc = small_config().corrector_hidden;
    let rt = model.context.roundtrip().mul_vec(&w);
    let t = |name: &str| model.tensor(&format!("layer0.corrector.{name}")).unwrap().to_vec();
    let (w1e, w1q, b1, w2, b2) = (t("w1_local"), t("w1_q"), t("b1"), t("w2"), t("b2"));
    for s in 0..n {
        let e = [w[s], rt[s], base[s]];
        let mut acc = b2[0];
        for j in 0..hc {
            let mut pre = b1[j];
            for (i, ei) in e.iter().enumerate() {
                pre += w1e[i * hc + j] * ei;
            }
            for (i, qi) in q.iter().enumerate() {
                pre += w1q[i * hc + j] * qi;
            }
            acc += w2[j] * pre / (1.0 + (-pre).exp());
        }
        assert!((got[s] - acc).abs() < 1e-12);
    }
}

#[test]
fn ablation_variants_behave_as_declared() {
    let c = torus(6);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let x = random_cochain(&mut rng, 1, c.count(1));

    let mut np = HsdModel::build(&c, ModelConfig { variant: Variant::NoProjection, ..small_config() }, 5).unwrap();
    randomize_zero_init(&mut np, &mut rng, 0.5);
    let t = np.forward(&x).unwrap();
    let leak = np.diagnostics(&t);
    assert!(leak.iter().all(|d| d.fiber_leak > 1e-3));

    let mut nc = HsdModel::build(&c, ModelConfig { variant: Variant::NoCorrector, ..small_config() }, 5).unwrap();
    let before = nc.predict(&x).unwrap();
    let names: Vec<String> = nc.manifest().iter().map(|t| t.name.clone()).filter(|n| n.contains("corrector")).collect();
    for n in names {
        for v in nc.tensor_mut(&n).unwrap() {
            *v = rng.random_range(-2.0..2.0);
        }
    }
    assert_eq!(nc.predict(&x).unwrap(), before);
}

#[test]
fn checkpoint_round_trip_and_transfer() {
    let c = torus(6);
    let model = HsdModel::build(&c, small_config(), 61).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    hsd_core::model::save_checkpoint(&model, &path).unwrap();
    let (loaded, meta) = hsd_core::model::load_checkpoint(&path, model.context.clone()).unwrap();
    assert_eq!(loaded.params, model.params);
    assert_eq!(meta.complex_hash, c.content_hash());
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let x = random_cochain(&mut rng, 1, c.count(1));
    assert_eq!(loaded.predict(&x).unwrap(), model.predict(&x).unwrap());

    let fine = torus(9);
    let ctx = HsdContext::new(&fine, &small_config()).unwrap();
    let moved = model.clone().with_context(ctx).unwrap();
    let y = random_cochain(&mut rng, 1, fine.count(1));
    assert!(moved.predict(&y).unwrap().is_finite());

    let other = ModelConfig { modes: 10, ..small_config() };
    let ctx = HsdContext::new(&fine, &other).unwrap();
    assert!(model.with_context(ctx).is_err());
}

#[test]
fn single_precision_forward() {
    let c = torus(6).cast::<f32>();
    let model = HsdModel::<f32>::build(&c, small_config(), 1).unwrap();
    let x = hsd_core::Cochain::<f32>::from_vec(1, (0..c.count(1)).map(|i| (i as f32 * 0.37).sin()).collect());
    assert!(model.predict(&x).unwrap().is_finite());
}

#[test]
fn commutator_identity() {
    use hsd_core::dec::StarMode;
    use hsd_core::model::commutator_identity_check;
    let c = Complex64::generate(&"icosphere:1".parse().unwrap()).unwrap();
    let dec = hsd_core::Dec64::from_complex(&c, StarMode::Identity).unwrap();
    let n = c.count(0);
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let kappa = random_cochain(&mut rng, 0, n).values.map(|v| 1.5 + v);
    let kappa = Cochain64::new(0, kappa);
    let u = random_cochain(&mut rng, 0, n);
    let r = commutator_identity_check(&dec, &kappa, &u).unwrap();
    assert!(r.brute_force_residual < 1e-12);
    assert!(r.constant_kappa_norm < 1e-12);
    assert!(r.commutator_norm > 1e-3);

    // u constant: L₀1 = 0, so the commutator reduces to (L₀κ)⊙u.
    let ones = Cochain64::from_vec(0, vec![2.0; n]);
    let r = commutator_identity_check(&dec, &kappa, &ones).unwrap();
    let expect = (dec.laplacian(0).to_dense() * &kappa.values * 2.0).amax();
    assert!((r.commutator_norm - expect).abs() < 1e-12);
    assert!(commutator_identity_check(&dec, &kappa, &Cochain64::zeros(1, c.count(1))).is_err());
}
