use super::*;
use crate::hilbert::{commutator, BipartiteShape, CVec};
use crate::models::{preset_exchange_qubits, preset_random_dense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_state(shape: BipartiteShape, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = CVec::from_fn(shape.total(), |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    StateVector::normalized(v, shape, 0.0).unwrap()
}

fn series(spec: &ModelSpec, psi: &StateVector, t1: f64, n: usize, delta: f64, gauge: GaugeConvention) -> FrameSeries {
    let grid = TimeGrid::new(0.0, t1, n, Some(delta)).unwrap();
    let traj = Arc::new(sample_trajectory(Arc::new(spec.clone()), psi, grid).unwrap());
    track(traj, gauge, 1e-8, 1e-6).unwrap()
}

fn occupied_projector(frame: &SchmidtFrame, k: Subsystem) -> CMat {
    let b = frame.basis(k);
    let mut p = CMat::zeros(b.nrows(), b.nrows());
    for j in frame.occupied() {
        p += b.column(j) * b.column(j).adjoint();
    }
    p
}

fn max_generator_error(s: &FrameSeries, spec: &ModelSpec, k: Subsystem) -> f64 {
    (0..s.n_points())
        .map(|i| {
            let eff = effective_hamiltonian(s, k, i).unwrap();
            let p = occupied_projector(s.center(i), k);
            let target = &p * spec.bare(k).matrix() * &p;
            (eff.h_tilde().matrix() - target).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn non_interacting_generator_is_bare() {
    let tol = Tolerances::default();
    for (d1, d2, seed) in [(2, 2, 3), (2, 3, 4), (3, 3, 5)] {
        let spec = preset_random_dense(d1, d2, 0.0, seed).unwrap();
        let psi = random_state(spec.shape(), seed + 100);
        let delta = 1e-4;
        let s = series(&spec, &psi, 5.0, 26, delta, GaugeConvention::default());
        for k in Subsystem::BOTH {
            let e = spec.bare(k).frobenius_norm();
            let err = max_generator_error(&s, &spec, k);
            assert!(err <= tol.stencil_bound(e, delta, 1.0), "({d1},{d2}) k={}: {err}", k.number());
        }
        let eff2 = effective_hamiltonian(&s, Subsystem::Two, 0).unwrap();
        assert_eq!(eff2.occupied_only(), d2 > d1);
    }
}

#[test]
fn frozen_product_eigenstate() {
    let spec = preset_exchange_qubits(1.0, 1.4, 0.0);
    let psi = StateVector::product(spec.shape(), 0, 1).unwrap();
    let s = series(&spec, &psi, 4.0, 9, 1e-4, GaugeConvention::default());
    for i in 0..s.n_points() {
        let eff = effective_hamiltonian(&s, Subsystem::One, i).unwrap();
        assert!(eff.occupied_only());
        let u1 = local_energy(s.center(i), &eff).unwrap();
        assert!((u1 - 0.5).abs() < 1e-8, "u1 = {u1}");
        let eff2 = effective_hamiltonian(&s, Subsystem::Two, i).unwrap();
        assert!((local_energy(s.center(i), &eff2).unwrap() + 0.7).abs() < 1e-8);
    }
}

#[test]
fn generator_converges_at_second_order() {
    let spec = preset_exchange_qubits(1.0, 1.0, 0.1);
    let psi = StateVector::product(spec.shape(), 1, 0).unwrap();
    let tol = Tolerances::default();
    let h = |delta: f64| -> Vec<CMat> {
        let s = series(&spec, &psi, 10.0, 11, delta, GaugeConvention::default());
        (1..11).map(|i| effective_hamiltonian(&s, Subsystem::One, i).unwrap().h_tilde().matrix().clone()).collect()
    };
    let (a, b, c) = (h(0.02), h(0.01), h(0.005));
    for i in 0..a.len() {
        let coarse = (&a[i] - &b[i]).norm();
        let fine = (&b[i] - &c[i]).norm();
        assert!(tol.is_second_order(coarse, fine), "point {i}: {coarse} / {fine}");
    }
}

#[test]
fn asymmetry_scales_quadratically() {
    let spec = preset_random_dense(2, 2, 1.0, 11).unwrap();
    let psi = random_state(spec.shape(), 3);
    let asym = |delta: f64| {
        let s = series(&spec, &psi, 3.0, 4, delta, GaugeConvention::default());
        (0..4).map(|i| effective_hamiltonian(&s, Subsystem::One, i).unwrap().asymmetry()).fold(0.0, f64::max)
    };
    let tol = Tolerances::default();
    assert!(tol.is_second_order(asym(0.02), asym(0.01)));
}

#[test]
fn rejects_unaligned_and_coarse_stencils() {
    let spec = preset_random_dense(2, 2, 3.0, 2).unwrap();
    let psi = random_state(spec.shape(), 9);
    // δ = spacing/2 with a strongly coupled model gives a useless difference quotient.
    let s = series(&spec, &psi, 4.0, 3, 1.0, GaugeConvention::default());
    let err = (0..3).find_map(|i| effective_hamiltonian(&s, Subsystem::One, i).err());
    assert!(matches!(err, Some(Error::StencilQuality { .. })), "{err:?}");
    let strict = Tolerances { max_stencil_asymmetry: 1e-30, ..Tolerances::default() };
    let fine = series(&spec, &psi, 4.0, 3, 1e-3, GaugeConvention::default());
    assert!(matches!(
        effective_hamiltonian_with(&fine, Subsystem::One, 1, &strict),
        Err(Error::StencilQuality { .. })
    ));
}

#[test]
fn split_reassembles_and_matches_projections() {
    for seed in [42, 1, 2] {
        let spec = preset_random_dense(2, 2, 1.0, seed).unwrap();
        let psi = random_state(spec.shape(), seed + 7);
        let s = series(&spec, &psi, 4.0, 9, 1e-4, GaugeConvention::default());
        let v = spectral_decompose(spec.h1()).unwrap().vectors;
        for k in Subsystem::BOTH {
            let bare = spec.bare(k).matrix();
            for i in 0..s.n_points() {
                let eff = split_effective(&effective_hamiltonian(&s, k, i).unwrap(), &spec).unwrap();
                let (ls, x) = (eff.h_ls().unwrap().matrix(), eff.h_x().unwrap().matrix());
                assert!((eff.h_tilde().matrix() - bare - ls - x).norm() < 1e-10);
                let scale = ls.norm() * bare.norm();
                assert!(commutator(ls, bare).norm() <= 1e-8 * scale.max(1e-300) + 1e-14);
                if k == Subsystem::One {
                    let xb = v.adjoint() * x * &v;
                    assert!(xb[(0, 0)].norm() < 1e-10 && xb[(1, 1)].norm() < 1e-10);
                }
                let (pls, px) = lamb_shift_from_projections(&s, k, i).unwrap();
                assert!((pls.matrix() - ls).norm() < 1e-6, "seed {seed} t {}", eff.time());
                assert!((px.matrix() - x).norm() < 1e-6);
                assert!(projection_orthonormality_residual(&s, k, i).unwrap() < 1e-10);
            }
        }
    }
}

#[test]
fn split_of_shifted_bare_is_pure_lamb_shift() {
    let spec = preset_random_dense(2, 3, 1.0, 5).unwrap();
    let c = 0.37;
    for k in Subsystem::BOTH {
        let h = spec.bare(k).add(&Operator::identity(spec.bare(k).dim()).scale(c)).unwrap();
        let eff = EffectiveHamiltonian {
            subsystem: k,
            time: 0.0,
            h_tilde: h,
            h_ls: None,
            h_x: None,
            asymmetry: 0.0,
            occupied_only: false,
            gauge: GaugeId::of_convention(&GaugeConvention::default()),
        };
        let out = split_effective(&eff, &spec).unwrap();
        let n = spec.bare(k).dim();
        assert!((out.h_ls().unwrap().matrix() - CMat::identity(n, n) * Complex64::new(c, 0.0)).norm() < 1e-12);
        assert!(out.h_x().unwrap().frobenius_norm() < 1e-12);
        let occ = EffectiveHamiltonian { occupied_only: true, ..eff };
        assert!(matches!(split_effective(&occ, &spec), Err(Error::Unsupported(_))));
    }
}

#[test]
fn degenerate_bare_spectrum_uses_blocks() {
    // H1 = 0 is fully degenerate, so all of Δ is Lamb-shift-like.
    let z = Operator::zeros(2);
    let base = preset_random_dense(2, 2, 1.0, 9).unwrap();
    let spec = ModelSpec::new(base.shape(), z, base.h2().clone(), base.h_int().clone(), 1.0, "flat").unwrap();
    let psi = random_state(spec.shape(), 4);
    let s = series(&spec, &psi, 2.0, 3, 1e-4, GaugeConvention::default());
    let eff = split_effective(&effective_hamiltonian(&s, Subsystem::One, 1).unwrap(), &spec).unwrap();
    assert_eq!(eff.h_x().unwrap().frobenius_norm(), 0.0);
    assert!(eff.h_ls().unwrap().frobenius_norm() > 1e-3);
    let (pls, px) = lamb_shift_from_projections(&s, Subsystem::One, 1).unwrap();
    assert!((pls.matrix() - eff.h_ls().unwrap().matrix()).norm() < 1e-6);
    assert_eq!(px.frobenius_norm(), 0.0);
}

#[test]
fn projections_vanish_without_interaction() {
    let spec = preset_random_dense(2, 2, 0.0, 6).unwrap();
    let psi = random_state(spec.shape(), 6);
    let delta = 1e-4;
    let s = series(&spec, &psi, 6.0, 7, delta, GaugeConvention::default());
    for k in Subsystem::BOTH {
        let bound = Tolerances::default().stencil_bound(spec.bare(k).frobenius_norm(), delta, 1.0);
        for i in 0..s.n_points() {
            let (ls, x) = lamb_shift_from_projections(&s, k, i).unwrap();
            assert!(ls.frobenius_norm() <= bound && x.frobenius_norm() <= bound);
        }
    }
}

#[test]
fn total_energy_examples() {
    let spec = preset_random_dense(2, 3, 2.0, 8).unwrap();
    let sp = spectral_decompose(spec.total_hamiltonian()).unwrap();
    let ground = StateVector::new(sp.vectors.column(0).into_owned(), spec.shape(), 0.0).unwrap();
    assert!((total_energy(&ground, &spec).unwrap() - sp.values[0]).abs() < 1e-12);

    let ex = preset_exchange_qubits(1.0, 1.0, 0.1);
    let psi = StateVector::product(ex.shape(), 1, 0).unwrap();
    assert!(total_energy(&psi, &ex).unwrap().abs() < 1e-15);
    assert!(matches!(total_energy(&ground, &ex), Err(Error::Dimension(_))));
}

#[test]
fn local_energy_at_start_of_exchange() {
    let spec = preset_exchange_qubits(1.0, 1.0, 0.1);
    let psi = StateVector::product(spec.shape(), 1, 0).unwrap();
    let s = series(&spec, &psi, 10.0, 11, 1e-4, GaugeConvention::default());
    let eff = effective_hamiltonian(&s, Subsystem::One, 0).unwrap();
    // Subsystem 1 starts in |1⟩, the −ω/2 level of ω σz / 2.
    assert!((local_energy(s.center(0), &eff).unwrap() + 0.5).abs() < 1e-8);
    assert!(matches!(local_energy(s.center(1), &eff), Err(Error::Usage(_))));
    let other = series(&spec, &psi, 10.0, 11, 1e-4, GaugeConvention::ZeroDiagonal);
    assert!(matches!(local_energy(other.center(0), &eff), Err(Error::Usage(_))));
}

#[test]
fn additivity_without_interaction() {
    let spec = preset_random_dense(2, 3, 0.0, 12).unwrap();
    let psi = random_state(spec.shape(), 12);
    let a = analyze(Arc::new(spec), &psi, TimeGrid::new(0.0, 5.0, 21, Some(1e-4)).unwrap(), GaugeConvention::default(), &Tolerances::default()).unwrap();
    for r in &a.records {
        assert!(r.additivity_residual <= 1e-8);
        assert!((r.u1 - a.records[0].u1).abs() <= 1e-8);
    }
}

fn max_over(records: &[EnergyRecord], f: impl Fn(&EnergyRecord) -> f64) -> f64 {
    records.iter().map(f).fold(0.0, f64::max)
}

#[test]
fn residuals_halve_quadratically() {
    // On resonance the exchange residuals cancel identically, so detune it;
    // its Schmidt basis never rotates, so the master equation needs a dense model.
    let tol = Tolerances::default();
    let cases = [
        (preset_exchange_qubits(1.0, 1.3, 0.1), StateVector::product(BipartiteShape::new(2, 2).unwrap(), 1, 0).unwrap(), 2.0 * PI / 0.1),
        (preset_random_dense(2, 2, 1.0, 42).unwrap(), random_state(BipartiteShape::new(2, 2).unwrap(), 42), 6.0),
    ];
    for (n, (spec, psi, span)) in cases.into_iter().enumerate() {
        let spec = Arc::new(spec);
        let run = |delta: f64| {
            let grid = TimeGrid::new(0.0, span, 41, Some(delta)).unwrap();
            analyze(spec.clone(), &psi, grid, GaugeConvention::default(), &tol).unwrap().records
        };
        let (a, b) = (run(0.004), run(0.002));
        let mut fields: Vec<fn(&EnergyRecord) -> f64> = vec![|r| r.additivity_residual];
        if n == 1 {
            fields.push(|r| r.master_residual_1);
            fields.push(|r| r.master_residual_2);
        }
        for f in fields {
            let (coarse, fine) = (max_over(&a, f), max_over(&b, f));
            assert!(fine > 1e-8, "residual {fine} too small to test the order");
            assert!(tol.is_second_order(coarse, fine), "{coarse} / {fine}");
        }
    }
}

#[test]
fn strong_coupling_additivity() {
    let spec = preset_random_dense(2, 3, 5.0, 7).unwrap();
    let spread = {
        let v = spectral_decompose(spec.total_hamiltonian()).unwrap().values;
        v[v.len() - 1] - v[0]
    };
    let span = 2.0 * PI / spread;
    let psi = random_state(spec.shape(), 70);
    let grid = TimeGrid::new(0.0, 10.0 * span, 200, Some(1e-5 * span)).unwrap();
    let a = analyze(Arc::new(spec), &psi, grid, GaugeConvention::default(), &Tolerances::default()).unwrap();
    let worst = max_over(&a.records, |r| r.additivity_residual);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn dissipator_examples() {
    let g = 0.1;
    let spec = preset_exchange_qubits(1.0, 1.0, g);
    let psi = StateVector::product(spec.shape(), 1, 0).unwrap();
    let s = series(&spec, &psi, 2.0 * PI / g, 41, 1e-4, GaugeConvention::default());
    for i in 0..s.n_points() {
        let t = s.center(i).time();
        for k in Subsystem::BOTH {
            let d = dissipator(&s, k, i).unwrap();
            assert!(d.trace().norm() < 1e-10);
            let b = s.center(i).basis(k);
            let db = b.adjoint() * d.matrix() * b;
            assert!(db[(0, 1)].norm() < 1e-10 && db[(1, 0)].norm() < 1e-10);
            let expect = g * (2.0 * g * t).sin().abs();
            assert!((db[(0, 0)].norm() - expect).abs() < 1e-6, "t = {t}");
            assert!((db[(1, 1)].norm() - expect).abs() < 1e-6);
        }
    }
    let free = preset_exchange_qubits(1.0, 1.2, 0.0);
    let psi = random_state(free.shape(), 1);
    let s = series(&free, &psi, 3.0, 4, 1e-4, GaugeConvention::default());
    assert!(dissipator(&s, Subsystem::One, 2).unwrap().frobenius_norm() < 1e-8);
}

#[test]
fn master_residual_without_interaction() {
    let spec = preset_random_dense(3, 3, 0.0, 14).unwrap();
    let psi = random_state(spec.shape(), 14);
    let delta = 1e-3;
    let s = series(&spec, &psi, 4.0, 5, delta, GaugeConvention::default());
    for k in Subsystem::BOTH {
        let bound = Tolerances::default().stencil_bound(spec.bare(k).frobenius_norm(), delta, 1.0);
        for i in 0..5 {
            assert!(master_equation_residual(&s, k, i).unwrap() <= bound);
        }
    }
}

#[test]
fn energy_record_examples() {
    let free = preset_exchange_qubits(1.0, 1.3, 0.0);
    let psi = StateVector::product(free.shape(), 1, 1).unwrap();
    let a = analyze(Arc::new(free), &psi, TimeGrid::new(0.0, 3.0, 4, Some(1e-4)).unwrap(), GaugeConvention::default(), &Tolerances::default()).unwrap();
    for r in &a.records {
        assert!(r.additivity_residual <= 1e-8 && r.master_residual_1 <= 1e-8 && r.master_residual_2 <= 1e-8, "{r:?}");
        assert!(r.entropy < 1e-12);
    }

    let g = 0.1;
    let spec = preset_exchange_qubits(1.0, 1.0, g);
    let psi = StateVector::product(spec.shape(), 1, 0).unwrap();
    let grid = TimeGrid::new(0.0, PI / (2.0 * g), 3, None).unwrap();
    let a = analyze(Arc::new(spec), &psi, grid, GaugeConvention::default(), &Tolerances::default()).unwrap();
    assert!((a.records[1].entropy - 2f64.ln()).abs() < 1e-6);
    for r in &a.records {
        assert!((r.e1_bare + r.e2_bare + r.e_int - r.u0).abs() < 1e-10);
    }
}

#[test]
fn coupling_limit_is_monotone() {
    let psi = random_state(BipartiteShape::new(2, 2).unwrap(), 31);
    let mut last = f64::INFINITY;
    for strength in [1e-1, 1e-2, 1e-3] {
        let spec = preset_random_dense(2, 2, strength, 31).unwrap();
        let s = series(&spec, &psi, 4.0, 9, 1e-4, GaugeConvention::default());
        let err = max_generator_error(&s, &spec, Subsystem::One).max(max_generator_error(&s, &spec, Subsystem::Two));
        assert!(err < last, "{strength}: {err} !< {last}");
        last = err;
    }
}

mod gauge_tests {
    use super::*;

    fn exchange_series() -> (ModelSpec, FrameSeries) {
        let spec = preset_exchange_qubits(1.0, 1.0, 0.1);
        let psi = StateVector::product(spec.shape(), 1, 0).unwrap();
        let s = series(&spec, &psi, 10.0, 101, 1e-4, GaugeConvention::default());
        (spec, s)
    }

    #[test]
    fn zero_gauge_is_identity() {
        let (_, s) = exchange_series();
        let moved = apply_gauge(&s, &GaugeSpec::constant(vec![0.0, 0.0])).unwrap();
        for (a, b) in s.frames().iter().zip(moved.frames()) {
            assert_eq!(a.basis1(), b.basis1());
            assert_eq!(a.basis2(), b.basis2());
        }
    }

    #[test]
    fn wrong_index_count_is_rejected() {
        let (_, s) = exchange_series();
        assert!(matches!(apply_gauge(&s, &GaugeSpec::constant(vec![0.0; 3])), Err(Error::Usage(_))));
        assert!(matches!(apply_gauge(&s, &GaugeSpec::Tabulated { samples: vec![vec![0.0; 2]] }), Err(Error::Usage(_))));
        assert!(matches!(apply_gauge(&s, &GaugeSpec::constant(vec![f64::NAN, 0.0])), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_phases_change_nothing() {
        let (_, s) = exchange_series();
        let r = gauge_transform_check(&s, &GaugeSpec::constant(vec![0.7, -2.1])).unwrap();
        assert!(r.reconstruction < 1e-12);
        assert!(r.generator_shift <= 1e-10 && r.energy_shift <= 1e-10 && r.energy_sum <= 1e-10);
        assert!(r.max_energy_change.iter().all(|x| *x <= 1e-10));
        assert!(r.spectrum_shift.unwrap() <= 1e-10);
    }

    #[test]
    fn uniform_rate_shifts_generators() {
        let (spec, s) = exchange_series();
        let alpha = 0.3;
        let r = gauge_transform_check(&s, &GaugeSpec::uniform_rate(2, alpha)).unwrap();
        let bound = Tolerances::default().stencil_bound(spec.h1().frobenius_norm() + alpha, 1e-4, 1.0);
        assert!(r.reconstruction < 1e-12);
        assert!(r.generator_shift <= bound, "{}", r.generator_shift);
        assert!(r.energy_shift <= bound);
        assert!(r.energy_sum <= 1e-8);
        assert!(r.spectrum_shift.unwrap() <= 1e-8);

        // Direct look: U⁽¹⁾ drops by ħα, U⁽²⁾ rises by ħα.
        let moved = apply_gauge(&s, &GaugeSpec::uniform_rate(2, alpha)).unwrap();
        for i in [10, 50] {
            for (k, sign) in [(Subsystem::One, -1.0), (Subsystem::Two, 1.0)] {
                let u = local_energy(s.center(i), &effective_hamiltonian(&s, k, i).unwrap()).unwrap();
                let u2 = local_energy(moved.center(i), &effective_hamiltonian(&moved, k, i).unwrap()).unwrap();
                assert!((u2 - u - sign * alpha).abs() <= bound);
            }
        }
    }

    #[test]
    fn distinct_rates_move_the_spectrum() {
        let (_, s) = exchange_series();
        let g = GaugeSpec::Linear { offsets: vec![0.0, 0.0], rates: vec![0.2, -0.4] };
        let r = gauge_transform_check(&s, &g).unwrap();
        assert!(r.energy_shift <= 1e-8 && r.energy_sum <= 1e-8);
        assert!(r.spectrum_shift.is_none());
        let moved = apply_gauge(&s, &g).unwrap();
        let i = 20;
        let gap = |series: &FrameSeries| {
            let v = spectral_decompose(effective_hamiltonian(series, Subsystem::One, i).unwrap().h_tilde()).unwrap().values;
            v[1] - v[0]
        };
        assert!((gap(&moved) - gap(&s)).abs() > 0.1);
    }

    #[test]
    fn tabulated_phases() {
        let (spec, s) = exchange_series();
        let g = GaugeSpec::tabulate(&s, |j, t| 0.2 * (t + j as f64).sin());
        let r = gauge_transform_check(&s, &g).unwrap();
        let bound = Tolerances::default().stencil_bound(spec.h1().frobenius_norm() + 0.2, 1e-4, 1.0);
        assert!(r.reconstruction < 1e-12);
        assert!(r.generator_shift <= bound && r.energy_shift <= bound, "{r:?}");
        assert!(r.energy_sum <= 1e-8);
    }

    #[test]
    fn gauge_free_quantities_agree() {
        let spec = Arc::new(preset_random_dense(2, 3, 2.0, 21).unwrap());
        let psi = random_state(spec.shape(), 22);
        let grid = TimeGrid::new(0.0, 3.0, 16, Some(1e-4)).unwrap();
        let tol = Tolerances::default();
        let a = analyze(spec.clone(), &psi, grid, GaugeConvention::default(), &tol).unwrap();
        let b = analyze(spec, &psi, grid, GaugeConvention::LinearShift { alpha: 0.3 }, &tol).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.u0 - rb.u0).abs() <= 1e-10 && (ra.entropy - rb.entropy).abs() <= 1e-10);
            assert!(((ra.u1 + ra.u2) - (rb.u1 + rb.u2)).abs() <= 1e-8);
            assert!((rb.u1 - ra.u1 + 0.3).abs() <= 1e-6);
        }
    }
}
