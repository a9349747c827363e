use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;
use wigprop::classical;
use wigprop::exact::*;
use wigprop::field::{GridSpec, PhaseSpaceField};
use wigprop::propagate::{propagate_wigner, PropagatorSource};
use wigprop::{Error, PhasePoint, PolynomialPotential};

const HBAR: f64 = 0.01;

fn rel_l2(a: &PhaseSpaceField, b: &PhaseSpaceField) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / a.l2().max(b.l2())
}

fn harmonic_basis() -> SpectralBasis {
    solve_eigenbasis(&PolynomialPotential::harmonic(), (-2.0, 2.0), 600, HBAR, 0.6).unwrap()
}

#[test]
fn harmonic_spectrum_and_nodes() {
    let b = harmonic_basis();
    for n in 0..=50 {
        let exact = (n as f64 + 0.5) * HBAR;
        assert!((b.energies[n] - exact).abs() / exact < 1e-5, "E_{n} = {}", b.energies[n]);
    }
    assert!(b.energies.windows(2).all(|w| w[1] > w[0]));
    assert!(b.energies.iter().all(|&e| e <= 0.6));
    assert!(b.orthonormality_defect() < 1e-8);
    for n in 0..6 {
        assert_eq!(b.node_count(n), n);
    }
}

#[test]
fn cubic_ground_state_sits_in_the_well() {
    let pot = PolynomialPotential::cubic_well();
    let b = solve_eigenbasis(&pot, (-0.8, 2.6), 300, HBAR, 0.0).unwrap();
    let q_star = pot.well_minimum().unwrap();
    assert!((b.mean_position(0) - q_star).abs() < 0.05, "<q> = {}", b.mean_position(0));
    assert!(b.orthonormality_defect() < 1e-8);
}

#[test]
fn kernel_projector_unitarity_and_group() {
    let b = harmonic_basis();
    let x: Vec<f64> = (0..b.n_grid).map(|i| b.q(i)).collect();
    let psi = coherent_state(PhasePoint::new(0.1, 0.2), HBAR, 1.0, &x);
    let k0 = position_kernel(&b, 0.0);
    let back: Vec<Complex64> = (0..b.n_grid).map(|i| (0..b.n_grid).map(|j| k0[[i, j]] * psi[j]).sum()).collect();
    let err: f64 = back.iter().zip(&psi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(err / norm < 1e-6, "projector error {}", err / norm);

    let (t1, t2) = (0.7, -1.9);
    let k1 = position_kernel(&b, t1);
    let k2 = position_kernel(&b, t2);
    let k12 = position_kernel(&b, t1 + t2);
    let kk = k1.dot(&k1.t().mapv(|z| z.conj()));
    let group = k1.dot(&k2);
    let (mut e_unit, mut e_group) = (0.0f64, 0.0f64);
    for ((a, p), (g, s)) in kk.iter().zip(k0.iter()).zip(group.iter().zip(k12.iter())) {
        e_unit = e_unit.max((a - p).norm());
        e_group = e_group.max((g - s).norm());
    }
    assert!(e_unit < 1e-8, "unitarity {e_unit}");
    assert!(e_group < 1e-8, "group {e_group}");
}

#[test]
fn harmonic_kernel_rotates_a_gaussian() {
    let pot = PolynomialPotential::harmonic();
    let b = harmonic_basis();
    let grid = GridSpec::new((-1.0, 1.0), 96, (-1.0, 1.0), 96).unwrap();
    let start = PhasePoint::new(0.0, 0.5);
    let w0 = wigner_of_coherent_state(start, HBAR, 1.0, &grid).unwrap();

    let still = propagate_wigner(&w0, &ExactSource { basis: &b, potential: &pot, t: 0.0 }).unwrap();
    assert!(rel_l2(&still, &w0) < 1e-2, "identity {}", rel_l2(&still, &w0));

    let t = PI / 2.0;
    let out = propagate_wigner(&w0, &ExactSource { basis: &b, potential: &pot, t }).unwrap();
    let end = PhasePoint::new(start.p * t.cos() - start.q * t.sin(), start.q * t.cos() + start.p * t.sin());
    let want = wigner_of_coherent_state(end, HBAR, 1.0, &grid).unwrap();
    assert!(rel_l2(&out, &want) < 1e-2, "rotation {}", rel_l2(&out, &want));
    assert!((out.mass() - 1.0).abs() < 1e-2);
}

#[test]
fn factorized_propagation_matches_column_quadrature() {
    let pot = PolynomialPotential::harmonic();
    let b = solve_eigenbasis(&pot, (-3.5, 3.5), 300, 0.05, 1.5).unwrap();
    let grid = GridSpec::new((-1.1, 1.1), 22, (-1.0, 1.2), 22).unwrap();
    let w0 = wigner_of_coherent_state(PhasePoint::new(0.0, 0.1), 0.05, 1.0, &grid).unwrap();
    let src = ExactSource { basis: &b, potential: &pot, t: 0.4 };
    let fast = propagate_wigner(&w0, &src).unwrap();

    struct ByColumns<'a>(ExactSource<'a>);
    impl PropagatorSource for ByColumns<'_> {
        fn name(&self) -> &'static str {
            "columns"
        }
        fn column(&self, r: PhasePoint, g: &GridSpec) -> wigprop::Result<PhaseSpaceField> {
            self.0.column(r, g)
        }
    }
    let slow = propagate_wigner(&w0, &ByColumns(ExactSource { basis: &b, potential: &pot, t: 0.4 })).unwrap();
    assert!(rel_l2(&fast, &slow) < 1e-6, "{}", rel_l2(&fast, &slow));
}

fn small_cubic() -> (PolynomialPotential, SpectralBasis) {
    let pot = PolynomialPotential::cubic_well();
    let b = solve_eigenbasis(&pot, (-1.6, 2.6), 500, HBAR, 2.0).unwrap();
    (pot, b)
}

#[test]
fn cubic_trace_unitality_and_time_reversal() {
    let (pot, b) = small_cubic();
    let r_prime = PhasePoint::new(0.636, 0.0);
    assert!((propagator_trace(&b, r_prime) - 1.0).abs() < 1e-2);
    for k in 0..10 {
        let a = 2.0 * PI * k as f64 / 10.0;
        let r = PhasePoint::new(0.3 * a.cos(), 0.836 + 0.5 * a.sin());
        let u = propagator_unitality(&b, r).unwrap();
        assert!((u - 1.0).abs() < 1e-2, "unitality {u} at {r:?}");
    }

    let t = 0.5;
    let r_cl = classical::integrate(&pot, r_prime, t, 1e-3).unwrap().final_state();
    let point = |at: PhasePoint| GridSpec::centered(at, 1e-6, 1e-6, 1, 1).unwrap();
    let mut fwd = Vec::new();
    let mut rev = Vec::new();
    for (dp, dq) in [(0.0, 0.0), (0.01, 0.0), (0.0, -0.01), (-0.02, 0.01), (0.015, 0.015)] {
        let r_pp = PhasePoint::new(r_cl.p + dp, r_cl.q + dq);
        fwd.push(wigner_propagator_exact(&b, &pot, r_prime, t, &point(r_pp)).unwrap().values[0]);
        rev.push(wigner_propagator_exact(&b, &pot, r_pp, -t, &point(r_prime)).unwrap().values[0]);
    }
    let scale = fwd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (f, r) in fwd.iter().zip(&rev) {
        assert!((f - r).abs() < 1e-3 * scale, "forward {f} reverse {r}");
    }
}

#[test]
fn walls_are_guarded() {
    let (pot, b) = small_cubic();
    let near_wall = PhasePoint::new(0.0, 2.585);
    let g = GridSpec::centered(PhasePoint::new(0.0, 0.8), 0.1, 0.1, 8, 8).unwrap();
    assert!(matches!(
        wigner_propagator_exact(&b, &pot, near_wall, 0.1, &g),
        Err(Error::BoundaryContamination(_))
    ));
    let edge = GridSpec::new((-0.1, 0.1), 8, (2.3, 2.59), 8).unwrap();
    assert!(matches!(
        wigner_propagator_exact(&b, &pot, PhasePoint::new(0.0, 0.8), 0.1, &edge),
        Err(Error::BoundaryContamination(_))
    ));
    assert!(check_domain(&b, &pot, PhasePoint::new(0.636, 0.0)).is_ok());
    let x: Vec<f64> = (0..b.n_grid).map(|i| b.q(i)).collect();
    let psi = coherent_state(PhasePoint::new(0.636, 0.0), HBAR, 1.0, &x);
    let leak = wall_leakage(&b, &psi, 1.8, 0.2).unwrap();
    assert!(leak < 1e-4, "leakage {leak}");
}

#[test]
fn coherent_state_factory() {
    let grid = GridSpec::new((-0.5, 0.5), 100, (-0.5, 0.5), 100).unwrap();
    let w = wigner_of_coherent_state(PhasePoint::new(0.0, 0.0), HBAR, 1.0, &grid).unwrap();
    assert!((w.mass() - 1.0).abs() < 1e-6);
    let purity: f64 = 2.0 * PI * HBAR * w.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_area();
    assert!((purity - 1.0).abs() < 1e-4, "purity {purity}");
    let (i0, j0) = w.argmax_abs();
    let shifted = wigner_of_coherent_state(PhasePoint::new(3.0 * grid.dp(), -5.0 * grid.dq()), HBAR, 1.0, &grid).unwrap();
    assert_eq!(shifted.argmax_abs(), (i0 + 3, j0 - 5));
    let small = GridSpec::new((-0.2, 0.2), 40, (-0.2, 0.2), 40).unwrap();
    assert!(matches!(
        wigner_of_coherent_state(PhasePoint::new(0.0, 0.0), HBAR, 1.0, &small),
        Err(Error::InvalidArgument(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn coherent_states_are_normalized_and_pure(p0 in -0.1f64..0.1, q0 in -0.1f64..0.1, s in 0.5f64..2.0) {
        let grid = GridSpec::new((-0.8, 0.8), 160, (-0.8, 0.8), 160).unwrap();
        let w = wigner_of_coherent_state(PhasePoint::new(p0, q0), HBAR, s, &grid).unwrap();
        prop_assert!((w.mass() - 1.0).abs() < 1e-6);
        let purity: f64 = 2.0 * PI * HBAR * w.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_area();
        prop_assert!((purity - 1.0).abs() < 1e-4);
    }
}
