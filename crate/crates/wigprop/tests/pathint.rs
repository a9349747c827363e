mod common;

use common::AiryTable;
use wigprop::classical::{self, AiryCoefficients, CoefficientRoute};
use wigprop::field::{GridSpec, PhaseSpaceField};
use wigprop::mat2::Mat2;
use wigprop::pathint::*;
use wigprop::{Error, PhasePoint, PolynomialPotential};

#[test]
fn airy_oracle_is_sound() {
    let t = AiryTable::new(-10.0, 8.0, 1e-4);
    assert!((t.at(0.0) - 0.355_028_053_887_817_2).abs() < 1e-12);
    assert!((t.at(-1.0) - 0.535_560_883_292_352_1).abs() < 1e-12);
    let z = common::zero_crossings(&[-2.3382, -2.3381], &[t.at(-2.3382), t.at(-2.3381)]);
    assert!((z[0] + 2.338_107_410_459_767).abs() < 1e-7);
}

#[test]
fn kernel_phase_examples() {
    let zero = AiryCoefficients::zero();
    assert_eq!(fourier_kernel_phase(&zero, 1.3, -2.0), 0.0);
    let c = AiryCoefficients::only_a03(0.7);
    assert!((fourier_kernel_phase(&c, 5.0, 2.0) - 0.7 * 8.0 / 3.0).abs() < 1e-14);
    let g = AiryCoefficients { a30: 0.3, a21: -1.1, a12: 0.4, a03: 2.0, ..AiryCoefficients::zero() };
    for (a, b) in [(0.3, 0.9), (-2.0, 1.5), (4.0, -0.1)] {
        assert!((fourier_kernel_phase(&g, -a, -b) + fourier_kernel_phase(&g, a, b)).abs() < 1e-12);
    }
}

#[test]
fn guard_weight_is_a_monotone_step() {
    let gw = GuardWindow::default();
    assert_eq!(gw.weight(0.0), 1.0);
    assert_eq!(gw.weight(0.5), 1.0);
    assert_eq!(gw.weight(1.0), 0.0);
    let mut prev = 1.0;
    for k in 0..=100 {
        let w = gw.weight(0.5 + 0.005 * k as f64);
        assert!(w <= prev && (0.0..=1.0).contains(&w));
        prev = w;
    }
}

#[test]
fn zero_coefficients_give_a_discrete_delta() {
    let g = GridSpec::new((-1.05, 1.05), 21, (-1.05, 1.05), 21).unwrap();
    let fg = FourierGridSpec { alpha_max: 10.0, beta_max: 10.0, n_alpha: 64, n_beta: 64 };
    let f = spot_from_fourier(&AiryCoefficients::zero(), &fg, &g, &GuardWindow::default()).unwrap();
    assert!((f.mass() - 1.0).abs() < 1e-14);
    assert_eq!(f.argmax_abs(), (10, 10));
    assert!((f.get(10, 10) * g.cell_area() - 1.0).abs() < 1e-14);
}

#[test]
fn pure_a03_matches_closed_form_airy() {
    let a: f64 = 1.0;
    let d = 0.05;
    let half = 2001usize;
    let np = 2 * half + 1;
    let g = GridSpec::new((-(np as f64) * d / 2.0, np as f64 * d / 2.0), np, (-d / 2.0, d / 2.0), 1).unwrap();
    let c = AiryCoefficients::only_a03(a);
    let gw = GuardWindow::default();
    let fg = auto_fourier_grid(&c, &g, &gw).unwrap();
    let f = spot_from_fourier(&c, &fg, &g, &gw).unwrap();
    let profile = f.p_marginal();
    let table = AiryTable::new(-110.0, 8.0, d / 400.0);
    let lim = 0.8 * g.p_max;
    let (mut err, mut peak) = (0.0f64, 0.0f64);
    for (i, v) in profile.iter().enumerate() {
        let eta = g.p(i);
        if eta.abs() > lim {
            continue;
        }
        let x = -((eta / d).round() * d) / a.cbrt();
        let exact = 2.0 * std::f64::consts::PI / a.cbrt() * table.at(x);
        err = err.max((2.0 * std::f64::consts::PI * v - exact).abs());
        peak = peak.max(exact.abs());
    }
    assert!(err / peak < 1e-6, "relative error {}", err / peak);
}

#[test]
fn full_box_output_has_unit_mass() {
    let n = 128usize;
    let d = 1.0;
    let lo = -(n as f64 / 2.0) * d - d / 2.0;
    let g = GridSpec::new((lo, lo + n as f64 * d), n, (lo, lo + n as f64 * d), n).unwrap();
    let fg = FourierGridSpec { alpha_max: std::f64::consts::PI / d, beta_max: std::f64::consts::PI / d, n_alpha: n, n_beta: n };
    let c = AiryCoefficients { a30: 80.0, a21: 30.0, a12: -50.0, a03: 100.0, ..AiryCoefficients::zero() };
    let f = spot_from_fourier(&c, &fg, &g, &GuardWindow::default()).unwrap();
    assert!((f.mass() - 1.0).abs() < 1e-10, "mass {}", f.mass());
    assert!(f.min_value() < 0.0);
}

#[test]
fn coarse_fourier_grid_reports_aliasing() {
    let g = GridSpec::new((-10.25, 10.25), 41, (-10.25, 10.25), 41).unwrap();
    let fg = FourierGridSpec { alpha_max: std::f64::consts::PI / 0.5, beta_max: std::f64::consts::PI / 0.5, n_alpha: 64, n_beta: 64 };
    let c = AiryCoefficients::only_a03(1e-3);
    match spot_from_fourier(&c, &fg, &g, &GuardWindow::default()) {
        Err(Error::Aliasing { n_alpha, n_beta }) => {
            assert_eq!(n_alpha, 64);
            assert_eq!(n_beta, 128);
        }
        other => panic!("expected aliasing error, got {other:?}"),
    }
}

#[test]
fn misaligned_output_is_rejected() {
    let g = GridSpec::new((-1.0, 1.0), 30, (-1.0, 1.0), 30).unwrap();
    let fg = FourierGridSpec { alpha_max: 7.0, beta_max: 7.0, n_alpha: 64, n_beta: 64 };
    let c = AiryCoefficients::only_a03(1.0);
    assert!(matches!(spot_from_fourier(&c, &fg, &g, &GuardWindow::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn harmonic_spot_is_a_delta_at_the_classical_image() {
    let pot = PolynomialPotential::harmonic();
    let lab = GridSpec::centered(PhasePoint::new(-1.0, 0.0), 0.2, 0.2, 41, 41).unwrap();
    let (f, c, tr) = lab_spot(&pot, PhasePoint::new(0.0, 1.0), std::f64::consts::FRAC_PI_2, 0.01, &lab, &PathintOptions::default()).unwrap();
    assert!(c.is_zero());
    assert!((f.mass() - 1.0).abs() < 1e-12);
    let cell = lab.cell_of(&tr.final_state()).unwrap();
    assert!(f.block_fraction(cell, 1) >= 0.99);
}

#[test]
fn lab_frame_round_trip() {
    let pot = PolynomialPotential::cubic_well();
    let tr = classical::integrate(&pot, PhasePoint::new(0.636, 0.0), 1.8, 1e-3).unwrap();
    let c = classical::transported_coefficients(&tr, &pot, 0.01).unwrap();
    let a = lab_to_local(&c).unwrap();
    let b = local_to_lab(&c).unwrap();
    assert!(a.mul(&b).max_abs_diff(&Mat2::IDENTITY) < 1e-12);
    assert!((a.det().abs() - 1.0).abs() < 1e-12);

    let r_cl = tr.final_state();
    let lab = GridSpec::centered(r_cl, 0.1, 0.1, 41, 41).unwrap();
    let local = local_grid_for(&c, r_cl, &lab, 2.0).unwrap();
    let affine = |r: PhasePoint| 2.0 * r.p - 3.0 * r.q + 0.5;
    let lab_field = PhaseSpaceField::from_fn(lab, affine);
    let to_local = resample_affine(&lab_field, &b, PhasePoint::default(), r_cl, &local);
    let back = resample_affine(&to_local, &a, r_cl, PhasePoint::default(), &lab);
    let mut worst = 0.0f64;
    for j in 2..39 {
        for i in 2..39 {
            worst = worst.max((back.get(i, j) - lab_field.get(i, j)).abs());
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn mixed_class_is_unsupported() {
    let pot = PolynomialPotential::cubic_well();
    let lab = GridSpec::centered(PhasePoint::default(), 0.1, 0.1, 16, 16).unwrap();
    let err = lab_spot(&pot, PhasePoint::new(0.636, 0.0), 6.0, 0.01, &lab, &PathintOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

/// For V''' > 0 the third-order Moyal term alone gives W(p) = Ai(δp/s)/s with
/// s³ = ħ²V'''t/8: fringes on the low-momentum side.
#[test]
fn short_time_spot_has_moyal_orientation() {
    let pot = PolynomialPotential::cubic_well();
    let qs = pot.well_minimum().unwrap();
    let hbar = 0.01;
    let t = 0.02;
    let s = (hbar * hbar * pot.d3v(qs) * t / 8.0).cbrt();
    let lab = GridSpec::centered(PhasePoint::new(0.0, qs), 12.0 * s, 2.0 * s, 481, 41).unwrap();
    let opts = PathintOptions { dt: t / 64.0, ..PathintOptions::default() };
    for route in [CoefficientRoute::Transported, CoefficientRoute::Adiabatic] {
        let (f, _, _) = lab_spot(&pot, PhasePoint::new(0.0, qs), t, hbar, &lab, &PathintOptions { route, ..opts }).unwrap();
        let m = f.p_marginal();
        let x: Vec<f64> = (0..lab.np).map(|i| lab.p(i) / s).collect();
        let peak = (0..m.len()).max_by(|&a, &b| m[a].partial_cmp(&m[b]).unwrap()).unwrap();
        assert!((x[peak] + 1.0188).abs() < 0.1, "peak at {}", x[peak]);
        let zeros = common::zero_crossings(&x, &m);
        let first = zeros.iter().cloned().filter(|z| *z < x[peak]).fold(f64::NEG_INFINITY, f64::max);
        assert!((first + 2.3381).abs() < 0.05, "first zero at {first}");
    }
}

#[test]
fn generic_spot_is_real_and_normalized() {
    let pot = PolynomialPotential::cubic_well();
    let tr = classical::integrate(&pot, PhasePoint::new(0.636, 0.0), 1.8, 1e-3).unwrap();
    let c = classical::transported_coefficients(&tr, &pot, 0.01).unwrap();
    let local = GridSpec::new((-0.3005, 0.3005), 601, (-0.3005, 0.3005), 601).unwrap();
    let gw = GuardWindow::default();
    let fg = auto_fourier_grid(&c, &local, &gw).unwrap();
    let f = spot_from_fourier(&c, &fg, &local, &gw).unwrap();
    assert!(f.all_finite());
    assert!(f.min_value() < 0.0);
    assert!((f.mass() - 1.0).abs() < 0.05);
}

#[test]
fn recurrence_probe_on_harmonic_stays_within_a_cell() {
    let pot = PolynomialPotential::harmonic();
    let opts = ProbeOptions { half_width: 0.1, cells: 40, ..ProbeOptions::default() };
    let out = recurrence_probe(&pot, PhasePoint::new(0.0, 1.0), 0.01, &[std::f64::consts::PI, 2.0 * std::f64::consts::PI], &opts).unwrap();
    for s in out {
        assert!(s.rms_radius <= 0.2 / 40.0, "{}", s.rms_radius);
    }
}

#[test]
fn recurrence_probe_rejects_unreachable_angles() {
    let pot = PolynomialPotential::cubic_well();
    let err = recurrence_probe(&pot, PhasePoint::new(0.636, 0.0), 0.01, &[10.0], &ProbeOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Probe(_)));
}
