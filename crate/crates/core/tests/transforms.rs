use std::f64::consts::{PI, SQRT_2};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use typeb_core::measures::{mp_density, semicircle_density, GridDensity};
use typeb_core::transforms::{cauchy, cauchy_real, f_and_derivative, psi, psi_real_mp, stieltjes_invert};
use typeb_core::{Atom, Complex64, InversionSchedule, Measure, SpectralMass};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn two_atoms() -> Measure {
    Measure::uniform_atoms(&[-1.0, 1.0]).unwrap()
}

fn gridded() -> Measure {
    // Normalized (1 − t²) on [−1, 1] plus an atom.
    let g = GridDensity::chebyshev(0.0, 1.0, 512, |t| 0.6 * 0.75 * (1.0 - t * t)).unwrap();
    Measure::new(vec![Atom::new(2.5, 0.4)], typeb_core::measures::Continuous::Grid(g)).unwrap()
}

fn zoo() -> Vec<Measure> {
    vec![
        Measure::semicircle(),
        Measure::marchenko_pastur(1.0).unwrap(),
        Measure::marchenko_pastur(0.3).unwrap(),
        two_atoms(),
        Measure::dirac(0.0),
        gridded(),
    ]
}

#[test]
fn cauchy_examples() {
    let g = cauchy(&Measure::semicircle(), c(0.0, 1.0)).unwrap();
    assert_abs_diff_eq!(g.re, 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(g.im, 1.0 - 3f64.sqrt(), epsilon = 1e-12);
    let g = cauchy(&two_atoms(), c(5.0, 1e-14)).unwrap();
    assert_abs_diff_eq!(g.re, 5.0 / 24.0, epsilon = 1e-12);
    for z in [c(0.3, 0.1), c(-4.0, 2.0)] {
        assert_abs_diff_eq!((cauchy(&Measure::dirac(0.0), z).unwrap() - 1.0 / z).norm(), 0.0, epsilon = 1e-15);
    }
    assert!(cauchy(&Measure::semicircle(), c(1.0, 0.0)).is_err());
    assert!(cauchy(&Measure::semicircle(), c(1.0, -1.0)).is_err());
}

#[test]
fn semicircle_matches_quadrature() {
    let sc = Measure::semicircle();
    for z in [c(0.0, 1.0), c(1.0, 0.3), c(-2.0, 0.05)] {
        let n = 20000;
        let mut q = Complex64::new(0.0, 0.0);
        // Midpoint rule in θ with t = √2 cos θ removes the edge singularity.
        for i in 0..n {
            let th = PI * (i as f64 + 0.5) / n as f64;
            let t = SQRT_2 * th.cos();
            q += 2.0 * th.sin().powi(2) / PI / (z - t) * (PI / n as f64);
        }
        assert_abs_diff_eq!((cauchy(&sc, z).unwrap() - q).norm(), 0.0, epsilon = 1e-8);
    }
}

#[test]
fn cauchy_real_examples() {
    let sc = Measure::semicircle();
    assert_abs_diff_eq!(cauchy_real(&sc, 2.0).unwrap().re, 2.0 - SQRT_2, epsilon = 1e-14);
    assert_eq!(cauchy_real(&sc, 2.0).unwrap().im, 0.0);
    let g0 = cauchy_real(&sc, 0.0).unwrap();
    assert_abs_diff_eq!(g0.im, -SQRT_2, epsilon = 1e-14);
    let t = (5.0 + 29f64.sqrt()) / 2.0;
    assert_abs_diff_eq!(cauchy_real(&two_atoms(), t).unwrap().re, 0.2, epsilon = 1e-14);
    assert!(cauchy_real(&sc, SQRT_2).is_err());
    assert!(cauchy_real(&two_atoms(), 1.0).is_err());
}

#[test]
fn f_and_derivative_examples() {
    let sc = Measure::semicircle();
    let (f, _) = f_and_derivative(&sc, c(2.0, 0.0)).unwrap();
    assert_abs_diff_eq!(f.re, 1.0 / (2.0 - SQRT_2), epsilon = 1e-12);
    let z = c(0.7, -0.0 + 0.4);
    let (f, df) = f_and_derivative(&Measure::dirac(0.0), z).unwrap();
    assert_abs_diff_eq!((f - z).norm(), 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!((df - 1.0).norm(), 0.0, epsilon = 1e-12);
    let z = c(0.0, 2.0);
    let (f, _) = f_and_derivative(&sc, z).unwrap();
    assert!((f * cauchy(&sc, z).unwrap() - 1.0).norm() < 1e-12);
}

#[test]
fn f_derivative_matches_difference_quotient() {
    for m in zoo() {
        for z in [c(0.4, 0.5), c(-3.0, 1.0)] {
            let (_, df) = f_and_derivative(&m, z).unwrap();
            let h = 1e-5;
            let fd = (1.0 / cauchy(&m, z + h).unwrap() - 1.0 / cauchy(&m, z - h).unwrap()) / (2.0 * h);
            assert!((df - fd).norm() < 1e-6 * (1.0 + df.norm()), "{m:?} {z}: {df} vs {fd}");
        }
    }
}

#[test]
fn psi_examples() {
    for z in [c(0.3, 0.2), c(-2.0, 0.5), c(0.5, -0.5)] {
        let p = psi(&Measure::dirac(1.0), z).unwrap();
        assert_abs_diff_eq!((p - z / (1.0 - z)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psi(&Measure::dirac(0.0), z).unwrap().norm(), 0.0, epsilon = 1e-14);
    }
    let p = psi(&Measure::marchenko_pastur(1.0).unwrap(), c(0.25, 0.0)).unwrap();
    assert_abs_diff_eq!(p.re, 1.0, epsilon = 1e-12);
    assert!(psi(&Measure::semicircle(), c(0.0, 0.0)).is_err());
}

#[test]
fn psi_real_mp_examples() {
    // ψ(1/t) = t·G(t) − 1 with G(t) = (t − √(t² − 4t))/(2t) at λ = 1, t = 5.
    let v = psi_real_mp(1.0, 5.0).unwrap();
    assert_abs_diff_eq!(v.re, (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    assert_eq!(v.im, 0.0);
    let v = psi_real_mp(1.0, 2.0).unwrap();
    assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(v.im, -1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(psi_real_mp(1.0, 16.0 / 3.0).unwrap().re, 1.0 / 3.0, epsilon = 1e-10);
    assert!(psi_real_mp(1.0, 4.0).is_err());
    assert!(psi_real_mp(1.0, 0.0).is_err());
}

#[test]
fn psi_real_mp_matches_density_quadrature() {
    // ψ(1/t) = ∫ s/(t − s) dμ(s) for t off the support.
    for (lambda, t) in [(1.0, 5.0), (1.0, 7.5), (0.25, 3.0)] {
        let (a, b) = typeb_core::measures::mp_edges(lambda);
        let n = 40000;
        let mut q = 0.0;
        for i in 0..n {
            let th = PI * (i as f64 + 0.5) / n as f64;
            let s = 0.5 * (a + b) + 0.5 * (b - a) * th.cos();
            let jac = 0.5 * (b - a) * th.sin() * PI / n as f64;
            q += mp_density(lambda, s) * s / (t - s) * jac;
        }
        assert_abs_diff_eq!(psi_real_mp(lambda, t).unwrap().re, q, epsilon = 1e-6);
    }
}

#[test]
fn inversion_examples() {
    let sched = InversionSchedule::default();
    let sc = Measure::semicircle();
    let d = stieltjes_invert(|z| cauchy(&sc, z), &[0.0], &sched).unwrap();
    assert_abs_diff_eq!(d[0], SQRT_2 / PI, epsilon = 1e-3);
    let d = stieltjes_invert(|z| cauchy(&Measure::dirac(0.0), z), &[0.5], &sched).unwrap();
    assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-4);
    // √(4 − (2 − 2)²)/(2π·2) = 1/(2π).
    let mp = Measure::marchenko_pastur(1.0).unwrap();
    let d = stieltjes_invert(|z| cauchy(&mp, z), &[2.0], &sched).unwrap();
    assert_abs_diff_eq!(d[0], 1.0 / (2.0 * PI), epsilon = 1e-3);
}

#[test]
fn schedule_validation() {
    assert!(InversionSchedule::new(vec![1e-3, 1e-2], 1).is_err());
    assert!(InversionSchedule::new(vec![1e-2, 1e-3], 2).is_err());
    assert!(InversionSchedule::new(vec![1e-2, -1e-3], 0).is_err());
    assert!(InversionSchedule::new(vec![1e-2], 1).is_err());
    assert!(InversionSchedule::new(vec![1e-2], 0).is_ok());
}

#[test]
fn herglotz_property() {
    for m in zoo() {
        for y in [0.01, 0.1, 1.0, 10.0] {
            for x in [-3.0, -1.0, -0.2, 0.0, 0.5, 1.4, 2.5, 6.0] {
                let g = cauchy(&m, c(x, y)).unwrap();
                assert!(g.im < 0.0, "{m:?} at {x}+{y}i: {g}");
            }
        }
    }
}

#[test]
fn large_z_asymptotics() {
    for m in zoo() {
        let r = m.support_radius().max(1.0);
        let m1 = m.moment(1).unwrap().abs();
        for phase in [0.1, 0.5, 1.0, 2.0, 3.0] {
            for scale in [10.0, 30.0, 100.0] {
                let z = Complex64::from_polar(scale * r, phase);
                let lhs = (z * cauchy(&m, z).unwrap() - 1.0).norm();
                // The bound from the first moment alone is vacuous for centered laws,
                // so add the second-moment term.
                let bound = 2.0 * m1 / z.norm() + 2.0 * m.moment(2).unwrap() / z.norm_sqr();
                assert!(lhs <= bound + 1e-14, "{m:?} at {z}: {lhs} > {bound}");
            }
        }
    }
}

#[test]
fn inversion_round_trip() {
    let sched = InversionSchedule::default();
    let sc = Measure::semicircle();
    let eps = 0.05;
    let grid: Vec<f64> = (0..=200).map(|i| -SQRT_2 + eps + (2.0 * (SQRT_2 - eps)) * i as f64 / 200.0).collect();
    let d = stieltjes_invert(|z| cauchy(&sc, z), &grid, &sched).unwrap();
    let err = grid.iter().zip(&d).map(|(&t, v)| (v - semicircle_density(t)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-3, "{err}");

    let mp = Measure::marchenko_pastur(0.5).unwrap();
    let (a, b) = typeb_core::measures::mp_edges(0.5);
    let grid: Vec<f64> = (0..=200).map(|i| a + eps + (b - a - 2.0 * eps) * i as f64 / 200.0).collect();
    let d = stieltjes_invert(|z| cauchy(&mp, z), &grid, &sched).unwrap();
    let err = grid.iter().zip(&d).map(|(&t, v)| (v - mp_density(0.5, t)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-3, "{err}");

    let g = gridded();
    let grid: Vec<f64> = (0..=100).map(|i| -0.9 + 1.8 * i as f64 / 100.0).collect();
    let d = stieltjes_invert(|z| cauchy(&g, z), &grid, &sched).unwrap();
    let err = grid.iter().zip(&d).map(|(&t, v)| (v - g.density(t)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn boundary_matching() {
    let sc = Measure::semicircle();
    for t in [0.0, 1.0, 1.4, 1.5, 2.0, 3.0] {
        for s in [t, -t] {
            let a = cauchy_real(&sc, s).unwrap();
            let b = cauchy(&sc, c(s, 1e-8)).unwrap();
            assert!((a - b).norm() <= 1e-6, "t = {s}: {a} vs {b}");
        }
    }
}

proptest! {
    #[test]
    fn psi_is_consistent_with_cauchy(re in -3.0f64..3.0, im in 0.01f64..3.0, which in 0usize..6) {
        let m = &zoo()[which];
        let z = c(re, im);
        let direct = psi(m, z).unwrap();
        let w = 1.0 / z;
        let via = cauchy(m, w.conj()).unwrap().conj() / z - 1.0;
        prop_assert!((direct - via).norm() <= 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn herglotz_everywhere(re in -5.0f64..5.0, log_im in -2.0f64..1.0, which in 0usize..6) {
        let g = cauchy(&zoo()[which], c(re, 10f64.powf(log_im))).unwrap();
        prop_assert!(g.im < 0.0);
    }
}
