use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use typeb_core::measures::{mp_edges, DEFAULT_GRID_POINTS};
use typeb_core::transforms::{cauchy_real, stieltjes_invert};
use typeb_core::typeb::{
    additive_correction, additive_correction_with, g_eta_prime_additive, g_sigma, in_support, multiplicative_correction,
    nu_hat_density, nu_hat_measure, outlier_residual, sigma_measure, sigma_moment, solve_outliers_additive,
    solve_outliers_multiplicative, typeb_additive, typeb_multiplicative, uniform_grid,
};
use typeb_core::{Complex64, InversionSchedule, Interval, Measure, OutlierKind, SpectralMass, SpikeSet, TypeBLaw};

fn spikes(t: &[f64]) -> SpikeSet {
    SpikeSet::new(t.to_vec()).unwrap()
}

fn pm1() -> Measure {
    Measure::uniform_atoms(&[-1.0, 1.0]).unwrap()
}

#[test]
fn spike_set_validation() {
    assert!(SpikeSet::new(vec![0.0]).is_err());
    assert!(SpikeSet::new(vec![f64::NAN]).is_err());
    assert!(spikes(&[FRAC_1_SQRT_2]).check_semicircle().is_err());
    assert!(additive_correction(&Measure::semicircle(), &spikes(&[-FRAC_1_SQRT_2]), false).is_err());
    let law = spikes(&[4.0, 4.0, -1.0]).type_b_law();
    assert_eq!(SpikeSet::from_type_b_law(&law).unwrap().thetas(), &[-1.0, 4.0, 4.0]);
}

#[test]
fn outlier_examples() {
    let sc = Measure::semicircle();
    let r = solve_outliers_additive(&sc, &spikes(&[4.0])).unwrap();
    assert_eq!(r.len(), 1);
    assert_abs_diff_eq!(r[0].location, 4.125, epsilon = 1e-10);
    assert!(solve_outliers_additive(&sc, &spikes(&[0.4])).unwrap().is_empty());
    let r = solve_outliers_additive(&pm1(), &spikes(&[5.0])).unwrap();
    let mut locs: Vec<f64> = r.iter().map(|o| o.location).collect();
    locs.sort_by(f64::total_cmp);
    let s = 29f64.sqrt();
    assert_abs_diff_eq!(locs[0], (5.0 - s) / 2.0, epsilon = 1e-10);
    assert_abs_diff_eq!(locs[1], (5.0 + s) / 2.0, epsilon = 1e-10);
}

#[test]
fn negative_spikes_mirror() {
    let sc = Measure::semicircle();
    let r = solve_outliers_additive(&sc, &spikes(&[-4.0, 2.0])).unwrap();
    let locs: Vec<f64> = r.iter().map(|o| o.location).collect();
    assert!(locs.iter().any(|l| (l + 4.125).abs() < 1e-10));
    assert!(locs.iter().any(|l| (l - 2.25).abs() < 1e-10));
}

#[test]
fn outlier_roots_satisfy_their_equations() {
    let sc = Measure::semicircle();
    let skew = Measure::atomic(vec![typeb_core::Atom::new(-1.0, 0.3), typeb_core::Atom::new(2.0, 0.7)]).unwrap();
    for (base, th) in [(&sc, vec![0.8, 1.0, -3.0, 10.0]), (&pm1(), vec![5.0, -2.0, 0.3]), (&skew, vec![3.0, -0.5])] {
        for root in solve_outliers_additive(base, &spikes(&th)).unwrap() {
            assert_eq!(root.kind, OutlierKind::Additive);
            assert!(outlier_residual(Some(base), None, &root).unwrap() <= 1e-10, "{root:?}");
            assert!(!in_support(base, root.location));
        }
    }
    for (lambda, th) in [(1.0, vec![4.0, 2.5]), (0.25, vec![4.0, 1.6]), (2.0, vec![5.0])] {
        let (_, b) = mp_edges(lambda);
        for root in solve_outliers_multiplicative(lambda, &spikes(&th)).unwrap() {
            assert!(outlier_residual(None, Some(lambda), &root).unwrap() <= 1e-10, "{root:?}");
            assert!(root.location > b);
        }
    }
}

#[test]
fn multiplicative_outlier_examples() {
    let r = solve_outliers_multiplicative(1.0, &spikes(&[4.0])).unwrap();
    assert_abs_diff_eq!(r[0].location, 16.0 / 3.0, epsilon = 1e-10);
    assert!(solve_outliers_multiplicative(1.0, &spikes(&[1.5])).unwrap().is_empty());
    // MP(λ) here has mean λ, so the outlier is λθ + θ/(θ − 1).
    let r = solve_outliers_multiplicative(0.25, &spikes(&[4.0])).unwrap();
    assert_abs_diff_eq!(r[0].location, 1.0 + 4.0 / 3.0, epsilon = 1e-10);
}

#[test]
fn multiplicative_threshold_sweep() {
    // Outliers exist exactly above θ = 1 + 1/√λ, at λθ + θ/(θ − 1).
    for lambda in [0.25f64, 1.0, 4.0] {
        let crit = 1.0 + 1.0 / lambda.sqrt();
        for f in [0.8, 0.95, 1.05, 1.5, 3.0] {
            let th = crit * f;
            let r = solve_outliers_multiplicative(lambda, &spikes(&[th])).unwrap();
            if f < 1.0 {
                assert!(r.is_empty(), "λ={lambda} θ={th}");
            } else {
                assert_eq!(r.len(), 1, "λ={lambda} θ={th}");
                assert_abs_diff_eq!(r[0].location, lambda * th + th / (th - 1.0), epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn nu_hat_examples() {
    assert_abs_diff_eq!(nu_hat_density(1.0, 0.0).unwrap().abs() * std::f64::consts::PI, SQRT_2 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(nu_hat_density(0.4, 0.8).unwrap(), 0.0, epsilon = 1e-14);
    assert!(nu_hat_density(1.0, 1.5).is_err());
    let m = nu_hat_measure(0.4, DEFAULT_GRID_POINTS).unwrap();
    let left = m.mass_in(&Interval::new(-SQRT_2, 0.8).unwrap());
    let right = m.mass_in(&Interval::new(0.8, SQRT_2).unwrap());
    assert!(left * right < 0.0);
    assert_abs_diff_eq!(left + right, 0.0, epsilon = 1e-6);
}

#[test]
fn nu_hat_mass_law() {
    for th in [0.75, 0.8, 1.0, 2.0, 4.0, -0.9, -3.0] {
        assert_abs_diff_eq!(nu_hat_measure(th, DEFAULT_GRID_POINTS).unwrap().total_mass(), 1.0, epsilon = 1e-6);
    }
    for th in [0.1, 0.4, 0.6, 0.7, -0.5] {
        assert_abs_diff_eq!(nu_hat_measure(th, DEFAULT_GRID_POINTS).unwrap().total_mass(), 0.0, epsilon = 1e-6);
    }
}

#[test]
fn sign_changes_once_at_twice_theta() {
    for th in [0.2, 0.4, 0.6, -0.3] {
        let m = additive_correction(&Measure::semicircle(), &spikes(&[th]), false).unwrap();
        let g = m.grid().unwrap();
        let d = g.density();
        let flips: Vec<usize> = (1..d.len()).filter(|&i| d[i - 1].signum() != d[i].signum() && d[i] != 0.0).collect();
        assert_eq!(flips.len(), 1, "θ={th}");
        let i = flips[0];
        let (a, b) = (g.points()[i - 1], g.points()[i]);
        assert!(a <= 2.0 * th + 1e-12 && 2.0 * th <= b + 1e-12, "θ={th}: flip in [{a}, {b}]");
    }
}

#[test]
fn edge_concentration_for_small_spike() {
    let m = nu_hat_measure(0.4, DEFAULT_GRID_POINTS).unwrap();
    let g = m.grid().unwrap();
    let total = g.abs_mass();
    let near: f64 = g
        .points()
        .iter()
        .zip(g.weights())
        .zip(g.density())
        .filter(|((&t, _), _)| SQRT_2 - t.abs() <= 0.35)
        .map(|((_, w), d)| w * d.abs())
        .sum();
    assert!(near / total >= 0.6, "{}", near / total);
}

#[test]
fn correction_examples() {
    let sc = Measure::semicircle();
    let c = additive_correction(&sc, &spikes(&[4.0]), false).unwrap();
    assert_eq!(c.atoms().len(), 1);
    assert_abs_diff_eq!(c.atoms()[0].loc, 4.125, epsilon = 1e-10);
    assert_eq!(c.atoms()[0].weight, 1.0);
    assert_abs_diff_eq!(c.total_mass(), 0.0, epsilon = 1e-6);
    let nu = nu_hat_measure(4.0, DEFAULT_GRID_POINTS).unwrap();
    for t in [-1.0, 0.0, 0.9] {
        assert_abs_diff_eq!(c.density(t), -nu.density(t), epsilon = 1e-9);
    }

    let s = additive_correction(&sc, &SpikeSet::empty(), true).unwrap();
    assert_abs_diff_eq!(s.moment(2).unwrap(), 0.5, epsilon = 1e-6);
    assert_abs_diff_eq!(s.total_mass(), 0.0, epsilon = 1e-6);

    let d = additive_correction(&pm1(), &spikes(&[5.0]), false).unwrap();
    assert_abs_diff_eq!(d.total_mass(), 0.0, epsilon = 1e-12);
    let w = |x: f64| d.atoms().iter().filter(|a| (a.loc - x).abs() < 1e-6).map(|a| a.weight).sum::<f64>();
    let s29 = 29f64.sqrt();
    assert_eq!(w((5.0 + s29) / 2.0), 1.0);
    assert_eq!(w((5.0 - s29) / 2.0), 1.0);
    assert_eq!(w(1.0), -1.0);
    assert_eq!(w(-1.0), -1.0);
}

#[test]
fn sigma_moments_match_closed_form() {
    let s = sigma_measure(DEFAULT_GRID_POINTS).unwrap();
    for k in 0..=12 {
        assert_abs_diff_eq!(s.moment(k).unwrap(), sigma_moment(k), epsilon = 1e-6);
    }
    assert_eq!(sigma_moment(2), 0.5);
}

#[test]
fn g_eta_prime_examples() {
    let sc = Measure::semicircle();
    for z in [Complex64::new(0.3, 0.2), Complex64::new(5.0, 0.0)] {
        assert_eq!(g_eta_prime_additive(&sc, &SpikeSet::empty(), z, false).unwrap(), Complex64::new(0.0, 0.0));
    }
    let sp = spikes(&[4.0]);
    let at = |t: f64| g_eta_prime_additive(&sc, &sp, Complex64::new(t, 0.0), false).unwrap();
    assert_eq!(at(5.0).im, 0.0);
    assert!(at(4.1).re.signum() != at(4.15).re.signum());
    assert!(g_eta_prime_additive(&sc, &sp, Complex64::new(4.125, 0.0), false).is_err()
        || at(4.125).re.abs() > 1e8);

    let z = Complex64::new(0.0, 2.0);
    let with = g_eta_prime_additive(&sc, &SpikeSet::empty(), z, true).unwrap();
    assert_abs_diff_eq!((with - g_sigma(z)).norm(), 0.0, epsilon = 1e-15);

    // Inverting g_σ alone gives a density of zero total mass once the atoms at ±√2 are added back.
    let grid = uniform_grid(-SQRT_2 + 0.02, SQRT_2 - 0.02, 401);
    let d = stieltjes_invert(|z| Ok(g_sigma(z)), &grid, &InversionSchedule::default()).unwrap();
    let sig = sigma_measure(DEFAULT_GRID_POINTS).unwrap();
    let err = grid.iter().zip(&d).map(|(&t, v)| (v - sig.density(t)).abs()).fold(0.0, f64::max);
    assert!(err <= 2e-3, "{err}");
    assert_abs_diff_eq!(sig.total_mass(), 0.0, epsilon = 1e-6);
}

#[test]
fn two_routes_agree_in_the_bulk() {
    let sc = Measure::semicircle();
    let grid = uniform_grid(-SQRT_2 + 0.05, SQRT_2 - 0.05, 141);
    for (th, goe) in [(0.4, false), (1.0, false), (4.0, false), (2.0, true), (-1.5, false)] {
        let sp = spikes(&[th]);
        let c = additive_correction(&sc, &sp, goe).unwrap();
        let inv = stieltjes_invert(|z| g_eta_prime_additive(&sc, &sp, z, goe), &grid, &InversionSchedule::default()).unwrap();
        let err = grid.iter().zip(&inv).map(|(&t, v)| (c.density(t) - v).abs()).fold(0.0, f64::max);
        assert!(err <= 2e-3, "θ={th} goe={goe}: {err}");
    }
}

#[test]
fn h_derivative_matches_correction() {
    let sc = Measure::semicircle();
    let grid = uniform_grid(-1.3, 1.3, 2601);
    for (th, goe) in [(0.4, false), (4.0, false), (1.0, true)] {
        let law = typeb_additive(&TypeBLaw::new(sc.clone(), if goe { sigma_measure(DEFAULT_GRID_POINTS).unwrap() } else { typeb_core::SignedMeasure::zero() }), &spikes(&[th]).type_b_law(), Some(&grid)).unwrap();
        let h = law.h.as_ref().unwrap();
        let dh = h.derivative();
        for i in (1..grid.len() - 1).step_by(50) {
            let t = grid[i];
            assert!((dh[i] - law.correction.density(t)).abs() <= 1e-4, "θ={th} t={t}: {} vs {}", dh[i], law.correction.density(t));
        }
    }
}

#[test]
fn h_jumps_by_one_at_outliers() {
    let sc = Measure::semicircle();
    let law = typeb_additive(&TypeBLaw::trivial(sc), &spikes(&[4.0]).type_b_law(), None).unwrap();
    let h = law.h.unwrap();
    let at = |x: f64| {
        let i = h.t.partition_point(|&t| t < x);
        h.h[i]
    };
    assert_abs_diff_eq!(at(4.2) - at(4.05), 1.0, epsilon = 1e-9);
}

#[test]
fn typeb_additive_examples() {
    let sc = Measure::semicircle();
    let plain = TypeBLaw::trivial(sc.clone());
    let out = typeb_additive(&plain, &spikes(&[4.0]).type_b_law(), None).unwrap();
    assert_eq!(out.law, sc);
    assert_eq!(out.correction, additive_correction(&sc, &spikes(&[4.0]), false).unwrap());

    let sig = sigma_measure(DEFAULT_GRID_POINTS).unwrap();
    let goe = TypeBLaw::new(sc.clone(), sig.clone());
    let out = typeb_additive(&goe, &SpikeSet::empty().type_b_law(), None).unwrap();
    assert_abs_diff_eq!(out.correction.moment(2).unwrap(), 0.5, epsilon = 1e-6);
    for t in [-1.0, 0.2] {
        assert_abs_diff_eq!(out.correction.density(t), sig.density(t), epsilon = 1e-9);
    }

    let out = typeb_additive(&plain, &SpikeSet::empty().type_b_law(), None).unwrap();
    assert!(out.correction.is_zero());

    let weird = TypeBLaw::new(sc, nu_hat_measure(1.0, 64).unwrap());
    assert!(typeb_additive(&weird, &SpikeSet::empty().type_b_law(), None).is_err());
}

#[test]
fn multiplicative_correction_examples() {
    let (a, b) = mp_edges(1.0);
    let grid = uniform_grid(a - 0.5, b + 2.0, 500);
    let c = multiplicative_correction(1.0, &spikes(&[4.0]), &grid).unwrap();
    assert_eq!(c.atoms().len(), 1);
    assert_abs_diff_eq!(c.atoms()[0].loc, 16.0 / 3.0, epsilon = 1e-10);
    let g = c.grid().unwrap();
    assert!(g.lo() >= 0.0 && g.hi() <= 4.0);
    assert_abs_diff_eq!(c.total_mass(), 0.0, epsilon = 1e-4);

    assert!(multiplicative_correction(1.0, &SpikeSet::empty(), &grid).unwrap().abs_mass() == 0.0);

    let c = multiplicative_correction(1.0, &spikes(&[1.5]), &grid).unwrap();
    assert!(c.atoms().is_empty());
    assert!(c.abs_mass() > 0.0);
    assert_abs_diff_eq!(c.total_mass(), 0.0, epsilon = 1e-4);

    assert!(multiplicative_correction(1.0, &spikes(&[4.0]), &uniform_grid(1.0, 3.0, 10)).is_err());
}

#[test]
fn multiplicative_law_carries_h() {
    let law = typeb_multiplicative(0.5, &spikes(&[5.0, 1.2]), None).unwrap();
    assert_eq!(law.law, Measure::marchenko_pastur(0.5).unwrap());
    assert_abs_diff_eq!(law.correction.total_mass(), 0.0, epsilon = 1e-4);
    let h = law.h.unwrap();
    assert_abs_diff_eq!(h.h[0], 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(*h.h.last().unwrap(), 0.0, epsilon = 1e-6);
}

#[test]
fn type_b_law_json_shape() {
    let law = typeb_additive(&TypeBLaw::trivial(Measure::semicircle()), &spikes(&[4.0]).type_b_law(), None).unwrap();
    let v: serde_json::Value = serde_json::to_value(&law).unwrap();
    assert_eq!(v["law"]["family"], "semicircle");
    assert!(v["correction"]["atoms"].is_array());
    assert!(v["h"]["t"].is_array() && v["h"]["h"].is_array());
    let back: TypeBLaw = serde_json::from_value(v).unwrap();
    assert_eq!(back, law);
}

#[test]
fn cauchy_real_at_outlier_is_reciprocal_spike() {
    for th in [0.8, 1.3, 7.0] {
        let root = solve_outliers_additive(&Measure::semicircle(), &spikes(&[th])).unwrap()[0];
        assert_abs_diff_eq!(root.location, th + 1.0 / (2.0 * th), epsilon = 1e-10);
        assert_abs_diff_eq!(cauchy_real(&Measure::semicircle(), root.location).unwrap().re, 1.0 / th, epsilon = 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corrections_conserve_mass(ths in prop::collection::vec(prop_oneof![-6.0f64..-0.75, -0.65f64..-0.05, 0.05f64..0.65, 0.75f64..6.0], 0..4), goe in any::<bool>()) {
        let sp = SpikeSet::new(ths.clone()).unwrap();
        let c = additive_correction_with(&Measure::semicircle(), &sp, goe, 1024).unwrap();
        prop_assert!(c.total_mass().abs() <= 1e-6);
        let outliers = ths.iter().filter(|t| t.abs() > FRAC_1_SQRT_2).count();
        prop_assert_eq!(c.atoms().iter().filter(|a| a.loc.abs() > SQRT_2).count(), outliers);
    }

    #[test]
    fn atomic_corrections_conserve_mass(th in prop_oneof![-8.0f64..-0.1, 0.1f64..8.0]) {
        let c = additive_correction(&pm1(), &SpikeSet::new(vec![th]).unwrap(), false).unwrap();
        prop_assert!(c.total_mass().abs() <= 1e-12);
    }
}
