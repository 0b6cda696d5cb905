//! Solver invariants on random unitaries.

mod common;

use common::{c, random_unitary};
use isoball::poly::{Poly, RationalMap};
use isoball::solver::{
    blaschke_factorize, extend_factor, normalize_unitary, peel_factor, rational_r, solve_isometry,
    symmetry_probe_points, u_zeta, UnitaryMatrix,
};
use isoball::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_canonical_across_orders(seed in any::<u64>(), n in 1usize..4) {
        let u = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = solve_isometry(&u, 24).unwrap();
        let b = solve_isometry(&u, 48).unwrap();
        for (x, y) in std::iter::once((&a.f1, &b.f1)).chain(a.f2.iter().zip(&b.f2)) {
            for k in 0..=24 {
                prop_assert!((x.coeff(k) - y.coeff(k)).norm() <= 1e-11);
            }
        }
    }

    #[test]
    fn rational_relations_hold_in_series(seed in any::<u64>(), n in 1usize..4) {
        let u = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let s = solve_isometry(&u, 48).unwrap();
        prop_assert!(s.residuals.inverse_relation.unwrap() <= 1e-9);
        prop_assert!(s.residuals.component_relation.unwrap() <= 1e-9);
        prop_assert!(s.residuals.polarized <= 1e-10);
        prop_assert!(s.rational.as_ref().unwrap().r.degree() <= n + 1);
    }

    #[test]
    fn blaschke_symmetry(seed in any::<u64>(), n in 1usize..4) {
        let u = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = rational_r(&u).unwrap().r;
        for z in symmetry_probe_points(&r.poles(), 100) {
            let v = r.eval(1.0 / z.conj()) * r.eval(z).conj();
            prop_assert!((v - 1.0).norm() <= 1e-9);
        }
    }

    #[test]
    fn normalization_keeps_r(seed in any::<u64>(), n in 2usize..4) {
        let u = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let r0 = rational_r(&u).unwrap().r;
        let r1 = rational_r(&normalize_unitary(&u)).unwrap().r;
        for z in symmetry_probe_points(&r0.poles(), 20) {
            prop_assert!((r0.eval(z) - r1.eval(z)).norm() <= 1e-9 * (1.0 + r0.eval(z).norm()));
        }
    }

    #[test]
    fn peel_then_extend_round_trips(seed in any::<u64>(), n in 1usize..4) {
        let u = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = rational_r(&u).unwrap().r;
        prop_assume!(r.degree() >= 2);
        let (reduced, zeta) = peel_factor(&r).unwrap();
        let back = extend_factor(&reduced, zeta).unwrap();
        for z in symmetry_probe_points(&r.poles(), 20) {
            prop_assert!((back.eval(z) - r.eval(z)).norm() <= 1e-8 * (1.0 + r.eval(z).norm()));
        }
    }
}

/// Closed-form oracle: `R = -ζ̄² z (z - 1/ζ̄)² / (z - ζ)²` for the `U_ζ` family,
/// from expanding the determinant formula by hand.
#[test]
fn u_zeta_rational_map_matches_closed_form() {
    for zeta in [c(0.2, 0.0), c(0.1, 0.15), c(-0.05, 0.25)] {
        let r = rational_r(&u_zeta(zeta).unwrap()).unwrap().r;
        let zb = zeta.conj();
        for z in symmetry_probe_points(&[zeta], 30) {
            let expected = -zb * zb * z * (z - 1.0 / zb).powi(2) / (z - zeta).powi(2);
            assert!((r.eval(z) - expected).norm() <= 1e-10 * (1.0 + expected.norm()), "zeta = {zeta}");
        }
    }
}

#[test]
fn blaschke_form_of_u_zeta() {
    let r = rational_r(&u_zeta(c(0.2, 0.0)).unwrap()).unwrap().r;
    let f = blaschke_factorize(&r).unwrap();
    assert_eq!(f.form.degree(), 3);
    assert!((f.form.alpha0 - c(-0.04, 0.0)).norm() < 1e-12);
    assert_eq!(f.form.roots.len(), 2);
    for a in &f.form.roots {
        assert!((a - c(0.2, 0.0)).norm() < 1e-6);
    }
}

#[test]
fn non_isometric_rational_maps_are_rejected() {
    let r = RationalMap::new(Poly::from_real(&[0.0, 1.0, 0.5]), Poly::from_real(&[1.0])).unwrap();
    assert!(blaschke_factorize(&r).is_err());
}

/// Padding `U_ζ` by a trivial block adds a ball dimension but leaves `R`
/// unchanged, so the reduced dimension stays at `deg R - 1 = 2`.
#[test]
fn minimal_ball_dimension_ignores_padding() {
    let u = u_zeta(c(0.2, 0.0)).unwrap();
    let solved = solve_isometry(&u, 32).unwrap();
    assert_eq!((solved.n(), solved.minimal_ball_dimension()), (2, Some(2)));
    let mut m = nalgebra::DMatrix::<Complex64>::identity(4, 4);
    m.view_mut((0, 0), (3, 3)).copy_from(u.matrix());
    let padded = solve_isometry(&UnitaryMatrix::new(m).unwrap(), 32).unwrap();
    assert_eq!((padded.n(), padded.minimal_ball_dimension()), (3, Some(2)));
    for w in [c(0.3, 0.1), c(-0.2, 0.5)] {
        let a = solved.eval(w).unwrap();
        let b = padded.eval(w).unwrap();
        assert!((a[0] - b[0]).norm() < 1e-12 && b[3].norm() < 1e-12);
    }
}
