//! Explicit isometries: catalog verification, range containment, dimensions.

use isoball::maps::{catalog_construct, sharp_compose, IsometryMap, CATALOG_FORMS};
use isoball::verify::{check_functional_equation, disk_samples};
use isoball::Complex64;
use proptest::prelude::*;

fn params_for(form: &str) -> Vec<f64> {
    match form {
        "bidisk-1" | "bidisk-2" => vec![0.6],
        "bidisk-3" => vec![0.35],
        "root" | "diagonal" => vec![5.0],
        "equal-roots" => vec![3.0, 2.0],
        "diagonal-plus-roots" => vec![2.0, 2.0, 2.0],
        "u-zeta" => vec![0.15, 0.1],
        _ => vec![],
    }
}

#[test]
fn every_catalog_form_satisfies_its_functional_equation() {
    let points = disk_samples(500, 0.9);
    for (form, _) in CATALOG_FORMS {
        let f = catalog_construct(form, &params_for(form)).unwrap();
        let r = check_functional_equation(&f, f.target(), f.source_constant(), &points, 1e-10).unwrap();
        assert!(r.pass, "{form}: residual {:e}", r.max_residual);
    }
}

#[test]
fn roots_and_diagonals_up_to_six() {
    let points = disk_samples(500, 0.9);
    for p in 2..=6 {
        for f in [IsometryMap::pth_root(p).unwrap(), IsometryMap::diagonal(p).unwrap()] {
            let r = check_functional_equation(&f, f.target(), f.source_constant(), &points, 1e-10).unwrap();
            assert!(r.pass, "p = {p}: {:e}", r.max_residual);
        }
    }
}

/// Closed-form oracle: `F₂(w) = (C(√τ), C(i√τ))` with `τ = i(1+w)/(1-w)`, `C(t) = (t-i)/(t+i)`.
#[test]
fn square_root_embedding_matches_closed_form() {
    let f = IsometryMap::pth_root(2).unwrap();
    let i = Complex64::new(0.0, 1.0);
    for w in disk_samples(50, 0.95) {
        let tau = i * (1.0 + w) / (1.0 - w);
        let t = tau.sqrt();
        let expected = [(t - i) / (t + i), (i * t - i) / (i * t + i)];
        let got = f.eval(w).unwrap();
        for (a, b) in got.iter().zip(expected) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn root_components_stay_inside(p in 2usize..7, r in 0.1f64..0.99) {
        let f = IsometryMap::pth_root(p).unwrap();
        let bound = (0..720)
            .map(|k| f.eval(Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / 720.0)).unwrap())
            .flat_map(|v| v.into_iter().map(|z| z.norm()))
            .fold(0.0, f64::max);
        prop_assert!(bound < 1.0);
    }

    #[test]
    fn sharp_dimension_arithmetic(p in 2usize..5, q in 2usize..5, slot_seed in 0usize..10, diag in any::<bool>()) {
        let outer = IsometryMap::pth_root(p).unwrap();
        let inner = if diag { IsometryMap::diagonal(q).unwrap() } else { IsometryMap::pth_root(q).unwrap() };
        let slot = 1 + slot_seed % p;
        let g = sharp_compose(&outer, &inner, slot).unwrap();
        prop_assert_eq!(g.dimension(), p + q - 1);
        let points = disk_samples(100, 0.9);
        let r = check_functional_equation(&g, g.target(), g.source_constant(), &points, 1e-10).unwrap();
        prop_assert!(r.pass);
    }
}
