//! Helpers shared by the integration tests.

#![allow(dead_code)]

use isoball::solver::UnitaryMatrix;
use isoball::Complex64;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Complex Gaussian matrix with independent standard entries.
pub fn ginibre<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar-distributed unitary of the given size: QR of a Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary_matrix<R: Rng>(size: usize, rng: &mut R) -> DMatrix<Complex64> {
    let qr = ginibre(size, size, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..size {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..size {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// A random `(n+1) × (n+1)` unitary whose lower block has `|det| ≥ 0.05`.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> UnitaryMatrix {
    loop {
        let m = random_unitary_matrix(n + 1, rng);
        if m.view((1, 1), (n, n)).determinant().norm() >= 0.05 {
            return UnitaryMatrix::new(m).expect("QR factor is unitary");
        }
    }
}
