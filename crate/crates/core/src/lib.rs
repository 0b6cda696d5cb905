//! Holomorphic isometries from the Poincaré disk into products of unit balls
//! and polydisks.
//!
//! The crate is organised bottom up:
//!
//! * [`series`] truncated Taylor series over ℂ, the representation substrate.
//! * [`poly`] dense complex polynomials, root finding and rational maps.
//! * [`domains`] product spaces, Kähler potentials and automorphisms.
//! * [`maps`] the explicit isometries (p-th root, diagonal, sharp composites, catalog forms).
//! * [`solver`] the unitary-matrix solver, the rational invariant `R` and its Blaschke form.
//! * [`verify`] numerical certificates (functional equations, metric pullback, properness,
//!   congruence, rigidity).
//! * [`monodromy`] analytic continuation, monodromy orbits, minimal polynomials and
//!   sheeting numbers.

// Domain guards are written `!(x < 1.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domains;
pub mod error;
pub mod maps;
pub mod monodromy;
pub mod poly;
pub mod series;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Default truncation order for power series.
pub const DEFAULT_ORDER: usize = 64;
