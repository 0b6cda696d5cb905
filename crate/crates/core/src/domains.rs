//! Bounded symmetric domains: product spaces, Kähler potentials and
//! automorphisms of the disk and the ball.
//!
//! Potentials are `φ = -log(bracket)` with no extra constant. The metric
//! coefficient reported anywhere in the crate is `∂∂̄φ`; for the disk that is
//! `(1-|z|²)^{-2}`, and the Riemannian metric `2 ∂∂̄φ |dz|²` has Gaussian
//! curvature `-2`. Every certificate compares both sides under the same
//! convention, so the choice never affects a verdict.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One factor of a product of balls and disks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FactorRepr", into = "FactorRepr")]
pub enum Factor {
    Disk,
    Ball(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FactorRepr {
    Disk(usize),
    Ball(usize),
}

impl TryFrom<FactorRepr> for Factor {
    type Error = Error;
    fn try_from(r: FactorRepr) -> Result<Self> {
        match r {
            FactorRepr::Disk(1) => Ok(Factor::Disk),
            FactorRepr::Disk(d) => {
                Err(Error::Shape { op: "product_space", detail: format!("a disk factor has dimension 1, got {d}") })
            }
            FactorRepr::Ball(0) => {
                Err(Error::Shape { op: "product_space", detail: "ball dimension must be at least 1".into() })
            }
            FactorRepr::Ball(m) => Ok(Factor::Ball(m)),
        }
    }
}

impl From<Factor> for FactorRepr {
    fn from(f: Factor) -> Self {
        match f {
            Factor::Disk => FactorRepr::Disk(1),
            Factor::Ball(m) => FactorRepr::Ball(m),
        }
    }
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Disk => 1,
            Factor::Ball(m) => *m,
        }
    }

    /// One-dimensional factors (a disk or a 1-ball) accept sharp substitution.
    pub fn is_one_dimensional(&self) -> bool {
        self.dim() == 1
    }
}

/// Ordered product of disk and ball factors with positive conformal constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct ProductSpace {
    factors: Vec<Factor>,
    constants: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    factors: Vec<Factor>,
    constants: Vec<f64>,
}

impl TryFrom<SpaceRepr> for ProductSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        ProductSpace::new(r.factors, r.constants)
    }
}

impl From<ProductSpace> for SpaceRepr {
    fn from(s: ProductSpace) -> Self {
        SpaceRepr { factors: s.factors, constants: s.constants }
    }
}

impl ProductSpace {
    pub fn new(factors: Vec<Factor>, constants: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Shape { op: "product_space", detail: "no factors".into() });
        }
        if factors.len() != constants.len() {
            return Err(Error::Shape {
                op: "product_space",
                detail: format!("{} factors but {} constants", factors.len(), constants.len()),
            });
        }
        if let Some(c) = constants.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::OutOfRange {
                op: "product_space",
                detail: format!("conformal constants must be positive, got {c}"),
            });
        }
        Ok(ProductSpace { factors, constants })
    }

    /// `Δ^p` with unit constants.
    pub fn polydisk(p: usize) -> Self {
        ProductSpace { factors: vec![Factor::Disk; p], constants: vec![1.0; p] }
    }

    pub fn polydisk_with(constants: Vec<f64>) -> Result<Self> {
        let p = constants.len();
        ProductSpace::new(vec![Factor::Disk; p], constants)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn with_constants(&self, constants: Vec<f64>) -> Result<Self> {
        ProductSpace::new(self.factors.clone(), constants)
    }

    /// Total ambient dimension `Σ dim`.
    pub fn dimension(&self) -> usize {
        self.factors.iter().map(Factor::dim).sum()
    }

    /// Coordinate ranges of each factor inside a flattened point.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.factors
            .iter()
            .map(|f| {
                let r = start..start + f.dim();
                start += f.dim();
                r
            })
            .collect()
    }

    pub fn is_polydisk(&self) -> bool {
        self.factors.iter().all(|f| f.is_one_dimensional())
    }

    /// True when both spaces have the same factor shapes (constants may differ).
    pub fn same_shape(&self, other: &Self) -> bool {
        self.factors.len() == other.factors.len()
            && self.factors.iter().zip(&other.factors).all(|(a, b)| a.dim() == b.dim())
    }

    /// Brackets `1 - ‖Z_i‖²` per factor.
    pub fn brackets(&self, point: &[Complex64]) -> Vec<f64> {
        self.ranges().into_iter().map(|r| 1.0 - norm_sqr(&point[r])).collect()
    }
}

pub(crate) fn norm_sqr(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

/// Kinds of bounded symmetric domains with closed-form Bergman kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Ball(usize),
    Polydisk(usize),
    TypeI(usize, usize),
    TypeIv(usize),
}

/// Kernel descriptor `K = c_D · bracket^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Normalization constant, carried but fixed to 1 in all checks.
    pub c_d: f64,
    pub m: i32,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Result<Self> {
        let m = match kind {
            KernelKind::Ball(n) if n >= 1 => -(n as i32 + 1),
            KernelKind::Polydisk(p) if p >= 1 => -2,
            KernelKind::TypeI(p, q) if p >= 1 && q >= 1 => -((p + q) as i32),
            KernelKind::TypeIv(n) if n >= 1 => -(n as i32),
            _ => {
                return Err(Error::Shape {
                    op: "kernel_spec",
                    detail: format!("dimensions of {kind:?} must be positive"),
                })
            }
        };
        Ok(KernelSpec { kind, c_d: 1.0, m })
    }

    /// Number of complex coordinates.
    pub fn dimension(&self) -> usize {
        match self.kind {
            KernelKind::Ball(n) | KernelKind::Polydisk(n) | KernelKind::TypeIv(n) => n,
            KernelKind::TypeI(p, q) => p * q,
        }
    }
}

fn outside(op: &'static str, detail: String) -> Error {
    Error::OutsideDomain { op, detail }
}

/// `-log` of the kernel bracket at `z`.
///
/// For `Polydisk` the per-factor potentials are summed with unit constants.
/// `TypeI(p, q)` reads `z` as a row-major `p × q` matrix.
pub fn kahler_potential(spec: &KernelSpec, z: &[Complex64]) -> Result<f64> {
    const OP: &str = "kahler_potential";
    if z.len() != spec.dimension() {
        return Err(Error::Shape {
            op: OP,
            detail: format!("expected {} coordinates, got {}", spec.dimension(), z.len()),
        });
    }
    match spec.kind {
        KernelKind::Ball(_) => {
            let b = 1.0 - norm_sqr(z);
            if b <= 0.0 {
                return Err(outside(OP, format!("1 - |Z|^2 = {b}")));
            }
            Ok(-b.ln())
        }
        KernelKind::Polydisk(_) => z
            .iter()
            .map(|zi| {
                let b = 1.0 - zi.norm_sqr();
                if b <= 0.0 {
                    Err(outside(OP, format!("coordinate {zi} has modulus >= 1")))
                } else {
                    Ok(-b.ln())
                }
            })
            .sum(),
        KernelKind::TypeI(p, q) => {
            let m = DMatrix::from_row_slice(p, q, z);
            let g = DMatrix::<Complex64>::identity(p, p) - &m * m.adjoint();
            if g.clone().cholesky().is_none() {
                return Err(outside(OP, "I - ZZ* is not positive definite".into()));
            }
            let det = g.determinant().re;
            Ok(-det.ln())
        }
        KernelKind::TypeIv(_) => {
            let zz_bar = norm_sqr(z);
            let zzt: Complex64 = z.iter().map(|c| c * c).sum();
            let b = 1.0 - zz_bar + 0.25 * zzt.norm_sqr();
            if b <= 0.0 || zz_bar >= 2.0 {
                return Err(outside(OP, format!("bracket {b}, |Z|^2 = {zz_bar}")));
            }
            Ok(-b.ln())
        }
    }
}

/// All `k`-element subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// `det(I_p - Z Z*)` computed directly and as the alternating sum of squared
/// `k × k` minors. Returns `(direct, expansion)`.
pub fn det_minor_expansion(z: &DMatrix<Complex64>) -> Result<(f64, f64)> {
    let (p, q) = z.shape();
    if p == 0 || p > q {
        return Err(Error::Shape { op: "det_minor_expansion", detail: format!("need 1 <= p <= q, got {p}x{q}") });
    }
    let lhs = (DMatrix::<Complex64>::identity(p, p) - z * z.adjoint()).determinant().re;
    let mut rhs = 1.0;
    for k in 1..=p {
        let mut sum = 0.0;
        for rows in subsets(p, k) {
            for cols in subsets(q, k) {
                let minor = DMatrix::from_fn(k, k, |i, j| z[(rows[i], cols[j])]);
                sum += minor.determinant().norm_sqr();
            }
        }
        rhs += if k % 2 == 1 { -sum } else { sum };
    }
    Ok((lhs, rhs))
}

/// `z ↦ e^{iθ}(z - a)/(1 - ā z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskAutomorphism {
    pub a: Complex64,
    pub theta: f64,
}

impl DiskAutomorphism {
    pub fn new(a: Complex64, theta: f64) -> Result<Self> {
        if !(a.norm() < 1.0) || !theta.is_finite() {
            return Err(Error::OutOfRange {
                op: "disk_automorphism",
                detail: format!("need |a| < 1, got |a| = {}", a.norm()),
            });
        }
        Ok(DiskAutomorphism { a, theta })
    }

    pub fn identity() -> Self {
        DiskAutomorphism { a: ZERO, theta: 0.0 }
    }

    pub fn rotation(theta: f64) -> Self {
        DiskAutomorphism { a: ZERO, theta }
    }

    /// Evaluates without the domain check (valid wherever `1 - ā z ≠ 0`).
    pub fn eval(&self, z: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.theta) * (z - self.a) / (ONE - self.a.conj() * z)
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        if !(z.norm() < 1.0) {
            return Err(outside("apply_automorphism", format!("|z| = {} >= 1", z.norm())));
        }
        Ok(self.eval(z))
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let d = ONE - self.a.conj() * z;
        Complex64::from_polar(1.0 - self.a.norm_sqr(), self.theta) / (d * d)
    }

    pub fn inverse(&self) -> Self {
        DiskAutomorphism { a: -self.a * Complex64::from_polar(1.0, self.theta), theta: -self.theta }
    }

    /// `self ∘ other`, brought back to the standard form.
    pub fn compose(&self, other: &Self) -> Self {
        let a = other.inverse().eval(self.inverse().eval(ZERO));
        // At the point sent to 0 the derivative is e^{iθ}/(1-|a|²), so its argument is θ.
        let d = self.derivative(other.eval(a)) * other.derivative(a);
        DiskAutomorphism { a, theta: d.arg() }
    }
}

/// `Z ↦ U φ_a(Z)` with the involution
/// `φ_a(z) = (a - P_a z - s_a Q_a z)/(1 - ⟨z, a⟩)`, `s_a = √(1 - |a|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallAutomorphism {
    a: DVector<Complex64>,
    unitary: DMatrix<Complex64>,
}

impl BallAutomorphism {
    pub fn new(a: Vec<Complex64>, unitary: DMatrix<Complex64>) -> Result<Self> {
        let n = a.len();
        if n == 0 || unitary.shape() != (n, n) {
            return Err(Error::Shape {
                op: "ball_automorphism",
                detail: format!("base point of length {n} with a {:?} unitary", unitary.shape()),
            });
        }
        if !(norm_sqr(&a) < 1.0) {
            return Err(Error::OutOfRange { op: "ball_automorphism", detail: "|a| >= 1".into() });
        }
        let res = unitarity_residual(&unitary);
        if res > 1e-12 {
            return Err(Error::NotUnitary { residual: res });
        }
        Ok(BallAutomorphism { a: DVector::from_vec(a), unitary })
    }

    pub fn identity(n: usize) -> Self {
        BallAutomorphism { a: DVector::zeros(n), unitary: DMatrix::identity(n, n) }
    }

    /// The involution `φ_a` alone.
    pub fn involution(a: Vec<Complex64>) -> Result<Self> {
        let n = a.len();
        BallAutomorphism::new(a, DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn base_point(&self) -> &DVector<Complex64> {
        &self.a
    }

    pub fn unitary(&self) -> &DMatrix<Complex64> {
        &self.unitary
    }

    /// Evaluates without the domain check.
    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let z = DVector::from_column_slice(z);
        let a2 = self.a.norm_squared();
        let phi = if a2 == 0.0 {
            -z
        } else {
            let za = self.a.dotc(&z); // ⟨z, a⟩ = Σ z_i ā_i
            let pz = &self.a * (za / a2);
            let qz = &z - &pz;
            let s = (1.0 - a2).sqrt();
            (&self.a - pz - qz * Complex64::new(s, 0.0)) / (ONE - za)
        };
        (&self.unitary * phi).iter().copied().collect()
    }

    pub fn apply(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape {
                op: "apply_automorphism",
                detail: format!("point of length {} in a {}-ball", z.len(), self.dim()),
            });
        }
        if !(norm_sqr(z) < 1.0) {
            return Err(outside("apply_automorphism", format!("|Z|^2 = {} >= 1", norm_sqr(z))));
        }
        Ok(self.eval(z))
    }

    /// The inverse `φ_a ∘ U* = U* ∘ φ_{Ua}`.
    pub fn inverse(&self) -> Self {
        BallAutomorphism { a: &self.unitary * &self.a, unitary: self.unitary.adjoint() }
    }
}

/// Either kind of automorphism, for uniform application.
#[derive(Debug, Clone, PartialEq)]
pub enum Automorphism {
    Disk(DiskAutomorphism),
    Ball(BallAutomorphism),
}

/// Applies an automorphism to a point of its domain.
pub fn apply_automorphism(auto: &Automorphism, z: &[Complex64]) -> Result<Vec<Complex64>> {
    match auto {
        Automorphism::Disk(d) => {
            if z.len() != 1 {
                return Err(Error::Shape {
                    op: "apply_automorphism",
                    detail: format!("disk point must have one coordinate, got {}", z.len()),
                });
            }
            Ok(vec![d.apply(z[0])?])
        }
        Automorphism::Ball(b) => b.apply(z),
    }
}

/// `max |U U* - I|`.
pub fn unitarity_residual(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    let e = u * u.adjoint() - DMatrix::<Complex64>::identity(n, n);
    e.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Metric coefficient `∂∂̄(-log(1-|z|²)) = (1-|z|²)^{-2}` of the disk.
pub fn disk_metric_coefficient(z: Complex64) -> f64 {
    (1.0 - z.norm_sqr()).powi(-2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn potential_examples() {
        let ball = KernelSpec::new(KernelKind::Ball(3)).unwrap();
        assert_eq!(kahler_potential(&ball, &[ZERO; 3]).unwrap(), 0.0);
        let t11 = KernelSpec::new(KernelKind::TypeI(1, 1)).unwrap();
        let z = c(0.3, -0.4);
        let v = kahler_potential(&t11, &[z]).unwrap();
        assert!((v + (1.0 - z.norm_sqr()).ln()).abs() < 1e-15);
        let t4 = KernelSpec::new(KernelKind::TypeIv(2)).unwrap();
        let v = kahler_potential(&t4, &[c(0.3, 0.0), ZERO]).unwrap();
        assert!((v + (1.0 - 0.09 + 0.25 * 0.09 * 0.09f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn kernel_exponents() {
        assert_eq!(KernelSpec::new(KernelKind::TypeI(2, 3)).unwrap().m, -5);
        assert_eq!(KernelSpec::new(KernelKind::TypeIv(4)).unwrap().m, -4);
        assert!(KernelSpec::new(KernelKind::Ball(0)).is_err());
    }

    #[test]
    fn potential_rejects_outside() {
        let ball = KernelSpec::new(KernelKind::Ball(2)).unwrap();
        let err = kahler_potential(&ball, &[c(0.8, 0.0), c(0.7, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
    }

    #[test]
    fn minor_expansion_small_cases() {
        let z = DMatrix::<Complex64>::zeros(2, 3);
        assert_eq!(det_minor_expansion(&z).unwrap(), (1.0, 1.0));
        let row = DMatrix::from_row_slice(1, 2, &[c(0.3, 0.1), c(-0.2, 0.4)]);
        let (l, r) = det_minor_expansion(&row).unwrap();
        let expected = 1.0 - 0.1 - 0.2;
        assert!((l - expected).abs() < 1e-15 && (r - expected).abs() < 1e-15);
        assert!(det_minor_expansion(&DMatrix::<Complex64>::zeros(3, 2)).is_err());
    }

    #[test]
    fn subsets_enumeration() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn disk_automorphism_examples() {
        assert_eq!(DiskAutomorphism::identity().apply(c(0.3, 0.2)).unwrap(), c(0.3, 0.2));
        let s = DiskAutomorphism::new(c(0.5, 0.0), 0.0).unwrap();
        assert!(s.apply(c(0.5, 0.0)).unwrap().norm() < 1e-16);
        assert!(s.apply(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn disk_composition_matches_pointwise() {
        let s = DiskAutomorphism::new(c(0.3, -0.2), 0.7).unwrap();
        let t = DiskAutomorphism::new(c(-0.1, 0.5), -1.9).unwrap();
        let st = s.compose(&t);
        for z in [c(0.1, 0.1), c(-0.4, 0.3), c(0.0, -0.8)] {
            assert!((st.eval(z) - s.eval(t.eval(z))).norm() < 1e-14);
        }
    }

    #[test]
    fn ball_swap() {
        let swap = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let b = BallAutomorphism::new(vec![ZERO, ZERO], swap).unwrap();
        let out = apply_automorphism(&Automorphism::Ball(b.clone()), &[c(0.1, 0.0), c(0.0, 0.2)]).unwrap();
        // The involution at the origin is z ↦ -z, so the pure unitary form needs the sign.
        assert_eq!(out, [c(0.0, 0.2), c(0.1, 0.0)].iter().map(|z| -z).collect::<Vec<_>>());
    }

    #[test]
    fn ball_involution_sends_a_to_origin() {
        let a = vec![c(0.2, 0.1), c(-0.3, 0.4)];
        let phi = BallAutomorphism::involution(a.clone()).unwrap();
        assert!(norm_sqr(&phi.eval(&a)) < 1e-30);
        let back = phi.eval(&phi.eval(&[c(0.1, -0.1), c(0.2, 0.3)]));
        assert!((back[0] - c(0.1, -0.1)).norm() < 1e-15 && (back[1] - c(0.2, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn product_space_serde() {
        let s: ProductSpace =
            serde_json::from_str(r#"{"factors":[{"disk":1},{"ball":2}],"constants":[1.0,0.5]}"#).unwrap();
        assert_eq!(s.dimension(), 3);
        assert_eq!(s.ranges(), vec![0..1, 1..3]);
        assert!(serde_json::from_str::<ProductSpace>(r#"{"factors":[{"disk":2}],"constants":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<ProductSpace>(r#"{"factors":[{"disk":1}],"constants":[0.0]}"#).is_err());
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"factors":[{"disk":1},{"ball":2}],"constants":[1.0,0.5]}"#);
    }
}
