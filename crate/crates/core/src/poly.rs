//! Dense complex polynomials, companion-matrix root finding, and rational maps.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TruncatedSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Polynomial with ascending coefficients `c_0 + c_1 z + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut p = Poly::new(vec![ONE]);
        for &r in roots {
            p = p.mul(&Poly::new(vec![-r, ONE]));
        }
        p
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    /// Sum of coefficient moduli, the natural scale for relative tests.
    pub fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Removes trailing coefficients that are negligible relative to the largest.
    pub fn trimmed(&self, rel_tol: f64) -> Self {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= rel_tol * scale {
            coeffs.pop();
        }
        if scale == 0.0 {
            coeffs.truncate(1);
        }
        Poly { coeffs }
    }

    /// Formal degree (length minus one); call [`Poly::trimmed`] first for the true degree.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, c| acc * z + c)
    }

    /// Value of `z^d · p(1/z)` at `z`, i.e. the polynomial with reversed coefficients.
    pub fn eval_reversed(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().fold(ZERO, |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Poly::new(vec![ZERO]);
        }
        Poly::new((1..self.coeffs.len()).map(|k| self.coeffs[k] * k as f64).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Multiplies by `z`.
    pub fn shift_up(&self) -> Self {
        let mut coeffs = vec![ZERO];
        coeffs.extend_from_slice(&self.coeffs);
        Poly::new(coeffs)
    }

    /// Synthetic division by `(z - r)`, discarding the remainder.
    pub fn deflate(&self, r: Complex64) -> Self {
        let n = self.coeffs.len();
        if n == 1 {
            return Poly::new(vec![ZERO]);
        }
        let mut q = vec![ZERO; n - 1];
        let mut acc = ZERO;
        for k in (1..n).rev() {
            acc = acc * r + self.coeffs[k];
            q[k - 1] = acc;
        }
        Poly::new(q)
    }

    /// Taylor shift: coefficients of `p(c + h)` as a polynomial in `h`.
    pub fn shifted(&self, c: Complex64) -> Self {
        let mut b = self.coeffs.clone();
        let n = b.len() - 1;
        for i in 0..n {
            for j in (i..n).rev() {
                let t = b[j + 1] * c;
                b[j] += t;
            }
        }
        Poly::new(b)
    }

    /// `p ∘ s` as a truncated series, where `s` is any series (constant term included).
    pub fn compose_series(&self, s: &TruncatedSeries) -> TruncatedSeries {
        let n = s.order();
        let mut acc = TruncatedSeries::constant(ZERO, s.center(), n);
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(s).expect("same center").add_constant(c);
        }
        acc
    }

    /// Roots of the polynomial (after trimming), via companion-matrix eigenvalues
    /// polished by Newton's method. Roots that agree to about `1e-5` relative are
    /// treated as one multiple root and replaced by their mean, which is far
    /// better conditioned than the individual perturbed copies.
    pub fn roots(&self) -> Vec<Complex64> {
        let p = self.trimmed(1e-14);
        let d = p.degree();
        if d == 0 {
            return Vec::new();
        }
        let lead = p.leading();
        if d == 1 {
            return vec![-p.coeffs[0] / lead];
        }
        let mut comp = DMatrix::<Complex64>::zeros(d, d);
        for i in 1..d {
            comp[(i, i - 1)] = ONE;
        }
        for i in 0..d {
            comp[(i, d - 1)] = -p.coeffs[i] / lead;
        }
        let (_, t) = nalgebra::linalg::Schur::new(comp).unpack();
        let mut roots: Vec<Complex64> = (0..d).map(|i| t[(i, i)]).collect();
        let dp = p.derivative();
        for r in roots.iter_mut() {
            *r = newton_polish(&p, &dp, *r);
        }
        cluster_average(&mut roots, 1e-5);
        roots
    }
}

fn newton_polish(p: &Poly, dp: &Poly, mut z: Complex64) -> Complex64 {
    let mut best = p.eval(z).norm();
    for _ in 0..8 {
        let d = dp.eval(z);
        if d == ZERO {
            break;
        }
        let cand = z - p.eval(z) / d;
        let v = p.eval(cand).norm();
        if !(v < best) {
            break;
        }
        best = v;
        z = cand;
    }
    z
}

fn cluster_average(roots: &mut [Complex64], rel_tol: f64) {
    let n = roots.len();
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut members = vec![i];
        assigned[i] = true;
        let mut k = 0;
        while k < members.len() {
            let a = roots[members[k]];
            for j in 0..n {
                if !assigned[j] && (roots[j] - a).norm() <= rel_tol * (1.0 + a.norm()) {
                    assigned[j] = true;
                    members.push(j);
                }
            }
            k += 1;
        }
        if members.len() > 1 {
            let mean = members.iter().map(|&m| roots[m]).sum::<Complex64>() / members.len() as f64;
            for &m in &members {
                roots[m] = mean;
            }
        }
    }
}

/// Value of a rational map on the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereValue {
    Finite(Complex64),
    Infinity,
}

/// Quotient of two polynomials with monic denominator and no common roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalMap {
    numerator: Poly,
    denominator: Poly,
}

impl RationalMap {
    /// Normalizes the denominator to be monic and cancels common roots.
    pub fn new(numerator: Poly, denominator: Poly) -> Result<Self> {
        let den = denominator.trimmed(1e-14);
        if den.is_zero() {
            return Err(Error::Precondition { op: "rational_map", detail: "denominator vanishes identically".into() });
        }
        let lead = den.leading().inv();
        let mut num = numerator.trimmed(1e-14).scale(lead);
        let mut den = den.scale(lead);
        if num.is_zero() {
            return Ok(RationalMap { numerator: Poly::new(vec![ZERO]), denominator: Poly::new(vec![ONE]) });
        }
        loop {
            let mut cancelled = false;
            for r in den.roots() {
                let scale: f64 = num.coeffs().iter().enumerate().map(|(k, c)| c.norm() * r.norm().powi(k as i32)).sum();
                if num.eval(r).norm() <= 1e-9 * scale.max(1e-300) {
                    num = num.deflate(r);
                    den = den.deflate(r);
                    cancelled = true;
                    break;
                }
            }
            if !cancelled || den.degree() == 0 {
                break;
            }
        }
        let lead = den.leading();
        Ok(RationalMap { numerator: num.scale(lead.inv()), denominator: den.scale(lead.inv()) })
    }

    pub fn from_poly(p: Poly) -> Self {
        RationalMap { numerator: p.trimmed(1e-14), denominator: Poly::new(vec![ONE]) }
    }

    pub fn numerator(&self) -> &Poly {
        &self.numerator
    }

    pub fn denominator(&self) -> &Poly {
        &self.denominator
    }

    /// `max(deg P, deg Q)`.
    pub fn degree(&self) -> usize {
        self.numerator.degree().max(self.denominator.degree())
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.numerator.eval(z) / self.denominator.eval(z)
    }

    /// Evaluation on the Riemann sphere, including `z = ∞`.
    pub fn eval_sphere(&self, z: SphereValue) -> SphereValue {
        let d = self.degree();
        let (num, den) = match z {
            SphereValue::Finite(z) => (self.numerator.eval(z), self.denominator.eval(z)),
            SphereValue::Infinity => (self.numerator.coeff(d), self.denominator.coeff(d)),
        };
        if den == ZERO {
            SphereValue::Infinity
        } else {
            SphereValue::Finite(num / den)
        }
    }

    /// Roots of the denominator.
    pub fn poles(&self) -> Vec<Complex64> {
        self.denominator.roots()
    }

    /// Roots of the numerator.
    pub fn zeros(&self) -> Vec<Complex64> {
        self.numerator.roots()
    }

    /// Numerator of `R'`, namely `P'Q - PQ'`.
    pub fn wronskian(&self) -> Poly {
        self.numerator
            .derivative()
            .mul(&self.denominator)
            .sub(&self.numerator.mul(&self.denominator.derivative()))
            .trimmed(1e-14)
    }

    /// Critical points of `R` on the sphere; `∞` is reported separately as its multiplicity.
    pub fn critical_points(&self) -> (Vec<Complex64>, usize) {
        let w = self.wronskian();
        let d = self.degree();
        if d < 2 {
            return (Vec::new(), 0);
        }
        let finite = w.roots();
        let at_infinity = (2 * d - 2).saturating_sub(finite.len());
        (finite, at_infinity)
    }

    /// Finite critical values, deduplicated at `1e-9`.
    pub fn critical_values(&self) -> Vec<Complex64> {
        let (points, _) = self.critical_points();
        let d = self.degree();
        let mut values: Vec<Complex64> = Vec::new();
        let mut push = |v: SphereValue| {
            if let SphereValue::Finite(v) = v {
                if v.is_finite() && !values.iter().any(|u| (u - v).norm() <= 1e-9 * (1.0 + v.norm())) {
                    values.push(v);
                }
            }
        };
        for p in points {
            push(self.eval_sphere(SphereValue::Finite(p)));
        }
        if d >= 2 && self.critical_points().1 > 0 {
            push(self.eval_sphere(SphereValue::Infinity));
        }
        values
    }

    /// `R ∘ s` as a truncated series.
    pub fn compose_series(&self, s: &TruncatedSeries) -> Result<TruncatedSeries> {
        self.numerator.compose_series(s).div(&self.denominator.compose_series(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_cubic() {
        let roots_in = [c(1.0, 0.0), c(-0.5, 0.3), c(0.2, -2.0)];
        let p = Poly::from_roots(&roots_in);
        let mut roots = p.roots();
        for r in roots_in {
            let (i, d) = roots.iter().enumerate().map(|(i, x)| (i, (x - r).norm())).fold((0, f64::MAX), |a, b| {
                if b.1 < a.1 {
                    b
                } else {
                    a
                }
            });
            assert!(d < 1e-13, "root {r} missed by {d}");
            roots.remove(i);
        }
    }

    #[test]
    fn double_root_is_accurate() {
        let z0 = c(0.2, 0.0);
        let p = Poly::from_roots(&[z0, z0, c(5.0, 0.0)]);
        let roots = p.roots();
        let near: Vec<_> = roots.iter().filter(|r| (*r - z0).norm() < 1e-3).collect();
        assert_eq!(near.len(), 2);
        for r in near {
            assert!((r - z0).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_and_deflate() {
        let p = Poly::from_real(&[1.0, 2.0, 3.0]);
        assert_eq!(p.shifted(c(1.0, 0.0)), Poly::from_real(&[6.0, 8.0, 3.0]));
        let q = Poly::from_roots(&[c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(q.deflate(c(2.0, 0.0)), Poly::from_real(&[-3.0, 1.0]));
    }

    #[test]
    fn rational_map_cancels_common_roots() {
        let num = Poly::from_roots(&[c(0.0, 0.0), c(0.5, 0.0)]).scale(c(2.0, 0.0));
        let den = Poly::from_roots(&[c(0.5, 0.0), c(0.3, 0.0)]).scale(c(4.0, 0.0));
        let r = RationalMap::new(num, den).unwrap();
        assert_eq!(r.degree(), 1);
        assert!((r.denominator().leading() - ONE).norm() < 1e-15);
        let z = c(0.1, 0.2);
        assert!((r.eval(z) - 0.5 * z / (z - 0.3)).norm() < 1e-13);
    }

    #[test]
    fn critical_values_of_square() {
        let r = RationalMap::from_poly(Poly::from_real(&[0.0, 0.0, 1.0]));
        let (pts, inf) = r.critical_points();
        assert_eq!(pts.len(), 1);
        assert_eq!(inf, 1);
        assert_eq!(r.critical_values(), vec![c(0.0, 0.0)]);
    }
}
