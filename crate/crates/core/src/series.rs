//! Truncated Taylor series over ℂ.
//!
//! A [`TruncatedSeries`] of order `N` stores `c_0..c_N` of
//! `f(w) = Σ c_k (w - center)^k`. Binary operations truncate to the smaller
//! order; nothing is ever padded silently.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Number of trailing coefficients used by the radius estimate.
const RADIUS_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRepr", into = "SeriesRepr")]
pub struct TruncatedSeries {
    center: Complex64,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    center: Complex64,
    coeffs: Vec<Complex64>,
}

impl TryFrom<SeriesRepr> for TruncatedSeries {
    type Error = Error;
    fn try_from(r: SeriesRepr) -> Result<Self> {
        TruncatedSeries::new(r.center, r.coeffs)
    }
}

impl From<TruncatedSeries> for SeriesRepr {
    fn from(s: TruncatedSeries) -> Self {
        SeriesRepr { center: s.center, coeffs: s.coeffs }
    }
}

/// Result of evaluating a series at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: Complex64,
    /// Estimated size of the discarded tail `Σ_{k>N} c_k h^k`.
    pub tail_bound: f64,
    /// False when the point is not strictly inside the estimated radius.
    pub reliable: bool,
}

fn check_centers(a: &TruncatedSeries, b: &TruncatedSeries) -> Result<()> {
    if a.center != b.center {
        return Err(Error::MismatchedCenters { left: a.center, right: b.center });
    }
    Ok(())
}

/// Cauchy product of two coefficient slices truncated to `n + 1` terms.
pub(crate) fn convolve(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n + 1];
    for (i, &ai) in a.iter().enumerate().take(n + 1) {
        if ai == ZERO {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(n + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Horner composition `outer(inner)` where `inner[0]` is treated as zero.
fn horner_compose(outer: &[Complex64], inner: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut inner0 = inner[..=n.min(inner.len() - 1)].to_vec();
    inner0[0] = ZERO;
    let mut acc = vec![ZERO; n + 1];
    for &c in outer.iter().take(n + 1).rev() {
        acc = convolve(&acc, &inner0, n);
        acc[0] += c;
    }
    acc
}

impl TruncatedSeries {
    /// Builds a series from its coefficients. At least one coefficient is required.
    pub fn new(center: Complex64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Shape { op: "truncated_series", detail: "no coefficients".into() });
        }
        if !center.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Shape { op: "truncated_series", detail: "non-finite center or coefficient".into() });
        }
        Ok(TruncatedSeries { center, coeffs })
    }

    /// Convenience constructor at center 0 from real coefficients.
    pub fn from_real(coeffs: &[f64]) -> Self {
        TruncatedSeries { center: ZERO, coeffs: coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect() }
    }

    pub fn constant(value: Complex64, center: Complex64, order: usize) -> Self {
        let mut coeffs = vec![ZERO; order + 1];
        coeffs[0] = value;
        TruncatedSeries { center, coeffs }
    }

    /// The function `w ↦ w` expanded at `center`.
    pub fn variable(center: Complex64, order: usize) -> Self {
        let mut s = Self::constant(center, center, order);
        if order >= 1 {
            s.coeffs[1] = ONE;
        }
        s
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    /// Drops coefficients above `order`. Requesting a larger order is an error.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::Precondition {
                op: "series_truncate",
                detail: format!("cannot raise order {} to {}", self.order(), order),
            });
        }
        Ok(TruncatedSeries { center: self.center, coeffs: self.coeffs[..=order].to_vec() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_centers(self, other)?;
        let n = self.order().min(other.order());
        let coeffs = (0..=n).map(|k| self.coeffs[k] + other.coeffs[k]).collect();
        Ok(TruncatedSeries { center: self.center, coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_centers(self, other)?;
        let n = self.order().min(other.order());
        let coeffs = (0..=n).map(|k| self.coeffs[k] - other.coeffs[k]).collect();
        Ok(TruncatedSeries { center: self.center, coeffs })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        TruncatedSeries { center: self.center, coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    pub fn add_constant(&self, value: Complex64) -> Self {
        let mut s = self.clone();
        s.coeffs[0] += value;
        s
    }

    /// Cauchy product truncated at the smaller order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_centers(self, other)?;
        let n = self.order().min(other.order());
        Ok(TruncatedSeries { center: self.center, coeffs: convolve(&self.coeffs, &other.coeffs, n) })
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn reciprocal(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0 == ZERO {
            return Err(Error::Precondition { op: "series_reciprocal", detail: "constant term vanishes".into() });
        }
        let n = self.order();
        let inv0 = a0.inv();
        let mut b = vec![ZERO; n + 1];
        b[0] = inv0;
        for m in 1..=n {
            let mut s = ZERO;
            for k in 1..=m {
                s += self.coeffs[k] * b[m - k];
            }
            b[m] = -s * inv0;
        }
        Ok(TruncatedSeries { center: self.center, coeffs: b })
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        check_centers(self, other)?;
        self.mul(&other.reciprocal()?)
    }

    pub fn derivative(&self) -> Self {
        let n = self.order();
        let mut coeffs: Vec<Complex64> = (1..=n).map(|k| self.coeffs[k] * k as f64).collect();
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        TruncatedSeries { center: self.center, coeffs }
    }

    /// `self ∘ inner`, where `inner` is expanded at some center `c` and
    /// `inner(c)` must equal the center of `self`.
    ///
    /// The result is expanded at `inner`'s center.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        let shift = inner.coeffs[0] - self.center;
        let tol = 1e-12 * (1.0 + self.center.norm());
        if shift.norm() > tol {
            return Err(Error::Precondition {
                op: "series_compose",
                detail: format!(
                    "inner constant term {} differs from outer center {}; recenter first",
                    inner.coeffs[0], self.center
                ),
            });
        }
        let n = self.order().min(inner.order());
        Ok(TruncatedSeries { center: inner.center, coeffs: horner_compose(&self.coeffs, &inner.coeffs, n) })
    }

    /// Compositional inverse `g` with `self ∘ g = w`, via Newton iteration with
    /// precision doubling. Requires `c_0 = 0` and `c_1 ≠ 0`; the result is
    /// expanded at the same center with `g(center) = center`.
    pub fn revert(&self) -> Result<Self> {
        let c1 = self.coeff(1);
        let n = self.order();
        if n == 0 || c1 == ZERO {
            return Err(Error::NotInvertible { c1 });
        }
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if self.coeffs[0].norm() > 1e-13 * scale {
            return Err(Error::Precondition {
                op: "series_reversion",
                detail: format!("constant term {} must vanish", self.coeffs[0]),
            });
        }
        let f = &self.coeffs;
        let df: Vec<Complex64> = (1..=n).map(|k| f[k] * k as f64).collect();
        let mut g = vec![ZERO; n + 1];
        g[1] = c1.inv();
        let mut prec = 1usize;
        let newton = |g: &mut Vec<Complex64>, prec: usize| -> Result<()> {
            let mut fg = horner_compose(f, g, prec);
            fg[1] -= ONE;
            let dfg = horner_compose(&df, g, prec);
            let step =
                TruncatedSeries { center: ZERO, coeffs: fg }.div(&TruncatedSeries { center: ZERO, coeffs: dfg })?;
            for (gk, sk) in g.iter_mut().zip(&step.coeffs).take(prec + 1) {
                *gk -= sk;
            }
            g[0] = ZERO;
            Ok(())
        };
        while prec < n {
            prec = (2 * prec).min(n);
            newton(&mut g, prec)?;
        }
        // One more pass at full precision mops up rounding from the doubling steps.
        newton(&mut g, n)?;
        g[0] = self.center;
        Ok(TruncatedSeries { center: self.center, coeffs: g })
    }

    /// Principal branch of `self^exponent`, `c_0 ≠ 0`.
    ///
    /// Uses the recurrence obtained from `f g' = e f' g`, which needs no
    /// logarithm series.
    pub fn powf(&self, exponent: f64) -> Result<Self> {
        let c0 = self.coeffs[0];
        if c0 == ZERO {
            return Err(Error::BranchPoint { op: "series_fractional_power" });
        }
        let n = self.order();
        let mut g = vec![ZERO; n + 1];
        g[0] = c0.powf(exponent);
        if exponent == 0.0 {
            g[0] = ONE;
        }
        let inv0 = c0.inv();
        for m in 1..=n {
            let mut s = ZERO;
            for k in 1..=m {
                let w = (exponent + 1.0) * k as f64 - m as f64;
                s += self.coeffs[k] * g[m - k] * w;
            }
            g[m] = s * inv0 / m as f64;
        }
        Ok(TruncatedSeries { center: self.center, coeffs: g })
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, mut exponent: u32) -> Self {
        let n = self.order();
        let mut result = Self::constant(ONE, self.center, n);
        let mut base = self.clone();
        while exponent > 0 {
            if exponent & 1 == 1 {
                result.coeffs = convolve(&result.coeffs, &base.coeffs, n);
            }
            exponent >>= 1;
            if exponent > 0 {
                base.coeffs = convolve(&base.coeffs, &base.coeffs, n);
            }
        }
        result
    }

    /// Re-expands the series at `new_center` (exact for polynomials, otherwise
    /// accurate when `new_center` is well inside the radius).
    pub fn recenter(&self, new_center: Complex64) -> Self {
        let h = new_center - self.center;
        let n = self.order();
        let mut b = self.coeffs.clone();
        // Repeated synthetic division computes the Taylor shift in O(N²).
        for i in 0..n {
            for j in (i..n).rev() {
                let t = b[j + 1] * h;
                b[j] += t;
            }
        }
        TruncatedSeries { center: new_center, coeffs: b }
    }

    /// Convergence radius estimated from the decay of the trailing coefficients.
    ///
    /// A least-squares line is fitted to `log|c_k|` over the nonzero entries
    /// among the last eight coefficients. A window with fewer than two nonzero
    /// coefficients, or whose upper half vanishes, yields an infinite radius.
    pub fn radius_estimate(&self) -> f64 {
        let n = self.order();
        let start = n.saturating_sub(RADIUS_WINDOW - 1);
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let upper = start + (n - start).div_ceil(2);
        if (upper..=n).all(|k| self.coeffs[k].norm() <= 1e-15 * scale) {
            return f64::INFINITY;
        }
        let pts: Vec<(f64, f64)> = (start..=n)
            .filter(|&k| self.coeffs[k].norm() > 1e-300 && self.coeffs[k].norm() > 1e-15 * scale)
            .map(|k| (k as f64, self.coeffs[k].norm().ln()))
            .collect();
        if pts.len() < 2 {
            return f64::INFINITY;
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        (-slope).exp()
    }

    /// Horner evaluation with a tail estimate.
    pub fn evaluate(&self, z: Complex64) -> Evaluation {
        let h = z - self.center;
        let mut value = ZERO;
        for c in self.coeffs.iter().rev() {
            value = value * h + c;
        }
        let radius = self.radius_estimate();
        let r = h.norm();
        let q = if radius.is_infinite() { 0.0 } else { r / radius };
        let last = self.coeffs[self.order()].norm() * r.powi(self.order() as i32);
        let (tail_bound, reliable) = if q < 1.0 { (last * q / (1.0 - q), true) } else { (f64::INFINITY, false) };
        Evaluation { value, tail_bound, reliable }
    }

    /// Plain Horner value without the reliability bookkeeping.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let h = z - self.center;
        self.coeffs.iter().rev().fold(ZERO, |acc, c| acc * h + c)
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Free-function form of [`TruncatedSeries::mul`].
pub fn series_multiply(a: &TruncatedSeries, b: &TruncatedSeries) -> Result<TruncatedSeries> {
    a.mul(b)
}

/// Free-function form of [`TruncatedSeries::compose`].
pub fn series_compose(outer: &TruncatedSeries, inner: &TruncatedSeries) -> Result<TruncatedSeries> {
    outer.compose(inner)
}

/// Free-function form of [`TruncatedSeries::revert`].
pub fn series_reversion(f: &TruncatedSeries) -> Result<TruncatedSeries> {
    f.revert()
}

/// Free-function form of [`TruncatedSeries::powf`].
pub fn series_fractional_power(f: &TruncatedSeries, exponent: f64) -> Result<TruncatedSeries> {
    f.powf(exponent)
}

/// Free-function form of [`TruncatedSeries::evaluate`].
pub fn series_evaluate(f: &TruncatedSeries, z: Complex64) -> Evaluation {
    f.evaluate(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_coeffs(s: &TruncatedSeries, expected: &[Complex64], tol: f64) {
        assert_eq!(s.order() + 1, expected.len(), "order mismatch");
        for (k, (a, b)) in s.coeffs().iter().zip(expected).enumerate() {
            assert!((a - b).norm() <= tol, "coefficient {k}: {a} vs {b}");
        }
    }

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn difference_of_squares() {
        let a = TruncatedSeries::from_real(&[1.0, 1.0, 0.0]);
        let b = TruncatedSeries::from_real(&[1.0, -1.0, 0.0]);
        assert_coeffs(&a.mul(&b).unwrap(), &reals(&[1.0, 0.0, -1.0]), 0.0);
    }

    #[test]
    fn geometric_square() {
        let g = TruncatedSeries::from_real(&[1.0; 4]);
        assert_coeffs(&g.mul(&g).unwrap(), &reals(&[1.0, 2.0, 3.0, 4.0]), 0.0);
    }

    #[test]
    fn product_truncates_to_smaller_order() {
        let a = TruncatedSeries::from_real(&[1.0; 6]);
        let b = TruncatedSeries::from_real(&[1.0; 3]);
        assert_eq!(a.mul(&b).unwrap().order(), 2);
    }

    #[test]
    fn mismatched_centers_are_rejected() {
        let a = TruncatedSeries::constant(c(1.0, 0.0), c(0.0, 0.0), 2);
        let b = TruncatedSeries::constant(c(1.0, 0.0), c(0.5, 0.0), 2);
        let err = a.mul(&b).unwrap_err();
        assert!(matches!(err, Error::MismatchedCenters { .. }));
    }

    #[test]
    fn compose_square_with_quadratic() {
        let outer = TruncatedSeries::from_real(&[0.0, 0.0, 1.0, 0.0]);
        let inner = TruncatedSeries::from_real(&[0.0, 1.0, 1.0, 0.0]);
        assert_coeffs(&outer.compose(&inner).unwrap(), &reals(&[0.0, 0.0, 1.0, 2.0]), 1e-15);
    }

    #[test]
    fn compose_constant_outer_and_identity_outer() {
        let inner = TruncatedSeries::from_real(&[0.0, 0.3, -1.2, 0.7]);
        let k = TruncatedSeries::from_real(&[2.5, 0.0, 0.0, 0.0]);
        assert_coeffs(&k.compose(&inner).unwrap(), &reals(&[2.5, 0.0, 0.0, 0.0]), 0.0);
        let id = TruncatedSeries::from_real(&[0.0, 1.0, 0.0, 0.0]);
        assert_coeffs(&id.compose(&inner).unwrap(), inner.coeffs(), 0.0);
    }

    #[test]
    fn compose_rejects_offset_inner() {
        let outer = TruncatedSeries::from_real(&[0.0, 1.0]);
        let inner = TruncatedSeries::from_real(&[0.2, 1.0]);
        assert!(matches!(outer.compose(&inner), Err(Error::Precondition { .. })));
    }

    #[test]
    fn reversion_examples() {
        let f = TruncatedSeries::from_real(&[0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_coeffs(&f.revert().unwrap(), &reals(&[0.0, 1.0, -1.0, 2.0, -5.0]), 1e-14);
        let id = TruncatedSeries::from_real(&[0.0, 1.0, 0.0]);
        assert_coeffs(&id.revert().unwrap(), &reals(&[0.0, 1.0, 0.0]), 0.0);
        let two = TruncatedSeries::from_real(&[0.0, 2.0, 0.0]);
        assert_coeffs(&two.revert().unwrap(), &reals(&[0.0, 0.5, 0.0]), 0.0);
    }

    #[test]
    fn reversion_needs_linear_term() {
        let f = TruncatedSeries::from_real(&[0.0, 0.0, 1.0]);
        assert!(matches!(f.revert(), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn reversion_catalan_numbers() {
        // w - w² inverts to Σ Catalan(k-1) w^k.
        let f = TruncatedSeries::from_real(&[0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g = f.revert().unwrap();
        assert_coeffs(&g, &reals(&[0.0, 1.0, 1.0, 2.0, 5.0, 14.0, 42.0, 132.0]), 1e-12);
    }

    #[test]
    fn fractional_power_examples() {
        let one = TruncatedSeries::from_real(&[1.0, 0.0, 0.0]);
        assert_coeffs(&one.powf(0.37).unwrap(), &reals(&[1.0, 0.0, 0.0]), 0.0);
        let f = TruncatedSeries::from_real(&[1.0, 1.0, 0.0]);
        assert_coeffs(&f.powf(0.5).unwrap(), &reals(&[1.0, 0.5, -0.125]), 1e-15);
        let i = TruncatedSeries::constant(c(0.0, 1.0), c(0.0, 0.0), 0);
        let r = i.powf(0.5).unwrap();
        let expected = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        assert!((r.coeff(0) - expected).norm() < 1e-15);
    }

    #[test]
    fn fractional_power_at_branch_point_rejected() {
        let f = TruncatedSeries::from_real(&[0.0, 1.0]);
        assert!(matches!(f.powf(0.5), Err(Error::BranchPoint { .. })));
    }

    #[test]
    fn evaluation_examples() {
        let f = TruncatedSeries::from_real(&[1.0, -1.0]);
        assert_eq!(f.evaluate(c(0.0, 0.0)).value, c(1.0, 0.0));
        let g = TruncatedSeries::from_real(&[1.0; 51]);
        let e = g.evaluate(c(0.5, 0.0));
        assert!(e.reliable);
        assert!((e.value - c(2.0, 0.0)).norm() <= 1e-12);
        let h = TruncatedSeries::from_real(&[0.0, 1.0, 1.0]);
        assert!((h.evaluate(c(0.1, 0.0)).value - c(0.11, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn evaluation_outside_radius_is_flagged() {
        let g = TruncatedSeries::from_real(&[1.0; 40]);
        let e = g.evaluate(c(1.2, 0.0));
        assert!(!e.reliable);
        assert!(e.tail_bound.is_infinite());
    }

    #[test]
    fn radius_of_geometric_series_in_half() {
        let coeffs: Vec<f64> = (0..30).map(|k| 2f64.powi(k)).collect();
        let r = TruncatedSeries::from_real(&coeffs).radius_estimate();
        assert!((r - 0.5).abs() < 1e-12);
        assert!(TruncatedSeries::from_real(&[1.0, 2.0, 0.0, 0.0]).radius_estimate().is_infinite());
    }

    #[test]
    fn recenter_polynomial_is_exact() {
        let p = TruncatedSeries::from_real(&[1.0, 2.0, 3.0]);
        let q = p.recenter(c(1.0, 0.0));
        // 1 + 2w + 3w² at w = 1 + h is 6 + 8h + 3h².
        assert_coeffs(&q, &reals(&[6.0, 8.0, 3.0]), 1e-14);
        assert_eq!(q.center(), c(1.0, 0.0));
    }

    #[test]
    fn serde_round_trip() {
        let s = TruncatedSeries::new(c(0.1, -0.2), vec![c(1.0, 2.0), c(3.0, 4.0)]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"center":[0.1,-0.2],"coeffs":[[1.0,2.0],[3.0,4.0]]}"#);
        let back: TruncatedSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<TruncatedSeries>(r#"{"center":[0,0],"coeffs":[]}"#).is_err());
    }
}
