//! Isometries `Δ → Δ × 𝔹ⁿ` determined by a unitary matrix.
//!
//! A unitary `U ∈ U(n+1)` determines the unique germ `f = (f₁, f₂,₁, …, f₂,ₙ)`
//! with `f(0) = 0` and
//!
//! ```text
//! U (f₁, f₂,₁, …, f₂,ₙ)ᵗ = (w, f₁f₂,₁, …, f₁f₂,ₙ)ᵗ.
//! ```
//!
//! Writing `U = [[u₁₁, a], [b, A]]`, elimination gives `w = R(f₁(w))` and
//! `f₂,ⱼ = R_j(f₁)` with
//!
//! ```text
//! R(z)   = z · det(U - z·diag(0, Iₙ)) / det(A - zI)
//! R_j(z) = -z · det(A - zI with column j replaced by b) / det(A - zI).
//! ```
//!
//! Consequently the poles of `R` are eigenvalues of `A` and the leading
//! coefficient of `R` is `u₁₁`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::unitarity_residual;
use crate::error::{Error, Result};
use crate::poly::{Poly, RationalMap};
use crate::series::TruncatedSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Gate applied to every matrix entering the solver.
pub const UNITARITY_TOL: f64 = 1e-12;

/// `(n+1) × (n+1)` unitary matrix, `n ≥ 1`.
///
/// Serialized as a row-major array of rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Complex64>>", into = "Vec<Vec<Complex64>>")]
pub struct UnitaryMatrix {
    m: DMatrix<Complex64>,
}

impl TryFrom<Vec<Vec<Complex64>>> for UnitaryMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Shape { op: "unitary_matrix", detail: "matrix is not square".into() });
        }
        let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
        UnitaryMatrix::new(DMatrix::from_row_slice(size, size, &flat))
    }
}

impl From<UnitaryMatrix> for Vec<Vec<Complex64>> {
    fn from(u: UnitaryMatrix) -> Self {
        (0..u.m.nrows()).map(|i| u.m.row(i).iter().copied().collect()).collect()
    }
}

impl UnitaryMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() < 2 {
            return Err(Error::Shape {
                op: "unitary_matrix",
                detail: format!("need a square matrix of size at least 2, got {:?}", m.shape()),
            });
        }
        let residual = unitarity_residual(&m);
        if !(residual <= UNITARITY_TOL) {
            return Err(Error::NotUnitary { residual });
        }
        Ok(UnitaryMatrix { m })
    }

    /// Ball dimension `n` (the matrix is `(n+1) × (n+1)`).
    pub fn n(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    /// Lower-right `n × n` block `A`.
    pub fn lower_block(&self) -> DMatrix<Complex64> {
        let n = self.n();
        self.m.view((1, 1), (n, n)).into_owned()
    }

    pub fn residual(&self) -> f64 {
        unitarity_residual(&self.m)
    }
}

/// The matrix `U_ζ ∈ U(3)` defined for `|ζ| < 1/3`.
pub fn u_zeta(zeta: Complex64) -> Result<UnitaryMatrix> {
    if !(zeta.norm() < 1.0 / 3.0) {
        return Err(Error::OutOfRange { op: "u_zeta", detail: format!("need |zeta| < 1/3, got {}", zeta.norm()) });
    }
    let s = Complex64::new((1.0 - zeta.norm_sqr()).sqrt(), 0.0);
    let zb = zeta.conj();
    #[rustfmt::skip]
    let entries = [
        -zb * zb,  -s,   zb * s,
        -s * zb,   zeta, Complex64::new(1.0 - zeta.norm_sqr(), 0.0),
        s,         ZERO, zeta,
    ];
    UnitaryMatrix::new(DMatrix::from_row_slice(3, 3, &entries))
}

/// True iff the lower block is singular (`|det A| ≤ 1e-10`), which is exactly
/// when `f₁` vanishes identically.
pub fn f1_vanishes(u: &UnitaryMatrix) -> bool {
    u.lower_block().determinant().norm() <= 1e-10
}

fn is_upper_triangular(a: &DMatrix<Complex64>, tol: f64) -> bool {
    (0..a.nrows()).all(|i| (0..i).all(|j| a[(i, j)].norm() <= tol))
}

/// Conjugates `U` by `diag(1, Q)` so that the lower block becomes upper
/// triangular (complex Schur form). The solved isometry changes only by the
/// unitary `Q*` acting on the ball factor, and `R` is unchanged.
pub fn normalize_unitary(u: &UnitaryMatrix) -> UnitaryMatrix {
    let a = u.lower_block();
    if is_upper_triangular(&a, 1e-14) {
        return u.clone();
    }
    let n = u.n();
    let (q, _) = nalgebra::linalg::Schur::new(a).unpack();
    let mut d = DMatrix::<Complex64>::identity(n + 1, n + 1);
    d.view_mut((1, 1), (n, n)).copy_from(&q);
    let m = d.adjoint() * u.matrix() * &d;
    UnitaryMatrix { m }
}

/// Coefficients of a polynomial of degree `< m` from its values at the `m`-th roots of unity.
fn interpolate_roots_of_unity(values: &[Complex64]) -> Poly {
    let m = values.len();
    let coeffs = (0..m)
        .map(|k| {
            values
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64
        })
        .collect();
    Poly::new(coeffs)
}

/// `R` and the component maps `R_j` of an isometry-induced rational map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalParts {
    pub r: RationalMap,
    pub components: Vec<RationalMap>,
}

/// Computes `R` and `R_j` from the determinant formulas, recovering polynomial
/// coefficients by interpolation at roots of unity.
pub fn rational_r(u: &UnitaryMatrix) -> Result<RationalParts> {
    if f1_vanishes(u) {
        return Err(Error::F1IdenticallyZero);
    }
    let n = u.n();
    let b: Vec<Complex64> = (1..=n).map(|i| u.get(i, 0)).collect();
    let m = n + 2;
    let nodes: Vec<Complex64> =
        (0..m).map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64)).collect();
    let mut p_vals = Vec::with_capacity(m);
    let mut q_vals = Vec::with_capacity(m);
    let mut comp_vals = vec![Vec::with_capacity(m); n];
    for &z in &nodes {
        let mut shifted = u.matrix().clone();
        for i in 1..=n {
            shifted[(i, i)] -= z;
        }
        p_vals.push(z * shifted.determinant());
        let az = shifted.view((1, 1), (n, n)).into_owned();
        q_vals.push(az.determinant());
        for (j, vals) in comp_vals.iter_mut().enumerate() {
            let mut mj = az.clone();
            for i in 0..n {
                mj[(i, j)] = b[i];
            }
            vals.push(-z * mj.determinant());
        }
    }
    let q = interpolate_roots_of_unity(&q_vals);
    let r = RationalMap::new(interpolate_roots_of_unity(&p_vals), q.clone())?;
    if r.degree() > n + 1 {
        return Err(Error::Numerical {
            op: "rational_r",
            detail: format!("deg R = {} exceeds n + 1 = {}", r.degree(), n + 1),
        });
    }
    let components = comp_vals
        .iter()
        .map(|v| RationalMap::new(interpolate_roots_of_unity(v), q.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RationalParts { r, components })
}

/// Residual diagnostics recorded when solving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveResiduals {
    /// Max coefficient residual of the defining linear recursion.
    pub recursion: f64,
    /// Max coefficient residual of the polarized functional equation.
    pub polarized: f64,
    /// Max coefficient of `P(f₁) - w·Q(f₁)`, relative to the coefficient scale.
    pub inverse_relation: Option<f64>,
    /// Max coefficient of `N_j(f₁) - f₂,ⱼ·Q(f₁)` over components, relative.
    pub component_relation: Option<f64>,
}

/// The germ determined by a unitary matrix, with its rational invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedIsometry {
    pub unitary: UnitaryMatrix,
    pub f1: TruncatedSeries,
    pub f2: Vec<TruncatedSeries>,
    /// Absent exactly when `f₁ ≡ 0`.
    pub rational: Option<RationalParts>,
    pub residuals: SolveResiduals,
}

/// Tolerance for the polarized coefficient identity.
pub const POLARIZED_TOL: f64 = 1e-10;
/// Tolerance for `R(f₁) = w` and `f₂,ⱼ = R_j(f₁)` in series.
pub const RELATION_TOL: f64 = 1e-9;

/// Solves the defining recursion order by order up to order `order`.
///
/// Because `f(0) = 0`, the nonlinear products at order `d` only involve
/// coefficients of order `< d`, so each step is the linear system `U c_d = rhs_d`.
pub fn solve_isometry(u: &UnitaryMatrix, order: usize) -> Result<SolvedIsometry> {
    if order < 2 {
        return Err(Error::OutOfRange { op: "solve_isometry", detail: format!("order must be >= 2, got {order}") });
    }
    let n = u.n();
    let lu = u.matrix().clone().lu();
    if !lu.is_invertible() {
        return Err(Error::Singular { order: 1 });
    }
    let mut coeffs: Vec<Vec<Complex64>> = vec![vec![ZERO; order + 1]; n + 1];
    let mut recursion: f64 = 0.0;
    for d in 1..=order {
        let mut rhs = nalgebra::DVector::<Complex64>::zeros(n + 1);
        if d == 1 {
            rhs[0] = ONE;
        }
        for j in 1..=n {
            let mut s = ZERO;
            for a in 1..d {
                s += coeffs[0][a] * coeffs[j][d - a];
            }
            rhs[j] = s;
        }
        let c = lu.solve(&rhs).ok_or(Error::Singular { order: d })?;
        let check = u.matrix() * &c - &rhs;
        recursion = recursion.max(check.iter().map(|x| x.norm()).fold(0.0, f64::max));
        for i in 0..=n {
            coeffs[i][d] = c[i];
        }
    }
    let mut series = coeffs.into_iter().map(|c| TruncatedSeries::new(ZERO, c)).collect::<Result<Vec<_>>>()?;
    let f1 = series.remove(0);
    let f2 = series;
    let polarized = polarized_coefficient_residual(&f1, &f2);
    let mut residuals = SolveResiduals { recursion, polarized, inverse_relation: None, component_relation: None };

    let rational = if f1_vanishes(u) {
        None
    } else {
        let parts = rational_r(u)?;
        let (inv, comp) = relation_residuals(&parts, &f1, &f2)?;
        residuals.inverse_relation = Some(inv);
        residuals.component_relation = Some(comp);
        if inv > RELATION_TOL || comp > RELATION_TOL {
            return Err(Error::Numerical {
                op: "rational_r",
                detail: format!("series cross-check failed: R(f1) - w ~ {inv:e}, f2 - R_j(f1) ~ {comp:e}"),
            });
        }
        Some(parts)
    };
    if polarized > POLARIZED_TOL {
        return Err(Error::Numerical {
            op: "solve_isometry",
            detail: format!("polarized functional equation residual {polarized:e}"),
        });
    }
    Ok(SolvedIsometry { unitary: u.clone(), f1, f2, rational, residuals })
}

/// Max coefficient of `(1 - f₁(z)f̄₁(w̄))(1 - Σ f₂,ⱼ(z)f̄₂,ⱼ(w̄)) - (1 - z w̄)`.
///
/// The cross term factors as `Σ_j h_j(z) h̄_j(w̄)` with `h_j = f₁ f₂,ⱼ`, so the
/// whole residual matrix is a sum of rank-one terms.
pub fn polarized_coefficient_residual(f1: &TruncatedSeries, f2: &[TruncatedSeries]) -> f64 {
    let n = f1.order();
    let h: Vec<TruncatedSeries> = f2.iter().map(|g| f1.mul(g).expect("same center")).collect();
    let mut worst: f64 = 0.0;
    for a in 0..=n {
        for b in 0..=n {
            let mut v = -f1.coeff(a) * f1.coeff(b).conj();
            for (g, hj) in f2.iter().zip(&h) {
                v -= g.coeff(a) * g.coeff(b).conj();
                v += hj.coeff(a) * hj.coeff(b).conj();
            }
            if a == 1 && b == 1 {
                v += ONE;
            }
            worst = worst.max(v.norm());
        }
    }
    worst
}

fn relation_residuals(parts: &RationalParts, f1: &TruncatedSeries, f2: &[TruncatedSeries]) -> Result<(f64, f64)> {
    let qf = parts.r.denominator().compose_series(f1);
    let pf = parts.r.numerator().compose_series(f1);
    let w = TruncatedSeries::variable(ZERO, f1.order());
    let inv = pf.sub(&w.mul(&qf)?)?;
    let scale = 1.0 + pf.max_abs().max(qf.max_abs());
    let inverse = inv.max_abs() / scale;
    let mut comp: f64 = 0.0;
    for (rj, g) in parts.components.iter().zip(f2) {
        let qj = rj.denominator().compose_series(f1);
        let nj = rj.numerator().compose_series(f1);
        let diff = nj.sub(&g.mul(&qj)?)?;
        comp = comp.max(diff.max_abs() / (1.0 + nj.max_abs().max(qj.max_abs())));
    }
    Ok((inverse, comp))
}

impl SolvedIsometry {
    pub fn n(&self) -> usize {
        self.unitary.n()
    }

    pub fn order(&self) -> usize {
        self.f1.order()
    }

    /// Least `m` such that the map is congruent to `(F, 0)` with `F` into
    /// `Δ × 𝔹^m`, read off as `deg R - 1`; `None` when `f₁ ≡ 0`.
    pub fn minimal_ball_dimension(&self) -> Option<usize> {
        self.rational.as_ref().map(|p| p.r.degree().saturating_sub(1))
    }

    /// Evaluates the truncated series at `w`, flagging points outside the radius.
    pub fn eval_series(&self, w: Complex64) -> (Vec<Complex64>, bool) {
        let mut reliable = true;
        let mut out = Vec::with_capacity(self.n() + 1);
        for s in std::iter::once(&self.f1).chain(&self.f2) {
            let e = s.evaluate(w);
            // Polynomial components (radius infinite) are always reliable.
            reliable &= e.reliable;
            out.push(e.value);
        }
        (out, reliable)
    }

    /// Evaluates the map on its principal sheet anywhere in `Δ`.
    ///
    /// Inside the series radius the series supplies a first guess for `f₁(w)`,
    /// which is polished by Newton's method on `P(z) - w Q(z)`; farther out the
    /// root is continued along the ray from the origin. Then `f₂,ⱼ = R_j(f₁)`.
    pub fn eval(&self, w: Complex64) -> Result<Vec<Complex64>> {
        let Some(parts) = &self.rational else {
            return Ok(self.eval_series(w).0);
        };
        let z = self.f1_value(parts, w)?;
        let mut out = vec![z];
        out.extend(parts.components.iter().map(|rj| rj.eval(z)));
        Ok(out)
    }

    fn f1_value(&self, parts: &RationalParts, w: Complex64) -> Result<Complex64> {
        let radius = self.f1.radius_estimate();
        let safe = 0.8 * radius.min(1e6);
        if w.norm() <= safe {
            let guess = self.f1.eval(w);
            return newton_inverse(&parts.r, w, guess).ok_or_else(|| Error::Numerical {
                op: "solved_eval",
                detail: format!("Newton polish failed at w = {w}"),
            });
        }
        let start = w * (safe / w.norm());
        let mut z = newton_inverse(&parts.r, start, self.f1.eval(start)).ok_or_else(|| Error::Numerical {
            op: "solved_eval",
            detail: format!("Newton polish failed at w = {start}"),
        })?;
        continue_inverse(&parts.r, start, w, &mut z)?;
        Ok(z)
    }
}

/// Newton's method for `R(z) = w` written as `P(z) - w Q(z) = 0`.
pub(crate) fn newton_inverse(r: &RationalMap, w: Complex64, mut z: Complex64) -> Option<Complex64> {
    let p = r.numerator();
    let q = r.denominator();
    let dp = p.derivative();
    let dq = q.derivative();
    for _ in 0..50 {
        let g = p.eval(z) - w * q.eval(z);
        let dg = dp.eval(z) - w * dq.eval(z);
        if dg == ZERO || !dg.is_finite() {
            return None;
        }
        let step = g / dg;
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    let g = p.eval(z) - w * q.eval(z);
    let scale = p.norm1() * (1.0 + z.norm()).powi(p.degree() as i32)
        + w.norm() * q.norm1() * (1.0 + z.norm()).powi(q.degree() as i32);
    (g.norm() <= 1e-13 * scale).then_some(z)
}

/// Tracks the root of `R(z) = w` from `w0` (with `*z = R⁻¹(w0)`) to `w1` along the segment.
pub(crate) fn continue_inverse(r: &RationalMap, w0: Complex64, w1: Complex64, z: &mut Complex64) -> Result<()> {
    let wr = r.wronskian();
    let total = (w1 - w0).norm();
    if total == 0.0 {
        return Ok(());
    }
    let mut t = 0.0;
    let mut dt = (0.02 / total).min(1.0);
    let mut guard = 0;
    while t < 1.0 {
        guard += 1;
        if guard > 100_000 || dt < 1e-12 {
            return Err(Error::Numerical {
                op: "solved_eval",
                detail: format!("root continuation stalled between {w0} and {w1}"),
            });
        }
        let t1 = (t + dt).min(1.0);
        let wa = w0 + (w1 - w0) * t;
        let wb = w0 + (w1 - w0) * t1;
        let qz = r.denominator().eval(*z);
        let deriv = wr.eval(*z) / (qz * qz);
        let predicted = *z + (wb - wa) / deriv;
        match newton_inverse(r, wb, predicted) {
            Some(next) if (next - predicted).norm() <= 0.1 * (wb - wa).norm() / deriv.norm() + 1e-12 => {
                *z = next;
                t = t1;
                dt *= 1.5;
            }
            _ => dt *= 0.5,
        }
    }
    Ok(())
}

/// `R(z) = α₀ z ∏ (z - 1/ᾱ_j)/(z - α_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeForm {
    pub alpha0: Complex64,
    pub roots: Vec<Complex64>,
}

impl BlaschkeForm {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.roots.iter().fold(self.alpha0 * z, |acc, a| acc * (z - a.conj().inv()) / (z - a))
    }

    pub fn to_rational(&self) -> Result<RationalMap> {
        let reflected: Vec<Complex64> = self.roots.iter().map(|a| a.conj().inv()).collect();
        let num = Poly::from_roots(&reflected).shift_up().scale(self.alpha0);
        RationalMap::new(num, Poly::from_roots(&self.roots))
    }

    pub fn degree(&self) -> usize {
        self.roots.len() + 1
    }
}

/// Output of [`blaschke_factorize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeFactorization {
    pub form: BlaschkeForm,
    /// Max of `|R(1/z̄)·conj(R(z)) - 1|` over the probe points.
    pub symmetry_residual: f64,
    /// Max of `|B(z) - R(z)| / max(1, |R(z)|)` over the probe points.
    pub reconstruction_residual: f64,
}

/// Symmetry tolerance used to accept a rational map as isometry-induced.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Deterministic probe points in the annulus `0.3 ≤ |z| ≤ 2.5`, kept away from
/// the poles of `R` and their reflections.
pub fn symmetry_probe_points(poles: &[Complex64], count: usize) -> Vec<Complex64> {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    while out.len() < count && i < 100 * count {
        let t = (i as f64 * golden).fract();
        let r = 0.3 + 2.2 * ((i as f64 + 0.5) * golden * golden).fract();
        let z = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * t);
        let clear = poles.iter().all(|a| (z - a).norm() > 0.05 && (*a == ZERO || (z - a.conj().inv()).norm() > 0.05));
        if clear {
            out.push(z);
        }
        i += 1;
    }
    out
}

/// Reads off `α₀` and the roots `α_j` of an isometry-induced rational map.
pub fn blaschke_factorize(r: &RationalMap) -> Result<BlaschkeFactorization> {
    let reject = |d: String| Error::NotIsometryInduced(d);
    let num = r.numerator();
    let den = r.denominator();
    if num.degree() != den.degree() + 1 {
        return Err(reject(format!(
            "numerator degree {} must exceed denominator degree {} by one",
            num.degree(),
            den.degree()
        )));
    }
    if num.coeff(0).norm() > 1e-12 * num.norm1() {
        return Err(reject(format!("R(0) = {} is not zero", num.coeff(0))));
    }
    let roots = r.poles();
    if let Some(a) = roots.iter().find(|a| a.norm() > 1.0 + 1e-9 || a.norm() < 1e-12) {
        return Err(reject(format!("pole {a} does not lie in the punctured closed disk")));
    }
    let form = BlaschkeForm { alpha0: num.leading() / den.leading(), roots };
    let points = symmetry_probe_points(&form.roots, 100);
    let mut symmetry: f64 = 0.0;
    let mut recon: f64 = 0.0;
    for &z in &points {
        let rz = r.eval(z);
        let rr = r.eval(z.conj().inv());
        symmetry = symmetry.max((rr * rz.conj() - ONE).norm());
        recon = recon.max((form.eval(z) - rz).norm() / rz.norm().max(1.0));
    }
    if !(symmetry <= SYMMETRY_TOL) {
        return Err(reject(format!("symmetry R(1/conj z) conj R(z) = 1 violated by {symmetry:e}")));
    }
    Ok(BlaschkeFactorization { form, symmetry_residual: symmetry, reconstruction_residual: recon })
}

/// Removes the Blaschke factor whose root has the largest modulus (ties: the
/// smallest argument in `[0, 2π)`), returning `(R̃, ζ)` with
/// `R = R̃ · (ζ̄z - 1)/(z - ζ)`.
pub fn peel_factor(r: &RationalMap) -> Result<(RationalMap, Complex64)> {
    let fac = blaschke_factorize(r)?;
    let mut roots = fac.form.roots;
    if roots.is_empty() {
        return Err(Error::AlreadyLinear);
    }
    let arg = |z: &Complex64| z.arg().rem_euclid(2.0 * std::f64::consts::PI);
    let mut best = 0;
    for i in 1..roots.len() {
        let (a, b) = (roots[i], roots[best]);
        let tie = (a.norm() - b.norm()).abs() <= 1e-12;
        if (!tie && a.norm() > b.norm()) || (tie && arg(&a) < arg(&b)) {
            best = i;
        }
    }
    let zeta = roots.remove(best);
    let reduced = BlaschkeForm { alpha0: fac.form.alpha0 / zeta.conj(), roots };
    Ok((reduced.to_rational()?, zeta))
}

/// Inverse of [`peel_factor`]: multiplies by `(ζ̄z - 1)/(z - ζ)`, `0 < |ζ| < 1`.
pub fn extend_factor(r: &RationalMap, zeta: Complex64) -> Result<RationalMap> {
    if !(zeta.norm() > 0.0 && zeta.norm() < 1.0) {
        return Err(Error::OutOfRange {
            op: "extend_factor",
            detail: format!("need 0 < |zeta| < 1, got {}", zeta.norm()),
        });
    }
    let mut form = blaschke_factorize(r)?.form;
    form.alpha0 *= zeta.conj();
    form.roots.push(zeta);
    form.to_rational()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn u_zeta_at_zero_and_point_two() {
        let u = u_zeta(ZERO).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[ZERO, -ONE, ZERO, ZERO, ZERO, ONE, ONE, ZERO, ZERO]);
        assert!((u.matrix() - expected).iter().all(|x| x.norm() < 1e-15));
        let u = u_zeta(c(0.2, 0.0)).unwrap();
        let s = 0.96f64.sqrt();
        assert!((u.get(0, 0) - c(-0.04, 0.0)).norm() < 1e-15);
        assert!((u.get(0, 1) - c(-s, 0.0)).norm() < 1e-15);
        assert!((u.get(0, 2) - c(0.2 * s, 0.0)).norm() < 1e-15);
        assert!(u.residual() <= 1e-14);
        assert!(u_zeta(c(0.34, 0.0)).is_err());
    }

    #[test]
    fn f1_vanishing_gate() {
        assert!(f1_vanishes(&u_zeta(ZERO).unwrap()));
        assert!(!f1_vanishes(&u_zeta(c(0.2, 0.0)).unwrap()));
    }

    #[test]
    fn rational_r_of_u_zeta_has_degree_three() {
        let parts = rational_r(&u_zeta(c(0.2, 0.0)).unwrap()).unwrap();
        assert_eq!(parts.r.degree(), 3);
        // R = -0.04 z (z - 5)² / (z - 0.2)².
        for z in [c(0.1, 0.3), c(-0.7, 0.2), c(2.0, -1.0)] {
            let expected = -0.04 * z * (z - 5.0) * (z - 5.0) / ((z - 0.2) * (z - 0.2));
            assert!((parts.r.eval(z) - expected).norm() < 1e-12 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn solve_u_zeta_point_two() {
        let u = u_zeta(c(0.2, 0.0)).unwrap();
        let s = solve_isometry(&u, 64).unwrap();
        assert!(s.residuals.polarized < 1e-12, "{:?}", s.residuals);
        assert!(s.residuals.inverse_relation.unwrap() < 1e-12);
        assert!(s.residuals.component_relation.unwrap() < 1e-12);
        let w = c(0.3, 0.4);
        let (series, reliable) = s.eval_series(w);
        assert!(reliable);
        let exact = s.eval(w).unwrap();
        for (a, b) in series.iter().zip(&exact) {
            assert!((a - b).norm() < 1e-10);
        }
        // Near the boundary the root continuation takes over.
        let far = s.eval(c(0.0, 0.999)).unwrap();
        let m = far[1].norm_sqr() + far[2].norm_sqr();
        assert!(1.0 - m < 0.01 && m < 1.0);
    }

    #[test]
    fn solve_is_canonical_across_orders() {
        let u = u_zeta(c(0.1, 0.15)).unwrap();
        let a = solve_isometry(&u, 20).unwrap();
        let b = solve_isometry(&u, 40).unwrap();
        for k in 0..=20 {
            assert!((a.f1.coeff(k) - b.f1.coeff(k)).norm() < 1e-13);
        }
    }

    #[test]
    fn normalization_triangularizes_and_preserves_r() {
        let u = u_zeta(c(0.2, 0.1)).unwrap();
        let v = normalize_unitary(&u);
        assert!(v.residual() < 1e-13);
        let a = v.lower_block();
        assert!(a[(1, 0)].norm() < 1e-14);
        let (ru, rv) = (rational_r(&u).unwrap().r, rational_r(&v).unwrap().r);
        for z in [c(0.2, 0.3), c(-0.5, 0.1)] {
            assert!((ru.eval(z) - rv.eval(z)).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let m = DMatrix::from_element(2, 2, ONE);
        assert!(matches!(UnitaryMatrix::new(m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn blaschke_of_single_factor() {
        let z0 = c(0.5, 0.0);
        let r = RationalMap::new(Poly::new(vec![ZERO, -ONE, z0.conj()]), Poly::new(vec![-z0, ONE])).unwrap();
        let fac = blaschke_factorize(&r).unwrap();
        assert_eq!(fac.form.roots.len(), 1);
        assert!((fac.form.roots[0] - z0).norm() < 1e-15);
        // (z̄₀z - 1)/(z - z₀) = z̄₀ (z - 1/z̄₀)/(z - z₀), so α₀ = z̄₀.
        assert!((fac.form.alpha0 - z0.conj()).norm() < 1e-15);
        let (reduced, zeta) = peel_factor(&r).unwrap();
        assert!((zeta - z0).norm() < 1e-15);
        assert_eq!(reduced.degree(), 1);
        assert!((reduced.eval(c(0.3, 0.1)) - c(0.3, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn identity_is_linear() {
        let r = RationalMap::from_poly(Poly::new(vec![ZERO, ONE]));
        let fac = blaschke_factorize(&r).unwrap();
        assert_eq!(fac.form.alpha0, ONE);
        assert!(fac.form.roots.is_empty());
        assert_eq!(peel_factor(&r).unwrap_err(), Error::AlreadyLinear);
    }

    #[test]
    fn asymmetric_map_rejected() {
        let r = RationalMap::new(Poly::new(vec![ZERO, ONE, c(0.3, 0.0)]), Poly::new(vec![c(-0.5, 0.0), ONE])).unwrap();
        assert!(matches!(blaschke_factorize(&r), Err(Error::NotIsometryInduced(_))));
    }
}
