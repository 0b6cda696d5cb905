//! Numerical certificates for isometries.
//!
//! Every check samples deterministically (see [`disk_samples`]) and reduces
//! per-sample results in index order, so reports are bit-reproducible even
//! when samples are evaluated in parallel.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{norm_sqr, BallAutomorphism, DiskAutomorphism, ProductSpace};
use crate::error::{Error, Result};
use crate::maps::{IsometryMap, ProductSourceMap};
use crate::monodromy::{fit_component, FitOutcome};
use crate::poly::{RationalMap, SphereValue};
use crate::solver::{blaschke_factorize, SolvedIsometry};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `0.618…`, the fractional golden ratio.
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Quasi-random points filling `|w| ≤ radius`: radii by square-root spacing,
/// angles advanced by the golden ratio.
pub fn disk_samples(count: usize, radius: f64) -> Vec<Complex64> {
    (0..count)
        .map(|i| {
            let r = radius * ((i as f64 + 0.5) / count as f64).sqrt();
            let t = 2.0 * PI * (i as f64 * GOLDEN).fract();
            Complex64::from_polar(r, t)
        })
        .collect()
}

/// Deterministic pairs `(Z, W)` with `|Z|, |W| ≤ radius`.
pub fn polarized_pairs(count: usize, radius: f64) -> Vec<(Complex64, Complex64)> {
    let zs = disk_samples(count, radius);
    let ws = disk_samples(count, radius);
    (0..count).map(|i| (zs[i], ws[(i * 7 + 3) % count])).collect()
}

/// Summary of a pointwise residual check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    pub tolerance: f64,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub sample_count: usize,
    pub worst_point: Complex64,
    /// Samples excluded by a gate (boundary margin, branch ambiguity).
    pub rejected: usize,
    pub pass: bool,
    /// Per-sample `(w, residual)` pairs, for plotting.
    #[serde(skip)]
    pub samples: Vec<(Complex64, f64)>,
}

impl ResidualReport {
    fn from_samples(check: &str, tolerance: f64, samples: Vec<(Complex64, f64)>, rejected: usize) -> Self {
        let mut max = 0.0;
        let mut worst = ZERO;
        let mut sum = 0.0;
        for &(w, r) in &samples {
            sum += r;
            if r > max || r.is_nan() {
                max = r;
                worst = w;
            }
        }
        let n = samples.len();
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        ResidualReport {
            check: check.to_string(),
            tolerance,
            max_residual: max,
            mean_residual: mean,
            sample_count: n,
            worst_point: worst,
            rejected,
            pass: n > 0 && max <= tolerance,
            samples,
        }
    }
}

fn check_shape(f: &IsometryMap, space: &ProductSpace, op: &'static str) -> Result<()> {
    if !f.target().same_shape(space) {
        return Err(Error::Shape { op, detail: "space does not match the map's target factors".into() });
    }
    Ok(())
}

/// `∏(1 - ‖F_i(w)‖²)^{μ_i}` versus `(1 - |w|²)^k` after normalizing `F(0) = 0`.
pub fn check_functional_equation(
    f: &IsometryMap,
    space: &ProductSpace,
    k: f64,
    points: &[Complex64],
    tol: f64,
) -> Result<ResidualReport> {
    const OP: &str = "check_functional_equation";
    check_shape(f, space, OP)?;
    let results: Vec<Result<(Complex64, f64)>> = points
        .par_iter()
        .map(|&w| {
            let v = f.eval_normalized(w)?;
            let mut lhs = 1.0;
            for (b, mu) in space.brackets(&v).into_iter().zip(space.constants()) {
                if !(b > 0.0) {
                    return Err(Error::OutsideDomain {
                        op: OP,
                        detail: format!("not into the domain: bracket {b} at w = {w}"),
                    });
                }
                lhs *= b.powf(*mu);
            }
            let rhs = (1.0 - w.norm_sqr()).powf(k);
            Ok((w, (lhs - rhs).abs()))
        })
        .collect();
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::from_samples("functional_equation", tol, samples, 0))
}

/// `∏(1 - ⟨H_i(Z), H_i(W)⟩)^{μ_i}` versus `(1 - Z W̄)^k` with principal powers.
/// Pairs with a bracket outside the right half-plane, or beyond radius 0.6,
/// are rejected and counted.
pub fn check_polarized(
    f: &IsometryMap,
    space: &ProductSpace,
    k: f64,
    pairs: &[(Complex64, Complex64)],
    tol: f64,
) -> Result<ResidualReport> {
    const OP: &str = "check_polarized";
    check_shape(f, space, OP)?;
    let ranges = space.ranges();
    let results: Vec<Result<Option<(Complex64, f64)>>> = pairs
        .par_iter()
        .map(|&(z, w)| {
            if z.norm() > 0.6 || w.norm() > 0.6 {
                return Ok(None);
            }
            let hz = f.eval_normalized(z)?;
            let hw = f.eval_normalized(w)?;
            let mut lhs = ONE;
            for (r, mu) in ranges.iter().zip(space.constants()) {
                let inner: Complex64 = hz[r.clone()].iter().zip(&hw[r.clone()]).map(|(a, b)| a * b.conj()).sum();
                let b = ONE - inner;
                if !(b.re > 0.0) {
                    return Ok(None);
                }
                lhs *= b.powf(*mu);
            }
            let rhs = (ONE - z * w.conj()).powf(k);
            Ok(Some((z, (lhs - rhs).norm())))
        })
        .collect();
    let mut samples = Vec::new();
    let mut rejected = 0;
    for r in results {
        match r? {
            Some(s) => samples.push(s),
            None => rejected += 1,
        }
    }
    Ok(ResidualReport::from_samples("polarized", tol, samples, rejected))
}

/// Default finite-difference step for the metric check.
pub const METRIC_STEP: f64 = 1e-4;

/// Compares `∂∂̄ Σ μ_i φ(F_i)` with `k ∂∂̄ φ_Δ` by the five-point Laplacian
/// (`∂∂̄ = Δ/4`) with step `h`; the residual is relative to the right side.
pub fn check_metric_pullback(
    f: &IsometryMap,
    space: &ProductSpace,
    k: f64,
    points: &[Complex64],
    h: f64,
    tol: f64,
) -> Result<ResidualReport> {
    const OP: &str = "check_metric_pullback";
    check_shape(f, space, OP)?;
    let steps = [Complex64::new(h, 0.0), Complex64::new(-h, 0.0), Complex64::new(0.0, h), Complex64::new(0.0, -h)];
    let results: Vec<Result<Option<(Complex64, f64)>>> = points
        .par_iter()
        .map(|&w| {
            if w.norm() >= 1.0 - 2.0 * h {
                return Ok(None);
            }
            let brackets = |z: Complex64| -> Result<Vec<f64>> { Ok(space.brackets(&f.eval(z)?)) };
            let b0 = brackets(w)?;
            if b0.iter().any(|b| !(*b > 0.0)) {
                return Err(Error::OutsideDomain { op: OP, detail: format!("not into the domain at w = {w}") });
            }
            // Sum of u(w + δ) - u(w) over the four neighbours, with u = -Σ μ log b.
            let mut lap = 0.0;
            let mut lap_src = 0.0;
            let s0 = 1.0 - w.norm_sqr();
            for d in steps {
                let b = brackets(w + d)?;
                for ((bi, b0i), mu) in b.iter().zip(&b0).zip(space.constants()) {
                    lap -= mu * ((bi - b0i) / b0i).ln_1p();
                }
                let s = 1.0 - (w + d).norm_sqr();
                lap_src -= k * ((s - s0) / s0).ln_1p();
            }
            let lhs = lap / (4.0 * h * h);
            let rhs = lap_src / (4.0 * h * h);
            Ok(Some((w, (lhs - rhs).abs() / rhs.abs())))
        })
        .collect();
    let mut samples = Vec::new();
    let mut rejected = 0;
    for r in results {
        match r? {
            Some(s) => samples.push(s),
            None => rejected += 1,
        }
    }
    Ok(ResidualReport::from_samples("metric_pullback", tol, samples, rejected))
}

/// Boundary behaviour of a map `Δ → 𝔹^m` on circles `|w| = r_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperReport {
    pub radii: Vec<f64>,
    /// `min_{|w| = r} ‖F(w)‖`, or `None` where evaluation failed.
    pub minima: Vec<Option<f64>>,
    pub omitted: Vec<f64>,
    pub strictly_increasing: bool,
    /// `1 - m` at the largest radius with a value.
    pub final_gap: f64,
    pub gap_tolerance: f64,
    pub proper: bool,
}

/// Samples `min ‖F‖` on each circle and tests that the minima increase
/// strictly towards 1.
pub fn check_properness<F>(component: F, radii: &[f64], angles: usize, gap_tolerance: f64) -> ProperReport
where
    F: Fn(Complex64) -> Result<Vec<Complex64>> + Sync,
{
    let minima: Vec<Option<f64>> = radii
        .iter()
        .map(|&r| {
            let values: Vec<Option<f64>> = (0..angles)
                .into_par_iter()
                .map(|j| {
                    let w = Complex64::from_polar(r, 2.0 * PI * j as f64 / angles as f64);
                    component(w).ok().map(|v| norm_sqr(&v).sqrt())
                })
                .collect();
            values.into_iter().try_fold(f64::INFINITY, |m, v| v.map(|v| m.min(v)))
        })
        .collect();
    let omitted: Vec<f64> = radii.iter().zip(&minima).filter(|(_, m)| m.is_none()).map(|(r, _)| *r).collect();
    let kept: Vec<f64> = minima.iter().flatten().copied().collect();
    let strictly_increasing = kept.len() >= 2 && kept.windows(2).all(|p| p[1] > p[0]);
    let final_gap = kept.last().map(|m| 1.0 - m).unwrap_or(f64::INFINITY);
    let proper = strictly_increasing && final_gap <= gap_tolerance && kept.iter().all(|m| *m < 1.0);
    ProperReport { radii: radii.to_vec(), minima, omitted, strictly_increasing, final_gap, gap_tolerance, proper }
}

/// Default radii for the properness check.
pub fn default_proper_radii() -> Vec<f64> {
    vec![0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999]
}

// ---------------------------------------------------------------------------
// Congruence
// ---------------------------------------------------------------------------

/// Outcome of a congruence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Congruent,
    Incongruent,
    Inconclusive,
}

/// Automorphisms with `g = Ψ ∘ f ∘ φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Source automorphism `φ`.
    pub source: DiskAutomorphism,
    /// Disk-factor part of `Ψ`.
    pub target_disk: DiskAutomorphism,
    /// Base point of the ball-factor involution in `Ψ`.
    pub target_ball_point: Vec<Complex64>,
    /// Unitary applied after the ball involution, row-major.
    pub target_ball_unitary: Vec<Vec<Complex64>>,
    /// True when `Ψ` also exchanges the two factors (only possible for `n = 1`).
    pub swapped: bool,
    /// Max deviation `|g - Ψ∘f∘φ|` on verification points.
    pub residual: f64,
}

/// Rational-map data reported alongside a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    /// Sorted `|α_j|` of `f` and `g`.
    pub alpha_moduli: [Vec<f64>; 2],
    pub alpha0_moduli: [f64; 2],
    pub degrees: [usize; 2],
    /// Largest mismatch of the critical-configuration invariants, when compared.
    pub critical_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongruenceVerdict {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub invariant_summary: InvariantSummary,
    pub note: String,
}

/// Tolerance on the witness residual.
pub const WITNESS_TOL: f64 = 1e-8;
/// Tolerance when comparing critical-configuration invariants.
const INVARIANT_TOL: f64 = 1e-6;

/// Homogeneous coordinates `(z₀, z₁)` of a point of ℙ¹, `z = z₁/z₀`.
fn homogeneous(v: SphereValue) -> (Complex64, Complex64) {
    match v {
        SphereValue::Finite(z) => (ONE, z),
        SphereValue::Infinity => (ZERO, ONE),
    }
}

/// Pairwise invariants `|H(p,q)|² / (|H(p,p) H(q,q)| + |H(p,q)|²)` for the
/// Hermitian form `H(z, w) = z₁w̄₁ - z₀w̄₀` preserved by `Aut(Δ)`, plus the sign
/// pattern of `H(p,p)` (inside, on, or outside the circle).
fn pair_invariants(points: &[SphereValue]) -> (Vec<f64>, [usize; 3]) {
    let hs: Vec<(Complex64, Complex64)> = points.iter().map(|p| homogeneous(*p)).collect();
    let herm = |a: (Complex64, Complex64), b: (Complex64, Complex64)| a.1 * b.1.conj() - a.0 * b.0.conj();
    let mut sides = [0usize; 3];
    for &p in &hs {
        let norm = (p.0.norm_sqr() + p.1.norm_sqr()).max(1e-300);
        let h = herm(p, p).re / norm;
        sides[if h < -1e-9 {
            0
        } else if h > 1e-9 {
            2
        } else {
            1
        }] += 1;
    }
    let mut inv = Vec::new();
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            let hpq = herm(hs[i], hs[j]).norm_sqr();
            let d = (herm(hs[i], hs[i]).re * herm(hs[j], hs[j]).re).abs();
            inv.push(if hpq + d == 0.0 { 0.0 } else { hpq / (d + hpq) });
        }
    }
    inv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (inv, sides)
}

/// Critical points and critical values of `R`, each with multiplicity.
fn critical_configuration(r: &RationalMap) -> (Vec<SphereValue>, Vec<SphereValue>) {
    let (finite, at_infinity) = r.critical_points();
    let mut points: Vec<SphereValue> = finite.into_iter().map(SphereValue::Finite).collect();
    points.extend(std::iter::repeat_n(SphereValue::Infinity, at_infinity));
    let values = points.iter().map(|p| r.eval_sphere(*p)).collect();
    (points, values)
}

/// Largest difference between the invariants of two rational maps, or
/// `None` when the configurations have different shapes.
fn critical_mismatch(r: &RationalMap, s: &RationalMap) -> Option<f64> {
    let (pr, vr) = critical_configuration(r);
    let (ps, vs) = critical_configuration(s);
    let (ipr, sr) = pair_invariants(&pr);
    let (ips, ss) = pair_invariants(&ps);
    let (ivr, svr) = pair_invariants(&vr);
    let (ivs, svs) = pair_invariants(&vs);
    if ipr.len() != ips.len() || ivr.len() != ivs.len() || sr != ss || svr != svs {
        return None;
    }
    let diff = ipr.iter().zip(&ips).chain(ivr.iter().zip(&ivs)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Some(diff)
}

/// Evaluates the map at many points, in index order.
fn eval_all(f: &SolvedIsometry, ws: &[Complex64]) -> Option<Vec<Vec<Complex64>>> {
    ws.iter().map(|w| f.eval(*w).ok()).collect()
}

/// Fits `Ψ` on samples `h(w_i) ↦ g(w_i)` given `h(0)` and returns the
/// residual together with the fitted parts.
fn fit_target(
    h0: &[Complex64],
    hs: &[Vec<Complex64>],
    gs: &[Vec<Complex64>],
) -> Option<(f64, DiskAutomorphism, BallAutomorphism)> {
    let n = h0.len() - 1;
    let c1 = h0[0];
    if c1.norm() >= 1.0 {
        return None;
    }
    let inv1 = |z: Complex64| (c1 - z) / (ONE - c1.conj() * z);
    let phase: Complex64 = hs.iter().zip(gs).map(|(h, g)| g[0] * inv1(h[0]).conj()).sum();
    if phase.norm() == 0.0 {
        return None;
    }
    let rot = phase / phase.norm();
    // The involution at c₁ followed by a rotation, rewritten as e^{iβ}(z - c₁)/(1 - c̄₁z).
    let disk = DiskAutomorphism { a: c1, theta: (-rot).arg() };
    let c2: Vec<Complex64> = h0[1..].to_vec();
    let ball_inv = BallAutomorphism::involution(c2.clone()).ok()?;
    let xs: Vec<Vec<Complex64>> = hs.iter().map(|h| ball_inv.eval(&h[1..])).collect();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (x, g) in xs.iter().zip(gs) {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += g[1 + i] * x[j].conj();
            }
        }
    }
    let svd = m.svd(true, true);
    let v = svd.u? * svd.v_t?;
    let ball = BallAutomorphism::new(c2, v).ok()?;
    let mut residual: f64 = 0.0;
    for (h, g) in hs.iter().zip(gs) {
        residual = residual.max((disk.eval(h[0]) - g[0]).norm());
        for (a, b) in ball.eval(&h[1..]).iter().zip(&g[1..]) {
            residual = residual.max((a - b).norm());
        }
    }
    Some((residual, disk, ball))
}

/// Swaps the two factors of a point of `Δ × 𝔹¹`.
fn swap(v: &[Complex64]) -> Vec<Complex64> {
    vec![v[1], v[0]]
}

struct WitnessProblem<'a> {
    f: &'a SolvedIsometry,
    swapped: bool,
    fit_points: Vec<Complex64>,
    g_fit: Vec<Vec<Complex64>>,
}

impl WitnessProblem<'_> {
    fn source(params: &[f64; 3]) -> Option<DiskAutomorphism> {
        let a = Complex64::new(params[0], params[1]);
        DiskAutomorphism::new(a, params[2]).ok().filter(|_| a.norm() < 0.95)
    }

    fn apply_f(&self, w: Complex64) -> Option<Vec<Complex64>> {
        let v = self.f.eval(w).ok()?;
        Some(if self.swapped { swap(&v) } else { v })
    }

    /// Fitted residual and parts for source parameters `(Re a, Im a, θ)`.
    fn evaluate(
        &self,
        params: &[f64; 3],
        points: &[Complex64],
        gs: &[Vec<Complex64>],
    ) -> Option<(f64, DiskAutomorphism, BallAutomorphism)> {
        let phi = Self::source(params)?;
        let h0 = self.apply_f(phi.eval(ZERO))?;
        let hs: Vec<Vec<Complex64>> = points.iter().map(|w| self.apply_f(phi.eval(*w))).collect::<Option<_>>()?;
        fit_target(&h0, &hs, gs)
    }

    fn residual_vector(&self, params: &[f64; 3]) -> Option<Vec<f64>> {
        let phi = Self::source(params)?;
        let h0 = self.apply_f(phi.eval(ZERO))?;
        let hs: Vec<Vec<Complex64>> =
            self.fit_points.iter().map(|w| self.apply_f(phi.eval(*w))).collect::<Option<_>>()?;
        let (_, disk, ball) = fit_target(&h0, &hs, &self.g_fit)?;
        let mut out = Vec::new();
        for (h, g) in hs.iter().zip(&self.g_fit) {
            let d = disk.eval(h[0]) - g[0];
            out.push(d.re);
            out.push(d.im);
            for (a, b) in ball.eval(&h[1..]).iter().zip(&g[1..]) {
                out.push((a - b).re);
                out.push((a - b).im);
            }
        }
        Some(out)
    }

    fn cost(&self, params: &[f64; 3]) -> f64 {
        self.residual_vector(params).map(|r| r.iter().map(|x| x * x).sum()).unwrap_or(f64::INFINITY)
    }

    /// Levenberg–Marquardt with a forward-difference Jacobian.
    fn refine(&self, start: [f64; 3]) -> [f64; 3] {
        let mut x = start;
        let mut cost = self.cost(&x);
        let mut lambda = 1e-3;
        for _ in 0..100 {
            let Some(r) = self.residual_vector(&x) else { break };
            let eps = 1e-7;
            let mut jac = vec![vec![0.0; 3]; r.len()];
            let mut ok = true;
            for k in 0..3 {
                let mut xp = x;
                xp[k] += eps;
                match self.residual_vector(&xp) {
                    Some(rp) if rp.len() == r.len() => {
                        for i in 0..r.len() {
                            jac[i][k] = (rp[i] - r[i]) / eps;
                        }
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
            let mut jtj = nalgebra::Matrix3::<f64>::zeros();
            let mut jtr = nalgebra::Vector3::<f64>::zeros();
            for i in 0..r.len() {
                for a in 0..3 {
                    jtr[a] += jac[i][a] * r[i];
                    for b in 0..3 {
                        jtj[(a, b)] += jac[i][a] * jac[i][b];
                    }
                }
            }
            let mut improved = false;
            for _ in 0..10 {
                let mut m = jtj;
                for a in 0..3 {
                    m[(a, a)] *= 1.0 + lambda;
                    m[(a, a)] += 1e-300;
                }
                let Some(step) = m.lu().solve(&(-jtr)) else { break };
                let cand = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
                let c = self.cost(&cand);
                if c < cost {
                    x = cand;
                    let rel = (cost - c) / cost.max(1e-300);
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 {
                        return x;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved || cost < 1e-30 {
                break;
            }
        }
        x
    }
}

fn circle_points(radius: f64, count: usize, offset: f64) -> Vec<Complex64> {
    (0..count).map(|j| Complex64::from_polar(radius, 2.0 * PI * (j as f64 + offset) / count as f64)).collect()
}

/// Searches source automorphisms `φ` (three real parameters) with `Ψ`
/// fitted in closed form, first on a coarse grid and then by local refinement.
fn witness_search(f: &SolvedIsometry, g: &SolvedIsometry, swapped: bool) -> Option<Witness> {
    let fit_points: Vec<Complex64> = circle_points(0.3, 8, 0.0).into_iter().chain(circle_points(0.5, 8, 0.5)).collect();
    let verify_points: Vec<Complex64> =
        circle_points(0.4, 7, 0.25).into_iter().chain(circle_points(0.6, 7, 0.75)).collect();
    let g_fit = eval_all(g, &fit_points)?;
    let g_verify = eval_all(g, &verify_points)?;
    let problem = WitnessProblem { f, swapped, fit_points, g_fit };

    let mut grid: Vec<[f64; 3]> = Vec::new();
    let thetas: Vec<f64> = (0..24).map(|j| 2.0 * PI * j as f64 / 24.0).collect();
    let mut centers = vec![ZERO];
    for r in [0.1, 0.2, 0.3, 0.4, 0.5] {
        centers.extend(circle_points(r, 12, 0.0));
    }
    for a in &centers {
        for &t in &thetas {
            grid.push([a.re, a.im, t]);
        }
    }
    let mut scored: Vec<(f64, usize)> =
        grid.par_iter().map(|x| problem.cost(x)).enumerate().map(|(i, c)| (c, i)).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, idx) in scored.iter().take(6) {
        let x = problem.refine(grid[idx]);
        let Some((residual, disk, ball)) = problem.evaluate(&x, &verify_points, &g_verify) else { continue };
        if residual <= WITNESS_TOL {
            let source = WitnessProblem::source(&x)?;
            let u = ball.unitary();
            return Some(Witness {
                source,
                target_disk: disk,
                target_ball_point: ball.base_point().iter().copied().collect(),
                target_ball_unitary: (0..u.nrows()).map(|i| u.row(i).iter().copied().collect()).collect(),
                swapped,
                residual,
            });
        }
    }
    None
}

/// Decides whether two solved isometries `Δ → Δ × 𝔹ⁿ` are congruent.
///
/// A necessary filter compares Möbius invariants of the critical points and
/// critical values of `R_f` and `R_g` (these move by disk automorphisms under
/// reparametrization). When they agree, a witness `(φ, Ψ)` is searched for;
/// failure to find one is reported as inconclusive. For `n = 1` the target
/// `Δ × 𝔹¹` admits a factor exchange that changes `R`, so the filter is
/// skipped and both factor orders are searched.
pub fn congruence_test(f: &SolvedIsometry, g: &SolvedIsometry) -> Result<CongruenceVerdict> {
    const OP: &str = "congruence_test";
    if f.n() != g.n() {
        return Err(Error::Precondition { op: OP, detail: format!("ball dimensions differ: {} vs {}", f.n(), g.n()) });
    }
    let (Some(rf), Some(rg)) = (&f.rational, &g.rational) else {
        return Err(Error::Precondition {
            op: OP,
            detail: "f1 vanishes identically; compare totally geodesic maps directly".into(),
        });
    };
    let bf = blaschke_factorize(&rf.r)?;
    let bg = blaschke_factorize(&rg.r)?;
    let moduli = |roots: &[Complex64]| {
        let mut m: Vec<f64> = roots.iter().map(|a| a.norm()).collect();
        m.sort_by(|a, b| a.partial_cmp(b).unwrap());
        m
    };
    let mut summary = InvariantSummary {
        alpha_moduli: [moduli(&bf.form.roots), moduli(&bg.form.roots)],
        alpha0_moduli: [bf.form.alpha0.norm(), bg.form.alpha0.norm()],
        degrees: [rf.r.degree(), rg.r.degree()],
        critical_mismatch: None,
    };
    let n = f.n();
    if n >= 2 {
        if rf.r.degree() != rg.r.degree() {
            return Ok(CongruenceVerdict {
                verdict: Verdict::Incongruent,
                witness: None,
                invariant_summary: summary,
                note: "degrees of R differ".into(),
            });
        }
        let mismatch = critical_mismatch(&rf.r, &rg.r);
        summary.critical_mismatch = mismatch;
        match mismatch {
            Some(m) if m <= INVARIANT_TOL => {}
            _ => {
                return Ok(CongruenceVerdict {
                    verdict: Verdict::Incongruent,
                    witness: None,
                    invariant_summary: summary,
                    note: "critical configurations of R are not Möbius equivalent".into(),
                })
            }
        }
    }
    let orders: &[bool] = if n == 1 { &[false, true] } else { &[false] };
    for &swapped in orders {
        if let Some(w) = witness_search(f, g, swapped) {
            return Ok(CongruenceVerdict {
                verdict: Verdict::Congruent,
                witness: Some(w),
                invariant_summary: summary,
                note: "witness found".into(),
            });
        }
    }
    Ok(CongruenceVerdict {
        verdict: Verdict::Inconclusive,
        witness: None,
        invariant_summary: summary,
        note: "invariants agree but no witness was found; the invariants are not known to be complete".into(),
    })
}

// ---------------------------------------------------------------------------
// Rigidity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentClass {
    Constant,
    Rational,
    Irrational,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub index: usize,
    pub class: ComponentClass,
    /// Degree of the fitted minimal polynomial in the dependent variable.
    pub z_degree: Option<usize>,
    pub w_degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub components: Vec<ComponentReport>,
    pub all_rational: bool,
    pub isometry: ResidualReport,
    /// True when every nonconstant component is rational and the map is an isometry.
    pub hypothesis_triggered: bool,
    /// `Σ λ_j / k` over factors with a nonconstant component.
    pub lambda_sum: Option<f64>,
    pub lambda_sum_ok: Option<bool>,
    /// Per nonconstant factor: whether `‖F_j(w)‖ = |w|` after normalization.
    pub totally_geodesic: Option<Vec<bool>>,
    /// A rational, non totally geodesic isometry. Rational isometries are always
    /// totally geodesic, so a true value signals a defect.
    pub counterexample: bool,
}

/// Classifies the components of `f` and, when all are rational, checks the
/// totally geodesic conclusion.
pub fn rational_rigidity_check(f: &IsometryMap, space: &ProductSpace, k: f64) -> Result<RigidityReport> {
    let points = disk_samples(200, 0.9);
    let isometry = check_functional_equation(f, space, k, &points, 1e-10)?;
    let probe = disk_samples(32, 0.8);
    let values: Vec<Vec<Complex64>> = probe.iter().map(|w| f.eval(*w)).collect::<Result<_>>()?;
    let base = f.base_point();
    let mut components = Vec::new();
    for i in 0..f.dimension() {
        let constant = values.iter().all(|v| (v[i] - base[i]).norm() <= 1e-12);
        let report = if constant {
            ComponentReport { index: i, class: ComponentClass::Constant, z_degree: None, w_degree: None }
        } else {
            match fit_component(f, i)? {
                FitOutcome::Found(p) => ComponentReport {
                    index: i,
                    class: if p.z_degree == 1 { ComponentClass::Rational } else { ComponentClass::Irrational },
                    z_degree: Some(p.z_degree),
                    w_degree: Some(p.w_degree),
                },
                FitOutcome::Undetermined => {
                    ComponentReport { index: i, class: ComponentClass::Undetermined, z_degree: None, w_degree: None }
                }
            }
        };
        components.push(report);
    }
    let all_rational =
        components.iter().all(|c| matches!(c.class, ComponentClass::Rational | ComponentClass::Constant));
    let hypothesis_triggered = all_rational && isometry.pass;
    let (mut lambda_sum, mut lambda_sum_ok, mut totally_geodesic) = (None, None, None);
    let mut counterexample = false;
    if hypothesis_triggered {
        let ranges = space.ranges();
        let nonconstant: Vec<usize> = ranges
            .iter()
            .enumerate()
            .filter(|(_, r)| (*r).clone().any(|i| components[i].class != ComponentClass::Constant))
            .map(|(j, _)| j)
            .collect();
        let sum: f64 = nonconstant.iter().map(|&j| space.constants()[j]).sum::<f64>() / k;
        let ok = (sum - 1.0).abs() <= 1e-10;
        let tg: Vec<bool> = nonconstant
            .iter()
            .map(|&j| {
                points.iter().all(|&w| {
                    let v = f.eval_normalized(w).expect("evaluated above");
                    (norm_sqr(&v[ranges[j].clone()]).sqrt() - w.norm()).abs() <= 1e-10
                })
            })
            .collect();
        counterexample = !ok || tg.iter().any(|t| !t);
        lambda_sum = Some(sum);
        lambda_sum_ok = Some(ok);
        totally_geodesic = Some(tg);
    }
    Ok(RigidityReport {
        components,
        all_rational,
        isometry,
        hypothesis_triggered,
        lambda_sum,
        lambda_sum_ok,
        totally_geodesic,
        counterexample,
    })
}

// ---------------------------------------------------------------------------
// Block dependence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    /// For each target factor, the source blocks (1-based) it depends on.
    pub dependence: Vec<Vec<usize>>,
    /// Every target factor depends on at most one source block.
    pub factored: bool,
    pub sum_mu: f64,
    pub sum_lambda: f64,
    pub sums_match: bool,
    /// Max of `|∏(1-‖F_i‖²)^{μ_i} - ∏(1-‖Z_j‖²)^{λ_j}|` after normalizing `F(0) = 0`.
    pub isometry_residual: f64,
}

/// Threshold on finite-difference derivatives below which a dependence is absent.
pub const DEPENDENCE_TOL: f64 = 1e-8;

fn product_samples(space: &ProductSpace, count: usize) -> Vec<Vec<Complex64>> {
    let dim = space.dimension();
    let ranges = space.ranges();
    (0..count)
        .map(|i| {
            let mut z = vec![ZERO; dim];
            for (b, r) in ranges.iter().enumerate() {
                let m = r.len() as f64;
                for (c, idx) in r.clone().enumerate() {
                    let s = (i * 31 + b * 17 + c * 7) as f64;
                    let rad = 0.5 * ((s * GOLDEN).fract()) / m.sqrt();
                    z[idx] = Complex64::from_polar(rad, 2.0 * PI * ((s + 0.5) * GOLDEN * GOLDEN).fract());
                }
            }
            z
        })
        .collect()
}

/// Detects which source blocks each target factor depends on.
pub fn block_dependence_check(map: &dyn ProductSourceMap, samples: usize) -> Result<BlockReport> {
    let source = map.source();
    let target = map.target();
    let src_ranges = source.ranges();
    let tgt_ranges = target.ranges();
    let points = product_samples(source, samples);
    let h = 1e-6;
    let mut deriv = vec![vec![0.0f64; src_ranges.len()]; tgt_ranges.len()];
    for z in &points {
        for (b, r) in src_ranges.iter().enumerate() {
            for c in r.clone() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[c] += h;
                zm[c] -= h;
                let fp = map.eval(&zp)?;
                let fm = map.eval(&zm)?;
                for (t, tr) in tgt_ranges.iter().enumerate() {
                    let d = tr.clone().map(|i| ((fp[i] - fm[i]) / (2.0 * h)).norm()).fold(0.0, f64::max);
                    deriv[t][b] = deriv[t][b].max(d);
                }
            }
        }
    }
    let dependence: Vec<Vec<usize>> = deriv
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, d)| **d > DEPENDENCE_TOL).map(|(b, _)| b + 1).collect())
        .collect();
    let factored = dependence.iter().all(|d| d.len() <= 1);
    let sum_mu: f64 = target.constants().iter().sum();
    let sum_lambda: f64 = source.constants().iter().sum();
    let base = map.eval(&vec![ZERO; source.dimension()])?;
    let normalize = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = v.to_vec();
        for r in &tgt_ranges {
            let a = &base[r.clone()];
            if norm_sqr(a) > 0.0 {
                let phi = BallAutomorphism::involution(a.to_vec()).expect("base point lies inside");
                out[r.clone()].copy_from_slice(&phi.eval(&v[r.clone()]));
            }
        }
        out
    };
    let mut isometry_residual: f64 = 0.0;
    for z in &points {
        let v = normalize(&map.eval(z)?);
        let lhs: f64 = target.brackets(&v).iter().zip(target.constants()).map(|(b, m)| b.powf(*m)).product();
        let rhs: f64 = source.brackets(z).iter().zip(source.constants()).map(|(b, l)| b.powf(*l)).product();
        isometry_residual = isometry_residual.max((lhs - rhs).abs());
    }
    Ok(BlockReport {
        dependence,
        factored,
        sum_mu,
        sum_lambda,
        sums_match: factored && (sum_mu - sum_lambda).abs() <= 1e-10,
        isometry_residual,
    })
}
