//! Branch points, analytic continuation, monodromy orbits, minimal
//! polynomials and sheeting numbers.
//!
//! A sheet of a map over a point `w` is encoded by a short state vector from
//! which every component value follows in closed form:
//!
//! * p-th root embeddings carry the lift `t` with `tᵖ = τ(w)`,
//! * solved maps carry `z = f₁` with `R(z) = w`,
//! * sharp composites carry the outer state followed by the inner state,
//! * linear and diagonal maps are single valued and carry nothing.
//!
//! Continuation moves the state along a polyline in steps no longer than half
//! the distance to the nearest branch point. Germs are the Taylor expansions
//! of all components at a point, rebuilt from the state by series arithmetic.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{cayley_to_disk, cayley_to_half_plane, gamma, pth_root_components, IsometryMap, MapKind};
use crate::series::TruncatedSeries;
use crate::solver::{continue_inverse, RationalParts, SolvedIsometry};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Germs are compared on coefficients `0..=GERM_ORDER`.
pub const GERM_ORDER: usize = 15;
/// Two germs are equal when their scaled coefficient distance is at most this.
pub const GERM_TOL: f64 = 1e-7;
/// Paths must keep at least this distance from every branch point.
pub const GATING_MARGIN: f64 = 1e-6;
/// `σ_min / σ_max` at or below which a polynomial relation is declared.
pub const RELATION_THRESHOLD: f64 = 1e-10;

const LOOP_VERTICES: usize = 48;
const INFINITY_LOOP_VERTICES: usize = 96;
const DEDUP_TOL: f64 = 1e-9;
const FAR: f64 = 1e8;
const FIT_SAMPLES: usize = 64;
const FIT_RADII: [f64; 6] = [0.5, 0.45, 0.55, 0.4, 0.6, 0.35];

fn nearest(w: Complex64, points: &[Complex64]) -> (f64, Complex64) {
    points.iter().map(|&b| ((w - b).norm(), b)).fold((f64::INFINITY, ZERO), |acc, x| if x.0 < acc.0 { x } else { acc })
}

/// Distance from `p` to the segment `[a, b]`.
fn segment_distance(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

fn push_unique(list: &mut Vec<Complex64>, v: Complex64) {
    if v.is_finite() && v.norm() < FAR && !list.iter().any(|u| (u - v).norm() <= DEDUP_TOL * (1.0 + v.norm())) {
        list.push(v);
    }
}

/// Per-kind continuation machinery mirroring the structure of an [`IsometryMap`].
enum Tracker<'a> {
    Linear(&'a [Complex64]),
    Diagonal(usize),
    Root(usize),
    /// A solved map with `f₁ ≡ 0`; its germ is linear, hence single valued.
    Polynomial(&'a SolvedIsometry),
    Solved(&'a SolvedIsometry, &'a RationalParts),
    Sharp {
        outer: Box<Tracker<'a>>,
        inner: Box<Tracker<'a>>,
        idx: usize,
        split: usize,
        inner_branch: Vec<Complex64>,
    },
}

impl<'a> Tracker<'a> {
    fn new(f: &'a IsometryMap) -> Result<Self> {
        Ok(match f.kind() {
            MapKind::Linear(c) => Tracker::Linear(c),
            MapKind::Diagonal(p) => Tracker::Diagonal(*p),
            MapKind::PthRoot(p) => Tracker::Root(*p),
            MapKind::UnitarySolved(s) => match &s.rational {
                Some(parts) => Tracker::Solved(s, parts),
                None => Tracker::Polynomial(s),
            },
            MapKind::Sharp { outer, inner, slot } => {
                let o = Tracker::new(outer)?;
                let i = Tracker::new(inner)?;
                let idx = outer.target().ranges()[*slot - 1].start;
                let split = o.state_len();
                let inner_branch = i.branch_points();
                Tracker::Sharp { outer: Box::new(o), inner: Box::new(i), idx, split, inner_branch }
            }
            MapKind::Catalog { realized, .. } => Tracker::new(realized)?,
        })
    }

    fn state_len(&self) -> usize {
        match self {
            Tracker::Linear(_) | Tracker::Diagonal(_) | Tracker::Polynomial(_) => 0,
            Tracker::Root(_) | Tracker::Solved(..) => 1,
            Tracker::Sharp { outer, inner, .. } => outer.state_len() + inner.state_len(),
        }
    }

    fn branch_points(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        match self {
            Tracker::Linear(_) | Tracker::Diagonal(_) | Tracker::Polynomial(_) => {}
            Tracker::Root(_) => {
                out.push(ONE);
                out.push(-ONE);
            }
            Tracker::Solved(_, parts) => {
                for v in parts.r.critical_values() {
                    push_unique(&mut out, v);
                }
            }
            Tracker::Sharp { outer, idx, inner_branch, .. } => {
                for v in outer.branch_points() {
                    push_unique(&mut out, v);
                }
                for &beta in inner_branch {
                    for v in outer.component_preimages(*idx, beta) {
                        push_unique(&mut out, v);
                    }
                }
            }
        }
        out
    }

    /// Points `w` at which some sheet of component `comp` takes the value `beta`.
    fn component_preimages(&self, comp: usize, beta: Complex64) -> Vec<Complex64> {
        let mut out = Vec::new();
        match self {
            Tracker::Linear(c) => {
                if c[comp] != ZERO {
                    out.push(beta / c[comp]);
                }
            }
            Tracker::Diagonal(_) => out.push(beta),
            Tracker::Polynomial(s) => {
                let a = if comp == 0 { s.f1.coeff(1) } else { s.f2[comp - 1].coeff(1) };
                if a != ZERO {
                    out.push(beta / a);
                }
            }
            Tracker::Root(p) => {
                if (beta - ONE).norm() < 1e-12 {
                    out.push(ONE);
                } else {
                    let t = gamma(*p).powi(-(comp as i32)) * cayley_to_half_plane(beta);
                    let tau = t.powi(*p as i32);
                    if (tau + I).norm() > 1e-12 {
                        out.push(cayley_to_disk(tau));
                    }
                }
            }
            Tracker::Solved(_, parts) => {
                if comp == 0 {
                    out.push(parts.r.eval(beta));
                } else {
                    let rj = &parts.components[comp - 1];
                    let level = rj.numerator().sub(&rj.denominator().scale(beta));
                    out.extend(level.roots().into_iter().map(|z| parts.r.eval(z)));
                }
            }
            Tracker::Sharp { outer, inner, idx, .. } => {
                let inner_dim = inner.dimension();
                if comp >= *idx && comp < idx + inner_dim {
                    for v in inner.component_preimages(comp - idx, beta) {
                        out.extend(outer.component_preimages(*idx, v));
                    }
                } else {
                    let c = if comp < *idx { comp } else { comp + 1 - inner_dim };
                    out.extend(outer.component_preimages(c, beta));
                }
            }
        }
        out.retain(|v| v.is_finite() && v.norm() < FAR);
        out
    }

    fn dimension(&self) -> usize {
        match self {
            Tracker::Linear(c) => c.len(),
            Tracker::Diagonal(p) | Tracker::Root(p) => *p,
            Tracker::Polynomial(s) | Tracker::Solved(s, _) => s.n() + 1,
            Tracker::Sharp { outer, inner, .. } => outer.dimension() + inner.dimension() - 1,
        }
    }

    /// State of the principal sheet at `|w| < 1`.
    fn principal_state(&self, w: Complex64) -> Result<Vec<Complex64>> {
        Ok(match self {
            Tracker::Linear(_) | Tracker::Diagonal(_) | Tracker::Polynomial(_) => Vec::new(),
            Tracker::Root(p) => vec![cayley_to_half_plane(w).powf(1.0 / *p as f64)],
            Tracker::Solved(s, _) => vec![s.eval(w)?[0]],
            Tracker::Sharp { outer, inner, idx, .. } => {
                let mut st = outer.principal_state(w)?;
                let u = outer.values(&st, w)[*idx];
                st.extend(inner.principal_state(u)?);
                st
            }
        })
    }

    fn values(&self, state: &[Complex64], w: Complex64) -> Vec<Complex64> {
        match self {
            Tracker::Linear(c) => c.iter().map(|ci| ci * w).collect(),
            Tracker::Diagonal(p) => vec![w; *p],
            Tracker::Root(p) => pth_root_components(*p, state[0]),
            Tracker::Polynomial(s) => s.eval_series(w).0,
            Tracker::Solved(_, parts) => {
                let z = state[0];
                std::iter::once(z).chain(parts.components.iter().map(|rj| rj.eval(z))).collect()
            }
            Tracker::Sharp { outer, inner, idx, split, .. } => {
                let mut v = outer.values(&state[..*split], w);
                let iv = inner.values(&state[*split..], v[*idx]);
                v.splice(*idx..idx + 1, iv);
                v
            }
        }
    }

    /// One gated step from `w0` to `w1`.
    fn step(&self, state: &[Complex64], w0: Complex64, w1: Complex64) -> Result<Vec<Complex64>> {
        match self {
            Tracker::Linear(_) | Tracker::Diagonal(_) | Tracker::Polynomial(_) => Ok(Vec::new()),
            Tracker::Root(p) => {
                let ratio = cayley_to_half_plane(w1) / cayley_to_half_plane(w0);
                Ok(vec![state[0] * ratio.powf(1.0 / *p as f64)])
            }
            Tracker::Solved(_, parts) => {
                let mut z = state[0];
                continue_inverse(&parts.r, w0, w1, &mut z)?;
                Ok(vec![z])
            }
            Tracker::Sharp { .. } => self.sharp_step(state, w0, w1, 0),
        }
    }

    /// Steps the outer state, then follows the image of the segment with the
    /// inner state, bisecting until the image step is gated for the inner map.
    fn sharp_step(&self, state: &[Complex64], w0: Complex64, w1: Complex64, depth: usize) -> Result<Vec<Complex64>> {
        let Tracker::Sharp { outer, inner, idx, split, inner_branch } = self else {
            unreachable!("sharp_step on a non-sharp tracker")
        };
        let (os0, is0) = state.split_at(*split);
        let os1 = outer.step(os0, w0, w1)?;
        let u0 = outer.values(os0, w0)[*idx];
        let u1 = outer.values(&os1, w1)[*idx];
        let (dist, branch) = nearest(u0, inner_branch);
        if (u1 - u0).norm() <= 0.5 * dist {
            let mut st = os1;
            st.extend(inner.step(is0, u0, u1)?);
            return Ok(st);
        }
        if depth >= 40 {
            return Err(Error::StepGating { from: w0, to: w1, branch, distance: dist });
        }
        let mid = (w0 + w1) * 0.5;
        let half = self.sharp_step(state, w0, mid, depth + 1)?;
        self.sharp_step(&half, mid, w1, depth + 1)
    }

    /// Taylor expansions at `w0` of all components on the sheet `state`,
    /// together with the least convergence radius estimated among the
    /// intermediate series a composite is built from.
    fn germ(&self, state: &[Complex64], w0: Complex64, order: usize) -> Result<(Vec<TruncatedSeries>, f64)> {
        if let Tracker::Sharp { outer, inner, idx, split, .. } = self {
            let (mut og, r_outer) = outer.germ(&state[..*split], w0, order)?;
            let s = og[*idx].clone();
            let (ig, r_inner) = inner.germ(&state[*split..], s.coeff(0), order)?;
            let composed = ig.iter().map(|g| g.compose(&s)).collect::<Result<Vec<_>>>()?;
            og.splice(*idx..idx + 1, composed);
            // The inner expansion is valid in the disk of its own convergence
            // radius around s(w0); pull that back through the first-order term.
            let pulled = r_inner / s.coeff(1).norm().max(f64::MIN_POSITIVE);
            let r = r_outer.min(s.radius_estimate()).min(pulled);
            return Ok((og, r));
        }
        Ok((self.simple_germ(state, w0, order)?, f64::INFINITY))
    }

    fn simple_germ(&self, state: &[Complex64], w0: Complex64, order: usize) -> Result<Vec<TruncatedSeries>> {
        match self {
            Tracker::Linear(c) => c
                .iter()
                .map(|&ci| {
                    let mut coeffs = vec![ZERO; order + 1];
                    coeffs[0] = ci * w0;
                    if order >= 1 {
                        coeffs[1] = ci;
                    }
                    TruncatedSeries::new(w0, coeffs)
                })
                .collect(),
            Tracker::Diagonal(p) => Ok(vec![TruncatedSeries::variable(w0, order); *p]),
            Tracker::Polynomial(s) => {
                std::iter::once(&s.f1).chain(&s.f2).map(|g| g.recenter(w0).truncate(order.min(g.order()))).collect()
            }
            Tracker::Root(p) => {
                let u = TruncatedSeries::variable(w0, order);
                let tau = u.add_constant(ONE).scale(I).div(&u.scale(-ONE).add_constant(ONE))?;
                let ratio = tau.scale(tau.coeff(0).inv());
                let t = ratio.powf(1.0 / *p as f64)?.scale(state[0]);
                let g = gamma(*p);
                let mut gk = ONE;
                let mut comps = Vec::with_capacity(*p);
                for _ in 0..*p {
                    let s = t.scale(gk);
                    comps.push(s.add_constant(-I).div(&s.add_constant(I))?);
                    gk *= g;
                }
                Ok(comps)
            }
            Tracker::Solved(_, parts) => {
                let z0 = state[0];
                let mut shift = vec![ZERO; order + 1];
                shift[0] = z0;
                if order >= 1 {
                    shift[1] = ONE;
                }
                let g = parts.r.compose_series(&TruncatedSeries::new(ZERO, shift)?)?;
                let h = g.add_constant(-g.coeff(0));
                let v = h.revert()?;
                let mut coeffs = v.coeffs().to_vec();
                coeffs[0] = z0;
                let f1 = TruncatedSeries::new(w0, coeffs)?;
                let mut out = Vec::with_capacity(parts.components.len() + 1);
                for rj in &parts.components {
                    out.push(rj.compose_series(&f1)?);
                }
                out.insert(0, f1);
                Ok(out)
            }
            Tracker::Sharp { .. } => unreachable!("composites are expanded by germ"),
        }
    }
}

/// Finite branch points of the covering `w ↦ F(w)`, deduplicated at `1e-9`.
///
/// p-th root embeddings branch at `w = ±1`; solved maps at the critical values
/// of `R`; a sharp composite at the branch points of the outer map together
/// with the preimages of the inner map's branch points under every sheet of
/// the substituted component. Linear and diagonal maps have none.
pub fn branch_points(f: &IsometryMap) -> Result<Vec<Complex64>> {
    Ok(Tracker::new(f)?.branch_points())
}

/// Taylor expansions of all components of one sheet of a map at a common center.
#[derive(Debug, Clone, PartialEq)]
pub struct Germ {
    components: Vec<TruncatedSeries>,
    state: Vec<Complex64>,
    /// Coefficient `k` is weighted by `scale^k` when germs are compared. It is
    /// at most half the distance to the nearest branch point and half the
    /// estimated convergence radius of every series the germ is built from.
    scale: f64,
}

impl Germ {
    /// Assembles a germ from component series sharing center and order.
    /// Such a germ can be compared but carries no sheet information for continuation.
    pub fn new(components: Vec<TruncatedSeries>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Shape { op: "germ", detail: "no components".into() });
        };
        if components.iter().any(|c| c.center() != first.center() || c.order() != first.order()) {
            return Err(Error::Shape { op: "germ", detail: "components differ in center or order".into() });
        }
        Ok(Germ { components, state: Vec::new(), scale: 1.0 })
    }

    pub fn center(&self) -> Complex64 {
        self.components[0].center()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn components(&self) -> &[TruncatedSeries] {
        &self.components
    }

    /// Component values at the center.
    pub fn values(&self) -> Vec<Complex64> {
        self.components.iter().map(|c| c.coeff(0)).collect()
    }

    /// Scaled relative distance over the first 16 coefficients; infinite when
    /// the centers or the number of components differ.
    pub fn distance(&self, other: &Germ) -> f64 {
        if self.center() != other.center() || self.components.len() != other.components.len() {
            return f64::INFINITY;
        }
        let r = self.scale.min(other.scale);
        let n = self.order().min(other.order()).min(GERM_ORDER);
        let mut worst: f64 = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            let mut size: f64 = 0.0;
            let mut diff: f64 = 0.0;
            let mut rk = 1.0;
            for k in 0..=n {
                size = size.max(a.coeff(k).norm() * rk).max(b.coeff(k).norm() * rk);
                diff = diff.max((a.coeff(k) - b.coeff(k)).norm() * rk);
                rk *= r;
            }
            worst = worst.max(diff / (1.0 + size));
        }
        worst
    }
}

fn make_germ(tr: &Tracker, bps: &[Complex64], state: Vec<Complex64>, w: Complex64, order: usize) -> Result<Germ> {
    let (components, intermediate) = tr.germ(&state, w, order)?;
    let radius = components.iter().map(TruncatedSeries::radius_estimate).fold(intermediate, f64::min);
    let scale = (0.5 * nearest(w, bps).0).min(0.5 * radius).min(1.0);
    Ok(Germ { components, state, scale })
}

/// Moves a sheet state along a polyline with gated steps.
fn continue_state(
    tr: &Tracker,
    bps: &[Complex64],
    mut state: Vec<Complex64>,
    path: &[Complex64],
) -> Result<Vec<Complex64>> {
    const MAX_STEPS: usize = 1_000_000;
    let mut steps = 0;
    for seg in path.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if a == b {
            continue;
        }
        for &beta in bps {
            let d = segment_distance(a, b, beta);
            if d < GATING_MARGIN {
                return Err(Error::StepGating { from: a, to: b, branch: beta, distance: d });
            }
        }
        let mut w = a;
        while w != b {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Numerical {
                    op: "continue_germ",
                    detail: format!("step budget exhausted on {a} -> {b}"),
                });
            }
            let remaining = (b - w).norm();
            let h = 0.5 * nearest(w, bps).0;
            let next = if h >= remaining { b } else { w + (b - w) * (h / remaining) };
            state = tr.step(&state, w, next)?;
            w = next;
        }
    }
    Ok(state)
}

/// The principal-sheet germ of `f` at `|w| < 1`, expanded to `order`.
pub fn base_germ(f: &IsometryMap, w: Complex64, order: usize) -> Result<Germ> {
    if !(w.norm() < 1.0) {
        return Err(Error::OutsideDomain { op: "base_germ", detail: format!("|w| = {} >= 1", w.norm()) });
    }
    let tr = Tracker::new(f)?;
    let bps = tr.branch_points();
    let state = tr.principal_state(w)?;
    make_germ(&tr, &bps, state, w, order)
}

/// Continues a germ of `f` along the polyline starting at its center and
/// visiting `path` in order. The result is expanded to the same order at the
/// last point of `path`.
pub fn continue_germ(f: &IsometryMap, germ: &Germ, path: &[Complex64]) -> Result<Germ> {
    let tr = Tracker::new(f)?;
    if germ.state.len() != tr.state_len() || germ.components.len() != tr.dimension() {
        return Err(Error::Precondition { op: "continue_germ", detail: "germ does not belong to this map".into() });
    }
    let bps = tr.branch_points();
    let mut full = Vec::with_capacity(path.len() + 1);
    full.push(germ.center());
    full.extend_from_slice(path);
    let end = *full.last().expect("nonempty");
    if end == germ.center() && full.len() == 1 {
        return Ok(germ.clone());
    }
    let state = continue_state(&tr, &bps, germ.state.clone(), &full)?;
    make_germ(&tr, &bps, state, end, germ.order())
}

/// Base point and generating loops for the monodromy of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSystem {
    pub base: Complex64,
    pub branch_points: Vec<Complex64>,
    /// Radius of the small loops: half the least pairwise branch-point distance.
    pub radius: f64,
    /// Radius of the loop around infinity, enclosing every finite branch point.
    pub infinity_radius: f64,
    /// Closed polylines starting and ending at `base`; the last one encircles infinity.
    pub loops: Vec<Vec<Complex64>>,
}

fn small_loop_radius(bps: &[Complex64]) -> f64 {
    let mut m = f64::INFINITY;
    for (i, a) in bps.iter().enumerate() {
        for b in &bps[i + 1..] {
            m = m.min((a - b).norm());
        }
    }
    if m.is_finite() {
        0.5 * m
    } else {
        0.5
    }
}

/// Clearance of a base point: how far it stays from the loop disks and how
/// far its connecting segments stay from other branch points.
fn base_score(b: Complex64, bps: &[Complex64], radius: f64, r_inf: f64) -> f64 {
    let mut score = f64::INFINITY;
    for (i, &beta) in bps.iter().enumerate() {
        let d = (b - beta).norm();
        score = score.min(d - radius);
        let entry = beta + (b - beta) * (radius / d);
        for (j, &other) in bps.iter().enumerate() {
            if i != j {
                score = score.min(segment_distance(b, entry, other) - 0.5 * radius);
            }
        }
    }
    let out = b * (r_inf / b.norm());
    for &beta in bps {
        score = score.min(segment_distance(b, out, beta) - 0.5 * radius);
    }
    score
}

fn build_loop_system(bps: &[Complex64], choice: usize) -> Result<LoopSystem> {
    let radius = small_loop_radius(bps);
    let max_abs = bps.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let r_inf = (2.0 * max_abs).max(4.0);
    if bps.is_empty() {
        return Ok(LoopSystem {
            base: Complex64::new(0.3, 0.2),
            branch_points: Vec::new(),
            radius,
            infinity_radius: r_inf,
            loops: Vec::new(),
        });
    }
    let mut candidates: Vec<(f64, usize, Complex64)> = Vec::new();
    for (ri, r) in [0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 0.95].iter().enumerate() {
        for k in 0..16 {
            let b = Complex64::from_polar(*r, 0.3 + 2.0 * PI * k as f64 / 16.0);
            let s = base_score(b, bps, radius, r_inf);
            if s > 0.05 * radius.min(1.0) {
                candidates.push((s, ri * 16 + k, b));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let Some(&(_, _, base)) = candidates.get(choice) else {
        return Err(Error::Numerical {
            op: "monodromy_orbit",
            detail: format!("no admissible base point number {choice} among {} candidates", candidates.len()),
        });
    };
    let mut loops = Vec::with_capacity(bps.len() + 1);
    for &beta in bps {
        let phi0 = (base - beta).arg();
        let mut lp = vec![base];
        lp.extend(
            (0..=LOOP_VERTICES)
                .map(|k| beta + Complex64::from_polar(radius, phi0 + 2.0 * PI * k as f64 / LOOP_VERTICES as f64)),
        );
        lp.push(base);
        loops.push(lp);
    }
    let phi0 = base.arg();
    let mut lp = vec![base];
    lp.extend(
        (0..=INFINITY_LOOP_VERTICES)
            .map(|k| Complex64::from_polar(r_inf, phi0 + 2.0 * PI * k as f64 / INFINITY_LOOP_VERTICES as f64)),
    );
    lp.push(base);
    loops.push(lp);
    Ok(LoopSystem { base, branch_points: bps.to_vec(), radius, infinity_radius: r_inf, loops })
}

/// Loops generating the monodromy of `f`, using the `choice`-th best base point.
pub fn loop_system(f: &IsometryMap, choice: usize) -> Result<LoopSystem> {
    build_loop_system(&branch_points(f)?, choice)
}

/// The orbit of the principal germ at the base point under the monodromy group.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub system: LoopSystem,
    pub germs: Vec<Germ>,
}

impl Orbit {
    /// The global sheeting number.
    pub fn size(&self) -> usize {
        self.germs.len()
    }
}

fn orbit_cap(dimension: usize) -> usize {
    (1usize << dimension.saturating_sub(1).min(20)) + 1
}

fn orbit_with(tr: &Tracker, cap: usize, choice: usize) -> Result<Orbit> {
    let bps = tr.branch_points();
    let system = build_loop_system(&bps, choice)?;
    let b = system.base;
    let mut germs = vec![make_germ(tr, &bps, tr.principal_state(b)?, b, GERM_ORDER)?];
    let mut next = 0;
    while next < germs.len() {
        let state = germs[next].state.clone();
        next += 1;
        let images: Vec<Result<Germ>> = system
            .loops
            .par_iter()
            .map(|lp| {
                let s = continue_state(tr, &bps, state.clone(), lp)?;
                make_germ(tr, &bps, s, b, GERM_ORDER)
            })
            .collect();
        for g in images {
            let g = g?;
            if !germs.iter().any(|h| h.distance(&g) <= GERM_TOL) {
                germs.push(g);
                if germs.len() > cap {
                    return Err(Error::OrbitOverflow { limit: cap });
                }
            }
        }
    }
    Ok(Orbit { system, germs })
}

/// Enumerates the monodromy orbit of the principal germ, failing once it
/// exceeds `2^{p-1} + 1` germs for a target of dimension `p`.
pub fn monodromy_orbit(f: &IsometryMap, choice: usize) -> Result<Orbit> {
    let tr = Tracker::new(f)?;
    orbit_with(&tr, orbit_cap(f.dimension()), choice)
}

/// A bivariate polynomial `P(w, z) = Σ coeffs[b][a] wᵃ zᵇ` with unit coefficient norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPolynomial {
    /// Indexed by the power of `z`, then the power of `w`.
    pub coeffs: Vec<Vec<Complex64>>,
    pub z_degree: usize,
    pub w_degree: usize,
    /// `σ_min / σ_max` of the column-normalized sample matrix.
    pub singular_ratio: f64,
}

impl MinimalPolynomial {
    pub fn eval(&self, w: Complex64, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, row| acc * z + row.iter().rev().fold(ZERO, |a, c| a * w + c))
    }

    /// Max coefficient difference; infinite when the bidegrees differ.
    pub fn distance(&self, other: &MinimalPolynomial) -> f64 {
        if self.z_degree != other.z_degree || self.w_degree != other.w_degree {
            return f64::INFINITY;
        }
        self.coeffs.iter().flatten().zip(other.coeffs.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Result of a minimal polynomial search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Found(MinimalPolynomial),
    /// No relation up to the degree caps.
    Undetermined,
}

impl FitOutcome {
    pub fn polynomial(&self) -> Option<&MinimalPolynomial> {
        match self {
            FitOutcome::Found(p) => Some(p),
            FitOutcome::Undetermined => None,
        }
    }
}

fn try_relation(pairs: &[(Complex64, Complex64)], dz: usize, dw: usize) -> Option<MinimalPolynomial> {
    let cols = (dz + 1) * (dw + 1);
    if pairs.len() < cols {
        return None;
    }
    let mut m = DMatrix::<Complex64>::from_fn(pairs.len(), cols, |r, c| {
        let (w, z) = pairs[r];
        z.powu((c / (dw + 1)) as u32) * w.powu((c % (dw + 1)) as u32)
    });
    let norms: Vec<f64> = (0..cols)
        .map(|c| {
            let n = m.column(c).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (c, n) in norms.iter().enumerate() {
        m.column_mut(c).unscale_mut(*n);
    }
    let svd = m.svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) =
        sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio > RELATION_THRESHOLD {
        return None;
    }
    let vt = svd.v_t.expect("requested");
    let mut x: Vec<Complex64> = (0..cols).map(|c| vt[(imin, c)].conj() / norms[c]).collect();
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let big = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let pivot = *x.iter().find(|c| c.norm() >= 0.5 * big).expect("nonzero vector");
    let phase = pivot.conj() / pivot.norm();
    for c in &mut x {
        *c *= phase / norm;
    }
    let coeffs = x.chunks(dw + 1).map(|row| row.to_vec()).collect();
    Some(MinimalPolynomial { coeffs, z_degree: dz, w_degree: dw, singular_ratio: ratio })
}

/// Lowest-bidegree relation `P(w, z) = 0` satisfied by the sample pairs,
/// trying z-degrees in the given order and w-degrees `0..=max_w` for each.
pub fn fit_samples(pairs: &[(Complex64, Complex64)], z_degrees: &[usize], max_w: usize) -> FitOutcome {
    for &dz in z_degrees {
        for dw in 0..=max_w {
            if let Some(p) = try_relation(pairs, dz, dw) {
                return FitOutcome::Found(p);
            }
        }
    }
    FitOutcome::Undetermined
}

/// Fits a minimal polynomial to a single-valued evaluable component sampled
/// on the circle `|w| = 0.5`, with bidegree at most `(max_w, max_z)`.
pub fn minimal_polynomial_fit<F>(component: F, max_z: usize, max_w: usize) -> Result<FitOutcome>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let count = FIT_SAMPLES.max(2 * (max_z + 1) * (max_w + 1));
    let pairs = (0..count)
        .map(|k| {
            let w = Complex64::from_polar(0.5, 2.0 * PI * (k as f64 + 0.5) / count as f64);
            Ok((w, component(w)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let degrees: Vec<usize> = (1..=max_z).collect();
    Ok(fit_samples(&pairs, &degrees, max_w))
}

/// Component values of every sheet in the fiber at equispaced points of a
/// circle `|w| = radius`: `result[k] = (w_k, values of each sheet at w_k)`.
fn fiber_on_circle(
    tr: &Tracker,
    bps: &[Complex64],
    base: Complex64,
    states: &[Vec<Complex64>],
) -> Result<Vec<(Complex64, Vec<Vec<Complex64>>)>> {
    let radius =
        FIT_RADII.iter().copied().find(|r| bps.iter().all(|b| (b.norm() - r).abs() >= 0.05)).ok_or_else(|| {
            Error::Numerical {
                op: "minimal_polynomial_fit",
                detail: "no sampling circle clears the branch points".into(),
            }
        })?;
    let phi0 = base.arg();
    let points: Vec<Complex64> = (0..FIT_SAMPLES)
        .map(|k| Complex64::from_polar(radius, phi0 + 2.0 * PI * k as f64 / FIT_SAMPLES as f64))
        .collect();
    let per_sheet: Vec<Vec<Vec<Complex64>>> = states
        .par_iter()
        .map(|s0| {
            let mut s = continue_state(tr, bps, s0.clone(), &[base, points[0]])?;
            let mut vals = vec![tr.values(&s, points[0])];
            for k in 1..points.len() {
                s = continue_state(tr, bps, s, &points[k - 1..=k])?;
                vals.push(tr.values(&s, points[k]));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    Ok(points.iter().enumerate().map(|(k, &w)| (w, per_sheet.iter().map(|sheet| sheet[k].clone()).collect())).collect())
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

fn fit_from_fiber(fiber: &[(Complex64, Vec<Vec<Complex64>>)], comp: usize, n: usize) -> FitOutcome {
    let pairs: Vec<(Complex64, Complex64)> =
        fiber.iter().flat_map(|(w, sheets)| sheets.iter().map(move |v| (*w, v[comp]))).collect();
    fit_samples(&pairs, &divisors(n), n + 2)
}

/// Minimal polynomial of component `component` of `f`, fitted on samples of
/// every sheet over a circle. The z-degree (the sheeting number of the
/// component) is searched among the divisors of the global sheeting number.
pub fn fit_component(f: &IsometryMap, component: usize) -> Result<FitOutcome> {
    if component >= f.dimension() {
        return Err(Error::OutOfRange {
            op: "fit_component",
            detail: format!("component {component} of a map with {} components", f.dimension()),
        });
    }
    let tr = Tracker::new(f)?;
    let orbit = orbit_with(&tr, orbit_cap(f.dimension()), 0)?;
    let states: Vec<Vec<Complex64>> = orbit.germs.iter().map(|g| g.state.clone()).collect();
    let fiber = fiber_on_circle(&tr, &orbit.system.branch_points, orbit.system.base, &states)?;
    Ok(fit_from_fiber(&fiber, component, states.len()))
}

/// Pass/fail flags for the three identities relating `n`, `s_j`, `p` and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgIdentities {
    /// `Σ 1/s_j = k` within `1e-9`.
    pub sum_reciprocal: bool,
    /// `s_j | n` for every `j`.
    pub divisibility: bool,
    /// `p/k ≤ n ≤ 2^{p-1}`.
    pub range: bool,
}

/// Sheeting data of a map into a polydisk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetingReport {
    pub p: usize,
    pub k: f64,
    /// Global sheeting number.
    pub n: usize,
    /// Sheeting numbers of the components; `None` where no relation was found.
    pub s: Vec<Option<usize>>,
    pub identities: NgIdentities,
    pub caveat: String,
}

impl SheetingReport {
    pub fn all_pass(&self) -> bool {
        self.identities.sum_reciprocal && self.identities.divisibility && self.identities.range
    }
}

/// Global and componentwise sheeting numbers of `f: (Δ, k g_Δ) → Δᵖ`, with the
/// identities `Σ 1/s_j = k`, `s_j | n` and `p/k ≤ n ≤ 2^{p-1}` checked.
pub fn sheeting_report(f: &IsometryMap, k: f64) -> Result<SheetingReport> {
    if !f.target().is_polydisk() {
        return Err(Error::Unsupported { op: "sheeting_report", detail: "target must be a polydisk".into() });
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::OutOfRange { op: "sheeting_report", detail: format!("k must be positive, got {k}") });
    }
    let p = f.dimension();
    let tr = Tracker::new(f)?;
    let orbit = orbit_with(&tr, orbit_cap(p), 0)?;
    let n = orbit.size();
    let states: Vec<Vec<Complex64>> = orbit.germs.iter().map(|g| g.state.clone()).collect();
    let fiber = fiber_on_circle(&tr, &orbit.system.branch_points, orbit.system.base, &states)?;
    let s: Vec<Option<usize>> = (0..p).map(|j| fit_from_fiber(&fiber, j, n).polynomial().map(|m| m.z_degree)).collect();
    let complete: Option<Vec<usize>> = s.iter().copied().collect();
    let (sum_reciprocal, divisibility) = match &complete {
        Some(s) => ((s.iter().map(|&x| 1.0 / x as f64).sum::<f64>() - k).abs() <= 1e-9, s.iter().all(|&x| n % x == 0)),
        None => (false, false),
    };
    let upper = 1u128 << (p - 1).min(100);
    let range = p as f64 / k <= n as f64 + 1e-9 && (n as u128) <= upper;
    Ok(SheetingReport {
        p,
        k,
        n,
        s,
        identities: NgIdentities { sum_reciprocal, divisibility, range },
        caveat: "assumes the algebraic curve extending the graph is irreducible".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::sharp_compose;
    use crate::solver::{solve_isometry, u_zeta};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn u_zeta_map() -> IsometryMap {
        let solved = solve_isometry(&u_zeta(c(0.2, 0.0)).unwrap(), 64).unwrap();
        IsometryMap::from_solved(solved).unwrap()
    }

    #[test]
    fn root_branch_points() {
        for p in 2..6 {
            let b = branch_points(&IsometryMap::pth_root(p).unwrap()).unwrap();
            assert_eq!(b.len(), 2);
            assert!(b.iter().any(|z| (z - ONE).norm() < 1e-12));
            assert!(b.iter().any(|z| (z + ONE).norm() < 1e-12));
        }
        assert!(branch_points(&IsometryMap::identity()).unwrap().is_empty());
    }

    #[test]
    fn solved_branch_points_are_critical_values() {
        let f = u_zeta_map();
        let b = branch_points(&f).unwrap();
        assert!(!b.is_empty() && b.len() <= 4);
        let r = &f.solved().unwrap().rational.as_ref().unwrap().r;
        for v in &b {
            // Some root of R(z) = v is a double root.
            let level = r.numerator().sub(&r.denominator().scale(*v));
            let d = level.derivative();
            assert!(level.roots().iter().any(|z| d.eval(*z).norm() < 1e-6 * (1.0 + d.norm1())));
        }
    }

    #[test]
    fn trivial_path_returns_same_germ() {
        let f = IsometryMap::pth_root(3).unwrap();
        let g = base_germ(&f, c(0.1, 0.2), 16).unwrap();
        let h = continue_germ(&f, &g, &[]).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn root_germ_matches_closed_form_after_continuation() {
        let f = IsometryMap::pth_root(2).unwrap();
        let g = base_germ(&f, c(0.0, 0.3), 16).unwrap();
        let target = c(0.4, -0.2);
        let h = continue_germ(&f, &g, &[c(0.3, 0.3), target]).unwrap();
        let exact = f.eval(target).unwrap();
        for (a, b) in h.values().iter().zip(&exact) {
            assert!((a - b).norm() < 1e-12);
        }
        // First derivative against a central difference.
        let eps = 1e-6;
        let plus = f.eval(target + eps).unwrap();
        let minus = f.eval(target - eps).unwrap();
        for (j, s) in h.components().iter().enumerate() {
            let fd = (plus[j] - minus[j]) / (2.0 * eps);
            assert!((s.coeff(1) - fd).norm() < 1e-7);
        }
    }

    #[test]
    fn loop_around_one_inverts_both_components() {
        let f = IsometryMap::pth_root(2).unwrap();
        let b = c(0.0, 0.7);
        let g = base_germ(&f, b, 16).unwrap();
        let radius = 1.0;
        let phi0 = (b - ONE).arg();
        let mut path: Vec<Complex64> =
            (0..=64).map(|k| ONE + Complex64::from_polar(radius, phi0 + 2.0 * PI * k as f64 / 64.0)).collect();
        path.insert(0, b);
        path.push(b);
        let h = continue_germ(&f, &g, &path).unwrap();
        let (v0, v1) = (g.values(), h.values());
        assert!((v1[0] - v0[0].inv()).norm() < 1e-10);
        assert!((v1[1] - v0[1].inv()).norm() < 1e-10);
        assert!(g.distance(&h) > 1e-3);
    }

    #[test]
    fn contractible_loop_is_trivial() {
        let f = u_zeta_map();
        let b = c(0.1, 0.3);
        let g = base_germ(&f, b, 16).unwrap();
        let mut path: Vec<Complex64> =
            (1..32).map(|k| b - 0.2 + Complex64::from_polar(0.2, 2.0 * PI * k as f64 / 32.0)).collect();
        path.push(b);
        let h = continue_germ(&f, &g, &path).unwrap();
        assert!(g.distance(&h) < 1e-8);
    }

    #[test]
    fn gating_rejects_paths_through_branch_points() {
        let f = IsometryMap::pth_root(2).unwrap();
        let g = base_germ(&f, c(0.5, 0.0), 16).unwrap();
        let err = continue_germ(&f, &g, &[c(1.5, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::StepGating { .. }));
    }

    #[test]
    fn orbit_sizes() {
        for p in 2..=4 {
            assert_eq!(monodromy_orbit(&IsometryMap::pth_root(p).unwrap(), 0).unwrap().size(), p);
        }
        assert_eq!(monodromy_orbit(&IsometryMap::diagonal(3).unwrap(), 0).unwrap().size(), 1);
        assert_eq!(monodromy_orbit(&u_zeta_map(), 0).unwrap().size(), 3);
    }

    #[test]
    fn identity_fit() {
        let out = minimal_polynomial_fit(Ok, 2, 2).unwrap();
        let p = out.polynomial().unwrap();
        assert_eq!((p.z_degree, p.w_degree), (1, 1));
        let w = c(0.3, 0.7);
        assert!(p.eval(w, w).norm() < 1e-12);
        assert!(p.eval(w, w + 0.1).norm() > 1e-3);
    }

    #[test]
    fn first_root_component_is_quadratic() {
        let f = IsometryMap::pth_root(2).unwrap();
        let out = minimal_polynomial_fit(|w| Ok(f.eval(w)?[0]), 3, 3).unwrap();
        let p = out.polynomial().unwrap();
        assert_eq!(p.z_degree, 2);
        assert!(p.w_degree <= 2);
    }

    #[test]
    fn sharp_of_roots_sheeting() {
        let f2 = IsometryMap::pth_root(2).unwrap();
        let g = sharp_compose(&f2, &f2, 2).unwrap();
        let r = sheeting_report(&g, 1.0).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.s, vec![Some(2), Some(4), Some(4)]);
        assert!(r.all_pass());
    }

    #[test]
    fn solved_components_are_irrational() {
        let f = u_zeta_map();
        for j in 1..3 {
            let p = fit_component(&f, j).unwrap();
            assert!(p.polynomial().unwrap().z_degree >= 2);
        }
    }
}
