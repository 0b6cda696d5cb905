//! The explicit isometries: p-th root embeddings, diagonal embeddings,
//! solved maps, sharp composites and the catalog of normal forms.
//!
//! Every [`IsometryMap`] has source `(Δ, k·g_Δ)` and a [`ProductSpace`]
//! target, and satisfies `∏(1 - ‖F_i(w)‖²)^{μ_i} = (1 - |w|²)^k` after
//! normalizing `F(0) = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::{norm_sqr, BallAutomorphism, Factor, ProductSpace};
use crate::error::{Error, Result};
use crate::solver::{solve_isometry, u_zeta, SolvedIsometry, UnitaryMatrix};
use crate::DEFAULT_ORDER;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Direction of the fixed Cayley transform `τ = i(1+z)/(1-z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CayleyDirection {
    DiskToHalfPlane,
    HalfPlaneToDisk,
}

/// The Cayley transform in either direction, rejecting points off the open domain.
pub fn cayley(direction: CayleyDirection, z: Complex64) -> Result<Complex64> {
    match direction {
        CayleyDirection::DiskToHalfPlane => {
            if !(z.norm() < 1.0) {
                return Err(Error::OutsideDomain { op: "cayley", detail: format!("|z| = {} >= 1", z.norm()) });
            }
            Ok(cayley_to_half_plane(z))
        }
        CayleyDirection::HalfPlaneToDisk => {
            if !(z.im > 0.0) {
                return Err(Error::OutsideDomain { op: "cayley", detail: format!("Im tau = {} <= 0", z.im) });
            }
            Ok(cayley_to_disk(z))
        }
    }
}

pub(crate) fn cayley_to_half_plane(z: Complex64) -> Complex64 {
    I * (ONE + z) / (ONE - z)
}

pub(crate) fn cayley_to_disk(t: Complex64) -> Complex64 {
    (t - I) / (t + I)
}

/// `γ = e^{iπ/p}`.
pub(crate) fn gamma(p: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI / p as f64)
}

/// Components of `F_p` given the lift `t = τ^{1/p}`.
pub(crate) fn pth_root_components(p: usize, t: Complex64) -> Vec<Complex64> {
    let g = gamma(p);
    let mut gk = ONE;
    (0..p)
        .map(|_| {
            let v = cayley_to_disk(gk * t);
            gk *= g;
            v
        })
        .collect()
}

/// `F_p(w)`: Cayley, principal `τ^{1/p}` with `arg τ ∈ (0, π)`, rotate by
/// powers of `γ = e^{iπ/p}`, Cayley back.
pub fn eval_pth_root(p: usize, w: Complex64) -> Result<Vec<Complex64>> {
    if p < 2 {
        return Err(Error::OutOfRange { op: "eval_pth_root", detail: format!("need p >= 2, got {p}") });
    }
    if !(w.norm() < 1.0) {
        return Err(Error::OutsideDomain { op: "eval_pth_root", detail: format!("|w| = {} >= 1", w.norm()) });
    }
    let tau = cayley_to_half_plane(w);
    Ok(pth_root_components(p, tau.powf(1.0 / p as f64)))
}

/// `ϖ_p(w) = (w, …, w)`.
pub fn eval_diagonal(p: usize, w: Complex64) -> Vec<Complex64> {
    vec![w; p]
}

/// How a map is built.
#[derive(Debug, Clone)]
pub enum MapKind {
    /// `w ↦ (c_1 w, …, c_m w)`; covers the identity and the bidisk slices.
    Linear(Vec<Complex64>),
    PthRoot(usize),
    Diagonal(usize),
    UnitarySolved(Arc<SolvedIsometry>),
    /// `G♯∘F`: `outer`'s component at the 1-based factor `slot` is replaced by `inner` of it.
    Sharp {
        outer: Box<IsometryMap>,
        inner: Box<IsometryMap>,
        slot: usize,
    },
    Catalog {
        form: String,
        params: Vec<f64>,
        realized: Box<IsometryMap>,
    },
}

/// A holomorphic isometry `(Δ, k g_Δ) → target`.
#[derive(Debug, Clone)]
pub struct IsometryMap {
    kind: MapKind,
    target: ProductSpace,
    source_constant: f64,
    base: Vec<Complex64>,
}

impl IsometryMap {
    fn build(kind: MapKind, target: ProductSpace, source_constant: f64) -> Result<Self> {
        if !(source_constant.is_finite() && source_constant > 0.0) {
            return Err(Error::OutOfRange {
                op: "isometry_map",
                detail: format!("source constant must be positive, got {source_constant}"),
            });
        }
        let mut map = IsometryMap { kind, target, source_constant, base: Vec::new() };
        map.base = map.eval(ZERO)?;
        if map.base.len() != map.target.dimension() {
            return Err(Error::Shape {
                op: "isometry_map",
                detail: format!("{} components for a target of dimension {}", map.base.len(), map.target.dimension()),
            });
        }
        Ok(map)
    }

    /// The identity `Δ → Δ`.
    pub fn identity() -> Self {
        Self::linear(vec![ONE], ProductSpace::polydisk(1), 1.0).expect("identity is valid")
    }

    /// `w ↦ (c_1 w, …, c_m w)` into the given target.
    pub fn linear(coeffs: Vec<Complex64>, target: ProductSpace, source_constant: f64) -> Result<Self> {
        Self::build(MapKind::Linear(coeffs), target, source_constant)
    }

    /// The p-th root embedding `F_p`.
    pub fn pth_root(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::OutOfRange { op: "pth_root", detail: format!("need p >= 2, got {p}") });
        }
        Self::build(MapKind::PthRoot(p), ProductSpace::polydisk(p), 1.0)
    }

    /// The diagonal embedding `ϖ_p`, with `k = p`.
    pub fn diagonal(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::OutOfRange { op: "diagonal", detail: format!("need p >= 2, got {p}") });
        }
        Self::build(MapKind::Diagonal(p), ProductSpace::polydisk(p), p as f64)
    }

    /// The map `Δ → Δ × 𝔹ⁿ` of a solved unitary.
    pub fn from_solved(solved: SolvedIsometry) -> Result<Self> {
        let n = solved.n();
        let target = ProductSpace::new(vec![Factor::Disk, Factor::Ball(n)], vec![1.0, 1.0])?;
        Self::build(MapKind::UnitarySolved(Arc::new(solved)), target, 1.0)
    }

    /// Same map with different target constants and source constant. Used to
    /// attach the constants of a catalog form, or to probe perturbed constants.
    pub fn with_constants(&self, constants: Vec<f64>, source_constant: f64) -> Result<Self> {
        let target = self.target.with_constants(constants)?;
        Self::build(self.kind.clone(), target, source_constant)
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn target(&self) -> &ProductSpace {
        &self.target
    }

    pub fn source_constant(&self) -> f64 {
        self.source_constant
    }

    /// Number of scalar components (the target's ambient dimension).
    pub fn dimension(&self) -> usize {
        self.target.dimension()
    }

    /// `F(0)`.
    pub fn base_point(&self) -> &[Complex64] {
        &self.base
    }

    /// The solved isometry, when this map is (or realizes) one.
    pub fn solved(&self) -> Option<&SolvedIsometry> {
        match &self.kind {
            MapKind::UnitarySolved(s) => Some(s),
            MapKind::Catalog { realized, .. } => realized.solved(),
            _ => None,
        }
    }

    /// `F(w)` for `|w| < 1`.
    pub fn eval(&self, w: Complex64) -> Result<Vec<Complex64>> {
        if !(w.norm() < 1.0) {
            return Err(Error::OutsideDomain { op: "isometry_eval", detail: format!("|w| = {} >= 1", w.norm()) });
        }
        match &self.kind {
            MapKind::Linear(c) => Ok(c.iter().map(|ci| ci * w).collect()),
            MapKind::PthRoot(p) => eval_pth_root(*p, w),
            MapKind::Diagonal(p) => Ok(eval_diagonal(*p, w)),
            MapKind::UnitarySolved(s) => s.eval(w),
            MapKind::Sharp { outer, inner, slot } => {
                let mut v = outer.eval(w)?;
                let idx = outer.target.ranges()[*slot - 1].start;
                let g = inner.eval(v[idx])?;
                v.splice(idx..idx + 1, g);
                Ok(v)
            }
            MapKind::Catalog { realized, .. } => realized.eval(w),
        }
    }

    /// `F(w)` postcomposed, factor by factor, with the involution sending
    /// `F(0)` to the origin.
    pub fn eval_normalized(&self, w: Complex64) -> Result<Vec<Complex64>> {
        let v = self.eval(w)?;
        Ok(self.normalize_point(&v))
    }

    pub(crate) fn normalize_point(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = v.to_vec();
        for r in self.target.ranges() {
            let a = &self.base[r.clone()];
            if norm_sqr(a) == 0.0 {
                continue;
            }
            let phi = BallAutomorphism::involution(a.to_vec()).expect("base point lies inside");
            let img = phi.eval(&v[r.clone()]);
            out[r].copy_from_slice(&img);
        }
        out
    }

    /// Canonical source rotation for comparing maps up to reparametrization.
    ///
    /// After normalizing `F(0) = 0`, pick the component that vanishes to the
    /// lowest order `m` at the origin, preferring the largest leading
    /// coefficient and then the lowest index. The rotation `w ↦ e^{iθ}w` with
    /// `θ ∈ [0, 2π/m)` makes that coefficient positive real.
    pub fn canonical_form(&self) -> Result<CanonicalForm> {
        const SAMPLES: usize = 64;
        const RADIUS: f64 = 0.5;
        let values: Vec<Vec<Complex64>> = (0..SAMPLES)
            .map(|j| self.eval_normalized(Complex64::from_polar(RADIUS, 2.0 * PI * j as f64 / SAMPLES as f64)))
            .collect::<Result<_>>()?;
        let mut best: Option<(usize, usize, Complex64)> = None;
        for comp in 0..self.dimension() {
            let lead = (1..SAMPLES / 2).find_map(|k| {
                let c: Complex64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v[comp] * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / SAMPLES as f64))
                    .sum::<Complex64>()
                    / SAMPLES as f64;
                (c.norm() > 1e-10).then(|| (k, c / RADIUS.powi(k as i32)))
            });
            if let Some((k, c)) = lead {
                let better = match best {
                    None => true,
                    Some((_, bk, bc)) => k < bk || (k == bk && c.norm() > bc.norm() * (1.0 + 1e-9)),
                };
                if better {
                    best = Some((comp, k, c));
                }
            }
        }
        let Some((component, order, coefficient)) = best else {
            return Err(Error::Precondition { op: "canonical_form", detail: "all components are constant".into() });
        };
        let theta = (-coefficient.arg() / order as f64).rem_euclid(2.0 * PI / order as f64);
        Ok(CanonicalForm { component, order, leading_modulus: coefficient.norm(), theta })
    }

    /// `F` in canonical form: normalized and precomposed with the canonical rotation.
    pub fn eval_canonical(&self, form: &CanonicalForm, w: Complex64) -> Result<Vec<Complex64>> {
        self.eval_normalized(Complex64::from_polar(1.0, form.theta) * w)
    }
}

/// Data of [`IsometryMap::canonical_form`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    pub component: usize,
    pub order: usize,
    pub leading_modulus: f64,
    pub theta: f64,
}

/// `G♯∘F`: substitutes `G` into the one-dimensional factor `slot` (1-based) of
/// `F`'s target. New constants are `λ_slot·μ_j/k_G` for `G`'s factors; the
/// source constant stays `k_F`.
pub fn sharp_compose(f: &IsometryMap, g: &IsometryMap, slot: usize) -> Result<IsometryMap> {
    let factors = f.target.factors();
    if slot == 0 || slot > factors.len() {
        return Err(Error::OutOfRange {
            op: "sharp_compose",
            detail: format!("slot {slot} out of range 1..={}", factors.len()),
        });
    }
    if !factors[slot - 1].is_one_dimensional() {
        return Err(Error::Shape { op: "sharp_compose", detail: format!("slot {slot} is not a disk factor") });
    }
    let lam = f.target.constants()[slot - 1];
    let mut new_factors = Vec::new();
    let mut new_constants = Vec::new();
    for (i, (fac, c)) in factors.iter().zip(f.target.constants()).enumerate() {
        if i == slot - 1 {
            new_factors.extend_from_slice(g.target.factors());
            new_constants.extend(g.target.constants().iter().map(|mu| lam * mu / g.source_constant));
        } else {
            new_factors.push(*fac);
            new_constants.push(*c);
        }
    }
    let target = ProductSpace::new(new_factors, new_constants)?;
    IsometryMap::build(
        MapKind::Sharp { outer: Box::new(f.clone()), inner: Box::new(g.clone()), slot },
        target,
        f.source_constant,
    )
}

/// Catalog form identifiers with their parameter lists.
pub const CATALOG_FORMS: &[(&str, &str)] = &[
    ("bidisk-1", "(z, 0) with λ1 = 1; params [λ2]"),
    ("bidisk-2", "(0, z) with λ2 = 1; params [λ1]"),
    ("bidisk-3", "(z, z) with λ1 + λ2 = 1; params [λ1]"),
    ("bidisk-4", "F2 with λ1 = λ2 = 1; no params"),
    ("root", "F_p; params [p]"),
    ("diagonal", "ϖ_p; params [p]"),
    ("delta2-k1", "F2"),
    ("delta2-k2", "ϖ2"),
    ("delta3-k1-a", "F3"),
    ("delta3-k1-b", "(α1, α2∘β1, β2∘β1)"),
    ("delta3-k2", "(z, α, β)"),
    ("delta3-k3", "ϖ3"),
    ("delta4-k1-a", "F4"),
    ("delta4-k1-b", "(α1, α2∘β1, α3∘β2∘β1, β3∘β2∘β1)"),
    ("delta4-k1-c", "(α1, h2∘α2, h3∘α2, h4∘α2)"),
    ("delta4-k1-d", "(β1, α1∘β2, α2∘β2, β3)"),
    ("delta4-k1-e", "(α1∘α2, β1∘α2, α3∘β2, β3∘β2)"),
    ("delta4-k2-a", "(α1, β1, α2, β2)"),
    ("delta4-k2-b", "(z, α1, α2∘β1, β2∘β1)"),
    ("delta4-k2-c", "(z, α1, α2, α3)"),
    ("delta4-k3", "(z, z, α, β)"),
    ("delta4-k4", "ϖ4"),
    ("equal-roots", "(F_q, …, F_q) with the same branching locus; params [q, copies]"),
    ("diagonal-plus-roots", "(ϖ_l, F_q, …, F_q); params [l, q, copies]"),
    ("u-zeta", "the solved map of U_ζ; params [re ζ, im ζ]"),
];

fn integer_param(form: &str, v: f64, min: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < min as f64 || v > 64.0 {
        return Err(Error::OutOfRange {
            op: "catalog_construct",
            detail: format!("form `{form}` needs an integer parameter >= {min}, got {v}"),
        });
    }
    Ok(v as usize)
}

fn expect_params(form: &str, params: &[f64], expected: usize) -> Result<()> {
    if params.len() != expected {
        return Err(Error::ParamCount { form: form.to_string(), expected, got: params.len() });
    }
    Ok(())
}

/// `ϖ_{l+copies}` with `F_q` substituted into the last `copies` slots.
fn diagonal_plus_roots(l: usize, q: usize, copies: usize) -> Result<IsometryMap> {
    let total = l + copies;
    let root = IsometryMap::pth_root(q)?;
    if total == 1 {
        return Ok(root);
    }
    let mut map = IsometryMap::diagonal(total)?;
    for slot in (l + 1..=total).rev() {
        map = sharp_compose(&map, &root, slot)?;
    }
    Ok(map)
}

/// Builds a catalog normal form with its constants attached.
pub fn catalog_construct(form: &str, params: &[f64]) -> Result<IsometryMap> {
    let f = |p| IsometryMap::pth_root(p);
    let d = |p| IsometryMap::diagonal(p);
    let s = |a: &IsometryMap, b: &IsometryMap, slot| sharp_compose(a, b, slot);
    let realized = match form {
        "bidisk-1" | "bidisk-2" => {
            expect_params(form, params, 1)?;
            let free = params[0];
            let (coeffs, constants) = if form == "bidisk-1" {
                (vec![ONE, ZERO], vec![1.0, free])
            } else {
                (vec![ZERO, ONE], vec![free, 1.0])
            };
            IsometryMap::linear(coeffs, ProductSpace::polydisk_with(constants)?, 1.0)?
        }
        "bidisk-3" => {
            expect_params(form, params, 1)?;
            let l1 = params[0];
            if !(l1 > 0.0 && l1 < 1.0) {
                return Err(Error::OutOfRange {
                    op: "catalog_construct",
                    detail: format!("bidisk-3 needs 0 < λ1 < 1, got {l1}"),
                });
            }
            IsometryMap::linear(vec![ONE, ONE], ProductSpace::polydisk_with(vec![l1, 1.0 - l1])?, 1.0)?
        }
        "bidisk-4" | "delta2-k1" => {
            expect_params(form, params, 0)?;
            f(2)?
        }
        "root" => {
            expect_params(form, params, 1)?;
            f(integer_param(form, params[0], 2)?)?
        }
        "diagonal" => {
            expect_params(form, params, 1)?;
            d(integer_param(form, params[0], 2)?)?
        }
        "equal-roots" => {
            expect_params(form, params, 2)?;
            diagonal_plus_roots(0, integer_param(form, params[0], 2)?, integer_param(form, params[1], 1)?)?
        }
        "diagonal-plus-roots" => {
            expect_params(form, params, 3)?;
            diagonal_plus_roots(
                integer_param(form, params[0], 1)?,
                integer_param(form, params[1], 2)?,
                integer_param(form, params[2], 1)?,
            )?
        }
        "u-zeta" => {
            expect_params(form, params, 2)?;
            let u = u_zeta(Complex64::new(params[0], params[1]))?;
            IsometryMap::from_solved(solve_isometry(&u, DEFAULT_ORDER)?)?
        }
        other => {
            expect_params(other, params, 0).map_err(|e| match named_form(other) {
                Some(_) => e,
                None => Error::UnknownForm(other.to_string()),
            })?;
            match named_form(other) {
                Some(build) => build(&f, &d, &s)?,
                None => return Err(Error::UnknownForm(other.to_string())),
            }
        }
    };
    let target = realized.target.clone();
    let k = realized.source_constant;
    IsometryMap::build(
        MapKind::Catalog { form: form.to_string(), params: params.to_vec(), realized: Box::new(realized) },
        target,
        k,
    )
}

type Ctor<'a> = &'a dyn Fn(usize) -> Result<IsometryMap>;
type Sharp<'a> = &'a dyn Fn(&IsometryMap, &IsometryMap, usize) -> Result<IsometryMap>;
type Builder = fn(Ctor, Ctor, Sharp) -> Result<IsometryMap>;

fn named_form(form: &str) -> Option<Builder> {
    let b: Builder = match form {
        "delta2-k2" => |_, d, _| d(2),
        "delta3-k1-a" => |f, _, _| f(3),
        "delta3-k1-b" => |f, _, s| s(&f(2)?, &f(2)?, 2),
        "delta3-k2" => |f, d, s| s(&d(2)?, &f(2)?, 2),
        "delta3-k3" => |_, d, _| d(3),
        "delta4-k1-a" => |f, _, _| f(4),
        "delta4-k1-b" => |f, _, s| s(&s(&f(2)?, &f(2)?, 2)?, &f(2)?, 3),
        "delta4-k1-c" => |f, _, s| s(&f(2)?, &f(3)?, 2),
        "delta4-k1-d" => |f, _, s| s(&f(3)?, &f(2)?, 2),
        "delta4-k1-e" => |f, _, s| s(&s(&f(2)?, &f(2)?, 1)?, &f(2)?, 3),
        "delta4-k2-a" => |f, d, s| s(&s(&d(2)?, &f(2)?, 2)?, &f(2)?, 1),
        "delta4-k2-b" => |f, d, s| s(&d(2)?, &s(&f(2)?, &f(2)?, 2)?, 2),
        "delta4-k2-c" => |f, d, s| s(&d(2)?, &f(3)?, 2),
        "delta4-k3" => |f, d, s| s(&d(3)?, &f(2)?, 3),
        "delta4-k4" => |_, d, _| d(4),
        _ => return None,
    };
    Some(b)
}

/// Default truncation order for descriptors that solve a unitary.
fn default_order() -> usize {
    DEFAULT_ORDER
}

/// JSON description of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapDescriptor {
    Identity,
    PthRoot {
        p: usize,
    },
    Diagonal {
        p: usize,
    },
    Sharp {
        outer: Box<MapDescriptor>,
        inner: Box<MapDescriptor>,
        slot: usize,
    },
    Catalog {
        form: String,
        #[serde(default)]
        params: Vec<f64>,
    },
    UZeta {
        zeta: Complex64,
        #[serde(default = "default_order")]
        order: usize,
    },
    Unitary {
        matrix: UnitaryMatrix,
        #[serde(default = "default_order")]
        order: usize,
    },
}

impl MapDescriptor {
    pub fn build(&self) -> Result<IsometryMap> {
        match self {
            MapDescriptor::Identity => Ok(IsometryMap::identity()),
            MapDescriptor::PthRoot { p } => IsometryMap::pth_root(*p),
            MapDescriptor::Diagonal { p } => IsometryMap::diagonal(*p),
            MapDescriptor::Sharp { outer, inner, slot } => sharp_compose(&outer.build()?, &inner.build()?, *slot),
            MapDescriptor::Catalog { form, params } => catalog_construct(form, params),
            MapDescriptor::UZeta { zeta, order } => IsometryMap::from_solved(solve_isometry(&u_zeta(*zeta)?, *order)?),
            MapDescriptor::Unitary { matrix, order } => IsometryMap::from_solved(solve_isometry(matrix, *order)?),
        }
    }
}

/// A holomorphic map defined on a product of balls, for block-structure tests.
pub trait ProductSourceMap: Sync {
    fn source(&self) -> &ProductSpace;
    fn target(&self) -> &ProductSpace;
    fn eval(&self, z: &[Complex64]) -> Result<Vec<Complex64>>;
}

/// `(z_1, …, z_q) ↦ (G_1(z_1), …, G_q(z_q))` from disk isometries sharing the
/// source constant `k`; the source is `Δ^q` with every constant equal to `k`.
#[derive(Debug, Clone)]
pub struct FactorizedMap {
    blocks: Vec<IsometryMap>,
    source: ProductSpace,
    target: ProductSpace,
}

impl FactorizedMap {
    pub fn new(blocks: Vec<IsometryMap>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Shape { op: "factorized_map", detail: "no blocks".into() });
        };
        let k = first.source_constant();
        if blocks.iter().any(|b| (b.source_constant() - k).abs() > 1e-12) {
            return Err(Error::Precondition {
                op: "factorized_map",
                detail: "all blocks must share the same source constant".into(),
            });
        }
        let q = blocks.len();
        let source = ProductSpace::polydisk_with(vec![k; q])?;
        let factors = blocks.iter().flat_map(|b| b.target().factors().to_vec()).collect();
        let constants = blocks.iter().flat_map(|b| b.target().constants().to_vec()).collect();
        let target = ProductSpace::new(factors, constants)?;
        Ok(FactorizedMap { blocks, source, target })
    }

    pub fn blocks(&self) -> &[IsometryMap] {
        &self.blocks
    }
}

impl ProductSourceMap for FactorizedMap {
    fn source(&self) -> &ProductSpace {
        &self.source
    }

    fn target(&self) -> &ProductSpace {
        &self.target
    }

    fn eval(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        if z.len() != self.blocks.len() {
            return Err(Error::Shape {
                op: "factorized_map",
                detail: format!("expected {} coordinates, got {}", self.blocks.len(), z.len()),
            });
        }
        let mut out = Vec::with_capacity(self.target.dimension());
        for (b, zi) in self.blocks.iter().zip(z) {
            out.extend(b.eval(*zi)?);
        }
        Ok(out)
    }
}

/// `Z ↦ M Z` between products of balls (`M` row-major, target × source dimensions).
#[derive(Debug, Clone)]
pub struct LinearProductMap {
    source: ProductSpace,
    target: ProductSpace,
    matrix: Vec<Vec<Complex64>>,
}

impl LinearProductMap {
    pub fn new(source: ProductSpace, target: ProductSpace, matrix: Vec<Vec<Complex64>>) -> Result<Self> {
        if matrix.len() != target.dimension() || matrix.iter().any(|r| r.len() != source.dimension()) {
            return Err(Error::Shape {
                op: "linear_product_map",
                detail: format!("matrix must be {}x{}", target.dimension(), source.dimension()),
            });
        }
        Ok(LinearProductMap { source, target, matrix })
    }
}

impl ProductSourceMap for LinearProductMap {
    fn source(&self) -> &ProductSpace {
        &self.source
    }

    fn target(&self) -> &ProductSpace {
        &self.target
    }

    fn eval(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        if z.len() != self.source.dimension() {
            return Err(Error::Shape { op: "linear_product_map", detail: "wrong source dimension".into() });
        }
        Ok(self.matrix.iter().map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cayley_anchors() {
        assert!((cayley(CayleyDirection::DiskToHalfPlane, ZERO).unwrap() - I).norm() < 1e-16);
        assert!(cayley(CayleyDirection::HalfPlaneToDisk, I).unwrap().norm() < 1e-16);
        let z = c(0.3, 0.2);
        let t = cayley(CayleyDirection::DiskToHalfPlane, z).unwrap();
        assert!((cayley(CayleyDirection::HalfPlaneToDisk, t).unwrap() - z).norm() <= 1e-15);
        assert!(cayley(CayleyDirection::DiskToHalfPlane, ONE).is_err());
        assert!(cayley(CayleyDirection::HalfPlaneToDisk, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn square_root_at_origin() {
        let v = eval_pth_root(2, ZERO).unwrap();
        let e1 = Complex64::from_polar(1.0, PI / 4.0);
        let e3 = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
        assert!((v[0] - cayley_to_disk(e1)).norm() < 1e-15);
        assert!((v[1] - cayley_to_disk(e3)).norm() < 1e-15);
    }

    #[test]
    fn square_root_functional_equation_at_half() {
        let w = c(0.5, 0.0);
        let f = IsometryMap::pth_root(2).unwrap();
        let v = f.eval_normalized(w).unwrap();
        let lhs = (1.0 - v[0].norm_sqr()) * (1.0 - v[1].norm_sqr());
        assert!((lhs - 0.75).abs() < 1e-12);
    }

    #[test]
    fn diagonal_examples() {
        assert_eq!(eval_diagonal(3, c(0.4, 0.0)), vec![c(0.4, 0.0); 3]);
        assert_eq!(eval_diagonal(2, ZERO), vec![ZERO; 2]);
        assert_eq!(IsometryMap::diagonal(3).unwrap().source_constant(), 3.0);
    }

    #[test]
    fn sharp_dimension_and_constants() {
        let f2 = IsometryMap::pth_root(2).unwrap();
        let h = sharp_compose(&f2, &f2, 2).unwrap();
        assert_eq!(h.dimension(), 3);
        assert_eq!(h.target().constants(), &[1.0, 1.0, 1.0]);
        let d2 = IsometryMap::diagonal(2).unwrap();
        let dd = sharp_compose(&d2, &d2, 1).unwrap();
        assert_eq!(dd.target().constants(), &[0.5, 0.5, 1.0]);
        assert_eq!(dd.source_constant(), 2.0);
        assert!(sharp_compose(&f2, &f2, 3).is_err());
        assert!(sharp_compose(&f2, &f2, 0).is_err());
    }

    #[test]
    fn sharp_with_identity_is_unchanged() {
        let f3 = IsometryMap::pth_root(3).unwrap();
        let h = sharp_compose(&f3, &IsometryMap::identity(), 2).unwrap();
        let w = c(0.2, -0.3);
        assert_eq!(h.eval(w).unwrap(), f3.eval(w).unwrap());
    }

    #[test]
    fn catalog_bidisk_forms() {
        let m = catalog_construct("bidisk-3", &[0.3]).unwrap();
        assert_eq!(m.eval(c(0.2, 0.1)).unwrap(), vec![c(0.2, 0.1); 2]);
        let consts = m.target().constants();
        assert!((consts[0] - 0.3).abs() < 1e-15 && (consts[1] - 0.7).abs() < 1e-15);
        let m = catalog_construct("bidisk-1", &[5.0]).unwrap();
        assert_eq!(m.eval(c(0.2, 0.1)).unwrap(), vec![c(0.2, 0.1), ZERO]);
        assert_eq!(m.target().constants(), &[1.0, 5.0]);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(catalog_construct("nope", &[]), Err(Error::UnknownForm(_))));
        assert!(matches!(catalog_construct("bidisk-3", &[]), Err(Error::ParamCount { .. })));
        assert!(matches!(catalog_construct("delta4-k1-a", &[1.0]), Err(Error::ParamCount { .. })));
        assert!(catalog_construct("root", &[2.5]).is_err());
    }

    #[test]
    fn catalog_fourth_root_is_f4() {
        let m = catalog_construct("delta4-k1-a", &[]).unwrap();
        let f4 = IsometryMap::pth_root(4).unwrap();
        let w = c(0.1, 0.6);
        assert_eq!(m.eval(w).unwrap(), f4.eval(w).unwrap());
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"kind":"sharp","outer":{"kind":"pth_root","p":2},"inner":{"kind":"pth_root","p":2},"slot":2}"#;
        let d: MapDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(d.build().unwrap().dimension(), 3);
        let d: MapDescriptor = serde_json::from_str(r#"{"kind":"catalog","form":"bidisk-3","params":[0.3]}"#).unwrap();
        assert_eq!(d.build().unwrap().dimension(), 2);
        assert!(serde_json::from_str::<MapDescriptor>(r#"{"kind":"pth_root","q":2}"#).is_err());
    }

    #[test]
    fn canonical_form_absorbs_source_rotation() {
        let f = IsometryMap::pth_root(3).unwrap();
        let form = f.canonical_form().unwrap();
        assert_eq!(form.order, 1);
        let v = f.eval_canonical(&form, c(1e-5, 0.0)).unwrap();
        // Leading coefficient of the chosen component is now positive real.
        let lead = v[form.component] / 1e-5;
        assert!(lead.im.abs() < 1e-3 * lead.norm() && lead.re > 0.0);
    }
}
