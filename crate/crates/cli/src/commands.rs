//! Request schemas and runners for each subcommand.
//!
//! A request is deserialized with defaults filled in; the resolved request is
//! echoed as the report's `config` so that a report alone reproduces its run.

use std::f64::consts::PI;

use isoball::domains::{det_minor_expansion, ProductSpace};
use isoball::maps::{IsometryMap, MapDescriptor};
use isoball::monodromy::sheeting_report;
use isoball::solver::{solve_isometry, u_zeta, UnitaryMatrix, POLARIZED_TOL, RELATION_TOL};
use isoball::verify::{
    check_functional_equation, check_metric_pullback, check_polarized, check_properness, congruence_test,
    default_proper_radii, disk_samples, polarized_pairs, rational_rigidity_check, ResidualReport, Verdict, METRIC_STEP,
};
use isoball::{Complex64, DEFAULT_ORDER};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::Failure;

/// What a subcommand hands back to be reported.
pub struct Outcome {
    pub pass: bool,
    pub config: Value,
    pub result: Value,
    /// `(w, residual)` pairs for `--emit-samples`; empty for checks without samples.
    pub samples: Vec<(Complex64, f64)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn outcome<C: Serialize, R: Serialize>(pass: bool, config: &C, result: &R) -> Outcome {
    Outcome { pass, config: to_value(config), result: to_value(result), samples: Vec::new() }
}

fn residual_outcome<C: Serialize>(config: &C, report: ResidualReport) -> Outcome {
    let mut out = outcome(report.pass, config, &report);
    out.samples = report.samples;
    out
}

/// Accepts a bare number wherever a complex number `[re, im]` is expected,
/// `depth` levels of arrays below `v`.
fn complexify(v: Value, depth: usize) -> Value {
    match v {
        Value::Number(n) if depth == 0 => json!([n, 0.0]),
        Value::Array(items) if depth > 0 => Value::Array(items.into_iter().map(|x| complexify(x, depth - 1)).collect()),
        other => other,
    }
}

/// Applies `complexify` to the complex fields of every map descriptor nested in `v`.
fn complexify_descriptors(v: &mut Value) {
    match v {
        Value::Object(m) => {
            let key = match m.get("kind").and_then(Value::as_str) {
                Some("u_zeta") => Some(("zeta", 0)),
                Some("unitary") => Some(("matrix", 2)),
                _ => None,
            };
            if let Some((key, depth)) = key {
                if let Some(x) = m.remove(key) {
                    m.insert(key.to_string(), complexify(x, depth));
                }
            }
            m.values_mut().for_each(complexify_descriptors);
        }
        Value::Array(items) => items.iter_mut().for_each(complexify_descriptors),
        _ => {}
    }
}

fn parse<T: DeserializeOwned>(mut doc: Value, complex_keys: &[(&str, usize)]) -> Result<T, Failure> {
    complexify_descriptors(&mut doc);
    if let Value::Object(m) = &mut doc {
        for (key, depth) in complex_keys {
            if let Some(v) = m.remove(*key) {
                m.insert((*key).to_string(), complexify(v, *depth));
            }
        }
    }
    serde_json::from_value(doc).map_err(|e| Failure::validation("parse_request", e.to_string()))
}

pub fn dispatch(name: &str, doc: Value) -> Result<Outcome, Failure> {
    match name {
        "construct" => construct(parse(doc, &[])?),
        "solve" => solve(parse(doc, &[("zeta", 0), ("matrix", 2)])?),
        "verify" => verify(parse(doc, &[])?),
        "polarize" => polarize(parse(doc, &[])?),
        "metric" => metric(parse(doc, &[])?),
        "proper" => proper(parse(doc, &[])?),
        "sheeting" => sheeting(parse(doc, &[])?),
        "congruence" => congruence(parse(doc, &[])?),
        "kernel-check" => kernel_check(parse(doc, &[("matrix", 2)])?),
        "rigidity" => rigidity(parse(doc, &[])?),
        other => Err(Failure::validation("dispatch", format!("unknown command `{other}`"))),
    }
}

/// A map with optional overrides of its target and source constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSelection {
    pub map: MapDescriptor,
    #[serde(default)]
    pub constants: Option<Vec<f64>>,
    #[serde(default)]
    pub k: Option<f64>,
}

impl MapSelection {
    /// Builds the map and fills in the constants it defaults to.
    fn resolve(&mut self) -> Result<(IsometryMap, ProductSpace, f64), Failure> {
        let f = self.map.build()?;
        let space = match &self.constants {
            Some(c) => f.target().with_constants(c.clone())?,
            None => f.target().clone(),
        };
        let k = self.k.unwrap_or(f.source_constant());
        self.constants = Some(space.constants().to_vec());
        self.k = Some(k);
        Ok((f, space, k))
    }
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

// ---------------------------------------------------------------------------
// construct
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstructRequest {
    #[serde(flatten)]
    selection: MapSelection,
    #[serde(default = "construct_samples")]
    samples: usize,
    #[serde(default = "construct_radius")]
    radius: f64,
}

fn construct_samples() -> usize {
    8
}

fn construct_radius() -> f64 {
    0.5
}

#[derive(Serialize)]
struct SampleValue {
    w: Complex64,
    value: Vec<Complex64>,
    /// `1 - ‖F_i(w)‖²` per target factor.
    brackets: Vec<f64>,
}

#[derive(Serialize)]
struct ConstructResult {
    dimension: usize,
    target: ProductSpace,
    source_constant: f64,
    base_point: Vec<Complex64>,
    values: Vec<SampleValue>,
}

fn construct(mut req: ConstructRequest) -> Result<Outcome, Failure> {
    let (f, space, k) = req.selection.resolve()?;
    let values = disk_samples(req.samples, req.radius)
        .into_iter()
        .map(|w| {
            let value = f.eval(w)?;
            let brackets = space.brackets(&value);
            Ok(SampleValue { w, value, brackets })
        })
        .collect::<Result<Vec<_>, isoball::Error>>()?;
    let pass = values.iter().all(|s| s.brackets.iter().all(|b| *b > 0.0));
    let result = ConstructResult {
        dimension: f.dimension(),
        target: space,
        source_constant: k,
        base_point: f.base_point().to_vec(),
        values,
    };
    Ok(outcome(pass, &req, &result))
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveRequest {
    #[serde(default)]
    zeta: Option<Complex64>,
    #[serde(default)]
    matrix: Option<UnitaryMatrix>,
    #[serde(default = "default_order")]
    order: usize,
    #[serde(default)]
    tol: Option<f64>,
}

#[derive(Serialize)]
struct SolveResult {
    solved: isoball::solver::SolvedIsometry,
    degree_r: Option<usize>,
    /// `deg R - 1`: the ball dimension the map reduces to up to congruence.
    minimal_ball_dimension: Option<usize>,
    polarized_tolerance: f64,
    relation_tolerance: f64,
}

fn solve(mut req: SolveRequest) -> Result<Outcome, Failure> {
    let u = match (&req.zeta, &req.matrix) {
        (Some(z), None) => u_zeta(*z)?,
        (None, Some(m)) => m.clone(),
        _ => return Err(Failure::validation("solve", "give exactly one of `zeta` and `matrix`")),
    };
    let polarized_tolerance = req.tol.unwrap_or(POLARIZED_TOL);
    req.tol = Some(polarized_tolerance);
    let solved = solve_isometry(&u, req.order)?;
    let r = &solved.residuals;
    let relations_ok = [r.inverse_relation, r.component_relation].iter().flatten().all(|x| *x <= RELATION_TOL);
    let pass = r.polarized <= polarized_tolerance && relations_ok;
    let degree_r = solved.rational.as_ref().map(|p| p.r.degree());
    let minimal_ball_dimension = solved.minimal_ball_dimension();
    let result =
        SolveResult { solved, degree_r, minimal_ball_dimension, polarized_tolerance, relation_tolerance: RELATION_TOL };
    Ok(outcome(pass, &req, &result))
}

// ---------------------------------------------------------------------------
// verify, polarize, metric
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResidualRequest {
    #[serde(flatten)]
    selection: MapSelection,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    tol: Option<f64>,
    /// Finite-difference step; used by `metric` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
}

impl ResidualRequest {
    fn fill(&mut self, samples: usize, radius: f64, tol: f64) -> (usize, f64, f64) {
        let s = *self.samples.get_or_insert(samples);
        let r = *self.radius.get_or_insert(radius);
        let t = *self.tol.get_or_insert(tol);
        (s, r, t)
    }
}

fn verify(mut req: ResidualRequest) -> Result<Outcome, Failure> {
    let (f, space, k) = req.selection.resolve()?;
    let (samples, radius, tol) = req.fill(500, 0.9, 1e-10);
    let report = check_functional_equation(&f, &space, k, &disk_samples(samples, radius), tol)?;
    Ok(residual_outcome(&req, report))
}

fn polarize(mut req: ResidualRequest) -> Result<Outcome, Failure> {
    let (f, space, k) = req.selection.resolve()?;
    let (samples, radius, tol) = req.fill(500, 0.6, 1e-10);
    let report = check_polarized(&f, &space, k, &polarized_pairs(samples, radius), tol)?;
    Ok(residual_outcome(&req, report))
}

fn metric(mut req: ResidualRequest) -> Result<Outcome, Failure> {
    let (f, space, k) = req.selection.resolve()?;
    let (samples, radius, tol) = req.fill(200, 0.8, 1e-6);
    let step = *req.step.get_or_insert(METRIC_STEP);
    let report = check_metric_pullback(&f, &space, k, &disk_samples(samples, radius), step, tol)?;
    Ok(residual_outcome(&req, report))
}

// ---------------------------------------------------------------------------
// proper
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProperRequest {
    map: MapDescriptor,
    /// 1-based target factor; defaults to the last one.
    #[serde(default)]
    factor: Option<usize>,
    #[serde(default = "default_proper_radii")]
    radii: Vec<f64>,
    #[serde(default = "proper_angles")]
    angles: usize,
    #[serde(default = "proper_gap")]
    gap_tolerance: f64,
}

fn proper_angles() -> usize {
    512
}

fn proper_gap() -> f64 {
    0.01
}

fn proper(mut req: ProperRequest) -> Result<Outcome, Failure> {
    let f = req.map.build()?;
    let ranges = f.target().ranges();
    let factor = *req.factor.get_or_insert(ranges.len());
    if factor == 0 || factor > ranges.len() {
        return Err(Failure::validation(
            "proper",
            format!("factor {factor} out of range 1..={} for this target", ranges.len()),
        ));
    }
    let range = ranges[factor - 1].clone();
    let report =
        check_properness(|w| Ok(f.eval(w)?[range.clone()].to_vec()), &req.radii, req.angles, req.gap_tolerance);
    Ok(outcome(report.proper, &req, &report))
}

// ---------------------------------------------------------------------------
// sheeting
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SheetingRequest {
    map: MapDescriptor,
    #[serde(default)]
    k: Option<f64>,
}

fn sheeting(mut req: SheetingRequest) -> Result<Outcome, Failure> {
    let f = req.map.build()?;
    let k = *req.k.get_or_insert(f.source_constant());
    let report = sheeting_report(&f, k)?;
    Ok(outcome(report.all_pass(), &req, &report))
}

// ---------------------------------------------------------------------------
// congruence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CongruenceRequest {
    f: MapDescriptor,
    g: MapDescriptor,
}

fn congruence(req: CongruenceRequest) -> Result<Outcome, Failure> {
    let f = req.f.build()?;
    let g = req.g.build()?;
    let (Some(fs), Some(gs)) = (f.solved(), g.solved()) else {
        return Err(Failure::validation("congruence", "both maps must be solved from unitary data"));
    };
    let verdict = congruence_test(fs, gs)?;
    Ok(outcome(verdict.verdict != Verdict::Inconclusive, &req, &verdict))
}

// ---------------------------------------------------------------------------
// kernel-check
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRequest {
    #[serde(default = "kernel_p")]
    p: usize,
    #[serde(default = "kernel_q")]
    q: usize,
    #[serde(default = "kernel_samples")]
    samples: usize,
    /// When present, only this `p × q` matrix is checked.
    #[serde(default)]
    matrix: Option<Vec<Vec<Complex64>>>,
    #[serde(default = "kernel_tol")]
    tol: f64,
}

fn kernel_p() -> usize {
    2
}

fn kernel_q() -> usize {
    3
}

fn kernel_samples() -> usize {
    50
}

fn kernel_tol() -> f64 {
    1e-12
}

#[derive(Serialize)]
struct KernelResult {
    checked: usize,
    max_disagreement: f64,
    /// `(direct, expansion)` at the worst matrix.
    worst: (f64, f64),
}

/// Deterministic `p × q` matrices of Frobenius norm spread over `(0.05, 0.95)`,
/// hence strict contractions.
fn contraction_family(p: usize, q: usize, count: usize) -> Vec<DMatrix<Complex64>> {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    (0..count)
        .map(|s| {
            let m = DMatrix::from_fn(p, q, |i, j| {
                let t = (s * p * q + i * q + j + 1) as f64;
                Complex64::from_polar((t * GOLDEN).fract() + 0.1, 2.0 * PI * (t * GOLDEN * GOLDEN).fract())
            });
            let size = 0.05 + 0.9 * (s as f64 + 0.5) / count as f64;
            m.map(|z| z * (size / m.norm()))
        })
        .collect()
}

fn kernel_check(mut req: KernelRequest) -> Result<Outcome, Failure> {
    let matrices = match &req.matrix {
        Some(rows) => {
            let p = rows.len();
            let q = rows.first().map_or(0, Vec::len);
            if p == 0 || rows.iter().any(|r| r.len() != q) {
                return Err(Failure::validation("kernel_check", "matrix rows must be nonempty and of equal length"));
            }
            req.p = p;
            req.q = q;
            req.samples = 1;
            vec![DMatrix::from_row_slice(p, q, &rows.concat())]
        }
        None => contraction_family(req.p, req.q, req.samples),
    };
    let mut result = KernelResult { checked: 0, max_disagreement: 0.0, worst: (0.0, 0.0) };
    for z in &matrices {
        let (direct, expansion) = det_minor_expansion(z)?;
        let d = (direct - expansion).abs();
        if result.checked == 0 || d > result.max_disagreement {
            result.max_disagreement = d;
            result.worst = (direct, expansion);
        }
        result.checked += 1;
    }
    Ok(outcome(result.max_disagreement <= req.tol, &req, &result))
}

// ---------------------------------------------------------------------------
// rigidity
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidityRequest {
    #[serde(flatten)]
    selection: MapSelection,
}

fn rigidity(mut req: RigidityRequest) -> Result<Outcome, Failure> {
    let (f, space, k) = req.selection.resolve()?;
    let report = rational_rigidity_check(&f, &space, k)?;
    let pass = report.isometry.pass && !report.counterexample;
    Ok(outcome(pass, &req, &report))
}
