//! Lelong-Jensen terms, Lelong numbers relative to weights, `m`-Lelong
//! numbers, and the concave-case diagnostics built on them.

use serde::Serialize;

use crate::calculus::{
    alpha_form, boundary_integral, ddsharp, dsharp, eval_form, integrate_many, quadratic_weight_params, Estimate, Method,
    QuadratureSpec, Region,
};
use crate::currents::{Current, MeasureEstimate, SmoothCurrent};
use crate::error::{Error, Result};
use crate::exterior::{beta_power, Superform};
use crate::field::ScalarField;
use crate::positivity::{form_is_weakly_positive, is_m_convex_tol, sample_points, PositivityVerdict, Sampler, Witness};
use crate::quadrature::power_law_exponent;

/// Slack on sampled sign checks relative to the magnitude of the sampled form.
const SPOT_TOL: f64 = 1e-9;

/// Sampled evidence that `phi^{1/2}` is convex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqrtConvexCertificate {
    pub exact: bool,
    pub points: Vec<Vec<f64>>,
}

/// A positive weight `phi` with `omega = dd# phi` and `alpha = dd# phi^{1/2}`.
#[derive(Clone, Debug)]
pub struct Weight {
    pub phi: ScalarField,
    pub omega: Superform<ScalarField>,
    pub alpha: Superform<ScalarField>,
    pub sqrt_convex: Option<SqrtConvexCertificate>,
    quadratic: Option<(Vec<f64>, f64)>,
}

impl Weight {
    pub fn new(phi: ScalarField) -> Result<Self> {
        let omega = ddsharp(&Superform::scalar(phi.n(), phi.clone()))?;
        let alpha = alpha_form(&phi)?;
        let quadratic = quadratic_weight_params(&phi);
        let sqrt_convex = quadratic.as_ref().map(|_| SqrtConvexCertificate { exact: true, points: Vec::new() });
        Ok(Weight { phi, omega, alpha, sqrt_convex, quadratic })
    }

    /// `|x - a|^2`.
    pub fn euclidean(a: &[f64]) -> Result<Self> {
        Self::new(ScalarField::norm_sq(a.len(), a))
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    /// `(a, lambda)` when `phi = lambda |x - a|^2`.
    pub fn quadratic(&self) -> Option<&(Vec<f64>, f64)> {
        self.quadratic.as_ref()
    }

    /// Samples the Hessian of `phi^{1/2}` in `[lo, hi]` away from `{phi = 0}`.
    pub fn certify_sqrt_convex(&mut self, lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Result<PositivityVerdict> {
        let root = self.phi.clone().sqrt();
        let mut points = Vec::new();
        for x in sample_points(lo, hi, 4 * count, seed, None) {
            if self.phi.eval(&x)? > 1e-8 {
                points.push(x);
            }
            if points.len() == count {
                break;
            }
        }
        let verdict = is_m_convex_tol(&root, &points, self.n(), 1e-9, 1e-9)?;
        if !verdict.is_false() {
            self.sqrt_convex = Some(SqrtConvexCertificate { exact: false, points });
        }
        Ok(verdict)
    }

    pub fn sublevel(&self, r: f64) -> Region {
        Region::Sublevel { phi: self.phi.clone(), r, center: self.quadratic.as_ref().map(|q| q.0.clone()) }
    }

    pub fn shell(&self, r1: f64, r2: f64) -> Region {
        Region::Shell { phi: self.phi.clone(), r1, r2, center: self.quadratic.as_ref().map(|q| q.0.clone()) }
    }
}

/// `1 / (2^p r^{p/2})`.
pub fn normalization(p: usize, r: f64) -> f64 {
    1.0 / (2f64.powi(p as i32) * r.powf(p as f64 / 2.0))
}

/// `int_a^b c(t) dt` for `c(t) = 1 / (2^p t^{p/2})`.
fn normalization_integral(p: usize, a: f64, b: f64) -> f64 {
    let k = 2f64.powi(-(p as i32));
    if p == 2 {
        k * (b / a).ln()
    } else {
        let e = 1.0 - p as f64 / 2.0;
        k * (b.powf(e) - a.powf(e)) / e
    }
}

/// `W_{r2}(a) = int_a^{r2} (c(t) - c(r2)) dt`.
fn tail_weight(p: usize, a: f64, r2: f64) -> f64 {
    if a >= r2 {
        return 0.0;
    }
    normalization_integral(p, a, r2) - (r2 - a) * normalization(p, r2)
}

/// Hypotheses a caller may declare for `T ^ omega^{p-1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Declared {
    #[default]
    Undeclared,
    Closed,
    Convex,
    Concave,
}

/// Record of a sampled hypothesis check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub status: String,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LelongOptions {
    pub declared: Declared,
    pub sampler: Sampler,
    pub spot_points: usize,
}

impl Default for LelongOptions {
    fn default() -> Self {
        LelongOptions { declared: Declared::Undeclared, sampler: Sampler { samples: 64, seed: 7 }, spot_points: 24 }
    }
}

impl LelongOptions {
    pub fn declared(declared: Declared) -> Self {
        LelongOptions { declared, ..Default::default() }
    }
}

/// Each term of the Lelong-Jensen identity between two levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JensenTerms {
    pub r1: f64,
    pub r2: f64,
    /// `c(r2) int_{B(r2)} T ^ omega^p`.
    pub outer_mass: MeasureEstimate,
    /// `c(r1) int_{B(r1)} T ^ omega^p`.
    pub inner_mass: MeasureEstimate,
    /// `int_{B(r1, r2)} T ^ alpha^p`.
    pub shell: MeasureEstimate,
    /// `(c(r1) - c(r2)) int_0^{r1} dt int_{B(t)} dd#T ^ omega^{p-1}`.
    pub dd_inner: MeasureEstimate,
    /// `int_{r1}^{r2} (c(t) - c(r2)) dt int_{B(t)} dd#T ^ omega^{p-1}`.
    pub dd_outer: MeasureEstimate,
    pub residual: f64,
    pub relative_residual: f64,
    pub closed: bool,
}

fn est(e: &Estimate, method: &str) -> MeasureEstimate {
    MeasureEstimate { value: e.value, stderr: e.stderr, method: method.into() }
}

fn method_name(quad: &QuadratureSpec) -> &'static str {
    match quad.method {
        Method::MonteCarlo { .. } => "monte_carlo",
        Method::TensorGrid { .. } => "tensor_grid",
        Method::Polar { .. } => "polar",
    }
}

fn bidimension(form: &Superform<ScalarField>) -> Result<usize> {
    let (a, b) = form.bidegree();
    if a != b {
        return Err(Error::Bidegree(format!("current of bidegree ({a},{b}) has no bidimension (p,p)")));
    }
    Ok(form.n() - a)
}

fn is_zero_form(f: &Superform<ScalarField>) -> bool {
    f.terms().values().all(|c| c.is_identically_zero())
}

/// Lelong-Jensen identity terms and residual for a smooth current.
pub fn jensen_terms(t: &SmoothCurrent, w: &Weight, r1: f64, r2: f64, quad: &QuadratureSpec) -> Result<JensenTerms> {
    if !(r1 > 0.0 && r2 >= r1) {
        return Err(Error::Invalid(format!("need r2 >= r1 > 0, got r1 = {r1}, r2 = {r2}")));
    }
    let n = t.n();
    if w.n() != n {
        return Err(Error::Dimension("weight and current disagree on n".into()));
    }
    let p = bidimension(&t.form)?;
    let outer = w.sublevel(r2);
    if outer.natural_bbox().is_none() && quad.bbox.is_none() {
        return Err(Error::Invalid("quadrature bounding box missing for a non-quadratic weight".into()));
    }
    let tw = t.form.wedge(&w.omega.pow(p)?)?;
    let ta = t.form.wedge(&w.alpha.pow(p)?)?;
    let ddt = ddsharp(&t.form)?;
    let closed = is_zero_form(&ddt);
    let h = if closed || p == 0 { None } else { Some(ddt.wedge(&w.omega.pow(p - 1)?)?) };
    let (c1, c2) = (normalization(p, r1), normalization(p, r2));
    let phi = &w.phi;
    let method = method_name(quad);
    // [inner mass, shell mass, shell alpha, dd inner, dd outer]
    let sums: Vec<Estimate> = if matches!(quad.method, Method::MonteCarlo { .. }) {
        integrate_many(&outer, quad, 5, |x, out| {
            let f = phi.eval(x)?;
            if !(f > 0.0) {
                return Err(Error::Domain(format!("weight is not positive at {x:?}")));
            }
            let m = eval_form(&tw, x)?.top_density()?;
            if f < r1 {
                out[0] = m;
            } else {
                out[1] = m;
                out[2] = eval_form(&ta, x)?.top_density()?;
            }
            if let Some(h) = &h {
                let hv = eval_form(h, x)?.top_density()?;
                out[3] = hv * (r1 - f).max(0.0);
                out[4] = hv * tail_weight(p, f.max(r1), r2);
            }
            Ok(())
        })?
    } else {
        let inner = integrate_many(&w.sublevel(r1), quad, 3, |x, out| {
            let f = phi.eval(x)?;
            out[0] = eval_form(&tw, x)?.top_density()?;
            if let Some(h) = &h {
                let hv = eval_form(h, x)?.top_density()?;
                out[1] = hv * (r1 - f);
                out[2] = hv * tail_weight(p, r1, r2);
            }
            Ok(())
        })?;
        let shell = if r2 == r1 {
            vec![Estimate::exact(0.0); 3]
        } else {
            integrate_many(&w.shell(r1, r2), quad, 3, |x, out| {
            let f = phi.eval(x)?;
            out[0] = eval_form(&tw, x)?.top_density()?;
            out[1] = eval_form(&ta, x)?.top_density()?;
            if let Some(h) = &h {
                out[2] = eval_form(h, x)?.top_density()? * tail_weight(p, f, r2);
            }
            Ok(())
        })?
        };
        vec![inner[0].clone(), shell[0].clone(), shell[1].clone(), inner[1].clone(), inner[2].combine(&shell[2], 1.0)]
    };
    let inner_mass = sums[0].scaled(c1);
    let outer_mass = sums[0].combine(&sums[1], 1.0).scaled(c2);
    let dd_inner = if closed { Estimate::exact(0.0) } else { sums[3].scaled(c1 - c2) };
    let dd_outer = if closed { Estimate::exact(0.0) } else { sums[4].clone() };
    let lhs = outer_mass.value - inner_mass.value;
    let rhs = sums[2].value + dd_inner.value + dd_outer.value;
    let residual = (lhs - rhs).abs();
    let scale = lhs.abs().max(sums[2].value.abs() + dd_inner.value.abs() + dd_outer.value.abs()).max(1e-300);
    Ok(JensenTerms {
        r1,
        r2,
        outer_mass: est(&outer_mass, method),
        inner_mass: est(&inner_mass, method),
        shell: est(&sums[2], method),
        dd_inner: est(&dd_inner, method),
        dd_outer: est(&dd_outer, method),
        residual,
        relative_residual: residual / scale,
        closed,
    })
}

/// `c(r) int_{S(r)} T ^ d#phi ^ omega^{p-1}` for a quadratic weight, via a sphere rule.
pub fn boundary_functional(t: &SmoothCurrent, w: &Weight, r: f64, res: usize) -> Result<f64> {
    let p = bidimension(&t.form)?;
    if p == 0 {
        return Err(Error::Invalid("boundary functional needs p >= 1".into()));
    }
    if w.quadratic().is_none() {
        return Err(Error::Invalid("boundary functional needs a quadratic weight".into()));
    }
    let dphi = dsharp(&Superform::scalar(w.n(), w.phi.clone()))?;
    let form = t.form.wedge(&dphi)?.wedge(&w.omega.pow(p - 1)?)?;
    Ok(normalization(p, r) * boundary_integral(&form, &w.sublevel(r), res)?)
}

/// Lelong numbers on a decreasing radius grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LelongReport {
    pub r_grid: Vec<f64>,
    pub nu: Vec<MeasureEstimate>,
    pub monotone_ok: bool,
    pub limit_estimate: f64,
    /// `[0, nu(r_min)]` when the sequence is monotone.
    pub limit_bracket: Option<(f64, f64)>,
    /// Slope of `log nu` against `log r`.
    pub fitted_exponent: Option<f64>,
    /// `Some(false)` when the values blow up as `r -> 0`.
    pub limit_exists: Option<bool>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub quadrature: QuadratureSpec,
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::Invalid("empty radius grid".into()));
    }
    if r_grid.iter().any(|r| !(*r > 0.0)) || r_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("radius grid must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Geometric grid `r0, r0/2, ...` with `count` points.
pub fn default_grid(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 * 0.5f64.powi(k as i32)).collect()
}

/// `nu[i] >= nu[i+1] - 3 (se_i + se_{i+1})` along a decreasing grid.
pub fn is_monotone(nu: &[MeasureEstimate]) -> bool {
    nu.windows(2).all(|w| w[0].value >= w[1].value - 3.0 * (w[0].stderr + w[1].stderr) - 1e-10 * w[1].value.abs())
}

fn sample_box(region: &Region, quad: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    quad.bbox
        .clone()
        .or_else(|| region.natural_bbox())
        .ok_or_else(|| Error::Invalid("quadrature bounding box missing for this region".into()))
}

fn refuted(name: &str, witness: Option<&Witness>) -> Error {
    let detail = witness.map(|w| format!(": {} (value {:e}) at {:?}", w.detail, w.value, w.point)).unwrap_or_default();
    Error::Hypothesis(format!("{name} fails{detail}"))
}

/// Samples weak positivity of a smooth current at points of `[lo, hi]`.
pub fn check_weakly_positive(
    form: &Superform<ScalarField>,
    lo: &[f64],
    hi: &[f64],
    opts: &LelongOptions,
    sign: f64,
    avoid: Option<(&[f64], f64)>,
) -> Result<HypothesisCheck> {
    let name = if sign > 0.0 { "weakly_positive" } else { "weakly_negative" };
    let pts = sample_points(lo, hi, opts.spot_points, opts.sampler.seed, avoid);
    for x in &pts {
        let f = eval_form(form, x)?.scale(&sign);
        let v = form_is_weakly_positive(&f, opts.sampler)?;
        if v.is_false() {
            let mut w = v.witness().cloned();
            if let Some(w) = w.as_mut() {
                w.point = Some(x.clone());
            }
            return Err(refuted(name, w.as_ref()));
        }
    }
    Ok(HypothesisCheck { name: name.into(), status: "plausibly_true".into(), samples: pts.len() })
}

/// Spot-checks the sign of `dd#(T ^ omega^{p-1})`, a top-degree measure.
fn check_declared(
    t: &SmoothCurrent,
    w: &Weight,
    lo: &[f64],
    hi: &[f64],
    opts: &LelongOptions,
    avoid: Option<(&[f64], f64)>,
) -> Result<HypothesisCheck> {
    let p = bidimension(&t.form)?;
    let (name, sign) = match opts.declared {
        Declared::Undeclared => return Ok(HypothesisCheck { name: "none".into(), status: "undeclared".into(), samples: 0 }),
        Declared::Closed => ("closed", 0.0),
        Declared::Convex => ("convex", 1.0),
        Declared::Concave => ("concave", -1.0),
    };
    if p == 0 {
        return Ok(HypothesisCheck { name: name.into(), status: "vacuous".into(), samples: 0 });
    }
    let s = ddsharp(&t.form.wedge(&w.omega.pow(p - 1)?)?)?;
    let pts = sample_points(lo, hi, opts.spot_points, opts.sampler.seed ^ 0x5eed, avoid);
    for x in &pts {
        let v = eval_form(&s, x)?.top_density()?;
        let mag = eval_form(&t.form, x)?.max_abs().max(1.0);
        let bad = if sign == 0.0 { v.abs() > SPOT_TOL * mag } else { sign * v < -SPOT_TOL * mag };
        if bad {
            let wit = Witness { detail: format!("dd#(T ^ omega^(p-1)) density {v:e}"), value: v, vectors: Vec::new(), point: Some(x.clone()) };
            return Err(refuted(name, Some(&wit)));
        }
    }
    Ok(HypothesisCheck { name: name.into(), status: "plausibly_true".into(), samples: pts.len() })
}

/// `int_{B} T ^ omega^p` for any current representation.
fn weighted_mass(t: &Current, w: &Weight, region: &Region, p: usize, quad: &QuadratureSpec) -> Result<Estimate> {
    let wp = w.omega.pow(p)?;
    let e = t.integrate_local(region, quad, 1, |x, tl, out| {
        out[0] = tl.wedge(&eval_form(&wp, x)?)?.top_density()?;
        Ok(())
    })?;
    Ok(e.into_iter().next().expect("one output"))
}

fn finish_report(
    r_grid: &[f64],
    nu: Vec<MeasureEstimate>,
    hypotheses: Vec<HypothesisCheck>,
    quad: &QuadratureSpec,
    theorem_applies: bool,
) -> LelongReport {
    let monotone_ok = is_monotone(&nu);
    let last = nu.last().map(|e| e.value).unwrap_or(0.0);
    let positive = nu.iter().all(|e| e.value > 0.0);
    let fitted_exponent = (positive && nu.len() >= 3).then(|| {
        let vals: Vec<f64> = nu.iter().map(|e| e.value).collect();
        power_law_exponent(r_grid, &vals)
    });
    let limit_exists = match fitted_exponent {
        Some(k) if k < -0.05 => Some(false),
        _ if theorem_applies && monotone_ok => Some(true),
        _ => None,
    };
    LelongReport {
        r_grid: r_grid.to_vec(),
        monotone_ok,
        limit_estimate: last,
        limit_bracket: monotone_ok.then_some((0.0, last)),
        fitted_exponent,
        limit_exists,
        nu,
        hypotheses,
        quadrature: quad.clone(),
    }
}

/// `nu_T(phi, r) = c(r) int_{B(r)} T ^ omega^p` along the grid.
pub fn lelong_number(t: &Current, w: &Weight, r_grid: &[f64], quad: &QuadratureSpec, opts: &LelongOptions) -> Result<LelongReport> {
    check_grid(r_grid)?;
    if t.n() != w.n() {
        return Err(Error::Dimension("weight and current disagree on n".into()));
    }
    let p = t.bidimension()?;
    let mut w = w.clone();
    let mut hypotheses = Vec::new();
    let outer = w.sublevel(r_grid[0]);
    let (lo, hi) = sample_box(&outer, quad)?;
    let avoid = w.quadratic().map(|(c, l)| (c.clone(), 1e-3 * (r_grid[0] / l).sqrt()));
    let avoid_ref = avoid.as_ref().map(|(c, r)| (c.as_slice(), *r));
    if let Current::Smooth(s) = t {
        hypotheses.push(check_weakly_positive(&s.form, &lo, &hi, opts, 1.0, avoid_ref)?);
        hypotheses.push(check_declared(s, &w, &lo, &hi, opts, avoid_ref)?);
    }
    let theorem = matches!(opts.declared, Declared::Convex | Declared::Closed);
    if theorem && w.sqrt_convex.is_none() {
        let v = w.certify_sqrt_convex(&lo, &hi, opts.spot_points, opts.sampler.seed)?;
        if v.is_false() {
            return Err(refuted("sqrt_convex_weight", v.witness()));
        }
    }
    if let Some(c) = &w.sqrt_convex {
        let status = if c.exact { "certified_true" } else { "plausibly_true" };
        hypotheses.push(HypothesisCheck { name: "sqrt_convex_weight".into(), status: status.into(), samples: c.points.len() });
    }
    let method = t.method_name(quad);
    let nu = r_grid
        .iter()
        .map(|&r| Ok(est(&weighted_mass(t, &w, &w.sublevel(r), p, quad)?.scaled(normalization(p, r)), &method)))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish_report(r_grid, nu, hypotheses, quad, theorem))
}

/// `nu_T(a, r) = r^{-p} int_{B(a, r)} T ^ beta^p` along the grid.
pub fn lelong_at(t: &Current, a: &[f64], r_grid: &[f64], quad: &QuadratureSpec) -> Result<LelongReport> {
    let p = t.bidimension()?;
    scaled_ball_masses(t, a, p as f64, r_grid, quad, Vec::new(), false)
}

fn scaled_ball_masses(
    t: &Current,
    a: &[f64],
    exponent: f64,
    r_grid: &[f64],
    quad: &QuadratureSpec,
    hypotheses: Vec<HypothesisCheck>,
    theorem: bool,
) -> Result<LelongReport> {
    check_grid(r_grid)?;
    if a.len() != t.n() {
        return Err(Error::Dimension("centre and current disagree on n".into()));
    }
    let p = t.bidimension()?;
    let bp = beta_power::<f64>(t.n(), p);
    let method = t.method_name(quad);
    let nu = r_grid
        .iter()
        .map(|&r| {
            let ball = Region::ball(a.to_vec(), r)?;
            let e = t.integrate_local(&ball, quad, 1, |_, tl, out| {
                out[0] = tl.wedge(&bp)?.top_density()?;
                Ok(())
            })?;
            Ok(est(&e[0].scaled(r.powf(-exponent)), &method))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish_report(r_grid, nu, hypotheses, quad, theorem))
}

/// `r^{-(n/m)(m-n+p)} int_{B(a, r)} T ^ beta^p` along the grid.
pub fn m_lelong_number(
    t: &Current,
    a: &[f64],
    m: usize,
    r_grid: &[f64],
    quad: &QuadratureSpec,
    opts: &LelongOptions,
) -> Result<LelongReport> {
    let n = t.n();
    let p = t.bidimension()?;
    if m == 0 || m > n || m + p <= n {
        return Err(Error::Invalid(format!("need m + p > n with 1 <= m <= n, got m = {m}, p = {p}, n = {n}")));
    }
    let mut hypotheses = Vec::new();
    if let Current::Smooth(s) = t {
        let ball = Region::ball(a.to_vec(), r_grid.first().copied().unwrap_or(1.0))?;
        let (lo, hi) = sample_box(&ball, quad)?;
        let avoid = Some((a, 1e-3 * r_grid.first().copied().unwrap_or(1.0)));
        let (q, _) = s.form.bidegree();
        if q <= 1 {
            let pts = sample_points(&lo, &hi, opts.spot_points, opts.sampler.seed, avoid);
            for x in &pts {
                let v = if q == 0 {
                    let f = s.form.coeff(&crate::exterior::BasisElement::new(Default::default(), Default::default()));
                    let val = f.map(|c| c.eval(x)).transpose()?.unwrap_or(0.0);
                    (val < 0.0).then(|| Witness { detail: "negative function".into(), value: val, vectors: Vec::new(), point: Some(x.clone()) })
                } else {
                    crate::positivity::form_is_m_positive(&s.form, x, m)?.witness().cloned()
                };
                if let Some(w) = v {
                    return Err(refuted("m_positive", Some(&w)));
                }
            }
            hypotheses.push(HypothesisCheck { name: "m_positive".into(), status: "plausibly_true".into(), samples: pts.len() });
        } else {
            hypotheses.push(HypothesisCheck { name: "m_positive".into(), status: "declared".into(), samples: 0 });
        }
        if opts.declared != Declared::Undeclared {
            let w = Weight::euclidean(a)?;
            hypotheses.push(check_declared(s, &w, &lo, &hi, opts, avoid)?);
        }
    }
    let exponent = (n as f64 / m as f64) * (m + p - n) as f64;
    let theorem = opts.declared == Declared::Convex || opts.declared == Declared::Closed;
    scaled_ball_masses(t, a, exponent, r_grid, quad, hypotheses, theorem)
}

/// Check of `nu_T(a, r) >= r nu_{dd#T}(a, r0) + c0` with `c0 = min(0, Upsilon_T(r0))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundCheck {
    pub r0: f64,
    pub r_grid: Vec<f64>,
    pub nu: Vec<MeasureEstimate>,
    pub nu_dd_r0: MeasureEstimate,
    pub c0: f64,
    pub margins: Vec<f64>,
    pub holds: bool,
    pub hypotheses: Vec<HypothesisCheck>,
}

pub fn concave_lower_bound(
    t: &SmoothCurrent,
    a: &[f64],
    r0: f64,
    r_grid: &[f64],
    quad: &QuadratureSpec,
    opts: &LelongOptions,
) -> Result<LowerBoundCheck> {
    check_grid(r_grid)?;
    if r_grid.iter().any(|r| *r > r0) {
        return Err(Error::Invalid(format!("every radius must satisfy r <= r0 = {r0}")));
    }
    let n = t.n();
    let p = bidimension(&t.form)?;
    if p == 0 {
        return Err(Error::Invalid("the bound needs p >= 1".into()));
    }
    let ball = Region::ball(a.to_vec(), r0)?;
    let (lo, hi) = ball.natural_bbox().expect("balls are bounded");
    let ddt = SmoothCurrent::new(ddsharp(&t.form)?);
    let hypotheses = vec![
        check_weakly_positive(&t.form, &lo, &hi, opts, -1.0, None)?,
        check_weakly_positive(&ddt.form, &lo, &hi, opts, 1.0, None).map(|mut h| {
            h.name = "convex".into();
            h
        })?,
    ];
    let tc = Current::Smooth(t.clone());
    let mut grid = vec![r0];
    grid.extend(r_grid.iter().copied().filter(|r| *r < r0));
    let nu_all = lelong_at(&tc, a, &grid, quad)?.nu;
    let nu_dd = ball_ddsharp_mass(t, &Weight::euclidean(a)?, r0 * r0, quad)?;
    let nu_dd_r0 = MeasureEstimate {
        value: nu_dd.value * r0.powi(1 - p as i32),
        stderr: nu_dd.stderr * r0.powi(1 - p as i32),
        method: nu_dd.method,
    };
    let upsilon = nu_all[0].value - r0 * nu_dd_r0.value;
    let c0 = upsilon.min(0.0);
    let nu: Vec<MeasureEstimate> = r_grid.iter().map(|r| nu_all[grid.iter().position(|g| g == r).expect("grid point")].clone()).collect();
    let margins: Vec<f64> = r_grid.iter().zip(&nu).map(|(r, v)| v.value - (r * nu_dd_r0.value + c0)).collect();
    let holds = margins
        .iter()
        .zip(r_grid.iter().zip(&nu))
        .all(|(m, (r, v))| *m >= -3.0 * (v.stderr + r * nu_dd_r0.stderr + nu_all[0].stderr));
    let _ = n;
    Ok(LowerBoundCheck { r0, r_grid: r_grid.to_vec(), nu, nu_dd_r0, c0, margins, holds, hypotheses })
}

/// `int_{B(r)} dd#T ^ omega^{p-1}`: a sphere flux for quadratic weights (which
/// also sees point masses at the centre), a volume integral otherwise.
pub fn ball_ddsharp_mass(t: &SmoothCurrent, w: &Weight, r: f64, quad: &QuadratureSpec) -> Result<MeasureEstimate> {
    let p = bidimension(&t.form)?;
    if p == 0 {
        return Ok(MeasureEstimate { value: 0.0, stderr: 0.0, method: "exact".into() });
    }
    let wp = w.omega.pow(p - 1)?;
    if w.quadratic().is_some() {
        let flux_form = dsharp(&t.form)?.wedge(&wp)?;
        let res = match quad.method {
            Method::TensorGrid { points } | Method::Polar { radial: points, .. } => points.max(8),
            Method::MonteCarlo { .. } => 32,
        };
        let fine = boundary_integral(&flux_form, &w.sublevel(r), 2 * res)?;
        let coarse = boundary_integral(&flux_form, &w.sublevel(r), res)?;
        return Ok(MeasureEstimate { value: fine, stderr: (fine - coarse).abs(), method: "sphere_flux".into() });
    }
    let h = ddsharp(&t.form)?.wedge(&wp)?;
    let e = integrate_many(&w.sublevel(r), quad, 1, |x, out| {
        out[0] = eval_form(&h, x)?.top_density()?;
        Ok(())
    })?;
    Ok(est(&e[0], method_name(quad)))
}

/// Integrability diagnostic for `t -> nu_{dd#T}(phi, t) / (2 t^{1/2})` near 0
/// and the auxiliary function `Lambda_T` along the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T5Report {
    pub r_grid: Vec<f64>,
    pub nu: Vec<MeasureEstimate>,
    pub nu_dd: Vec<MeasureEstimate>,
    pub integrand: Vec<f64>,
    pub integrand_exponent: Option<f64>,
    pub integrable: bool,
    /// Trapezoid estimate of the integral from 0 to the largest radius.
    pub integral_estimate: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub lambda_increasing: Option<bool>,
}

pub fn t5_integrability_diagnostic(t: &SmoothCurrent, w: &Weight, r_grid: &[f64], quad: &QuadratureSpec) -> Result<T5Report> {
    check_grid(r_grid)?;
    if r_grid.len() < 4 {
        return Err(Error::Invalid("the diagnostic needs at least four radii".into()));
    }
    let p = bidimension(&t.form)?;
    let tc = Current::Smooth(t.clone());
    let nu = lelong_number(&tc, w, r_grid, quad, &LelongOptions::default())?.nu;
    let nu_dd: Vec<MeasureEstimate> = r_grid
        .iter()
        .map(|&r| {
            let m = ball_ddsharp_mass(t, w, r, quad)?;
            let c = if p == 0 { 0.0 } else { 2.0 * normalization(p - 1, r) };
            Ok(MeasureEstimate { value: c * m.value, stderr: c * m.stderr, method: m.method })
        })
        .collect::<Result<_>>()?;
    let integrand: Vec<f64> = r_grid.iter().zip(&nu_dd).map(|(r, v)| v.value / (2.0 * r.sqrt())).collect();
    let scale = nu.iter().map(|v| v.value.abs()).fold(0.0, f64::max).max(1e-300);
    let vanishing = integrand.iter().zip(r_grid).all(|(g, r)| (g * r).abs() <= 1e-10 * scale);
    let integrand_exponent = (!vanishing && integrand.iter().all(|g| *g != 0.0)).then(|| power_law_exponent(r_grid, &integrand));
    let integrable = vanishing || integrand_exponent.is_some_and(|k| k > -0.95);
    // Ascending copies for the trapezoid rule.
    let rs: Vec<f64> = r_grid.iter().rev().copied().collect();
    let gs: Vec<f64> = integrand.iter().rev().copied().collect();
    let tail = |k: Option<f64>| -> f64 {
        match k {
            Some(k) => gs[0] * rs[0] / (k + 1.0),
            None => 0.0,
        }
    };
    let integral_up_to = |i: usize, weight: &dyn Fn(f64) -> f64| -> f64 {
        let mut s = tail(integrand_exponent) * weight(0.0);
        for j in 0..i {
            s += 0.5 * (rs[j + 1] - rs[j]) * (gs[j] * weight(rs[j]) + gs[j + 1] * weight(rs[j + 1]));
        }
        s
    };
    let (integral_estimate, lambda) = if integrable {
        let total = integral_up_to(rs.len() - 1, &|_| 1.0);
        let lam: Vec<f64> = (0..rs.len())
            .map(|i| {
                let r = rs[i];
                let pf = p as f64 / 2.0;
                let corr = integral_up_to(i, &|t| (t / r).powf(pf) - 1.0);
                nu[rs.len() - 1 - i].value + corr
            })
            .rev()
            .collect();
        (Some(total), Some(lam))
    } else {
        (None, None)
    };
    let lambda_increasing = lambda.as_ref().map(|l| {
        l.windows(2).zip(nu.windows(2)).all(|(w, e)| w[0] >= w[1] - 3.0 * (e[0].stderr + e[1].stderr) - 1e-12 * w[0].abs())
    });
    Ok(T5Report {
        r_grid: r_grid.to_vec(),
        nu,
        nu_dd,
        integrand,
        integrand_exponent,
        integrable,
        integral_estimate,
        lambda,
        lambda_increasing,
    })
}

/// Check of `limsup_k nu_{T_k}(phi, r) <= nu_T(phi, r + margin)` on the tail of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemicontinuityCheck {
    pub r: f64,
    pub margin: f64,
    pub members: Vec<MeasureEstimate>,
    pub limit: MeasureEstimate,
    pub tail_start: usize,
    pub holds: bool,
}

pub fn semicontinuity_check(
    seq: &[Current],
    limit: &Current,
    w: &Weight,
    r: f64,
    margin: f64,
    quad: &QuadratureSpec,
) -> Result<SemicontinuityCheck> {
    if seq.is_empty() {
        return Err(Error::Invalid("empty sequence".into()));
    }
    let opts = LelongOptions::default();
    let members = seq.iter().map(|t| Ok(lelong_number(t, w, &[r], quad, &opts)?.nu.remove(0))).collect::<Result<Vec<_>>>()?;
    let lim = lelong_number(limit, w, &[r + margin], quad, &opts)?.nu.remove(0);
    let tail_start = seq.len() / 2;
    let holds = members[tail_start..].iter().all(|m| m.value <= lim.value + 3.0 * (m.stderr + lim.stderr) + 1e-12 * lim.value.abs());
    Ok(SemicontinuityCheck { r, margin, members, limit: lim, tail_start, holds })
}
