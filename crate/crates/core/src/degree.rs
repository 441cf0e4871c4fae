//! Degrees of positive currents, weighted degrees, Lelong-class growth rates,
//! and the comparison, strip and semicontinuity experiments at infinity.

use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{ddsharp, ddsharp_field, eval_form, integrate_many, Method, QuadratureSpec, Region};
use crate::currents::{Current, MeasureEstimate, SmoothCurrent};
use crate::error::{Error, Result};
use crate::exterior::{beta_power, Superform};
use crate::field::ScalarField;
use crate::lelong::{check_weakly_positive, lelong_at, lelong_number, Declared, LelongOptions, Weight};
use crate::positivity::{is_m_convex_tol, sample_points, Witness};
use crate::quadrature::{power_law_exponent, sphere_rule, unit_ball_volume};

/// Radius of the ball excised around the origin in degree integrals.
pub const EXCISION_RADIUS: f64 = 1e-6;

/// Partial degrees `int_{B(R) \ B(eps)} T ^ (dd# phi)^p` on an increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeReport {
    pub r_grid: Vec<f64>,
    pub partials: Vec<MeasureEstimate>,
    pub nondecreasing: bool,
    pub converged: bool,
    pub limit_estimate: f64,
    pub stderr: f64,
    pub excision_radius: f64,
    /// Bound on the excised contribution from the homogeneity of the weight power.
    pub excision_bound: Option<f64>,
    pub quadrature: QuadratureSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeOptions {
    /// Relative agreement of the last two partials that counts as convergence.
    pub rel_tol: f64,
    pub spot_points: usize,
    pub seed: u64,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        DegreeOptions { rel_tol: 1e-2, spot_points: 24, seed: 17 }
    }
}

fn check_increasing(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::Invalid("empty radius grid".into()));
    }
    if r_grid[0] <= EXCISION_RADIUS || r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("degree radii must be strictly increasing and exceed the excision radius".into()));
    }
    Ok(())
}

fn origin_shell(n: usize, r1: f64, r2: f64) -> Region {
    Region::Shell { phi: ScalarField::norm_sq(n, &vec![0.0; n]), r1: r1 * r1, r2: r2 * r2, center: Some(vec![0.0; n]) }
}

/// Cumulative `int_{B(R_k) \ B(eps)} density(x, T(x))` over the grid, one shell at a time.
fn shell_partials<F>(t: &Current, r_grid: &[f64], quad: &QuadratureSpec, density: F) -> Result<Vec<MeasureEstimate>>
where
    F: Fn(&[f64], &Superform<f64>) -> Result<f64> + Sync,
{
    let n = t.n();
    let method = t.method_name(quad);
    let mut inner = EXCISION_RADIUS;
    let (mut value, mut stderr) = (0.0, 0.0);
    let mut out = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let e = t.integrate_local(&origin_shell(n, inner, r), quad, 1, |x, tl, o| {
            o[0] = density(x, tl)?;
            Ok(())
        })?;
        value += e[0].value;
        stderr += e[0].stderr;
        out.push(MeasureEstimate { value, stderr, method: method.clone() });
        inner = r;
    }
    Ok(out)
}

fn finish_degree(r_grid: &[f64], partials: Vec<MeasureEstimate>, excision_bound: Option<f64>, quad: &QuadratureSpec, opts: &DegreeOptions) -> DegreeReport {
    let nondecreasing = partials.windows(2).all(|w| w[1].value >= w[0].value - 3.0 * (w[0].stderr + w[1].stderr));
    let last = partials.last().expect("nonempty grid");
    let converged = match partials.len() {
        1 => false,
        k => {
            let prev = &partials[k - 2];
            (last.value - prev.value).abs() <= opts.rel_tol * last.value.abs() + 3.0 * (last.stderr + prev.stderr)
        }
    };
    DegreeReport {
        r_grid: r_grid.to_vec(),
        nondecreasing,
        converged,
        limit_estimate: last.value,
        stderr: last.stderr,
        partials,
        excision_radius: EXCISION_RADIUS,
        excision_bound,
        quadrature: quad.clone(),
    }
}

/// `sup |density| |x|^p` on a small sphere times `int_{B(eps)} |x|^{-p}`.
fn excision_bound(t: &Current, wp: &Superform<ScalarField>, p: usize) -> Result<Option<f64>> {
    let n = t.n();
    let Current::Smooth(s) = t else { return Ok(None) };
    if p >= n {
        return Ok(Some(0.0));
    }
    let rho = 2.0 * EXCISION_RADIUS;
    let (dirs, _) = sphere_rule(n, 4);
    let mut m: f64 = 0.0;
    for d in dirs.chunks(n) {
        let x: Vec<f64> = d.iter().map(|v| v * rho).collect();
        let v = eval_form(&s.form, &x)?.wedge(&eval_form(wp, &x)?)?.top_density()?;
        m = m.max(v.abs() * rho.powi(p as i32));
    }
    let area = n as f64 * unit_ball_volume(n);
    Ok(Some(m * area * EXCISION_RADIUS.powi((n - p) as i32) / (n - p) as f64))
}

fn sample_weak_positivity(t: &Current, r_max: f64, opts: &DegreeOptions) -> Result<()> {
    if let Current::Smooth(s) = t {
        let n = s.n();
        let lo = vec![-r_max; n];
        let hi = vec![r_max; n];
        let lopts = LelongOptions { spot_points: opts.spot_points, ..LelongOptions::default() };
        check_weakly_positive(&s.form, &lo, &hi, &lopts, 1.0, Some((&vec![0.0; n], 1e-3)))?;
    }
    Ok(())
}

/// `delta(T) = int T ^ (dd#|x|)^p` as partials over growing balls.
pub fn degree(t: &Current, r_grid: &[f64], quad: &QuadratureSpec, opts: &DegreeOptions) -> Result<DegreeReport> {
    weighted_degree_unchecked(t, &ScalarField::norm(t.n()), r_grid, quad, opts)
}

/// `delta(T, phi) = int T ^ (dd# phi)^p` for a convex weight `phi`.
pub fn weighted_degree(t: &Current, phi: &ScalarField, r_grid: &[f64], quad: &QuadratureSpec, opts: &DegreeOptions) -> Result<DegreeReport> {
    check_increasing(r_grid)?;
    let r_max = *r_grid.last().expect("nonempty grid");
    check_convex(phi, r_max, opts)?;
    weighted_degree_unchecked(t, phi, r_grid, quad, opts)
}

fn check_convex(phi: &ScalarField, r_max: f64, opts: &DegreeOptions) -> Result<()> {
    if matches!(phi, ScalarField::MaxAffine(_)) {
        return Ok(());
    }
    let n = phi.n();
    let origin = vec![0.0; n];
    let pts = sample_points(&vec![-r_max; n], &vec![r_max; n], opts.spot_points, opts.seed, Some((&origin, 1e-3)));
    let v = is_m_convex_tol(phi, &pts, n, 1e-6, 1e-9)?;
    if v.is_false() {
        return Err(hypothesis("convex weight", v.witness()));
    }
    Ok(())
}

fn hypothesis(name: &str, w: Option<&Witness>) -> Error {
    let detail = w.map(|w| format!(": {} (value {:e}) at {:?}", w.detail, w.value, w.point)).unwrap_or_default();
    Error::Hypothesis(format!("{name} fails{detail}"))
}

fn weighted_degree_unchecked(t: &Current, phi: &ScalarField, r_grid: &[f64], quad: &QuadratureSpec, opts: &DegreeOptions) -> Result<DegreeReport> {
    check_increasing(r_grid)?;
    if phi.n() != t.n() {
        return Err(Error::Dimension("weight and current disagree on n".into()));
    }
    let p = t.bidimension()?;
    sample_weak_positivity(t, *r_grid.last().expect("nonempty grid"), opts)?;
    let wp = ddsharp_field(phi)?.pow(p)?;
    let partials = shell_partials(t, r_grid, quad, |x, tl| tl.wedge(&eval_form(&wp, x)?)?.top_density())?;
    let bound = excision_bound(t, &wp, p)?;
    Ok(finish_degree(r_grid, partials, bound, quad, opts))
}

/// Convex function with a sampled growth certificate `f(x) <= C|x| + D`.
#[derive(Clone, Debug, PartialEq)]
pub struct LelongClassFunction {
    pub f: ScalarField,
    pub c: f64,
    pub d: f64,
    pub checked_radii: Vec<f64>,
    pub samples: usize,
}

impl LelongClassFunction {
    /// Checks convexity and the growth bound on spheres of the given radii.
    pub fn new(f: ScalarField, c: f64, d: f64, radii: &[f64], directions: usize, seed: u64) -> Result<Self> {
        let n = f.n();
        let r_max = radii.iter().copied().fold(1.0, f64::max);
        check_convex(&f, r_max, &DegreeOptions { seed, ..Default::default() })?;
        let dirs = sphere_directions(n, directions, seed);
        let mut samples = 0;
        for &r in radii {
            for dir in &dirs {
                let x: Vec<f64> = dir.iter().map(|v| v * r).collect();
                let v = f.eval(&x)?;
                samples += 1;
                if v > c * r + d + 1e-9 * (1.0 + v.abs()) {
                    return Err(Error::Hypothesis(format!("growth bound {c}|x| + {d} fails: f = {v} at {x:?}")));
                }
            }
        }
        Ok(LelongClassFunction { f, c, d, checked_radii: radii.to_vec(), samples })
    }
}

/// Unit vectors: `+-e_i`, then an even angular grid in the plane or seeded random directions.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    if n == 2 {
        dirs.extend((0..count).map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![t.cos(), t.sin()]
        }));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        while dirs.len() < 2 * n + count {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if s > 1e-2 && s <= 1.0 {
                dirs.push(v.iter().map(|a| a / s).collect());
            }
        }
    }
    dirs
}

/// Running suprema of `u / phi` on spheres of growing radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaReport {
    pub radii: Vec<f64>,
    pub sphere_max: Vec<f64>,
    /// Index where the tail (upper half of the schedule) starts.
    pub tail_start: usize,
    /// Supremum of `sphere_max` over the tail.
    pub sigma: f64,
}

fn sigma_from(radii: &[f64], sphere_max: Vec<f64>) -> SigmaReport {
    let tail_start = radii.len() / 2;
    let sigma = sphere_max[tail_start..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SigmaReport { radii: radii.to_vec(), sphere_max, tail_start, sigma }
}

fn ratio(u: &ScalarField, phi: &ScalarField, x: &[f64]) -> Result<f64> {
    let d = phi.eval(x)?;
    if d.abs() < 1e-12 {
        return Err(Error::Domain(format!("weight vanishes at {x:?}")));
    }
    Ok(u.eval(x)? / d)
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("radius schedule must be nonempty and increasing".into()));
    }
    Ok(())
}

/// `limsup u / phi` estimated on whole spheres.
pub fn sigma_growth(u: &LelongClassFunction, phi: &ScalarField, radii: &[f64], directions: &[Vec<f64>]) -> Result<SigmaReport> {
    check_radii(radii)?;
    let mut maxima = Vec::new();
    for &r in radii {
        let mut m = f64::NEG_INFINITY;
        for dir in directions {
            let x: Vec<f64> = dir.iter().map(|v| v * r).collect();
            m = m.max(ratio(&u.f, phi, &x)?);
        }
        maxima.push(m);
    }
    Ok(sigma_from(radii, maxima))
}

/// `limsup u / phi` over `Supp T`, sampled in thin shells `0.9 R <= |x| <= R`.
pub fn sigma_growth_on(u: &ScalarField, phi: &ScalarField, t: &Current, radii: &[f64], quad: &QuadratureSpec) -> Result<SigmaReport> {
    check_radii(radii)?;
    let n = t.n();
    let mut maxima = Vec::new();
    for &r in radii {
        let pts = support_samples(t, &origin_shell(n, 0.9 * r, r), quad)?;
        if pts.is_empty() {
            return Err(Error::Invalid(format!("no support samples near |x| = {r}")));
        }
        let mut m = f64::NEG_INFINITY;
        for x in &pts {
            m = m.max(ratio(u, phi, x)?);
        }
        maxima.push(m);
    }
    Ok(sigma_from(radii, maxima))
}

/// Quadrature nodes of `T` inside `region` where the local form does not vanish.
pub fn support_samples(t: &Current, region: &Region, quad: &QuadratureSpec) -> Result<Vec<Vec<f64>>> {
    let pts = Mutex::new(Vec::new());
    t.integrate_local(region, quad, 1, |x, tl, _| {
        if tl.max_abs() > 0.0 {
            pts.lock().expect("no poisoning").push(x.to_vec());
        }
        Ok(())
    })?;
    let mut pts = pts.into_inner().expect("no poisoning");
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    pts.dedup();
    Ok(pts)
}

/// Local comparison `nu_T(psi) <= l^p nu_T(phi)` at the smallest radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalComparison {
    pub r_grid: Vec<f64>,
    pub p: usize,
    pub l: f64,
    pub l_estimated: bool,
    pub nu_phi: Vec<MeasureEstimate>,
    pub nu_psi: Vec<MeasureEstimate>,
    /// `l^p nu_T(phi, r_min)`.
    pub bound: f64,
    pub holds: bool,
    /// `log(nu_psi / nu_phi) / log(l)` at the smallest radius, when `l != 1`.
    pub observed_exponent: Option<f64>,
}

pub fn verify_comparison_local(
    t: &Current,
    phi: &Weight,
    psi: &Weight,
    l: Option<f64>,
    r_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<LocalComparison> {
    let opts = LelongOptions::declared(Declared::Closed);
    let nu_phi = lelong_number(t, phi, r_grid, quad, &opts)?.nu;
    let nu_psi = lelong_number(t, psi, r_grid, quad, &opts)?.nu;
    let p = t.bidimension()?;
    let r_min = *r_grid.last().expect("checked grid");
    let (l, l_estimated) = match l {
        Some(l) => (l, false),
        None => {
            let pts = support_samples(t, &phi.sublevel(r_min), quad)?;
            let mut m = f64::NEG_INFINITY;
            for x in &pts {
                if phi.phi.eval(x)? > 1e-14 {
                    m = m.max(ratio(&psi.phi, &phi.phi, x)?);
                }
            }
            if !m.is_finite() {
                return Err(Error::Invalid("no support samples to estimate l".into()));
            }
            (m, true)
        }
    };
    if !(l > 0.0) {
        return Err(Error::Invalid(format!("l must be positive, got {l}")));
    }
    let (a, b) = (nu_psi.last().expect("grid"), nu_phi.last().expect("grid"));
    let bound = l.powi(p as i32) * b.value;
    let holds = a.value <= bound + 3.0 * (a.stderr + l.powi(p as i32) * b.stderr);
    let observed_exponent = ((l - 1.0).abs() > 1e-12 && a.value > 0.0 && b.value > 0.0).then(|| (a.value / b.value).ln() / l.ln());
    Ok(LocalComparison { r_grid: r_grid.to_vec(), p, l, l_estimated, nu_phi, nu_psi, bound, holds, observed_exponent })
}

/// Comparison at infinity `int_{B(R)} T ^ prod dd#u_j <= prod l_j int_{B(R)} T ^ prod dd#v_j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfinityComparison {
    pub r: f64,
    pub lhs: MeasureEstimate,
    pub rhs: MeasureEstimate,
    pub l: Vec<f64>,
    pub l_estimated: bool,
    pub holds: bool,
    pub degree_partials: Vec<MeasureEstimate>,
}

fn smoothed(u: &ScalarField, eps: f64) -> Result<ScalarField> {
    if u.is_differentiable() {
        Ok(u.clone())
    } else {
        u.mollify(eps)
    }
}

fn product_integral(t: &Current, us: &[ScalarField], r: f64, quad: &QuadratureSpec, eps: f64) -> Result<MeasureEstimate> {
    let n = t.n();
    let mut prod = Superform::<ScalarField>::one(n);
    for u in us {
        prod = prod.wedge(&ddsharp_field(&smoothed(u, eps)?)?)?;
    }
    Ok(shell_partials(t, &[r], quad, |x, tl| tl.wedge(&eval_form(&prod, x)?)?.top_density())?.remove(0))
}

pub fn verify_comparison_infinity(
    t: &Current,
    us: &[ScalarField],
    vs: &[ScalarField],
    ls: Option<&[f64]>,
    r: f64,
    quad: &QuadratureSpec,
    eps: f64,
) -> Result<InfinityComparison> {
    let p = t.bidimension()?;
    if us.len() != p || vs.len() != p {
        return Err(Error::Invalid(format!("need exactly p = {p} functions on each side")));
    }
    let grid = [r / 4.0, r / 2.0, r];
    let deg = degree(t, &grid, quad, &DegreeOptions::default())?;
    let d = &deg.partials;
    let (i1, i2) = (d[1].value - d[0].value, d[2].value - d[1].value);
    if i2 > 1e-3 * d[2].value.abs() && i2 >= 0.95 * i1 {
        return Err(Error::NonConvergence(format!("degree divergence detected: increments {i1:e}, {i2:e}")));
    }
    let (l, l_estimated) = match ls {
        Some(ls) if ls.len() == p => (ls.to_vec(), false),
        Some(_) => return Err(Error::Invalid("one l per function pair".into())),
        None => {
            let l = us
                .iter()
                .zip(vs)
                .map(|(u, v)| Ok(sigma_growth_on(u, v, t, &[r / 4.0, r / 2.0, r], quad)?.sigma))
                .collect::<Result<Vec<f64>>>()?;
            (l, true)
        }
    };
    let lhs = product_integral(t, us, r, quad, eps)?;
    let rhs = product_integral(t, vs, r, quad, eps)?;
    let lp: f64 = l.iter().product();
    let holds = lhs.value <= lp * rhs.value + 3.0 * (lhs.stderr + lp * rhs.stderr);
    Ok(InfinityComparison { r, lhs, rhs, l, l_estimated, holds, degree_partials: deg.partials })
}

/// Smallest `c >= 0` with the growth link between `nu_{dd#T}(0, r)` and `nu_T(0, 2r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthLink {
    pub r_grid: Vec<f64>,
    pub nu_dd: Vec<MeasureEstimate>,
    pub nu_2r: Vec<MeasureEstimate>,
    pub c: f64,
    pub finite: bool,
    /// `nu_T(0, r)` stays bounded on the doubled grid.
    pub nu_bounded: bool,
}

/// Concave: `r nu_{dd#T}(r) >= -c nu_T(2r)`. Convex: `r nu_{dd#T}(r) <= c nu_T(2r)`.
/// Otherwise `|r nu_{dd#T}(r)| <= c nu_T(2r)`.
pub fn growth_link_check(t: &SmoothCurrent, declared: Declared, r_grid: &[f64], quad: &QuadratureSpec) -> Result<GrowthLink> {
    check_radii(r_grid)?;
    let n = t.n();
    let p = t.bidimension()?;
    if p == 0 {
        return Err(Error::Invalid("growth link needs p >= 1".into()));
    }
    let h = ddsharp(&t.form)?.wedge(&beta_power::<ScalarField>(n, p - 1))?;
    let nu_dd = r_grid
        .iter()
        .map(|&r| {
            let e = integrate_many(&Region::ball(vec![0.0; n], r)?, &clip_quad(quad, r), 1, |x, o| {
                o[0] = eval_form(&h, x)?.top_density()?;
                Ok(())
            })?;
            let s = r.powi(1 - p as i32);
            Ok(MeasureEstimate { value: e[0].value * s, stderr: e[0].stderr * s, method: "volume".into() })
        })
        .collect::<Result<Vec<_>>>()?;
    let tc = Current::Smooth(t.clone());
    let nu_2r = r_grid
        .iter()
        .map(|&r| Ok(lelong_at(&tc, &vec![0.0; n], &[2.0 * r], &clip_quad(quad, 2.0 * r))?.nu.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let mut c: f64 = 0.0;
    let mut finite = true;
    for ((r, dd), nu) in r_grid.iter().zip(&nu_dd).zip(&nu_2r) {
        let lhs = r * dd.value;
        let need = match declared {
            Declared::Concave => (-lhs).max(0.0),
            Declared::Convex => lhs.max(0.0),
            _ => lhs.abs(),
        };
        if need <= 3.0 * r * dd.stderr {
            continue;
        }
        if nu.value <= 3.0 * nu.stderr {
            finite = false;
        } else {
            c = c.max(need / nu.value);
        }
    }
    let vals: Vec<f64> = nu_2r.iter().map(|v| v.value).collect();
    let nu_bounded = bounded_tail(&vals, &nu_2r);
    Ok(GrowthLink { r_grid: r_grid.to_vec(), nu_dd, nu_2r, c, finite, nu_bounded })
}

fn clip_quad(quad: &QuadratureSpec, r: f64) -> QuadratureSpec {
    match (&quad.bbox, &quad.method) {
        (Some((lo, hi)), Method::TensorGrid { .. } | Method::MonteCarlo { .. }) => {
            let lo = lo.iter().map(|v| v.max(-r)).collect();
            let hi = hi.iter().map(|v| v.min(r)).collect();
            quad.clone().with_bbox(lo, hi)
        }
        _ => quad.clone(),
    }
}

/// Last three values agree within 1% of the largest plus three standard errors.
fn bounded_tail(vals: &[f64], est: &[MeasureEstimate]) -> bool {
    let k = vals.len();
    if k < 3 {
        return false;
    }
    let tail = &vals[k - 3..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let se: f64 = est[k - 3..].iter().map(|e| e.stderr).sum();
    hi - lo <= 1e-2 * hi.abs() + 3.0 * se
}

/// Lelong numbers `nu_T(0, r)` for large `r` of a current supported in a strip.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StripReport {
    pub k: usize,
    pub delta: f64,
    pub r_grid: Vec<f64>,
    pub nu: Vec<MeasureEstimate>,
    pub bounded: bool,
    pub fitted_exponent: Option<f64>,
    pub support_samples: usize,
}

/// The strip is `{|x_{k+1}|^delta + ... + |x_n|^delta <= 1}`.
pub fn strip_experiment(t: &Current, k: usize, delta: f64, r_grid: &[f64], quad: &QuadratureSpec) -> Result<StripReport> {
    check_radii(r_grid)?;
    let n = t.n();
    let p = t.bidimension()?;
    if k > n || p < k {
        return Err(Error::Invalid(format!("need k <= p and k <= n, got k = {k}, p = {p}, n = {n}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Invalid("strip exponent must be positive".into()));
    }
    let r_max = *r_grid.last().expect("checked grid");
    let strip_quad = |r: f64| -> QuadratureSpec {
        match quad.method {
            Method::Polar { .. } => quad.clone(),
            _ => {
                let lo = (0..n).map(|i| if i < k { -r } else { -r.min(1.0) }).collect();
                let hi = (0..n).map(|i| if i < k { r } else { r.min(1.0) }).collect();
                quad.clone().with_bbox(lo, hi)
            }
        }
    };
    let outside = |x: &[f64]| x[k..].iter().map(|v| v.abs().powf(delta)).sum::<f64>() > 1.0 + 1e-9;
    let probe_quad = match quad.method {
        Method::Polar { .. } => QuadratureSpec::tensor(32),
        _ => quad.clone(),
    }
    .with_bbox(vec![-r_max; n], vec![r_max; n]);
    let pts = support_samples(t, &Region::ball(vec![0.0; n], r_max)?, &probe_quad)?;
    if let Some(x) = pts.iter().find(|x| outside(x)) {
        return Err(Error::Hypothesis(format!("support leaves the strip at {x:?}")));
    }
    let nu = r_grid
        .iter()
        .map(|&r| Ok(lelong_at(t, &vec![0.0; n], &[r], &strip_quad(r))?.nu.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let vals: Vec<f64> = nu.iter().map(|v| v.value).collect();
    let bounded = vals.iter().all(|v| *v == 0.0) || bounded_tail(&vals, &nu);
    let fitted_exponent = (vals.len() >= 3 && vals.iter().all(|v| *v > 0.0)).then(|| power_law_exponent(r_grid, &vals));
    Ok(StripReport { k, delta, r_grid: r_grid.to_vec(), nu, bounded, fitted_exponent, support_samples: pts.len() })
}

/// `delta(T, phi) <= liminf delta(T_k, phi_k)` checked on the tail of a family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeSemicontinuity {
    pub r: f64,
    pub members: Vec<MeasureEstimate>,
    pub limit: MeasureEstimate,
    pub tail_start: usize,
    pub holds: bool,
}

pub fn degree_semicontinuity_check(
    family: &[(Current, ScalarField)],
    limit: (&Current, &ScalarField),
    r: f64,
    quad: &QuadratureSpec,
) -> Result<DegreeSemicontinuity> {
    if family.is_empty() {
        return Err(Error::Invalid("empty family".into()));
    }
    let opts = DegreeOptions::default();
    let members = family
        .iter()
        .map(|(t, phi)| Ok(weighted_degree_unchecked(t, phi, &[r], quad, &opts)?.partials.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let lim = weighted_degree_unchecked(limit.0, limit.1, &[r], quad, &opts)?.partials.remove(0);
    let tail_start = family.len() / 2;
    let holds = members[tail_start..].iter().all(|m| lim.value <= m.value + 3.0 * (m.stderr + lim.stderr) + 1e-12 * m.value.abs());
    Ok(DegreeSemicontinuity { r, members, limit: lim, tail_start, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::{tropical_ddsharp, SubmanifoldCurrent};
    use crate::exterior::beta;
    use crate::field::MaxAffine;

    fn poly(n: usize, s: &str) -> ScalarField {
        ScalarField::parse_poly(n, s).unwrap()
    }

    fn shifted_tropical() -> Current {
        let f = MaxAffine::new(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], -1.0), (vec![0.0, 1.0], -0.5)]).unwrap();
        Current::Tropical(tropical_ddsharp(&f).unwrap())
    }

    #[test]
    fn degree_of_zero_is_zero() {
        let t = Current::Smooth(SmoothCurrent::new(Superform::zero(2, 1, 1)));
        let rep = degree(&t, &[1.0, 2.0], &QuadratureSpec::polar(8, 8), &DegreeOptions::default()).unwrap();
        assert_eq!(rep.limit_estimate, 0.0);
        assert!(rep.converged && rep.nondecreasing);
    }

    #[test]
    fn norm_weight_matches_plain_degree() {
        let t = shifted_tropical();
        let q = QuadratureSpec::tensor(64);
        let a = degree(&t, &[1.0, 4.0, 16.0], &q, &DegreeOptions::default()).unwrap();
        let b = weighted_degree(&t, &ScalarField::norm(2), &[1.0, 4.0, 16.0], &q, &DegreeOptions::default()).unwrap();
        assert_eq!(a.partials, b.partials);
        assert!(a.nondecreasing);
    }

    #[test]
    fn quadratic_weight_on_compact_support_is_twice_beta() {
        let n = 2;
        let chi = crate::currents::bump(n, &[0.2, 0.1], 0.7).unwrap();
        let t = Current::Smooth(SmoothCurrent::new(beta(n).scale(&chi)));
        let q = QuadratureSpec::polar(24, 24);
        let rep = weighted_degree(&t, &ScalarField::norm_sq(n, &[0.0, 0.0]), &[1.0], &q, &DegreeOptions::default()).unwrap();
        let direct = t.trace_mass(&Region::ball(vec![0.0; 2], 1.0).unwrap(), &q).unwrap();
        assert!((rep.limit_estimate - 2.0 * direct.value).abs() < 1e-6 * direct.value, "{rep:?} {direct:?}");
    }

    #[test]
    fn non_convex_weight_is_rejected() {
        let t = shifted_tropical();
        let err = weighted_degree(&t, &poly(2, "x1^2 - x2^2"), &[1.0], &QuadratureSpec::tensor(16), &DegreeOptions::default());
        assert!(matches!(err, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn sigma_examples() {
        let radii = [10.0, 100.0, 1000.0, 1e4, 1e5, 1e6];
        let norm = ScalarField::norm(2);
        let dirs = sphere_directions(2, 64, 1);
        let cone = LelongClassFunction::new(ScalarField::sum(2, vec![norm.scaled(3.0), ScalarField::constant(2, 2.0)]), 3.0, 2.0, &radii, 16, 1).unwrap();
        let s = sigma_growth(&cone, &norm, &radii, &dirs).unwrap();
        assert!((s.sigma - 3.0).abs() < 1e-3, "{s:?}");
        let hinge = LelongClassFunction::new(ScalarField::max_affine(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0)]).unwrap(), 1.0, 0.0, &radii, 16, 1).unwrap();
        assert!((sigma_growth(&hinge, &norm, &radii, &dirs).unwrap().sigma - 1.0).abs() < 1e-12);
        let bounded = LelongClassFunction::new(ScalarField::constant(2, 1.0), 0.0, 1.0, &radii, 16, 1).unwrap();
        assert!(sigma_growth(&bounded, &norm, &radii, &dirs).unwrap().sigma <= 1e-3);
        assert!(LelongClassFunction::new(poly(2, "x1^2"), 1.0, 0.0, &radii, 16, 1).is_err());
        assert!(sigma_growth(&bounded, &ScalarField::zero(2), &radii, &dirs).is_err());
    }

    #[test]
    fn local_comparison_identity_and_plane() {
        let plane = SubmanifoldCurrent::plane(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 2.0).unwrap();
        let t = Current::Submanifold(plane);
        let phi = Weight::euclidean(&[0.0; 3]).unwrap();
        let q = QuadratureSpec::tensor(32).with_bbox(vec![-1.0; 3], vec![1.0; 3]);
        let grid = [0.5, 0.25, 0.125];
        let same = verify_comparison_local(&t, &phi, &phi, Some(1.0), &grid, &q).unwrap();
        assert!(same.holds && (same.nu_psi[2].value - same.nu_phi[2].value).abs() < 1e-12);
        let psi = Weight::new(poly(3, "x1^2 + x2^2 + 9*x3^2")).unwrap();
        let rep = verify_comparison_local(&t, &phi, &psi, None, &grid, &q).unwrap();
        assert!(rep.l_estimated && (rep.l - 1.0).abs() < 1e-9, "{rep:?}");
        assert!(rep.holds, "{rep:?}");
    }

    #[test]
    fn scaled_weight_follows_half_power_law() {
        let plane = SubmanifoldCurrent::plane(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 2.0).unwrap();
        let t = Current::Submanifold(plane);
        let phi = Weight::euclidean(&[0.0; 3]).unwrap();
        let q = QuadratureSpec::tensor(32);
        for c in [0.5, 2.0] {
            let psi = Weight::new(ScalarField::norm_sq(3, &[0.0; 3]).scaled(c)).unwrap();
            let rep = verify_comparison_local(&t, &phi, &psi, Some(c), &[0.5, 0.25, 0.125], &q).unwrap();
            let k = rep.observed_exponent.unwrap();
            assert!((k - 1.0).abs() < 1e-9, "c = {c}: exponent {k}");
            assert_eq!(rep.holds, c > 1.0);
        }
    }

    #[test]
    fn infinity_comparison_equal_functions() {
        let t = shifted_tropical();
        let u = vec![ScalarField::norm(2)];
        let rep = verify_comparison_infinity(&t, &u, &u, Some(&[1.0]), 16.0, &QuadratureSpec::tensor(256), 0.05).unwrap();
        assert!(rep.holds && (rep.lhs.value - rep.rhs.value).abs() < 1e-12);
    }

    #[test]
    fn growth_link_closed_current() {
        let t = SmoothCurrent::new(beta(3));
        let rep = growth_link_check(&t, Declared::Closed, &[0.25, 0.5, 1.0], &QuadratureSpec::polar(8, 8)).unwrap();
        assert_eq!(rep.c, 0.0);
        assert!(rep.finite);
    }

    #[test]
    fn growth_link_concave_instance() {
        let n = 3;
        let t = SmoothCurrent::new(beta(n).scale(&poly(n, "4 - x1^2 - x2^2 - x3^2")));
        let rep = growth_link_check(&t, Declared::Concave, &[0.125, 0.25, 0.5, 1.0], &QuadratureSpec::polar(12, 12)).unwrap();
        assert!(rep.finite && rep.c > 0.0 && rep.c < 10.0, "{rep:?}");
    }

    #[test]
    fn strip_rejects_support_violations() {
        let t = Current::Smooth(SmoothCurrent::new(beta(2)));
        assert!(matches!(strip_experiment(&t, 1, 2.0, &[1.0, 2.0, 4.0], &QuadratureSpec::tensor(16)), Err(Error::Hypothesis(_))));
        let zero = Current::Smooth(SmoothCurrent::new(Superform::zero(2, 1, 1)));
        assert!(strip_experiment(&zero, 1, 2.0, &[1.0, 2.0, 4.0], &QuadratureSpec::tensor(16)).unwrap().bounded);
    }

    #[test]
    fn degree_semicontinuity_scaling_family() {
        let base = shifted_tropical();
        let Current::Tropical(tc) = &base else { unreachable!() };
        let norm = ScalarField::norm(2);
        let family: Vec<(Current, ScalarField)> = (1..=6)
            .map(|k| {
                let mut s = tc.clone();
                let factor = 1.0 + 1.0 / k as f64;
                s.facets.iter_mut().for_each(|f| f.weight.iter_mut().flatten().for_each(|w| *w *= factor));
                (Current::Tropical(s), norm.clone())
            })
            .collect();
        let rep = degree_semicontinuity_check(&family, (&base, &norm), 8.0, &QuadratureSpec::tensor(128)).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(degree_semicontinuity_check(&[], (&base, &norm), 8.0, &QuadratureSpec::tensor(16)).is_err());
    }
}
