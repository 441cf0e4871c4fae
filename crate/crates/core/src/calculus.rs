//! Differential operators on superforms, integration of top-degree forms over
//! regions, Stokes residuals, and sphere means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{BasisElement, Coeff, MultiIndex, Superform};
use crate::field::ScalarField;
use crate::poly::Poly;
use crate::quadrature::{composite, sphere_rule};

/// Coefficients that can be differentiated in closed form.
pub trait Differentiable: Coeff {
    fn partial(&self, i: usize) -> Result<Self>;
}

impl Differentiable for Poly {
    fn partial(&self, i: usize) -> Result<Self> {
        Ok(Poly::partial(self, i))
    }
}

impl Differentiable for ScalarField {
    fn partial(&self, i: usize) -> Result<Self> {
        ScalarField::partial(self, i)
    }
}

fn apply_derivative<C: Differentiable>(a: &Superform<C>, sharp: bool) -> Result<Superform<C>> {
    let n = a.n();
    let (p, q) = a.bidegree();
    let (p2, q2) = if sharp { (p, q + 1) } else { (p + 1, q) };
    let mut out = Superform::zero(n, p2, q2);
    if p2 > n || q2 > n {
        return Ok(out);
    }
    for (b, c) in a.terms() {
        for i in 1..=n {
            let g = if sharp {
                BasisElement::new(MultiIndex::EMPTY, MultiIndex::single(i))
            } else {
                BasisElement::new(MultiIndex::single(i), MultiIndex::EMPTY)
            };
            if let Some((s, nb)) = g.wedge(*b) {
                let dc = c.partial(i - 1)?;
                if !dc.is_zero() {
                    out.add_term(nb, dc.scale_int(s as i64));
                }
            }
        }
    }
    Ok(out)
}

/// `d = sum_i d/dx_i (dx_i ^ .)`.
pub fn d<C: Differentiable>(a: &Superform<C>) -> Result<Superform<C>> {
    apply_derivative(a, false)
}

/// `d# = sum_j d/dx_j (dxi_j ^ .)`.
pub fn dsharp<C: Differentiable>(a: &Superform<C>) -> Result<Superform<C>> {
    apply_derivative(a, true)
}

pub fn ddsharp<C: Differentiable>(a: &Superform<C>) -> Result<Superform<C>> {
    d(&dsharp(a)?)
}

/// `dd# f` for a scalar field: `sum_ij d_i d_j f dx_i ^ dxi_j`.
pub fn ddsharp_field(f: &ScalarField) -> Result<Superform<ScalarField>> {
    ddsharp(&Superform::scalar(f.n(), f.clone()))
}

/// `alpha = dd# phi^{1/2}` through the expansion
/// `omega / (2 phi^{1/2}) - d phi ^ d# phi / (4 phi^{3/2})` with `omega = dd# phi`.
pub fn alpha_form(phi: &ScalarField) -> Result<Superform<ScalarField>> {
    let n = phi.n();
    let s = Superform::scalar(n, phi.clone());
    let omega = ddsharp(&s)?;
    let grad = d(&s)?.wedge(&dsharp(&s)?)?;
    let a1 = omega.scale(&phi.clone().powf(-0.5).scaled(0.5));
    let a2 = grad.scale(&phi.clone().powf(-1.5).scaled(0.25));
    a1.sub(&a2)
}

/// Pointwise evaluation of a form with field coefficients.
pub fn eval_form(a: &Superform<ScalarField>, x: &[f64]) -> Result<Superform<f64>> {
    a.try_map_coeffs(|c| c.eval(x))
}

/// Top-degree density (relative to `beta^n / n!`) of the product of the given forms at `x`.
pub fn wedge_density(forms: &[&Superform<f64>]) -> Result<f64> {
    let n = forms.first().map(|f| f.n()).ok_or_else(|| Error::Invalid("empty product".into()))?;
    let mut acc = Superform::<f64>::one(n);
    for f in forms {
        acc = acc.wedge(f)?;
    }
    acc.top_density()
}

/// Integration domains.
#[derive(Clone, Debug)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{origin + sum_k t_k edges[k] : t in [0,1]^n}`.
    Parallelotope { origin: Vec<f64>, edges: Vec<Vec<f64>> },
    /// `{phi < r}`; `center` (if given) is a point from which the set is star-shaped.
    Sublevel { phi: ScalarField, r: f64, center: Option<Vec<f64>> },
    /// `{r1 < phi < r2}`.
    Shell { phi: ScalarField, r1: f64, r2: f64, center: Option<Vec<f64>> },
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Region::Ball { center, radius })
    }

    pub fn shell(phi: ScalarField, r1: f64, r2: f64, center: Option<Vec<f64>>) -> Result<Self> {
        if !(r2 > r1 && r1 > 0.0) {
            return Err(Error::Invalid(format!("shell needs r2 > r1 > 0, got ({r1}, {r2})")));
        }
        Ok(Region::Shell { phi, r1, r2, center })
    }

    pub fn n(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
            Region::Parallelotope { origin, .. } => origin.len(),
            Region::Sublevel { phi, .. } | Region::Shell { phi, .. } => phi.n(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(match self {
            Region::Ball { center, radius } => dist2(x, center) < radius * radius,
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= *a && *v <= *b),
            Region::Parallelotope { .. } => {
                return Err(Error::Invalid("membership in a parallelotope is not tested pointwise".into()))
            }
            Region::Sublevel { phi, r, .. } => phi.eval(x)? < *r,
            Region::Shell { phi, r1, r2, .. } => {
                let v = phi.eval(x)?;
                v > *r1 && v < *r2
            }
        })
    }

    /// Bounding box implied by the geometry, when there is one.
    pub fn natural_bbox(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Region::Ball { center, radius } => {
                Some((center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect()))
            }
            Region::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Region::Parallelotope { origin, edges } => {
                let mut lo = origin.clone();
                let mut hi = origin.clone();
                for e in edges {
                    for i in 0..origin.len() {
                        if e[i] < 0.0 {
                            lo[i] += e[i];
                        } else {
                            hi[i] += e[i];
                        }
                    }
                }
                Some((lo, hi))
            }
            Region::Sublevel { phi, r, .. } | Region::Shell { phi, r2: r, .. } => {
                ball_of_sublevel(phi, *r).map(|(c, rad)| Region::Ball { center: c, radius: rad }.natural_bbox().unwrap())
            }
        }
    }

    /// Exact ball equivalent: plain balls and sublevel sets of `lambda |x - a|^2`.
    pub fn as_ball(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            Region::Ball { center, radius } => Some((center.clone(), *radius)),
            Region::Sublevel { phi, r, .. } => ball_of_sublevel(phi, *r),
            _ => None,
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// If `phi = lambda |x - a|^2` exactly, returns `(a, lambda)`.
pub fn quadratic_weight_params(phi: &ScalarField) -> Option<(Vec<f64>, f64)> {
    let p = phi.as_poly()?;
    let n = p.n();
    if p.degree() != 2 {
        return None;
    }
    let mut lambda = None;
    for i in 0..n {
        for j in 0..n {
            let h = p.partial(i).partial(j).as_constant()?;
            let h = num_traits::ToPrimitive::to_f64(&h)?;
            if i == j {
                match lambda {
                    None => lambda = Some(h / 2.0),
                    Some(l) if (l - h / 2.0).abs() > 1e-15 * l.abs() => return None,
                    _ => {}
                }
            } else if h != 0.0 {
                return None;
            }
        }
    }
    let lambda = lambda?;
    if lambda <= 0.0 {
        return None;
    }
    let zero = vec![0.0; n];
    let center: Vec<f64> = (0..n).map(|i| -p.partial(i).eval(&zero) / (2.0 * lambda)).collect();
    // The minimum value must vanish.
    if p.eval(&center).abs() > 1e-12 * (1.0 + lambda) {
        return None;
    }
    Some((center, lambda))
}

fn ball_of_sublevel(phi: &ScalarField, r: f64) -> Option<(Vec<f64>, f64)> {
    let (c, lambda) = quadratic_weight_params(phi)?;
    (r > 0.0).then(|| (c, (r / lambda).sqrt()))
}

/// Quadrature methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Uniform samples in the bounding box; CLT error estimate.
    MonteCarlo { samples: usize, seed: u64 },
    /// Cartesian composite Gauss with `points` nodes per axis; ball chords are exact.
    TensorGrid { points: usize },
    /// Polar product rule about the region center; star-shaped regions only.
    Polar { radial: usize, angular: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: Method,
    /// Caller-supplied bounding box, required for sublevel regions without a ball form.
    #[serde(default)]
    pub bbox: Option<(Vec<f64>, Vec<f64>)>,
}

impl QuadratureSpec {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        QuadratureSpec { method: Method::MonteCarlo { samples, seed }, bbox: None }
    }

    pub fn tensor(points: usize) -> Self {
        QuadratureSpec { method: Method::TensorGrid { points }, bbox: None }
    }

    pub fn polar(radial: usize, angular: usize) -> Self {
        QuadratureSpec { method: Method::Polar { radial, angular }, bbox: None }
    }

    pub fn with_bbox(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.bbox = Some((lo, hi));
        self
    }

    pub fn seed(&self) -> Option<u64> {
        match self.method {
            Method::MonteCarlo { seed, .. } => Some(seed),
            _ => None,
        }
    }

    pub fn is_deterministic_grid(&self) -> bool {
        !matches!(self.method, Method::MonteCarlo { .. })
    }

    /// A coarser rule of the same kind, used for two-level error estimates.
    pub fn coarsened(&self) -> Self {
        let method = match self.method {
            Method::MonteCarlo { samples, seed } => Method::MonteCarlo { samples, seed },
            Method::TensorGrid { points } => Method::TensorGrid { points: (points / 2).max(4) },
            Method::Polar { radial, angular } => Method::Polar { radial: (radial / 2).max(4), angular: (angular / 2).max(2) },
        };
        QuadratureSpec { method, bbox: self.bbox.clone() }
    }
}

/// Integral value with an error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: Option<u64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n_samples: 0, seed: None }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Estimate { value: self.value * s, stderr: self.stderr * s.abs(), ..self.clone() }
    }

    /// `self + s * other` with independent-error propagation.
    pub fn combine(&self, other: &Estimate, s: f64) -> Self {
        Estimate {
            value: self.value + s * other.value,
            stderr: (self.stderr.powi(2) + (s * other.stderr).powi(2)).sqrt(),
            n_samples: self.n_samples.max(other.n_samples),
            seed: self.seed.or(other.seed),
        }
    }
}

const MC_BLOCK: usize = 1 << 14;

fn resolve_bbox(region: &Region, quad: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(b) = &quad.bbox {
        if let Some((lo, hi)) = region.natural_bbox() {
            // Intersect with the region's own box.
            let lo2: Vec<f64> = lo.iter().zip(&b.0).map(|(a, c)| a.max(*c)).collect();
            let hi2: Vec<f64> = hi.iter().zip(&b.1).map(|(a, c)| a.min(*c)).collect();
            return Ok((lo2, hi2));
        }
        return Ok(b.clone());
    }
    region.natural_bbox().ok_or_else(|| Error::Invalid("quadrature bounding box missing for this region".into()))
}

/// Integrates a vector of `k` scalar functions over `region` with shared nodes.
///
/// `f` writes the `k` integrand values at `x` (already restricted to the region).
pub fn integrate_many<F>(region: &Region, quad: &QuadratureSpec, k: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    match quad.method {
        Method::MonteCarlo { samples, seed } => monte_carlo(region, quad, samples, seed, k, &f),
        Method::TensorGrid { points } => {
            let fine = tensor_grid(region, quad, points, k, &f)?;
            let coarse = tensor_grid(region, quad, (points / 2).max(4), k, &f)?;
            Ok(two_level(fine, coarse))
        }
        Method::Polar { radial, angular } => {
            let fine = polar(region, radial, angular, k, &f)?;
            let coarse = polar(region, (radial / 2).max(4), (angular / 2).max(2), k, &f)?;
            Ok(two_level(fine, coarse))
        }
    }
}

fn two_level(fine: (Vec<f64>, usize), coarse: (Vec<f64>, usize)) -> Vec<Estimate> {
    fine.0
        .iter()
        .zip(&coarse.0)
        .map(|(a, b)| Estimate { value: *a, stderr: (a - b).abs(), n_samples: fine.1, seed: None })
        .collect()
}

pub fn integrate_fn<F>(region: &Region, quad: &QuadratureSpec, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut v = integrate_many(region, quad, 1, |x, out| {
        out[0] = f(x)?;
        Ok(())
    })?;
    Ok(v.pop().unwrap())
}

fn monte_carlo<F>(region: &Region, quad: &QuadratureSpec, samples: usize, seed: u64, k: usize, f: &F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if samples == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let (lo, hi) = resolve_bbox(region, quad)?;
    let n = lo.len();
    let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a).max(0.0)).product();
    let n_blocks = samples.div_ceil(MC_BLOCK);
    let blocks: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(blk as u64);
            let count = MC_BLOCK.min(samples - blk * MC_BLOCK);
            let mut s = vec![0.0; k];
            let mut s2 = vec![0.0; k];
            let mut x = vec![0.0; n];
            let mut out = vec![0.0; k];
            for _ in 0..count {
                for i in 0..n {
                    x[i] = lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>();
                }
                if !region_contains_for_sampling(region, &x)? {
                    continue;
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                f(&x, &mut out)?;
                for j in 0..k {
                    s[j] += out[j];
                    s2[j] += out[j] * out[j];
                }
            }
            Ok((s, s2))
        })
        .collect();
    let mut s = vec![0.0; k];
    let mut s2 = vec![0.0; k];
    for b in blocks {
        let (bs, bs2) = b?;
        for j in 0..k {
            s[j] += bs[j];
            s2[j] += bs2[j];
        }
    }
    let nf = samples as f64;
    Ok((0..k)
        .map(|j| {
            let mean = s[j] / nf;
            let var = (s2[j] / nf - mean * mean).max(0.0);
            Estimate { value: vol * mean, stderr: vol * (var / nf).sqrt(), n_samples: samples, seed: Some(seed) }
        })
        .collect())
}

fn region_contains_for_sampling(region: &Region, x: &[f64]) -> Result<bool> {
    match region {
        Region::Parallelotope { origin, edges } => {
            let t = solve_linear(edges, &x.iter().zip(origin).map(|(a, b)| a - b).collect::<Vec<_>>())?;
            Ok(t.iter().all(|v| (0.0..=1.0).contains(v)))
        }
        _ => region.contains(x),
    }
}

/// Solves `sum_k t_k edges[k] = rhs`.
fn solve_linear(edges: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| edges[k][i]).chain([rhs[i]]).collect()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[piv][c].abs() < 1e-300 {
            return Err(Error::Invalid("degenerate parallelotope".into()));
        }
        m.swap(piv, c);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=n {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

fn panels_for(points: usize) -> (usize, usize) {
    let order = 4.min(points.max(1));
    (points.div_ceil(order).max(1), order)
}

fn tensor_grid<F>(region: &Region, quad: &QuadratureSpec, points: usize, k: usize, f: &F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let (panels, order) = panels_for(points);
    match region {
        Region::Parallelotope { origin, edges } => {
            let n = origin.len();
            let jac = crate::quadrature::det(&(0..n).map(|i| (0..n).map(|k| edges[k][i]).collect()).collect::<Vec<_>>()).abs();
            let (t, w) = composite(0.0, 1.0, panels, order);
            let total = t.len().pow(n as u32);
            let sums: Vec<Result<Vec<f64>>> = (0..total)
                .into_par_iter()
                .chunks(4096)
                .map(|idxs| {
                    let mut acc = vec![0.0; k];
                    let mut x = vec![0.0; n];
                    let mut out = vec![0.0; k];
                    for idx in idxs {
                        let mut rest = idx;
                        let mut wt = jac;
                        x.copy_from_slice(origin);
                        for e in edges {
                            let j = rest % t.len();
                            rest /= t.len();
                            wt *= w[j];
                            for i in 0..n {
                                x[i] += t[j] * e[i];
                            }
                        }
                        out.iter_mut().for_each(|v| *v = 0.0);
                        f(&x, &mut out)?;
                        for j in 0..k {
                            acc[j] += wt * out[j];
                        }
                    }
                    Ok(acc)
                })
                .collect();
            Ok((reduce(sums, k)?, total))
        }
        _ => {
            let (lo, hi) = resolve_bbox(region, quad)?;
            let n = lo.len();
            let ball = region.as_ball();
            // Outer axes 2..n on the box; axis 1 either on the box or on the exact ball chord.
            let outer: Vec<(Vec<f64>, Vec<f64>)> = (1..n).map(|i| composite(lo[i], hi[i], panels, order)).collect();
            let (u, uw) = composite(-1.0, 1.0, panels, order);
            let m_outer: usize = outer.iter().map(|o| o.0.len()).product();
            let sums: Vec<Result<Vec<f64>>> = (0..m_outer)
                .into_par_iter()
                .chunks(256)
                .map(|idxs| {
                    let mut acc = vec![0.0; k];
                    let mut x = vec![0.0; n];
                    let mut out = vec![0.0; k];
                    for idx in idxs {
                        let mut rest = idx;
                        let mut wt = 1.0;
                        for (a, (ox, ow)) in outer.iter().enumerate() {
                            let j = rest % ox.len();
                            rest /= ox.len();
                            x[a + 1] = ox[j];
                            wt *= ow[j];
                        }
                        let (a0, b0) = match &ball {
                            Some((c, r)) => {
                                let rest2: f64 = (1..n).map(|i| (x[i] - c[i]).powi(2)).sum();
                                if rest2 >= r * r {
                                    continue;
                                }
                                let h = (r * r - rest2).sqrt();
                                ((c[0] - h).max(lo[0]), (c[0] + h).min(hi[0]))
                            }
                            None => (lo[0], hi[0]),
                        };
                        if b0 <= a0 {
                            continue;
                        }
                        let half = 0.5 * (b0 - a0);
                        for (ui, uwi) in u.iter().zip(&uw) {
                            x[0] = a0 + half * (ui + 1.0);
                            if ball.is_none() && !region.contains(&x)? {
                                continue;
                            }
                            out.iter_mut().for_each(|v| *v = 0.0);
                            f(&x, &mut out)?;
                            for j in 0..k {
                                acc[j] += wt * half * uwi * out[j];
                            }
                        }
                    }
                    Ok(acc)
                })
                .collect();
            Ok((reduce(sums, k)?, m_outer * u.len()))
        }
    }
}

fn reduce(parts: Vec<Result<Vec<f64>>>, k: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; k];
    for p in parts {
        let p = p?;
        for j in 0..k {
            acc[j] += p[j];
        }
    }
    Ok(acc)
}

/// Radial extent of a star-shaped sublevel set `{phi < r}` along `dir` from `c`.
fn ray_extent(phi: &ScalarField, r: f64, c: &[f64], dir: &[f64]) -> Result<f64> {
    let at = |t: f64| -> Result<f64> {
        let x: Vec<f64> = c.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        phi.eval(&x)
    };
    if at(0.0).map(|v| v >= r).unwrap_or(false) {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut iter = 0;
    while at(hi)? < r {
        hi *= 2.0;
        iter += 1;
        if iter > 60 {
            return Err(Error::Invalid("sublevel set is unbounded along a ray".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn polar<F>(region: &Region, radial: usize, angular: usize, k: usize, f: &F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let n = region.n();
    let (dirs, dw) = sphere_rule(n, angular);
    let (panels, order) = panels_for(radial);
    let (t, tw) = composite(0.0, 1.0, panels, order);
    // Per direction: center and radial interval [rho_a, rho_b].
    let center: Vec<f64> = match region {
        Region::Ball { center, .. } => center.clone(),
        Region::Sublevel { center: Some(c), .. } | Region::Shell { center: Some(c), .. } => c.clone(),
        Region::Sublevel { phi, r, .. } | Region::Shell { phi, r2: r, .. } => {
            ball_of_sublevel(phi, *r).map(|b| b.0).ok_or_else(|| Error::Invalid("polar rule needs a star center".into()))?
        }
        _ => return Err(Error::Invalid("polar rule supports balls and star-shaped sublevel sets".into())),
    };
    let n_dirs = dw.len();
    let sums: Vec<Result<Vec<f64>>> = (0..n_dirs)
        .into_par_iter()
        .map(|di| {
            let dir = &dirs[di * n..(di + 1) * n];
            let (ra, rb) = match region {
                Region::Ball { radius, .. } => (0.0, *radius),
                Region::Sublevel { phi, r, .. } => (0.0, ray_extent(phi, *r, &center, dir)?),
                Region::Shell { phi, r1, r2, .. } => (ray_extent(phi, *r1, &center, dir)?, ray_extent(phi, *r2, &center, dir)?),
                _ => unreachable!(),
            };
            let mut acc = vec![0.0; k];
            let mut x = vec![0.0; n];
            let mut out = vec![0.0; k];
            let len = rb - ra;
            if len <= 0.0 {
                return Ok(acc);
            }
            for (ti, twi) in t.iter().zip(&tw) {
                let rho = ra + len * ti;
                for i in 0..n {
                    x[i] = center[i] + rho * dir[i];
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                f(&x, &mut out)?;
                let wt = dw[di] * twi * len * rho.powi(n as i32 - 1);
                for j in 0..k {
                    acc[j] += wt * out[j];
                }
            }
            Ok(acc)
        })
        .collect();
    Ok((reduce(sums, k)?, n_dirs * t.len()))
}

/// `int_region g dlambda` where `a = g beta^n / n!`.
pub fn integrate(a: &Superform<ScalarField>, region: &Region, quad: &QuadratureSpec) -> Result<Estimate> {
    let n = a.n();
    if a.bidegree() != (n, n) {
        return Err(Error::Bidegree(format!("integration needs an ({n},{n})-form, got {:?}", a.bidegree())));
    }
    let g = a.top_density()?;
    integrate_fn(region, quad, |x| g.eval(x))
}

/// `int_{dK} a` for an `(n-1, n)`-form over the boundary of a ball or a box,
/// oriented so that `int_K da = int_{dK} a`.
pub fn boundary_integral(a: &Superform<ScalarField>, region: &Region, res: usize) -> Result<f64> {
    let n = a.n();
    if a.bidegree() != (n - 1, n) {
        return Err(Error::Bidegree(format!("boundary integrals need an ({}, {n})-form, got {:?}", n - 1, a.bidegree())));
    }
    let sign = crate::exterior::vol_sign(n) as f64;
    let full = MultiIndex::full(n);
    let comps: Vec<ScalarField> = (1..=n)
        .map(|i| {
            let k = MultiIndex::from_mask(full.mask() & !(1 << (i - 1)));
            let c = a.coeff(&BasisElement::new(k, full)).cloned().unwrap_or_else(|| ScalarField::zero(n));
            let s = if (i - 1) % 2 == 0 { sign } else { -sign };
            c.scaled(s)
        })
        .collect();
    let flux = |x: &[f64], normal: &[f64]| -> Result<f64> {
        let mut s = 0.0;
        for (c, nu) in comps.iter().zip(normal) {
            if *nu != 0.0 {
                s += c.eval(x)? * nu;
            }
        }
        Ok(s)
    };
    let res = res.max(8);
    Ok(match region {
        Region::Box { lo, hi } => {
            let (panels, order) = panels_for(res);
            let mut total = 0.0;
            for axis in 0..n {
                for (side, sgn) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
                    let others: Vec<usize> = (0..n).filter(|&i| i != axis).collect();
                    let rules: Vec<(Vec<f64>, Vec<f64>)> = others.iter().map(|&i| composite(lo[i], hi[i], panels, order)).collect();
                    let m: usize = rules.iter().map(|r| r.0.len()).product::<usize>().max(1);
                    let mut normal = vec![0.0; n];
                    normal[axis] = sgn;
                    let mut x = vec![0.0; n];
                    x[axis] = side;
                    for idx in 0..m {
                        let mut rest = idx;
                        let mut w = 1.0;
                        for (o, (rx, rw)) in others.iter().zip(&rules) {
                            let j = rest % rx.len();
                            rest /= rx.len();
                            x[*o] = rx[j];
                            w *= rw[j];
                        }
                        total += w * flux(&x, &normal)?;
                    }
                }
            }
            total
        }
        _ => {
            let (center, radius) =
                region.as_ball().ok_or_else(|| Error::Invalid("boundary integrals support balls and boxes".into()))?;
            let (dirs, dw) = sphere_rule(n, res);
            let mut total = 0.0;
            for (dir, w) in dirs.chunks(n).zip(&dw) {
                let x: Vec<f64> = center.iter().zip(dir).map(|(c, d)| c + radius * d).collect();
                total += w * radius.powi(n as i32 - 1) * flux(&x, dir)?;
            }
            total
        }
    })
}

/// `|int_K da - int_{dK} a|` for an `(n-1, n)`-form on a ball or a box.
pub fn stokes_residual(a: &Superform<ScalarField>, region: &Region, quad: &QuadratureSpec) -> Result<f64> {
    let n = a.n();
    if a.bidegree() != (n - 1, n) {
        return Err(Error::Bidegree(format!("Stokes check needs an ({}, {n})-form, got {:?}", n - 1, a.bidegree())));
    }
    if !matches!(region, Region::Box { .. } | Region::Ball { .. }) {
        return Err(Error::Invalid("Stokes residual supports balls and boxes".into()));
    }
    let interior = integrate(&d(a)?, region, quad)?.value;
    let res = match quad.method {
        Method::TensorGrid { points } | Method::Polar { radial: points, .. } => points,
        Method::MonteCarlo { .. } => 32,
    };
    Ok((interior - boundary_integral(a, region, res)?).abs())
}

/// `(1/r^n) int_{|x| = r} f dsigma` with `dsigma = sum_i (-1)^{i-1} x_i dx^_i`,
/// which equals `int_{S^{n-1}} f(r theta) dtheta`.
pub fn sphere_mean(f: &ScalarField, r: f64, res: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("sphere radius must be positive, got {r}")));
    }
    let n = f.n();
    let (dirs, dw) = sphere_rule(n, res);
    let mut s = 0.0;
    for (dir, w) in dirs.chunks(n).zip(&dw) {
        let x: Vec<f64> = dir.iter().map(|d| r * d).collect();
        s += w * f.eval(&x)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::beta_power;
    use crate::quadrature::{factorial, unit_ball_volume, unit_sphere_area};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    type SF = Superform<ScalarField>;

    fn field(n: usize, s: &str) -> ScalarField {
        ScalarField::parse_poly(n, s).unwrap()
    }

    #[test]
    fn d_of_x1_dx2() {
        let a = SF::term(2, &[2], &[], field(2, "x1")).unwrap();
        let expect = SF::term(2, &[1, 2], &[], ScalarField::constant(2, 1.0)).unwrap();
        assert_eq!(d(&a).unwrap(), expect);
    }

    #[test]
    fn ddsharp_half_norm_sq_is_beta() {
        for n in 1..=4 {
            let f = ScalarField::norm_sq(n, &vec![0.0; n]).scaled(0.5);
            assert_eq!(ddsharp_field(&f).unwrap(), crate::exterior::beta::<ScalarField>(n));
        }
    }

    #[test]
    fn alpha_vanishes_for_constant_weight() {
        let a = alpha_form(&ScalarField::constant(3, 2.0)).unwrap();
        assert!(a.is_zero());
    }

    #[test]
    fn alpha_errors_where_weight_vanishes() {
        let a = alpha_form(&ScalarField::norm_sq(2, &[0.0, 0.0])).unwrap();
        assert!(eval_form(&a, &[0.0, 0.0]).is_err());
        let neg = alpha_form(&field(2, "x1 - 5")).unwrap();
        assert!(eval_form(&neg, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn alpha_one_dimensional_is_zero() {
        let a = alpha_form(&ScalarField::norm_sq(1, &[0.0])).unwrap();
        for &x in &[-2.0, -0.3, 0.7, 5.0] {
            assert_abs_diff_eq!(eval_form(&a, &[x]).unwrap().max_abs(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_cube_integral_of_beta_power() {
        for n in 1..=3 {
            let b: SF = beta_power(n, n);
            let cube = Region::Box { lo: vec![0.0; n], hi: vec![1.0; n] };
            let v = integrate(&b, &cube, &QuadratureSpec::tensor(8)).unwrap();
            assert_abs_diff_eq!(v.value, factorial(n), epsilon = 1e-12);
        }
    }

    #[test]
    fn ball_integral_of_beta_power() {
        for n in 2..=3 {
            let b: SF = beta_power(n, n);
            let ball = Region::ball(vec![0.0; n], 0.7).unwrap();
            let exact = factorial(n) * unit_ball_volume(n) * 0.7f64.powi(n as i32);
            let mc = integrate(&b, &ball, &QuadratureSpec::monte_carlo(200_000, 1)).unwrap();
            assert!((mc.value - exact).abs() < 4.0 * mc.stderr, "{mc:?} vs {exact}");
            let grid = integrate(&b, &ball, &QuadratureSpec::tensor(32)).unwrap();
            assert!((grid.value - exact).abs() < 1e-3 * exact);
            let pol = integrate(&b, &ball, &QuadratureSpec::polar(8, 8)).unwrap();
            assert_abs_diff_eq!(pol.value, exact, epsilon = 1e-12 * exact);
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let b: SF = beta_power(2, 2);
        let ball = Region::ball(vec![0.0; 2], 1.0).unwrap();
        let q = QuadratureSpec::monte_carlo(50_000, 42);
        assert_eq!(integrate(&b, &ball, &q).unwrap(), integrate(&b, &ball, &q).unwrap());
    }

    #[test]
    fn sublevel_polar_matches_ball() {
        // {2|x|^2 < 1} is the ball of radius 1/sqrt 2.
        let phi = ScalarField::norm_sq(3, &[0.0; 3]).scaled(2.0);
        let region = Region::Sublevel { phi: field(3, "2*x1^2 + 2*x2^2 + 2*x3^2 + x1^2 - x1^2"), r: 1.0, center: Some(vec![0.0; 3]) };
        let _ = phi;
        let g = field(3, "1 + x1^2");
        let v = integrate_fn(&region, &QuadratureSpec::polar(16, 12), |x| g.eval(x)).unwrap();
        let ball = Region::ball(vec![0.0; 3], 0.5f64.sqrt()).unwrap();
        let w = integrate_fn(&ball, &QuadratureSpec::polar(16, 12), |x| g.eval(x)).unwrap();
        assert_abs_diff_eq!(v.value, w.value, epsilon = 1e-10);
    }

    #[test]
    fn ellipsoid_by_ray_search() {
        let phi = field(2, "x1^2 + 4*x2^2");
        let region = Region::Sublevel { phi, r: 1.0, center: Some(vec![0.0, 0.0]) };
        let v = integrate_fn(&region, &QuadratureSpec::polar(8, 32), |_| Ok(1.0)).unwrap();
        assert_abs_diff_eq!(v.value, std::f64::consts::PI / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn stokes_on_box_and_ball() {
        let n = 2;
        let a = SF::term(n, &[1], &[1, 2], field(n, "x1^2*x2 + 3*x2^3"))
            .unwrap()
            .add(&SF::term(n, &[2], &[1, 2], field(n, "x1*x2 - x1^3")).unwrap())
            .unwrap();
        let cube = Region::Box { lo: vec![0.0; 2], hi: vec![1.0; 2] };
        assert!(stokes_residual(&a, &cube, &QuadratureSpec::tensor(16)).unwrap() <= 1e-6);
        let ball = Region::ball(vec![0.1, -0.2], 0.8).unwrap();
        assert!(stokes_residual(&a, &ball, &QuadratureSpec::polar(16, 16)).unwrap() <= 1e-6);
        assert_eq!(stokes_residual(&SF::zero(2, 1, 2), &cube, &QuadratureSpec::tensor(8)).unwrap(), 0.0);
    }

    #[test]
    fn stokes_with_compact_support() {
        let n = 2;
        let bump = field(n, "1 - 4*x1^2 - 4*x2^2").apply(crate::field::Func::Bump(0));
        let a = SF::term(n, &[2], &[1, 2], bump).unwrap();
        let cube = Region::Box { lo: vec![-1.0; 2], hi: vec![1.0; 2] };
        let r = stokes_residual(&a, &cube, &QuadratureSpec::tensor(64)).unwrap();
        assert!(r <= 1e-6, "{r}");
    }

    #[test]
    fn sphere_mean_examples() {
        let n = 3;
        let one = ScalarField::constant(n, 1.0);
        for &r in &[0.5, 1.0, 3.0] {
            assert_abs_diff_eq!(sphere_mean(&one, r, 12).unwrap(), unit_sphere_area(n), epsilon = 1e-10);
        }
        let q = ScalarField::norm_sq(n, &[0.0; 3]);
        let ratio = sphere_mean(&q, 2.0, 12).unwrap() / sphere_mean(&one, 2.0, 12).unwrap();
        assert_abs_diff_eq!(ratio, 4.0, epsilon = 1e-6);
        assert!(sphere_mean(&one, 0.0, 4).is_err());
    }

    #[test]
    fn sphere_mean_of_shifted_newtonian_kernel_increases() {
        // Harmonic plus strictly subharmonic, with the pole outside every sphere used.
        let n = 3;
        let f = ScalarField::sum(
            n,
            vec![ScalarField::radial_power(n, vec![0.0, 0.0, 5.0], 1.0, -1.0), ScalarField::norm_sq(n, &[0.0; 3]).scaled(0.01)],
        );
        let mut last = f64::NEG_INFINITY;
        for k in 0..6 {
            let r = 0.25 * 1.5f64.powi(k);
            let m = sphere_mean(&f, r, 16).unwrap();
            assert!(m > last, "{m} <= {last} at r = {r}");
            last = m;
        }
    }

    #[test]
    fn sphere_mean_derivative_is_ball_laplacian_flux() {
        // d/dr int_{S^{n-1}} f(r theta) = r^{1-n} int_{B_r} Laplacian f
        let n = 3;
        let f = field(n, "x1^4 + x1^2*x2^2 - 2*x3^2 + x2");
        let lap = field(n, "12*x1^2 + 2*x2^2 + 2*x1^2 - 4");
        let (r1, r2) = (0.4, 1.1);
        let lhs = sphere_mean(&f, r2, 16).unwrap() - sphere_mean(&f, r1, 16).unwrap();
        let rhs = crate::quadrature::integrate_1d(r1, r2, 8, 6, |r| {
            let ball = Region::ball(vec![0.0; 3], r).unwrap();
            r.powi(1 - n as i32) * integrate_fn(&ball, &QuadratureSpec::polar(8, 16), |x| lap.eval(x)).unwrap().value
        });
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
    }

    #[test]
    fn region_validation() {
        assert!(Region::ball(vec![0.0], 0.0).is_err());
        assert!(Region::shell(ScalarField::norm_sq(1, &[0.0]), 0.5, 0.2, None).is_err());
        let g = ScalarField::constant(2, 1.0);
        let region = Region::Sublevel { phi: field(2, "x1^4 + x2^2"), r: 1.0, center: None };
        assert!(integrate_fn(&region, &QuadratureSpec::monte_carlo(10, 1), |x| g.eval(x)).is_err());
        let _ = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    }
}
