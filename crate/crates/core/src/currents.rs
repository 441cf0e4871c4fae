//! Supercurrents: smooth forms, currents of integration `[M]_s` over
//! submanifolds, and tropical currents `dd# f` of max-affine functions.

use serde::{Deserialize, Serialize};

use crate::calculus::{d, ddsharp, eval_form, integrate_many, Estimate, Method, QuadratureSpec, Region};
use crate::error::{Error, Result};
use crate::exterior::{beta_power, BasisElement, MultiIndex, Superform};
use crate::field::{Func, MaxAffine, MollifierKernel, ScalarField};
use crate::positivity::{is_m_convex_tol, rank_one_form, sample_points};
use crate::quadrature::{composite, gauss_legendre, sphere_rule};

/// Integral of a current against a test form, with an error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: String,
}

impl MeasureEstimate {
    fn from_estimate(e: &Estimate, method: &str) -> Self {
        MeasureEstimate { value: e.value, stderr: e.stderr, method: method.into() }
    }
}

/// `e * Bump(1 - |x - c|^2 / R^2)`: smooth, peak 1 at `c`, supported in the closed ball.
pub fn bump(n: usize, center: &[f64], radius: f64) -> Result<ScalarField> {
    if center.len() != n {
        return Err(Error::Dimension(format!("bump center must have length {n}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Invalid(format!("bump radius must be positive, got {radius}")));
    }
    let s = ScalarField::sum(n, vec![ScalarField::constant(n, 1.0), ScalarField::norm_sq(n, center).scaled(-1.0 / (radius * radius))]);
    Ok(s.apply(Func::Bump(0)).scaled(std::f64::consts::E))
}

/// A current given by a form with locally integrable coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothCurrent {
    pub form: Superform<ScalarField>,
}

impl SmoothCurrent {
    pub fn new(form: Superform<ScalarField>) -> Self {
        SmoothCurrent { form }
    }

    pub fn n(&self) -> usize {
        self.form.n()
    }

    /// `p` for bidegree `(n-p, n-p)`.
    pub fn bidimension(&self) -> Result<usize> {
        let (a, b) = self.form.bidegree();
        if a != b {
            return Err(Error::Bidegree(format!("current of bidegree ({a},{b}) has no bidimension (p,p)")));
        }
        Ok(self.n() - a)
    }

    pub fn ddsharp(&self) -> Result<SmoothCurrent> {
        Ok(SmoothCurrent::new(ddsharp(&self.form)?))
    }

    pub fn d(&self) -> Result<SmoothCurrent> {
        Ok(SmoothCurrent::new(d(&self.form)?))
    }

    /// Symbolic closedness `dT = 0`.
    pub fn is_closed(&self) -> Result<bool> {
        Ok(d(&self.form)?.terms().values().all(|c| c.is_identically_zero()))
    }
}

/// Parametrized pieces of submanifolds used for surface quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Patch {
    /// `origin + sum t_k basis[k]`, `|t_k| <= half_width`; `basis` orthonormal.
    Plane { origin: Vec<f64>, basis: Vec<Vec<f64>>, half_width: f64 },
    /// Round hypersphere in `R^2` or `R^3`.
    Sphere { center: Vec<f64>, radius: f64 },
    /// `(a cosh(v/a) cos u, a cosh(v/a) sin u, v)`, `|v| <= height`.
    Catenoid { neck: f64, height: f64 },
}

/// Quadrature nodes on a surface: flat points and `dS` weights.
#[derive(Clone, Debug, Default)]
pub struct SurfaceNodes {
    pub n: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SurfaceNodes {
    fn push(&mut self, x: &[f64], w: f64) {
        self.points.extend_from_slice(x);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks(self.n.max(1)).zip(self.weights.iter().copied())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal completion of the orthonormal family `basis` in `R^n`.
fn orth_complement(n: usize, basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<Vec<f64>> = basis.to_vec();
    let mut out = Vec::new();
    for e in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for b in &all {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let r = norm(&v);
        if r > 1e-8 {
            let u: Vec<f64> = v.iter().map(|x| x / r).collect();
            all.push(u.clone());
            out.push(u);
        }
        if all.len() == n {
            break;
        }
    }
    out
}

/// `(center, r_in, r_out)` when the region is a ball or a shell between concentric balls.
fn as_annulus(region: &Region) -> Option<(Vec<f64>, f64, f64)> {
    if let Some((c, r)) = region.as_ball() {
        return Some((c, 0.0, r));
    }
    if let Region::Shell { phi, r1, r2, .. } = region {
        let (c, lambda) = crate::calculus::quadratic_weight_params(phi)?;
        return Some((c, (r1 / lambda).sqrt(), (r2 / lambda).sqrt()));
    }
    None
}

fn window(region: &Region, quad: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    match (&quad.bbox, region.natural_bbox()) {
        (Some(b), Some((lo, hi))) => Ok((
            lo.iter().zip(&b.0).map(|(a, c)| a.max(*c)).collect(),
            hi.iter().zip(&b.1).map(|(a, c)| a.min(*c)).collect(),
        )),
        (Some(b), None) => Ok(b.clone()),
        (None, Some(w)) => Ok(w),
        (None, None) => Err(Error::Invalid("quadrature bounding box missing for this region".into())),
    }
}

fn in_window(x: &[f64], w: &(Vec<f64>, Vec<f64>)) -> bool {
    x.iter().zip(w.0.iter().zip(&w.1)).all(|(v, (a, b))| *v >= *a && *v <= *b)
}

fn in_region(region: &Region, x: &[f64]) -> Result<bool> {
    match region {
        Region::Parallelotope { .. } => Err(Error::Invalid("parallelotope regions are not supported for measure currents".into())),
        _ => region.contains(x),
    }
}

/// Resolution of surface meshes implied by a quadrature spec.
pub fn surface_resolution(quad: &QuadratureSpec) -> usize {
    match quad.method {
        Method::TensorGrid { points } => points.max(4),
        Method::Polar { radial, .. } => radial.max(4),
        Method::MonteCarlo { samples, .. } => ((samples as f64).sqrt() as usize).clamp(16, 256),
    }
}

impl Patch {
    pub fn n(&self) -> usize {
        match self {
            Patch::Plane { origin, .. } => origin.len(),
            Patch::Sphere { center, .. } => center.len(),
            Patch::Catenoid { .. } => 3,
        }
    }

    /// Nodes covering the whole patch at resolution `res`.
    pub fn nodes(&self, res: usize) -> SurfaceNodes {
        let n = self.n();
        let mut out = SurfaceNodes { n, ..Default::default() };
        let (panels, order) = (res.div_ceil(4).max(1), 4);
        match self {
            Patch::Plane { origin, basis, half_width } => {
                let p = basis.len();
                let (t, tw) = composite(-half_width, *half_width, panels, order);
                let total = t.len().pow(p as u32);
                let mut x = vec![0.0; n];
                for idx in 0..total {
                    let mut rest = idx;
                    let mut w = 1.0;
                    x.copy_from_slice(origin);
                    for b in basis {
                        let j = rest % t.len();
                        rest /= t.len();
                        w *= tw[j];
                        x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += t[j] * bi);
                    }
                    out.push(&x, w);
                }
            }
            Patch::Sphere { center, radius } => {
                let (dirs, dw) = sphere_rule(n, res);
                for (dir, w) in dirs.chunks(n).zip(&dw) {
                    let x: Vec<f64> = center.iter().zip(dir).map(|(c, u)| c + radius * u).collect();
                    out.push(&x, w * radius.powi(n as i32 - 1));
                }
            }
            Patch::Catenoid { neck, height } => {
                let a = *neck;
                let nu = 4 * res;
                let (v, vw) = composite(-height, *height, panels, order);
                let du = 2.0 * std::f64::consts::PI / nu as f64;
                for (vi, vwi) in v.iter().zip(&vw) {
                    let ch = (vi / a).cosh();
                    for k in 0..nu {
                        let u = (k as f64 + 0.5) * du;
                        out.push(&[a * ch * u.cos(), a * ch * u.sin(), *vi], a * ch * ch * du * vwi);
                    }
                }
            }
        }
        out
    }

    /// Nodes restricted to `region` (exact for planes meeting balls and shells).
    pub fn nodes_in(&self, region: &Region, quad: &QuadratureSpec, res: usize) -> Result<SurfaceNodes> {
        if let (Patch::Plane { origin, basis, .. }, Some((c, r_in, r_out))) = (self, as_annulus(region)) {
            return Ok(plane_annulus_nodes(origin, basis, &c, r_in, r_out, res));
        }
        let win = window(region, quad).ok();
        let all = self.nodes(res);
        let mut out = SurfaceNodes { n: all.n, ..Default::default() };
        for (x, w) in all.iter() {
            if win.as_ref().is_none_or(|wd| in_window(x, wd)) && in_region(region, x)? {
                out.push(x, w);
            }
        }
        Ok(out)
    }
}

/// In-plane polar nodes for `plane ∩ {r_in < |x - c| < r_out}`.
fn plane_annulus_nodes(origin: &[f64], basis: &[Vec<f64>], c: &[f64], r_in: f64, r_out: f64, res: usize) -> SurfaceNodes {
    let n = origin.len();
    let p = basis.len();
    let mut out = SurfaceNodes { n, ..Default::default() };
    let oc: Vec<f64> = c.iter().zip(origin).map(|(a, b)| a - b).collect();
    let coords: Vec<f64> = basis.iter().map(|b| dot(&oc, b)).collect();
    let foot: Vec<f64> = (0..n).map(|i| origin[i] + basis.iter().zip(&coords).map(|(b, t)| t * b[i]).sum::<f64>()).collect();
    let d2: f64 = c.iter().zip(&foot).map(|(a, b)| (a - b) * (a - b)).sum();
    if r_out * r_out <= d2 {
        return out;
    }
    let rb = (r_out * r_out - d2).sqrt();
    let ra = if r_in * r_in > d2 { (r_in * r_in - d2).sqrt() } else { 0.0 };
    let (panels, order) = (res.div_ceil(4).max(1), 4);
    let (t, tw) = composite(ra, rb, panels, order);
    let (dirs, dw) = sphere_rule(p, res);
    for (dir, w) in dirs.chunks(p).zip(&dw) {
        for (ti, twi) in t.iter().zip(&tw) {
            let x: Vec<f64> = (0..n).map(|i| foot[i] + ti * basis.iter().zip(dir).map(|(b, u)| u * b[i]).sum::<f64>()).collect();
            out.push(&x, w * twi * ti.powi(p as i32 - 1));
        }
    }
    out
}

/// The current `[M]_s` of a submanifold `M = {rho_1 = ... = rho_{n-p} = 0}`.
#[derive(Clone, Debug)]
pub struct SubmanifoldCurrent {
    pub n: usize,
    pub p: usize,
    pub rho: Vec<ScalarField>,
    grads: Vec<Vec<ScalarField>>,
    pub patch: Patch,
}

impl SubmanifoldCurrent {
    /// Validates that the patch lies on `{rho = 0}` and that the level
    /// gradients are independent there.
    pub fn new(rho: Vec<ScalarField>, patch: Patch) -> Result<Self> {
        let n = patch.n();
        if rho.is_empty() || rho.len() >= n {
            return Err(Error::Invalid(format!("need between 1 and {} level functions", n - 1)));
        }
        if rho.iter().any(|r| r.n() != n) {
            return Err(Error::Dimension("level functions and patch disagree on n".into()));
        }
        let grads = rho.iter().map(|r| (0..n).map(|i| r.partial(i)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        let m = SubmanifoldCurrent { n, p: n - rho.len(), rho, grads, patch };
        for (x, _) in m.patch.nodes(8).iter() {
            for r in &m.rho {
                let v = r.eval(x)?;
                if v.abs() > 1e-8 * (1.0 + norm(x).powi(2)) {
                    return Err(Error::Invalid(format!("patch node {x:?} is off the level set (rho = {v})")));
                }
            }
            let ns = m.normals(x)?;
            for (j, a) in ns.iter().enumerate() {
                for (k, b) in ns.iter().enumerate() {
                    let want = if j == k { 1.0 } else { 0.0 };
                    if (dot(a, b) - want).abs() > 1e-8 {
                        return Err(Error::Invalid("normals fail orthonormality".into()));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Affine `p`-plane through `origin` spanned by `span` (orthonormalized).
    pub fn plane(origin: Vec<f64>, span: Vec<Vec<f64>>, half_width: f64) -> Result<Self> {
        let n = origin.len();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in span {
            let mut u = v.clone();
            for b in &basis {
                let c = dot(&u, b);
                u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let r = norm(&u);
            if r < 1e-10 {
                return Err(Error::Invalid("plane span is degenerate".into()));
            }
            basis.push(u.iter().map(|x| x / r).collect());
        }
        let normals = orth_complement(n, &basis);
        let rho = normals
            .iter()
            .map(|nu| {
                let lin = (0..n).fold(crate::poly::Poly::zero(n), |acc, i| {
                    acc.add(&crate::poly::Poly::var(n, i).scale(&crate::poly::rational_from_f64(nu[i]).unwrap()))
                });
                let off = crate::poly::rational_from_f64(-dot(nu, &origin)).unwrap();
                ScalarField::poly(lin.add(&crate::poly::Poly::constant(n, off)))
            })
            .collect();
        Self::new(rho, Patch::Plane { origin, basis, half_width })
    }

    pub fn sphere(center: Vec<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        if !(2..=3).contains(&n) {
            return Err(Error::Dimension("sphere patches exist for n = 2, 3".into()));
        }
        let rho = ScalarField::sum(n, vec![ScalarField::norm_sq(n, &center), ScalarField::constant(n, -radius * radius)]);
        Self::new(vec![rho], Patch::Sphere { center, radius })
    }

    /// Catenoid in `R^3`, the zero set of `x^2 + y^2 - a^2 cosh^2(z/a)`.
    pub fn catenoid(neck: f64, height: f64) -> Result<Self> {
        let n = 3;
        let z = ScalarField::parse_poly(n, "x3")?.scaled(2.0 / neck);
        let ch2 = ScalarField::sum(
            n,
            vec![z.clone().apply(Func::Exp), z.scaled(-1.0).apply(Func::Exp), ScalarField::constant(n, 2.0)],
        )
        .scaled(0.25 * neck * neck);
        let rho = ScalarField::sum(n, vec![ScalarField::parse_poly(n, "x1^2 + x2^2")?, ch2.scaled(-1.0)]);
        Self::new(vec![rho], Patch::Catenoid { neck, height })
    }

    /// Orthonormal normals from the level gradients (Gram-Schmidt in input order).
    pub fn normals(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for g in &self.grads {
            let gv: Vec<f64> = g.iter().map(|c| c.eval(x)).collect::<Result<_>>()?;
            let g0 = norm(&gv);
            let mut u = gv;
            for b in &out {
                let c = dot(&u, b);
                u.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
            }
            let r = norm(&u);
            if !(r > 1e-8 * g0) || g0 == 0.0 {
                return Err(Error::Invalid(format!("level gradients are dependent at {x:?}")));
            }
            out.push(u.iter().map(|v| v / r).collect());
        }
        Ok(out)
    }

    /// `[M]_s` at a point of `M`: `n_1 ^ n_1# ^ ... ^ n_{n-p} ^ n_{n-p}#`.
    pub fn local_form(&self, x: &[f64]) -> Result<Superform<f64>> {
        let mut f = Superform::one(self.n);
        for nu in self.normals(x)? {
            f = f.wedge(&rank_one_form(&nu))?;
        }
        Ok(f)
    }
}

/// One facet `{l_i = l_j >= l_k}` of the corner locus, parametrized as
/// `origin + sum t_a basis[a]` subject to `c . t + d >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Facet {
    pub pieces: (usize, usize),
    pub g: Vec<f64>,
    pub weight: Vec<Vec<f64>>,
    pub origin: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub constraints: Vec<(Vec<f64>, f64)>,
}

impl Facet {
    pub fn weight_form(&self) -> Superform<f64> {
        Superform::from_matrix_11(&self.weight)
    }

    fn point(&self, t: &[f64]) -> Vec<f64> {
        let mut x = self.origin.clone();
        for (b, ti) in self.basis.iter().zip(t) {
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += ti * bi);
        }
        x
    }

    /// Constraints from the box `lo <= x <= hi` in facet coordinates.
    fn box_constraints(&self, lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut out = Vec::new();
        for i in 0..self.origin.len() {
            let c: Vec<f64> = self.basis.iter().map(|b| b[i]).collect();
            out.push((c.clone(), self.origin[i] - lo[i]));
            out.push((c.iter().map(|v| -v).collect(), hi[i] - self.origin[i]));
        }
        out
    }

    /// Quadrature nodes on the facet inside `win`, clipped exactly to the
    /// annulus when given (indicator in dimension three).
    fn nodes(&self, win: &(Vec<f64>, Vec<f64>), region: &Region, annulus: Option<&(Vec<f64>, f64, f64)>, res: usize) -> Result<SurfaceNodes> {
        let n = self.origin.len();
        let mut out = SurfaceNodes { n, ..Default::default() };
        let mut cons = self.constraints.clone();
        cons.extend(self.box_constraints(&win.0, &win.1));
        match n {
            1 => {
                if cons.iter().all(|(_, d)| *d >= 0.0) {
                    let x = self.origin.clone();
                    if in_region(region, &x)? {
                        out.push(&x, 1.0);
                    }
                }
            }
            2 => {
                let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
                for (c, dd) in &cons {
                    let c = c[0];
                    if c.abs() < 1e-300 {
                        if *dd < 0.0 {
                            return Ok(out);
                        }
                    } else if c > 0.0 {
                        a = a.max(-dd / c);
                    } else {
                        b = b.min(-dd / c);
                    }
                }
                if !(b > a) {
                    return Ok(out);
                }
                let mut intervals = vec![(a, b)];
                if let Some((c, r_in, r_out)) = annulus {
                    let oc: Vec<f64> = self.origin.iter().zip(c).map(|(o, cc)| o - cc).collect();
                    let tc = -dot(&oc, &self.basis[0]);
                    let d2 = dot(&oc, &oc) - tc * tc;
                    let clip = |iv: Vec<(f64, f64)>, lo: f64, hi: f64| -> Vec<(f64, f64)> {
                        iv.into_iter().filter_map(|(u, v)| {
                            let (u, v) = (u.max(lo), v.min(hi));
                            (v > u).then_some((u, v))
                        }).collect()
                    };
                    if r_out * r_out <= d2 {
                        return Ok(out);
                    }
                    let h = (r_out * r_out - d2).sqrt();
                    intervals = clip(intervals, tc - h, tc + h);
                    if r_in * r_in > d2 {
                        let h = (r_in * r_in - d2).sqrt();
                        let left = clip(intervals.clone(), f64::NEG_INFINITY, tc - h);
                        let right = clip(intervals, tc + h, f64::INFINITY);
                        intervals = left.into_iter().chain(right).collect();
                    }
                }
                let (panels, order) = (res.div_ceil(4).max(1), 4);
                for (u, v) in intervals {
                    let (t, tw) = composite(u, v, panels, order);
                    for (ti, wi) in t.iter().zip(&tw) {
                        let x = self.point(&[*ti]);
                        if annulus.is_some() || in_region(region, &x)? {
                            out.push(&x, *wi);
                        }
                    }
                }
            }
            3 => {
                let poly = clip_polygon(&cons, 1e6);
                if poly.len() < 3 {
                    return Ok(out);
                }
                let (g, gw) = gauss_legendre(res.max(2));
                let to01 = |s: f64| 0.5 * (s + 1.0);
                for k in 1..poly.len() - 1 {
                    let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
                    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
                    for (ui, uwi) in g.iter().zip(&gw) {
                        let u = to01(*ui);
                        for (vi, vwi) in g.iter().zip(&gw) {
                            let v = to01(*vi);
                            let t = [
                                a[0] + u * (b[0] - a[0]) + u * v * (c[0] - b[0]),
                                a[1] + u * (b[1] - a[1]) + u * v * (c[1] - b[1]),
                            ];
                            let x = self.point(&t);
                            if in_region(region, &x)? {
                                out.push(&x, 0.25 * uwi * vwi * u * area2);
                            }
                        }
                    }
                }
            }
            _ => return Err(Error::Dimension("tropical complexes are implemented for n <= 3".into())),
        }
        Ok(out)
    }
}

/// Convex polygon `{t in [-big, big]^2 : c . t + d >= 0}` by successive half-plane clipping.
fn clip_polygon(cons: &[(Vec<f64>, f64)], big: f64) -> Vec<[f64; 2]> {
    let mut poly = vec![[-big, -big], [big, -big], [big, big], [-big, big]];
    for (c, dd) in cons {
        let f = |p: &[f64; 2]| c[0] * p[0] + c[1] * p[1] + dd;
        let mut next = Vec::new();
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let (fp, fq) = (f(&p), f(&q));
            if fp >= 0.0 {
                next.push(p);
            }
            if (fp >= 0.0) != (fq >= 0.0) {
                let s = fp / (fp - fq);
                next.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        poly = next;
        if poly.is_empty() {
            break;
        }
    }
    poly
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        s += p[0] * q[1] - p[1] * q[0];
    }
    0.5 * s.abs()
}

/// `dd# f` for a max-affine `f`: rank-one weights `g g^T / |g|` on the facets of the corner locus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TropicalCurrent {
    pub n: usize,
    pub f: MaxAffine,
    pub facets: Vec<Facet>,
}

const TIE_TOL: f64 = 1e-12;

/// Builds the corner-locus current; rejects non-generic ties.
pub fn tropical_ddsharp(f: &MaxAffine) -> Result<TropicalCurrent> {
    let n = f.n;
    if !(1..=3).contains(&n) {
        return Err(Error::Dimension("tropical complexes are implemented for n <= 3".into()));
    }
    let k = f.pieces.len();
    let mut facets = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (ai, bi) = &f.pieces[i];
            let (aj, bj) = &f.pieces[j];
            let g: Vec<f64> = ai.iter().zip(aj).map(|(x, y)| x - y).collect();
            let gn = norm(&g);
            let scale = 1.0 + norm(ai) + norm(aj);
            if gn <= TIE_TOL * scale {
                if (bi - bj).abs() <= TIE_TOL * (1.0 + bi.abs() + bj.abs()) {
                    return Err(Error::Invalid(format!("pieces {i} and {j} coincide")));
                }
                continue;
            }
            let u: Vec<f64> = g.iter().map(|v| v / gn).collect();
            let origin: Vec<f64> = u.iter().map(|v| v * (bj - bi) / gn).collect();
            let basis = orth_complement(n, &[u]);
            let mut constraints = Vec::new();
            let mut degenerate_tie = None;
            for m in 0..k {
                if m == i || m == j {
                    continue;
                }
                let (am, bm) = &f.pieces[m];
                let diff: Vec<f64> = ai.iter().zip(am).map(|(x, y)| x - y).collect();
                let c: Vec<f64> = basis.iter().map(|b| dot(&diff, b)).collect();
                let dd = dot(&diff, &origin) + bi - bm;
                let cs = 1.0 + norm(&diff);
                if norm(&c) <= TIE_TOL * cs {
                    if dd < -TIE_TOL * cs {
                        constraints.push((c, dd));
                    } else if dd <= TIE_TOL * cs {
                        degenerate_tie = Some(m);
                    }
                    continue;
                }
                constraints.push((c, dd));
            }
            let facet = Facet {
                pieces: (i, j),
                weight: (0..n).map(|r| (0..n).map(|s| g[r] * g[s] / gn).collect()).collect(),
                g,
                origin,
                basis,
                constraints,
            };
            if !facet_nonempty(&facet, n) {
                continue;
            }
            if let Some(m) = degenerate_tie {
                return Err(Error::Invalid(format!("non-generic tie: pieces {i}, {j}, {m} agree on a hyperplane")));
            }
            facets.push(facet);
        }
    }
    Ok(TropicalCurrent { n, f: f.clone(), facets })
}

fn facet_nonempty(f: &Facet, n: usize) -> bool {
    match n {
        1 => f.constraints.iter().all(|(_, d)| *d > 0.0),
        2 => {
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
            for (c, d) in &f.constraints {
                if c[0].abs() < 1e-300 {
                    if *d < 0.0 {
                        return false;
                    }
                } else if c[0] > 0.0 {
                    a = a.max(-d / c[0]);
                } else {
                    b = b.min(-d / c[0]);
                }
            }
            b - a > 1e-12
        }
        _ => polygon_area(&clip_polygon(&f.constraints, 1e6)) > 1e-12,
    }
}

impl TropicalCurrent {
    /// Facet nodes inside the region, each tagged with its facet index.
    fn nodes(&self, region: &Region, quad: &QuadratureSpec, res: usize) -> Result<Vec<(usize, SurfaceNodes)>> {
        let win = window(region, quad)?;
        let ann = as_annulus(region);
        self.facets.iter().enumerate().map(|(k, f)| Ok((k, f.nodes(&win, region, ann.as_ref(), res)?))).collect()
    }
}

/// The three supercurrent representations.
#[derive(Clone, Debug)]
pub enum Current {
    Smooth(SmoothCurrent),
    Submanifold(SubmanifoldCurrent),
    Tropical(TropicalCurrent),
}

impl Current {
    pub fn n(&self) -> usize {
        match self {
            Current::Smooth(s) => s.n(),
            Current::Submanifold(m) => m.n,
            Current::Tropical(t) => t.n,
        }
    }

    pub fn bidimension(&self) -> Result<usize> {
        match self {
            Current::Smooth(s) => s.bidimension(),
            Current::Submanifold(m) => Ok(m.p),
            Current::Tropical(t) => Ok(t.n - 1),
        }
    }

    pub fn method_name(&self, quad: &QuadratureSpec) -> String {
        match (self, &quad.method) {
            (Current::Smooth(_), Method::MonteCarlo { .. }) => "monte_carlo".into(),
            (Current::Smooth(_), Method::TensorGrid { .. }) => "tensor_grid".into(),
            (Current::Smooth(_), Method::Polar { .. }) => "polar".into(),
            (Current::Submanifold(_), _) => "surface_quadrature".into(),
            (Current::Tropical(_), _) => "facet_quadrature".into(),
        }
    }

    /// `int_region g(x, T(x)) dmu` for `k` outputs at once, where `T(x)` is the
    /// local form (smooth coefficients, `[M]_s` at a point of `M`, or a facet
    /// weight) and `mu` is Lebesgue or surface measure.
    pub fn integrate_local<F>(&self, region: &Region, quad: &QuadratureSpec, k: usize, g: F) -> Result<Vec<Estimate>>
    where
        F: Fn(&[f64], &Superform<f64>, &mut [f64]) -> Result<()> + Sync,
    {
        match self {
            Current::Smooth(s) => integrate_many(region, quad, k, |x, out| g(x, &eval_form(&s.form, x)?, out)),
            Current::Submanifold(m) => {
                let res = surface_resolution(quad);
                let sum = |r: usize| -> Result<(Vec<f64>, usize)> {
                    let nodes = m.patch.nodes_in(region, quad, r)?;
                    let mut acc = vec![0.0; k];
                    let mut out = vec![0.0; k];
                    for (x, w) in nodes.iter() {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        g(x, &m.local_form(x)?, &mut out)?;
                        acc.iter_mut().zip(&out).for_each(|(a, o)| *a += w * o);
                    }
                    Ok((acc, nodes.len()))
                };
                two_level(sum(res)?, sum((res / 2).max(2))?)
            }
            Current::Tropical(t) => {
                let res = surface_resolution(quad);
                let forms: Vec<Superform<f64>> = t.facets.iter().map(|f| f.weight_form()).collect();
                let sum = |r: usize| -> Result<(Vec<f64>, usize)> {
                    let mut acc = vec![0.0; k];
                    let mut out = vec![0.0; k];
                    let mut count = 0;
                    for (fi, nodes) in t.nodes(region, quad, r)? {
                        count += nodes.len();
                        for (x, w) in nodes.iter() {
                            out.iter_mut().for_each(|v| *v = 0.0);
                            g(x, &forms[fi], &mut out)?;
                            acc.iter_mut().zip(&out).for_each(|(a, o)| *a += w * o);
                        }
                    }
                    Ok((acc, count))
                };
                two_level(sum(res)?, sum((res / 2).max(2))?)
            }
        }
    }

    /// `<T, psi>` with `psi` supported in (or truncated to) `region`.
    pub fn pair(&self, test: &Superform<ScalarField>, region: &Region, quad: &QuadratureSpec) -> Result<MeasureEstimate> {
        let p = self.bidimension()?;
        if test.bidegree() != (p, p) {
            return Err(Error::Bidegree(format!("test form must have bidegree ({p},{p}), got {:?}", test.bidegree())));
        }
        let e = self.integrate_local(region, quad, 1, |x, t, out| {
            out[0] = t.wedge(&eval_form(test, x)?)?.top_density()?;
            Ok(())
        })?;
        Ok(MeasureEstimate::from_estimate(&e[0], &self.method_name(quad)))
    }

    /// `sum_IJ |T_IJ|(K)`.
    pub fn mass(&self, region: &Region, quad: &QuadratureSpec) -> Result<MeasureEstimate> {
        let e = self.integrate_local(region, quad, 1, |_, t, out| {
            out[0] = t.terms().values().map(|c| c.abs()).sum();
            Ok(())
        })?;
        Ok(MeasureEstimate::from_estimate(&e[0], &self.method_name(quad)))
    }

    /// `int_K T ^ beta^p`, the trace measure of `K`.
    pub fn trace_mass(&self, region: &Region, quad: &QuadratureSpec) -> Result<MeasureEstimate> {
        let n = self.n();
        let bp = beta_power::<f64>(n, self.bidimension()?);
        let e = self.integrate_local(region, quad, 1, |_, t, out| {
            out[0] = t.wedge(&bp)?.top_density()?;
            Ok(())
        })?;
        Ok(MeasureEstimate::from_estimate(&e[0], &self.method_name(quad)))
    }
}

fn two_level(fine: (Vec<f64>, usize), coarse: (Vec<f64>, usize)) -> Result<Vec<Estimate>> {
    Ok(fine
        .0
        .iter()
        .zip(&coarse.0)
        .map(|(a, b)| Estimate { value: *a, stderr: (a - b).abs(), n_samples: fine.1, seed: None })
        .collect())
}

/// Default mollification schedule `eps_k = 2^{-k}`, `k = 3..=8`.
pub fn default_eps_schedule() -> Vec<f64> {
    (3..=8).map(|k| 0.5f64.powi(k)).collect()
}

/// Result of a mollified superHessian product along an `eps` schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperhessianReport {
    pub eps: Vec<f64>,
    pub values: Vec<MeasureEstimate>,
    pub extrapolated: MeasureEstimate,
    pub cauchy_ok: bool,
}

/// Extrapolates `v(eps) = v0 + c1 eps^2 + c2 eps^4` from the last three points.
/// The error combines propagated quadrature error with the shift from the
/// extrapolation on the preceding triple (or from the finest value).
pub fn richardson(eps: &[f64], vals: &[MeasureEstimate]) -> MeasureEstimate {
    let k = vals.len();
    if k < 3 {
        return vals.last().cloned().unwrap_or(MeasureEstimate { value: 0.0, stderr: 0.0, method: "empty".into() });
    }
    let (value, stat) = richardson_triple(&eps[k - 3..k], &vals[k - 3..k]);
    let trunc = if k >= 4 {
        (value - richardson_triple(&eps[k - 4..k - 1], &vals[k - 4..k - 1]).0).abs()
    } else {
        (value - vals[k - 1].value).abs()
    };
    MeasureEstimate { value, stderr: stat + trunc, method: "richardson".into() }
}

fn richardson_triple(eps: &[f64], vals: &[MeasureEstimate]) -> (f64, f64) {
    let e: Vec<f64> = eps.iter().map(|v| v * v).collect();
    let w: Vec<f64> = (0..3)
        .map(|i| (0..3).filter(|j| *j != i).map(|j| e[j] / (e[j] - e[i])).product())
        .collect();
    let value = (0..3).map(|i| w[i] * vals[i].value).sum();
    let stat = (0..3).map(|i| (w[i] * vals[i].stderr).powi(2)).sum::<f64>().sqrt();
    (value, stat)
}

fn cauchy(vals: &[MeasureEstimate]) -> bool {
    let diffs: Vec<(f64, f64)> = vals.windows(2).map(|w| ((w[1].value - w[0].value).abs(), w[0].stderr + w[1].stderr)).collect();
    diffs.windows(2).all(|d| d[1].0 <= d[0].0 + 3.0 * d[1].1.max(d[0].1))
}

/// `<T ^ beta^{n-m} ^ dd# u_1 ^ ... ^ dd# u_q, psi>` with non-smooth `u_j`
/// replaced by mollifications along `eps`.
///
/// For closed `T` the last factor is moved onto the test form,
/// `<S ^ dd# u, psi> = <u S, dd# psi>`, so only values of `u_q^eps` are needed.
#[allow(clippy::too_many_arguments)]
pub fn superhessian_product(
    t: &SmoothCurrent,
    m: usize,
    us: &[ScalarField],
    test: &Superform<ScalarField>,
    support: &Region,
    quad: &QuadratureSpec,
    eps: &[f64],
    kernel: Option<MollifierKernel>,
) -> Result<SuperhessianReport> {
    let n = t.n();
    let p = t.bidimension()?;
    let q = us.len();
    if m > n || m + p < n {
        return Err(Error::Invalid(format!("need n - p <= m <= n, got m = {m}, p = {p}, n = {n}")));
    }
    if q > p + m - n {
        return Err(Error::Invalid(format!("at most p + m - n = {} functions allowed, got {q}", p + m - n)));
    }
    let out_dim = p + m - n - q;
    if test.bidegree() != (out_dim, out_dim) {
        return Err(Error::Bidegree(format!("test form must have bidegree ({out_dim},{out_dim})")));
    }
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Invalid("eps schedule must be nonempty and positive".into()));
    }
    let kern = kernel.unwrap_or_else(|| MollifierKernel::for_dimension(n));
    let (lo, hi) = window(support, quad)?;
    let checks = sample_points(&lo, &hi, 12, 17, None);
    for (j, u) in us.iter().enumerate() {
        if matches!(u, ScalarField::MaxAffine(_)) {
            continue;
        }
        let (probe, rel) = if u.is_differentiable() { (u.clone(), 1e-6) } else { (u.mollify_with(eps[0], kern)?, 0.1 * eps[0]) };
        if is_m_convex_tol(&probe, &checks, m, rel, 1e-6)?.is_false() {
            return Err(Error::Hypothesis(format!("function {j} is not {m}-convex on the support")));
        }
    }
    let base = t.form.wedge(&beta_power(n, n - m))?;
    let closed = t.is_closed()?;
    let all_smooth = us.iter().all(|u| u.is_differentiable());
    let schedule: Vec<f64> = if all_smooth { vec![eps[0]] } else { eps.to_vec() };
    let ddpsi = ddsharp(test)?;
    let regs: Vec<Vec<ScalarField>> = schedule
        .iter()
        .map(|&e| us.iter().map(|u| if u.is_differentiable() { Ok(u.clone()) } else { u.mollify_with(e, kern) }).collect())
        .collect::<Result<_>>()?;
    let weak = closed && q >= 1 && !us[q - 1].is_differentiable();
    let factors = if weak { q - 1 } else { q };
    let shared = us[..factors].iter().all(|u| u.is_differentiable());
    let products: Vec<Superform<ScalarField>> = regs
        .iter()
        .take(if shared { 1 } else { regs.len() })
        .map(|reg| {
            reg[..factors].iter().try_fold(base.clone(), |acc, u| acc.wedge(&ddsharp(&Superform::scalar(n, u.clone()))?))
        })
        .collect::<Result<_>>()?;
    let other = if weak { &ddpsi } else { test };
    let k = schedule.len();
    let est = integrate_many(support, quad, k, |x, out| {
        let rest = eval_form(other, x)?;
        if rest.max_abs() == 0.0 {
            return Ok(());
        }
        let mut dens = if shared { Some(eval_form(&products[0], x)?.wedge(&rest)?.top_density()?) } else { None };
        for (j, slot) in out.iter_mut().enumerate() {
            let dj = match dens {
                Some(v) => v,
                None => eval_form(&products[j], x)?.wedge(&rest)?.top_density()?,
            };
            if !shared {
                dens = None;
            }
            *slot = if weak && dj != 0.0 { regs[j][q - 1].eval(x)? * dj } else if weak { 0.0 } else { dj };
        }
        Ok(())
    })?;
    let values: Vec<MeasureEstimate> = est.iter().map(|e| MeasureEstimate::from_estimate(e, "mollified")).collect();
    let (eps_out, values) = if all_smooth {
        (eps.to_vec(), eps.iter().map(|_| values[0].clone()).collect::<Vec<_>>())
    } else {
        (eps.to_vec(), values)
    };
    let extrapolated = if all_smooth { values[0].clone() } else { richardson(&eps_out, &values) };
    Ok(SuperhessianReport { cauchy_ok: cauchy(&values), eps: eps_out, values, extrapolated })
}

/// A test `(0,1)`-form `bump(x) * sum_j c_j dxi_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryElement {
    pub center: Vec<f64>,
    pub radius: f64,
    pub direction: Vec<f64>,
}

impl BatteryElement {
    pub fn form(&self) -> Result<Superform<ScalarField>> {
        let n = self.center.len();
        let b = bump(n, &self.center, self.radius)?;
        let mut f = Superform::zero(n, 0, 1);
        for (j, c) in self.direction.iter().enumerate() {
            if *c != 0.0 {
                f.add_term(BasisElement::new(MultiIndex::EMPTY, MultiIndex::single(j + 1)), b.scaled(*c));
            }
        }
        Ok(f)
    }
}

/// Bumps centred on the patch, paired with every coordinate direction.
pub fn default_battery(m: &SubmanifoldCurrent) -> Vec<BatteryElement> {
    let n = m.n;
    let (centers, radius): (Vec<Vec<f64>>, f64) = match &m.patch {
        Patch::Plane { origin, basis, half_width } => {
            let s = 0.3 * half_width;
            let mut c = vec![origin.clone()];
            let mut shifted = origin.clone();
            shifted.iter_mut().zip(&basis[0]).for_each(|(x, b)| *x += s * b);
            c.push(shifted);
            (c, 0.5 * half_width)
        }
        Patch::Sphere { center, radius } => {
            let mut north = center.clone();
            north[n - 1] += radius;
            let mut east = center.clone();
            east[0] += radius;
            (vec![north, east], 0.5 * radius)
        }
        Patch::Catenoid { neck, height } => {
            let z = 0.25 * height;
            let r = neck * (z / neck).cosh();
            (vec![vec![*neck, 0.0, 0.0], vec![0.0, r, z]], (0.4 * height).min(0.8 * neck))
        }
    };
    let mut out = Vec::new();
    for c in centers {
        for j in 0..n {
            let mut dir = vec![0.0; n];
            dir[j] = 1.0;
            out.push(BatteryElement { center: c.clone(), radius, direction: dir });
        }
    }
    out
}

/// `max_psi |<[M]_s ^ beta^{p-1}, d psi>|`, a residual of `d([M]_s ^ beta^{p-1}) = 0`.
pub fn minimality_residual(m: &SubmanifoldCurrent, battery: &[BatteryElement], res: usize) -> Result<f64> {
    if m.p == 0 {
        return Err(Error::Invalid("points carry no minimality condition".into()));
    }
    let n = m.n;
    let bp = beta_power::<f64>(n, m.p - 1);
    let quad = QuadratureSpec::tensor(res);
    let mut worst: f64 = 0.0;
    for b in battery {
        let dpsi = d(&b.form()?)?;
        let nodes = m.patch.nodes_in(&Region::ball(b.center.clone(), b.radius)?, &quad, res)?;
        let mut s = 0.0;
        for (x, w) in nodes.iter() {
            s += w * m.local_form(x)?.wedge(&bp)?.wedge(&eval_form(&dpsi, x)?)?.top_density()?;
        }
        worst = worst.max(s.abs());
    }
    Ok(worst)
}
