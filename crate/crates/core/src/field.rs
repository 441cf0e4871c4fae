//! Scalar coefficient fields: exact polynomials, radial closed forms,
//! max-affine convex functions, mollifications, grid samples, and the
//! arithmetic/composition needed to differentiate them symbolically.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::Coeff;
use crate::poly::{rational_from_f64, Poly};

/// Distance below which a singular radial expression refuses to evaluate.
pub const SINGULAR_RADIUS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RadialKind {
    /// `|x - c|^a`
    Power(f64),
    /// `log |x - c|`
    Log,
}

/// `coeff * profile(|x - center|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Radial {
    pub n: usize,
    pub center: Vec<f64>,
    pub coeff: f64,
    pub kind: RadialKind,
}

impl Radial {
    fn singular(&self) -> bool {
        match self.kind {
            RadialKind::Power(a) => a < 0.0,
            RadialKind::Log => true,
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        let r = r2.sqrt();
        if r < SINGULAR_RADIUS && self.singular() {
            return Err(Error::Domain(format!("radial field evaluated at its singular point (|x - c| = {r:e})")));
        }
        Ok(match self.kind {
            RadialKind::Power(a) => {
                if a == 0.0 {
                    self.coeff
                } else if a == 2.0 {
                    self.coeff * r2
                } else if a.fract() == 0.0 && (a / 2.0).fract() == 0.0 {
                    self.coeff * r2.powi((a / 2.0) as i32)
                } else {
                    self.coeff * r.powf(a)
                }
            }
            RadialKind::Log => self.coeff * r.ln(),
        })
    }
}

/// `max_j (<a_j, x> + b_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxAffine {
    pub n: usize,
    pub pieces: Vec<(Vec<f64>, f64)>,
}

impl MaxAffine {
    pub fn new(n: usize, pieces: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Invalid("max-affine needs at least one piece".into()));
        }
        if pieces.iter().any(|(a, _)| a.len() != n) {
            return Err(Error::Dimension(format!("max-affine slopes must have length {n}")));
        }
        Ok(MaxAffine { n, pieces })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn piece_value(&self, j: usize, x: &[f64]) -> f64 {
        let (a, b) = &self.pieces[j];
        a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b
    }

    /// The single piece that is maximal on the whole ball `B(x, r)`, if any.
    pub fn affine_piece_on_ball(&self, x: &[f64], r: f64) -> Option<usize> {
        let vals: Vec<f64> = (0..self.pieces.len()).map(|j| self.piece_value(j, x)).collect();
        let top = (0..vals.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j]))?;
        let at = &self.pieces[top].0;
        let dominates = (0..vals.len()).filter(|&k| k != top).all(|k| {
            let dist: f64 = at.iter().zip(&self.pieces[k].0).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            vals[top] - vals[k] > r * dist * (1.0 + 1e-12) + 1e-300
        });
        dominates.then_some(top)
    }

    /// Two pieces `(i, j)` whose maximum equals `self` on the whole ball `B(x, r)`, if any.
    pub fn two_pieces_on_ball(&self, x: &[f64], r: f64) -> Option<(usize, usize)> {
        let k = self.pieces.len();
        if k < 2 {
            return None;
        }
        let vals: Vec<f64> = (0..k).map(|j| self.piece_value(j, x)).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let (i, j) = (order[0], order[1]);
        let beats = |s: usize, m: usize| {
            let dist: f64 = self.pieces[s].0.iter().zip(&self.pieces[m].0).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            vals[s] - vals[m] > r * dist * (1.0 + 1e-12) + 1e-300
        };
        order[2..].iter().all(|&m| beats(i, m) || beats(j, m)).then_some((i, j))
    }
}

/// One-dimensional marginal `m(t)` of the mollifier kernel on `[-1, 1]`,
/// with its distribution function and first partial moment.
fn kernel_marginal(n: usize, s: f64) -> (f64, f64, f64) {
    use crate::quadrature::{gamma, gauss_legendre};
    let a = 4.0 + (n as f64 - 1.0) / 2.0;
    let c = gamma(a + 1.5) / (gamma(0.5) * gamma(a + 1.0));
    let m = |t: f64| c * (1.0 - t * t).max(0.0).powf(a);
    if s <= -1.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 1.0, s);
    }
    let (g, w) = gauss_legendre(24);
    let half = 0.5 * (s + 1.0);
    let (mut cdf, mut ramp) = (0.0, 0.0);
    for (u, wi) in g.iter().zip(&w) {
        let t = -1.0 + half * (u + 1.0);
        let mt = m(t) * wi * half;
        cdf += mt;
        ramp += (s - t) * mt;
    }
    (m(s), cdf, ramp)
}

/// Radial bump `c (1 - |y|^2)^4` on the unit ball, discretized by a polar
/// product rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierKernel {
    /// Radial composite Gauss panels and order.
    pub panels: usize,
    pub order: usize,
    /// Angular resolution of the sphere rule.
    pub angular: usize,
}

impl MollifierKernel {
    pub fn for_dimension(n: usize) -> Self {
        match n {
            1 => MollifierKernel { panels: 40, order: 6, angular: 1 },
            2 => MollifierKernel { panels: 8, order: 4, angular: 24 },
            3 => MollifierKernel { panels: 6, order: 4, angular: 12 },
            _ => MollifierKernel { panels: 4, order: 4, angular: 6 },
        }
    }

    /// Unnormalized profile polynomial `(1 - |y|^2)^4`.
    pub fn profile(n: usize) -> Poly {
        let s = Poly::norm_sq(n, &vec![BigRational::zero(); n]);
        Poly::int(n, 1).sub(&s).pow(4)
    }

    /// Normalization constant so that the discrete rule integrates the kernel to one.
    pub fn normalization(&self, n: usize) -> f64 {
        let prof = Self::profile(n);
        let (nodes, weights) = ball_tensor_rule(n, *self);
        let s: f64 = nodes.chunks(n).zip(&weights).map(|(y, w)| w * prof.eval(y)).sum();
        1.0 / s
    }

    /// Closed-form normalization: `1 / (|S^{n-1}| * B(n/2, 5) / 2)`.
    pub fn exact_normalization(n: usize) -> f64 {
        use crate::quadrature::{gamma, unit_sphere_area};
        let beta = gamma(n as f64 / 2.0) * gamma(5.0) / gamma(n as f64 / 2.0 + 5.0);
        1.0 / (unit_sphere_area(n) * 0.5 * beta)
    }

    /// Discrete rule for `(d^alpha rho)(y) dy` with the axes listed in `deriv`.
    pub fn rule(&self, n: usize, deriv: &[usize]) -> KernelRule {
        let c = self.normalization(n);
        let mut prof = Self::profile(n);
        for &i in deriv {
            prof = prof.partial(i);
        }
        let (nodes, weights) = ball_tensor_rule(n, *self);
        let mut out_nodes = Vec::with_capacity(nodes.len());
        let mut out_w = Vec::with_capacity(weights.len());
        for (y, w) in nodes.chunks(n).zip(&weights) {
            let v = c * w * prof.eval(y);
            if v != 0.0 {
                out_nodes.extend_from_slice(y);
                out_w.push(v);
            }
        }
        KernelRule { n, nodes: out_nodes, weights: out_w }
    }
}

fn ball_tensor_rule(n: usize, k: MollifierKernel) -> (Vec<f64>, Vec<f64>) {
    crate::quadrature::ball_rule(n, k.panels, k.order, k.angular)
}

/// Precomputed nodes and weights for a (possibly differentiated) kernel.
#[derive(Debug, PartialEq)]
pub struct KernelRule {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `f * rho_eps`, optionally differentiated: `d^alpha (f * rho_eps)`.
#[derive(Clone, Debug)]
pub struct Mollified {
    pub base: Box<ScalarField>,
    pub eps: f64,
    pub kernel: MollifierKernel,
    pub deriv: Vec<usize>,
    rule: Arc<KernelRule>,
}

impl PartialEq for Mollified {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.eps == other.eps && self.kernel == other.kernel && self.deriv == other.deriv
    }
}

impl Mollified {
    pub fn new(base: ScalarField, eps: f64, kernel: MollifierKernel, deriv: Vec<usize>) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Invalid(format!("mollification radius must be positive, got {eps}")));
        }
        let n = base.n();
        let rule = Arc::new(kernel.rule(n, &deriv));
        Ok(Mollified { base: Box::new(base), eps, kernel, deriv, rule })
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = x.len();
        // Mollification reproduces affine functions.
        if let ScalarField::MaxAffine(f) = self.base.as_ref() {
            if let Some(j) = f.affine_piece_on_ball(x, self.eps) {
                return Ok(match self.deriv.len() {
                    0 => f.piece_value(j, x),
                    1 => f.pieces[j].0[self.deriv[0]],
                    _ => 0.0,
                });
            }
            // Across a single crease the convolution reduces to the kernel marginal.
            if self.deriv.len() <= 2 {
                if let Some((i, j)) = f.two_pieces_on_ball(x, self.eps) {
                    let g: Vec<f64> = f.pieces[j].0.iter().zip(&f.pieces[i].0).map(|(u, v)| u - v).collect();
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let d = f.piece_value(j, x) - f.piece_value(i, x);
                    let (dens, cdf, ramp) = kernel_marginal(n, d / (self.eps * gn));
                    return Ok(match self.deriv.as_slice() {
                        [] => f.piece_value(i, x) + gn * self.eps * ramp,
                        [a] => f.pieces[i].0[*a] + g[*a] * cdf,
                        [a, b] => g[*a] * g[*b] * dens / (self.eps * gn),
                        _ => unreachable!(),
                    });
                }
            }
        }
        let mut z = vec![0.0; n];
        let mut s = 0.0;
        for (y, w) in self.rule.nodes.chunks(n).zip(&self.rule.weights) {
            for i in 0..n {
                z[i] = x[i] - self.eps * y[i];
            }
            s += w * self.base.eval(&z)?;
        }
        Ok(s / self.eps.powi(self.deriv.len() as i32))
    }
}

/// Multilinear interpolation of values on a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    /// Row-major with the first axis varying fastest.
    pub values: Vec<f64>,
}

impl Sampled {
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, mut f: F) -> Self {
        let n = lo.len();
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut x = vec![0.0; n];
        for idx in 0..total {
            let mut rest = idx;
            for a in 0..n {
                let j = rest % shape[a];
                rest /= shape[a];
                x[a] = lo[a] + (hi[a] - lo[a]) * j as f64 / (shape[a] - 1) as f64;
            }
            values.push(f(&x));
        }
        Sampled { lo, hi, shape, values }
    }

    fn n(&self) -> usize {
        self.lo.len()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.n();
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut frac = vec![0.0; n];
        let mut strides = vec![0usize; n];
        for a in 0..n {
            let h = (self.hi[a] - self.lo[a]) / (self.shape[a] - 1) as f64;
            let t = (x[a] - self.lo[a]) / h;
            if !(t >= -1e-12 && t <= (self.shape[a] - 1) as f64 + 1e-12) {
                return Err(Error::Domain(format!("point outside sampled grid on axis {}", a + 1)));
            }
            let j = (t.floor() as usize).min(self.shape[a] - 2);
            frac[a] = (t - j as f64).clamp(0.0, 1.0);
            base += j * stride;
            strides[a] = stride;
            stride *= self.shape[a];
        }
        let mut s = 0.0;
        for corner in 0u32..(1 << n) {
            let mut w = 1.0;
            let mut off = base;
            for a in 0..n {
                if corner & (1 << a) != 0 {
                    w *= frac[a];
                    off += strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                s += w * self.values[off];
            }
        }
        Ok(s)
    }

    /// Central-difference derivative on the same grid (one-sided at the ends).
    fn partial(&self, i: usize) -> Sampled {
        let n = self.n();
        let h = (self.hi[i] - self.lo[i]) / (self.shape[i] - 1) as f64;
        let stride: usize = self.shape[..i].iter().product();
        let mut values = vec![0.0; self.values.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            let j = (idx / stride) % self.shape[i];
            let (a, b, d) = if j == 0 {
                (idx, idx + stride, h)
            } else if j == self.shape[i] - 1 {
                (idx - stride, idx, h)
            } else {
                (idx - stride, idx + stride, 2.0 * h)
            };
            *v = (self.values[b] - self.values[a]) / d;
        }
        let _ = n;
        Sampled { lo: self.lo.clone(), hi: self.hi.clone(), shape: self.shape.clone(), values }
    }
}

/// Elementary functions applied to a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Pow(f64),
    /// `k`-th derivative of `s -> exp(-1/s)` for `s > 0`, zero otherwise.
    Bump(u32),
}

fn bump_poly(k: u32) -> Vec<f64> {
    // g^(k)(s) = exp(-1/s) P_k(1/s) with P_{k+1}(u) = u^2 (P_k(u) - P_k'(u)).
    let mut p = vec![1.0];
    for _ in 0..k {
        let mut next = vec![0.0; p.len() + 2];
        for (d, c) in p.iter().enumerate() {
            next[d + 2] += c;
            if d > 0 {
                next[d + 1] -= d as f64 * c;
            }
        }
        p = next;
    }
    p
}

impl Func {
    pub fn apply(self, v: f64) -> Result<f64> {
        Ok(match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Ln => {
                if v <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {v}")));
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(Error::Domain(format!("square root of negative value {v}")));
                }
                v.sqrt()
            }
            Func::Pow(a) => {
                if a.fract() == 0.0 && a.abs() < 64.0 {
                    if a < 0.0 && v == 0.0 {
                        return Err(Error::Domain("negative power of zero".into()));
                    }
                    v.powi(a as i32)
                } else {
                    if v < 0.0 || (v == 0.0 && a < 0.0) {
                        return Err(Error::Domain(format!("fractional power {a} of {v}")));
                    }
                    v.powf(a)
                }
            }
            Func::Bump(k) => {
                if v <= 0.0 {
                    0.0
                } else {
                    let u = 1.0 / v;
                    let e = (-u).exp();
                    if e == 0.0 {
                        return Ok(0.0);
                    }
                    let p = bump_poly(k);
                    let mut s = 0.0;
                    for c in p.iter().rev() {
                        s = s * u + c;
                    }
                    e * s
                }
            }
        })
    }
}

/// Coefficient function on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarField {
    Polynomial(Poly),
    Radial(Radial),
    MaxAffine(MaxAffine),
    Mollified(Mollified),
    Sampled(Sampled),
    Sum(Vec<ScalarField>),
    Product(Vec<ScalarField>),
    Apply(Func, Box<ScalarField>),
}

impl ScalarField {
    pub fn n(&self) -> usize {
        match self {
            ScalarField::Polynomial(p) => p.n(),
            ScalarField::Radial(r) => r.n,
            ScalarField::MaxAffine(m) => m.n,
            ScalarField::Mollified(m) => m.base.n(),
            ScalarField::Sampled(s) => s.n(),
            ScalarField::Sum(v) | ScalarField::Product(v) => v[0].n(),
            ScalarField::Apply(_, f) => f.n(),
        }
    }

    pub fn poly(p: Poly) -> Self {
        ScalarField::Polynomial(p)
    }

    pub fn parse_poly(n: usize, src: &str) -> Result<Self> {
        Ok(ScalarField::Polynomial(Poly::parse(n, src)?))
    }

    pub fn constant(n: usize, v: f64) -> Self {
        let q = rational_from_f64(v).expect("finite constant");
        ScalarField::Polynomial(Poly::constant(n, q))
    }

    pub fn zero(n: usize) -> Self {
        ScalarField::Polynomial(Poly::zero(n))
    }

    /// `|x - a|^2` as an exact polynomial.
    pub fn norm_sq(n: usize, center: &[f64]) -> Self {
        let c: Vec<BigRational> = center.iter().map(|&v| rational_from_f64(v).expect("finite")).collect();
        ScalarField::Polynomial(Poly::norm_sq(n, &c))
    }

    pub fn radial_power(n: usize, center: Vec<f64>, coeff: f64, a: f64) -> Self {
        ScalarField::Radial(Radial { n, center, coeff, kind: RadialKind::Power(a) })
    }

    pub fn radial_log(n: usize, center: Vec<f64>, coeff: f64) -> Self {
        ScalarField::Radial(Radial { n, center, coeff, kind: RadialKind::Log })
    }

    /// `|x|`.
    pub fn norm(n: usize) -> Self {
        Self::radial_power(n, vec![0.0; n], 1.0, 1.0)
    }

    /// The fundamental m-convex function: `-1/((n/m - 2)|x|^{n/m - 2})`, or `log|x|` when `2m = n`.
    pub fn phi_m(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Invalid(format!("phi_m needs 1 <= m <= n, got m={m}, n={n}")));
        }
        if 2 * m == n {
            return Ok(Self::radial_log(n, vec![0.0; n], 1.0));
        }
        let q = n as f64 / m as f64;
        Ok(Self::radial_power(n, vec![0.0; n], -1.0 / (q - 2.0), 2.0 - q))
    }

    pub fn max_affine(n: usize, pieces: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        Ok(ScalarField::MaxAffine(MaxAffine::new(n, pieces)?))
    }

    pub fn apply(self, f: Func) -> Self {
        if let ScalarField::Polynomial(p) = &self {
            if let Some(c) = p.as_constant() {
                if let Ok(v) = f.apply(num_traits::ToPrimitive::to_f64(&c).unwrap_or(f64::NAN)) {
                    return Self::constant(p.n(), v);
                }
            }
        }
        ScalarField::Apply(f, Box::new(self))
    }

    pub fn sqrt(self) -> Self {
        self.apply(Func::Sqrt)
    }

    pub fn powf(self, a: f64) -> Self {
        if a == 1.0 {
            return self;
        }
        self.apply(Func::Pow(a))
    }

    pub fn sum(n: usize, items: Vec<ScalarField>) -> Self {
        let mut poly = Poly::zero(n);
        let mut rest = Vec::new();
        for it in items {
            match it {
                ScalarField::Polynomial(p) => poly = poly.add(&p),
                ScalarField::Sum(v) => {
                    for s in v {
                        match s {
                            ScalarField::Polynomial(p) => poly = poly.add(&p),
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if !poly.is_zero() {
            rest.push(ScalarField::Polynomial(poly));
        }
        match rest.len() {
            0 => Self::zero(n),
            1 => rest.pop().unwrap(),
            _ => ScalarField::Sum(rest),
        }
    }

    pub fn product(n: usize, items: Vec<ScalarField>) -> Self {
        let mut poly = Poly::int(n, 1);
        let mut rest = Vec::new();
        for it in items {
            match it {
                ScalarField::Polynomial(p) => poly = poly.mul(&p),
                ScalarField::Product(v) => {
                    for s in v {
                        match s {
                            ScalarField::Polynomial(p) => poly = poly.mul(&p),
                            other => rest.push(other),
                        }
                    }
                }
                ScalarField::Radial(r) if !rest.is_empty() => {
                    // Merge radial factors sharing a center: c1 r^a * c2 r^b = c1 c2 r^{a+b}.
                    let mut merged = false;
                    for s in rest.iter_mut() {
                        if let ScalarField::Radial(q) = s {
                            if let (RadialKind::Power(a), RadialKind::Power(b)) = (q.kind, r.kind) {
                                if q.center == r.center {
                                    q.coeff *= r.coeff;
                                    q.kind = RadialKind::Power(a + b);
                                    merged = true;
                                    break;
                                }
                            }
                        }
                    }
                    if !merged {
                        rest.push(ScalarField::Radial(r));
                    }
                }
                other => rest.push(other),
            }
        }
        if poly.is_zero() {
            return Self::zero(n);
        }
        // Fold a constant polynomial factor into a lone radial factor.
        if let Some(c) = poly.as_constant() {
            if rest.len() == 1 {
                if let ScalarField::Radial(r) = &mut rest[0] {
                    r.coeff *= num_traits::ToPrimitive::to_f64(&c).unwrap_or(f64::NAN);
                    return rest.pop().unwrap();
                }
            }
            if c.is_one() {
                return match rest.len() {
                    0 => ScalarField::Polynomial(poly),
                    1 => rest.pop().unwrap(),
                    _ => ScalarField::Product(rest),
                };
            }
        }
        rest.insert(0, ScalarField::Polynomial(poly));
        match rest.len() {
            1 => rest.pop().unwrap(),
            _ => ScalarField::Product(rest),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::product(self.n(), vec![Self::constant(self.n(), c), self.clone()])
    }

    pub fn is_identically_zero(&self) -> bool {
        matches!(self, ScalarField::Polynomial(p) if p.is_zero())
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match self {
            ScalarField::Polynomial(p) => Some(p),
            _ => None,
        }
    }

    /// True when every node is smooth and differentiable in closed form.
    pub fn is_differentiable(&self) -> bool {
        match self {
            ScalarField::MaxAffine(_) => false,
            ScalarField::Sum(v) | ScalarField::Product(v) => v.iter().all(|f| f.is_differentiable()),
            ScalarField::Apply(_, f) => f.is_differentiable(),
            _ => true,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            ScalarField::Polynomial(p) => Ok(p.eval(x)),
            ScalarField::Radial(r) => r.eval(x),
            ScalarField::MaxAffine(m) => Ok(m.eval(x)),
            ScalarField::Mollified(m) => m.eval(x),
            ScalarField::Sampled(s) => s.eval(x),
            ScalarField::Sum(v) => {
                let mut s = 0.0;
                for f in v {
                    s += f.eval(x)?;
                }
                Ok(s)
            }
            ScalarField::Product(v) => {
                let mut s = 1.0;
                for f in v {
                    s *= f.eval(x)?;
                    if s == 0.0 {
                        return Ok(0.0);
                    }
                }
                Ok(s)
            }
            ScalarField::Apply(func, f) => func.apply(f.eval(x)?),
        }
    }

    /// Closed-form partial derivative along a zero-based axis.
    pub fn partial(&self, i: usize) -> Result<Self> {
        let n = self.n();
        if i >= n {
            return Err(Error::Invalid(format!("axis {} outside 1..{n}", i + 1)));
        }
        Ok(match self {
            ScalarField::Polynomial(p) => ScalarField::Polynomial(p.partial(i)),
            ScalarField::Radial(r) => {
                let shift = rational_from_f64(r.center[i]).expect("finite center");
                let lin = Poly::var(n, i).sub(&Poly::constant(n, shift));
                let (coeff, a) = match r.kind {
                    RadialKind::Power(a) => (r.coeff * a, a - 2.0),
                    RadialKind::Log => (r.coeff, -2.0),
                };
                if coeff == 0.0 {
                    return Ok(Self::zero(n));
                }
                let rad = ScalarField::Radial(Radial { n, center: r.center.clone(), coeff, kind: RadialKind::Power(a) });
                if a == 0.0 {
                    Self::product(n, vec![Self::constant(n, coeff), ScalarField::Polynomial(lin)])
                } else {
                    Self::product(n, vec![ScalarField::Polynomial(lin), rad])
                }
            }
            ScalarField::MaxAffine(_) => {
                return Err(Error::NotDifferentiable(
                    "max-affine fields have distributional derivatives only; use the tropical current".into(),
                ))
            }
            ScalarField::Mollified(m) => {
                let mut deriv = m.deriv.clone();
                deriv.push(i);
                ScalarField::Mollified(Mollified::new((*m.base).clone(), m.eps, m.kernel, deriv)?)
            }
            ScalarField::Sampled(s) => ScalarField::Sampled(s.partial(i)),
            ScalarField::Sum(v) => {
                let parts = v.iter().map(|f| f.partial(i)).collect::<Result<Vec<_>>>()?;
                Self::sum(n, parts)
            }
            ScalarField::Product(v) => {
                let mut terms = Vec::new();
                for k in 0..v.len() {
                    let dk = v[k].partial(i)?;
                    if dk.is_identically_zero() {
                        continue;
                    }
                    let mut factors: Vec<ScalarField> = v.clone();
                    factors[k] = dk;
                    terms.push(Self::product(n, factors));
                }
                Self::sum(n, terms)
            }
            ScalarField::Apply(func, f) => {
                let inner = f.partial(i)?;
                if inner.is_identically_zero() {
                    return Ok(Self::zero(n));
                }
                let g = (**f).clone();
                let outer = match *func {
                    Func::Sin => g.apply(Func::Cos),
                    Func::Cos => g.apply(Func::Sin).scaled(-1.0),
                    Func::Exp => g.apply(Func::Exp),
                    Func::Ln => g.powf(-1.0),
                    Func::Sqrt => g.powf(-0.5).scaled(0.5),
                    Func::Pow(a) => {
                        if a == 0.0 {
                            return Ok(Self::zero(n));
                        }
                        if a == 1.0 {
                            Self::constant(n, 1.0)
                        } else {
                            g.powf(a - 1.0).scaled(a)
                        }
                    }
                    Func::Bump(k) => g.apply(Func::Bump(k + 1)),
                };
                Self::product(n, vec![outer, inner])
            }
        })
    }

    /// `f * rho_eps` with the default kernel discretization for this dimension.
    pub fn mollify(&self, eps: f64) -> Result<Self> {
        self.mollify_with(eps, MollifierKernel::for_dimension(self.n()))
    }

    pub fn mollify_with(&self, eps: f64, kernel: MollifierKernel) -> Result<Self> {
        Ok(ScalarField::Mollified(Mollified::new(self.clone(), eps, kernel, vec![])?))
    }

    /// Hessian entries as fields (row `i`, column `j`).
    pub fn hessian(&self) -> Result<Vec<Vec<ScalarField>>> {
        let n = self.n();
        let mut h = Vec::with_capacity(n);
        for i in 0..n {
            let di = self.partial(i)?;
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(di.partial(j)?);
            }
            h.push(row);
        }
        Ok(h)
    }

    pub fn hessian_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let h = self.hessian()?;
        h.iter().map(|row| row.iter().map(|f| f.eval(x)).collect()).collect()
    }
}

impl Coeff for ScalarField {
    fn zero_like(n: usize) -> Self {
        ScalarField::zero(n)
    }
    fn from_int(n: usize, k: i64) -> Self {
        ScalarField::Polynomial(Poly::constant(n, BigRational::from_integer(BigInt::from(k))))
    }
    fn is_zero(&self) -> bool {
        self.is_identically_zero()
    }
    fn add(&self, o: &Self) -> Self {
        ScalarField::sum(self.n(), vec![self.clone(), o.clone()])
    }
    fn mul(&self, o: &Self) -> Self {
        ScalarField::product(self.n(), vec![self.clone(), o.clone()])
    }
    fn neg(&self) -> Self {
        self.scale_int(-1)
    }
    fn scale_int(&self, k: i64) -> Self {
        let n = self.n();
        ScalarField::product(n, vec![Self::from_int(n, k), self.clone()])
    }
}

/// Serializable description of a field, as used in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpec {
    Poly(String),
    Maxaffine(Vec<Vec<f64>>),
    Radial(RadialSpec),
    Mollified { base: Box<FieldSpec>, eps: f64 },
    Sampled(Sampled),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSpec {
    pub kind: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl FieldSpec {
    pub fn build(&self, n: usize) -> Result<ScalarField> {
        match self {
            FieldSpec::Poly(s) => ScalarField::parse_poly(n, s),
            FieldSpec::Maxaffine(rows) => {
                let pieces = rows
                    .iter()
                    .map(|r| {
                        if r.len() != n + 1 {
                            Err(Error::Parse(format!("max-affine row needs {} numbers, got {}", n + 1, r.len())))
                        } else {
                            Ok((r[..n].to_vec(), r[n]))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                ScalarField::max_affine(n, pieces)
            }
            FieldSpec::Radial(r) => {
                if let Some(rn) = r.n {
                    if rn != n {
                        return Err(Error::Dimension(format!("radial field declares n={rn}, scenario has n={n}")));
                    }
                }
                let center = r.center.clone().unwrap_or_else(|| vec![0.0; n]);
                if center.len() != n {
                    return Err(Error::Dimension("radial center has wrong length".into()));
                }
                let c = r.c.unwrap_or(1.0);
                match r.kind.as_str() {
                    "phi_m" => {
                        let m = r.m.ok_or_else(|| Error::Parse("phi_m needs m".into()))?;
                        ScalarField::phi_m(n, m)
                    }
                    "power" => {
                        let a = r.a.ok_or_else(|| Error::Parse("power radial needs a".into()))?;
                        Ok(ScalarField::radial_power(n, center, c, a))
                    }
                    "log" => Ok(ScalarField::radial_log(n, center, c)),
                    other => Err(Error::Parse(format!("unknown radial kind '{other}'"))),
                }
            }
            FieldSpec::Mollified { base, eps } => base.build(n)?.mollify(*eps),
            FieldSpec::Sampled(s) => {
                if s.lo.len() != n || s.shape.iter().product::<usize>() != s.values.len() || s.shape.iter().any(|&k| k < 2) {
                    return Err(Error::Parse("inconsistent sampled grid".into()));
                }
                Ok(ScalarField::Sampled(s.clone()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluate_examples() {
        let f = ScalarField::norm_sq(2, &[0.0, 0.0]);
        assert_eq!(f.eval(&[1.0, 2.0]).unwrap(), 5.0);
        let l = ScalarField::phi_m(4, 2).unwrap();
        assert_abs_diff_eq!(l.eval(&[std::f64::consts::E, 0.0, 0.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
        let h = ScalarField::max_affine(1, vec![(vec![0.0], 0.0), (vec![1.0], 0.0)]).unwrap();
        assert_eq!(h.eval(&[-3.0]).unwrap(), 0.0);
    }

    #[test]
    fn singular_radial_is_an_error() {
        let f = ScalarField::phi_m(3, 1).unwrap();
        assert!(matches!(f.eval(&[0.0, 0.0, 1e-13]), Err(Error::Domain(_))));
        assert!(f.eval(&[0.0, 0.0, 1e-6]).is_ok());
    }

    #[test]
    fn phi_m_hessian_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, m) in &[(3usize, 1usize), (3, 2), (4, 2), (5, 2)] {
            let f = ScalarField::phi_m(n, m).unwrap();
            let q = n as f64 / m as f64;
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let h = f.hessian_at(&x).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        let d = if i == j { 1.0 } else { 0.0 };
                        let expect = r2.powf(-q / 2.0) * (d - q * x[i] * x[j] / r2);
                        assert_abs_diff_eq!(h[i][j], expect, epsilon = 1e-10 * expect.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn affine_derivative_is_constant() {
        let f = ScalarField::parse_poly(3, "2*x1 - x2 + 7").unwrap();
        assert_eq!(f.partial(0).unwrap(), ScalarField::constant(3, 2.0));
    }

    #[test]
    fn max_affine_rejects_differentiation() {
        let h = ScalarField::max_affine(1, vec![(vec![0.0], 0.0), (vec![1.0], 0.0)]).unwrap();
        assert!(matches!(h.partial(0), Err(Error::NotDifferentiable(_))));
    }

    #[test]
    fn kernel_normalization_matches_closed_form() {
        for n in 1..=3 {
            let k = MollifierKernel::for_dimension(n);
            let c = k.normalization(n);
            let exact = MollifierKernel::exact_normalization(n);
            assert!((c / exact - 1.0).abs() < 1e-8, "n={n}: {c} vs {exact}");
        }
    }

    #[test]
    fn mollify_preserves_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = ScalarField::parse_poly(2, "3*x1 - 2*x2 + 1/3").unwrap();
        let g = f.mollify(0.2).unwrap();
        for _ in 0..20 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert_abs_diff_eq!(g.eval(&x).unwrap(), f.eval(&x).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn mollified_hinge_is_positive_at_kink() {
        let eps = 0.1;
        let h = ScalarField::max_affine(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0)]).unwrap();
        let v = h.mollify(eps).unwrap().eval(&[0.0, 0.0]).unwrap();
        assert!(v > 0.0 && v < eps, "{v}");
    }

    #[test]
    fn mollified_abs_matches_1d_oracle() {
        let eps = 0.25;
        let f = ScalarField::max_affine(1, vec![(vec![1.0], 0.0), (vec![-1.0], 0.0)]).unwrap();
        let v = f.mollify(eps).unwrap().eval(&[0.0]).unwrap();
        // int |t| rho_eps(t) dt = eps * 2c int_0^1 t (1 - t^2)^4 dt = eps * 2c / 10
        let c = MollifierKernel::exact_normalization(1);
        let oracle = eps * 2.0 * c / 10.0;
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
    }

    #[test]
    fn crease_closed_form_matches_kernel_quadrature() {
        let eps = 0.2;
        let f = ScalarField::max_affine(2, vec![(vec![0.5, -1.0], 0.1), (vec![1.5, 0.5], -0.2), (vec![0.0, 3.0], -5.0)]).unwrap();
        let opaque = ScalarField::Sum(vec![f.clone(), ScalarField::zero(2)]);
        let fine = MollifierKernel { panels: 40, order: 6, angular: 96 };
        let fast = f.mollify_with(eps, fine).unwrap();
        let slow = opaque.mollify_with(eps, fine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
            let (u0, v0) = (fast.eval(&x).unwrap(), slow.eval(&x).unwrap());
            assert!((u0 - v0).abs() <= 2e-6, "{x:?} {u0} {v0}");
            for i in 0..2 {
                let (a, b) = (fast.partial(i).unwrap(), slow.partial(i).unwrap());
                assert_abs_diff_eq!(a.eval(&x).unwrap(), b.eval(&x).unwrap(), epsilon = 1e-4);
                for j in 0..2 {
                    let (a2, b2) = (a.partial(j).unwrap(), b.partial(j).unwrap());
                    let (u, v) = (a2.eval(&x).unwrap(), b2.eval(&x).unwrap());
                    assert!((u - v).abs() <= 1e-3 * (1.0 + v.abs()), "{u} {v}");
                }
            }
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let s = ScalarField::parse_poly(1, "1 - x1^2").unwrap().apply(Func::Bump(0));
        let d = s.partial(0).unwrap();
        let dd = d.partial(0).unwrap();
        for &x in &[-0.7, -0.2, 0.1, 0.55, 0.9] {
            let h = 1e-5;
            let fd = (s.eval(&[x + h]).unwrap() - s.eval(&[x - h]).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(d.eval(&[x]).unwrap(), fd, epsilon = 1e-8);
            let fdd = (d.eval(&[x + h]).unwrap() - d.eval(&[x - h]).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(dd.eval(&[x]).unwrap(), fdd, epsilon = 1e-7);
        }
        assert_eq!(s.eval(&[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn sampled_interpolates_and_rejects_outside() {
        let s = Sampled::from_fn(vec![0.0, 0.0], vec![1.0, 1.0], vec![5, 5], |x| 2.0 * x[0] + x[1]);
        let f = ScalarField::Sampled(s);
        assert_abs_diff_eq!(f.eval(&[0.3, 0.7]).unwrap(), 1.3, epsilon = 1e-12);
        assert!(f.eval(&[1.5, 0.0]).is_err());
        assert_abs_diff_eq!(f.partial(0).unwrap().eval(&[0.5, 0.5]).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn field_spec_parsing() {
        let spec: FieldSpec = serde_json::from_str(r#"{"radial": {"kind": "phi_m", "n": 4, "m": 2}}"#).unwrap();
        assert_eq!(spec.build(4).unwrap(), ScalarField::phi_m(4, 2).unwrap());
        let spec: FieldSpec = serde_json::from_str(r#"{"maxaffine": [[0, 0], [1, 0]]}"#).unwrap();
        assert_eq!(spec.build(1).unwrap().eval(&[2.0]).unwrap(), 2.0);
        let spec: FieldSpec = serde_json::from_str(r#"{"poly": "x1^2*x2 + 3"}"#).unwrap();
        assert_eq!(spec.build(2).unwrap().eval(&[1.0, 1.0]).unwrap(), 4.0);
    }
}
