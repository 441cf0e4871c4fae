//! Pointwise positivity cones, m-positivity and m-convexity, and the
//! k-Hessian operator.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{ddsharp, eval_form};
use crate::error::{Error, Result};
use crate::exterior::{beta_power, BasisElement, MultiIndex, Superform};
use crate::field::ScalarField;
use crate::poly::Poly;
use crate::quadrature::{binomial, factorial, principal_minor_sum, symmetric_eigen};

/// Relative tolerance for numeric sign tests.
pub const SIGN_TOL: f64 = 1e-9;

/// Symmetric coefficient matrix of a (1,1) form `sum a_ij dx_i ^ dxi_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    a: Vec<Vec<f64>>,
}

impl CoefficientMatrix {
    pub fn new(a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("coefficient matrix must be square".into()));
        }
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * scale.max(1e-300) {
                    return Err(Error::Invalid(format!("form is not symmetric: a[{i}][{j}] = {} but a[{j}][{i}] = {}", a[i][j], a[j][i])));
                }
            }
        }
        Ok(CoefficientMatrix { a })
    }

    pub fn from_form(f: &Superform<f64>) -> Result<Self> {
        Self::new(f.matrix_11()?)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    fn max_abs(&self) -> f64 {
        self.a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sum of the `j x j` principal minors.
    pub fn s(&self, j: usize) -> f64 {
        principal_minor_sum(&self.a, j)
    }
}

/// Density of `alpha^j ^ beta^{n-j}` equals this constant times `S_j(A)`.
pub fn m_positivity_constant(n: usize, j: usize) -> f64 {
    factorial(j) * factorial(n - j)
}

/// Concrete evidence that a form or function leaves a cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub detail: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vectors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    CertifiedTrue,
    CertifiedFalse { witness: Witness },
    PlausiblyTrue { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityVerdict {
    #[serde(flatten)]
    pub status: Status,
    pub cone: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

impl PositivityVerdict {
    fn new(status: Status, cone: &str, m: Option<usize>, point: Option<&[f64]>) -> Self {
        PositivityVerdict { status, cone: cone.into(), m, point: point.map(|p| p.to_vec()) }
    }

    pub fn is_certified_true(&self) -> bool {
        matches!(self.status, Status::CertifiedTrue)
    }

    pub fn is_false(&self) -> bool {
        matches!(self.status, Status::CertifiedFalse { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match &self.status {
            Status::CertifiedFalse { witness } => Some(witness),
            _ => None,
        }
    }
}

/// Explicitly seeded sampler of random test vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub samples: usize,
    pub seed: u64,
}

fn unit_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = v.iter().map(|x| x * x).sum();
        if s > 1e-4 && s <= 1.0 {
            let r = s.sqrt();
            return v.iter().map(|x| x / r).collect();
        }
    }
}

/// `sum v_i dx_i ^ sum v_j dxi_j`, i.e. `a ^ J(a)` for the (1,0)-form `a = sum v_i dx_i`.
pub fn rank_one_form(v: &[f64]) -> Superform<f64> {
    let n = v.len();
    let mut out = Superform::zero(n, 1, 1);
    for i in 0..n {
        for j in 0..n {
            let c = v[i] * v[j];
            if c != 0.0 {
                out.add_term(BasisElement::new(MultiIndex::single(i + 1), MultiIndex::single(j + 1)), c);
            }
        }
    }
    out
}

/// Strongly positive `(p,p)` form `sum_s lambda_s prod_k a_ks ^ J(a_ks)` with random data.
pub fn random_strongly_positive<R: Rng>(n: usize, p: usize, terms: usize, rng: &mut R) -> Superform<f64> {
    let mut out = Superform::zero(n, p, p);
    for _ in 0..terms {
        let lambda = rng.gen_range(0.0..2.0);
        let mut t = Superform::scalar(n, lambda);
        for _ in 0..p {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            t = t.wedge(&rank_one_form(&v)).expect("same dimension");
        }
        out = out.add(&t).expect("same bidegree");
    }
    out
}

/// `F_k[u]`, the sum of the `k x k` principal minors of the Hessian of `u`.
pub fn hessian_fk(u: &ScalarField, k: usize) -> Result<ScalarField> {
    let n = u.n();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k must be in 1..={n}, got {k}")));
    }
    if let Some(p) = u.as_poly() {
        return Ok(ScalarField::poly(hessian_fk_poly(p, k)?));
    }
    let h = u.hessian()?;
    let mut terms = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        for (perm, sign) in permutations(k) {
            let factors: Vec<ScalarField> = (0..k).map(|r| h[idx[r]][idx[perm[r]]].clone()).collect();
            terms.push(ScalarField::product(n, factors).scaled(sign as f64));
        }
    }
    Ok(ScalarField::sum(n, terms))
}

/// Exact `F_k` of a polynomial.
pub fn hessian_fk_poly(u: &Poly, k: usize) -> Result<Poly> {
    let n = u.n();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let h: Vec<Vec<Poly>> = (0..n).map(|i| (0..n).map(|j| u.partial(i).partial(j)).collect()).collect();
    let mut total = Poly::zero(n);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        for (perm, sign) in permutations(k) {
            let mut t = Poly::int(n, sign);
            for r in 0..k {
                t = t.mul(&h[idx[r]][idx[perm[r]]]);
            }
            total = total.add(&t);
        }
    }
    Ok(total)
}

fn permutations(k: usize) -> Vec<(Vec<usize>, i64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, k: usize, out: &mut Vec<(Vec<usize>, i64)>) {
        if prefix.len() == k {
            let mut inv = 0;
            for i in 0..k {
                for j in i + 1..k {
                    if prefix[i] > prefix[j] {
                        inv += 1;
                    }
                }
            }
            out.push((prefix.clone(), if inv % 2 == 0 { 1 } else { -1 }));
            return;
        }
        for v in 0..k {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, k, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], k, &mut out);
    out
}

/// The constant `c` in `(dd# u)^k ^ beta^{n-k} = c F_k[u] beta^n`, namely `k!(n-k)!/n!`.
pub fn hessian_identity_constant(n: usize, k: usize) -> BigRational {
    let f = |m: usize| (1..=m).fold(BigInt::from(1), |acc, i| acc * BigInt::from(i));
    BigRational::new(f(k) * f(n - k), f(n))
}

/// Checks `(dd# u)^k ^ beta^{n-k} = (k!(n-k)!/n!) F_k[u] beta^n` in exact arithmetic.
pub fn check_eq1(u: &Poly, k: usize) -> Result<bool> {
    let n = u.n();
    let fk = hessian_fk_poly(u, k)?;
    let h = ddsharp(&Superform::scalar(n, u.clone()))?;
    let lhs = h.pow(k)?.wedge(&beta_power(n, n - k))?;
    let rhs = beta_power::<Poly>(n, n).scale(&fk.scale(&hessian_identity_constant(n, k)));
    Ok(lhs.sub(&rhs)?.is_zero())
}

fn check_m(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::Invalid(format!("m must be in 1..={n}, got {m}")));
    }
    Ok(())
}

/// m-positivity of a coefficient matrix: `S_j(A) >= 0` for `j = 1..m`.
pub fn matrix_is_m_positive(a: &CoefficientMatrix, m: usize) -> Result<Status> {
    matrix_is_m_positive_tol(a, m, 0.0, 0.0)
}

/// As [`matrix_is_m_positive`] with relative slack `rel_tol` (floored at
/// [`SIGN_TOL`]) plus absolute slack `abs_tol`.
pub fn matrix_is_m_positive_tol(a: &CoefficientMatrix, m: usize, rel_tol: f64, abs_tol: f64) -> Result<Status> {
    let n = a.n();
    check_m(n, m)?;
    let amax = a.max_abs();
    for j in 1..=m {
        let s = a.s(j);
        let scale = binomial(n, j) * amax.powi(j as i32);
        if s < -SIGN_TOL.max(rel_tol) * scale - abs_tol {
            return Ok(Status::CertifiedFalse {
                witness: Witness { detail: format!("S_{j} of the coefficient matrix is negative"), value: s, vectors: vec![], point: None },
            });
        }
    }
    Ok(Status::CertifiedTrue)
}

/// m-positivity of a symmetric (1,1) form at `x`.
pub fn form_is_m_positive(a: &Superform<ScalarField>, x: &[f64], m: usize) -> Result<PositivityVerdict> {
    let f = eval_form(a, x)?;
    let cm = CoefficientMatrix::from_form(&f)?;
    let mut st = matrix_is_m_positive(&cm, m)?;
    if let Status::CertifiedFalse { witness } = &mut st {
        witness.point = Some(x.to_vec());
    }
    Ok(PositivityVerdict::new(st, "m_positive", Some(m), Some(x)))
}

fn symmetric_f64(a: &Superform<f64>) -> Result<()> {
    let (p, q) = a.bidegree();
    if p != q {
        return Err(Error::Bidegree(format!("positivity needs a (p,p) form, got ({p},{q})")));
    }
    let scale = a.max_abs().max(1e-300);
    for (b, c) in a.terms() {
        let t = a.coeff(&BasisElement::new(b.l, b.k)).copied().unwrap_or(0.0);
        if (t - c).abs() > 1e-12 * scale {
            return Err(Error::Invalid("form is not symmetric".into()));
        }
    }
    Ok(())
}

/// Density of `a ^ prod_k v_k v_k^T`.
fn test_density(a: &Superform<f64>, vs: &[Vec<f64>]) -> Result<f64> {
    let mut t = a.clone();
    for v in vs {
        t = t.wedge(&rank_one_form(v))?;
    }
    t.top_density()
}

/// Orthonormal basis of the complement of the unit vector `w`.
fn complement(w: &[f64]) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut basis: Vec<Vec<f64>> = vec![w.to_vec()];
    for e in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Weak positivity of a symmetric `(p,p)` form with constant coefficients.
///
/// Exact for `p in {0, 1, n-1, n}` by eigenvalue tests; otherwise randomized
/// over `sampler.samples` tuples of unit (1,0)-vectors.
pub fn form_is_weakly_positive(a: &Superform<f64>, sampler: Sampler) -> Result<PositivityVerdict> {
    symmetric_f64(a)?;
    let n = a.n();
    let p = a.bidegree().0;
    let cone = "weakly_positive";
    let scale = a.max_abs();
    let neg = |v: f64, mag: f64| v < -SIGN_TOL * mag.max(1e-300);
    if p == n || p == 0 {
        let v = if p == n { a.top_density()? } else { a.coeff(&BasisElement::new(MultiIndex::EMPTY, MultiIndex::EMPTY)).copied().unwrap_or(0.0) };
        let st = if neg(v, scale) {
            Status::CertifiedFalse { witness: Witness { detail: "negative density".into(), value: v, vectors: vec![], point: None } }
        } else {
            Status::CertifiedTrue
        };
        return Ok(PositivityVerdict::new(st, cone, None, None));
    }
    if p == 1 || p == n - 1 {
        // Quadratic form whose positive semidefiniteness is equivalent to weak positivity.
        let m: Vec<Vec<f64>> = if p == 1 {
            a.matrix_11()?
        } else {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let e = Superform::term(n, &[i + 1], &[j + 1], 1.0).unwrap();
                            a.wedge(&e).and_then(|t| t.top_density())
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?
        };
        let (vals, vecs) = symmetric_eigen(&m);
        let mag = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if neg(vals[0], mag) {
            let vectors = if p == 1 { complement(&vecs[0]) } else { vec![vecs[0].clone()] };
            let value = test_density(a, &vectors)?;
            return Ok(PositivityVerdict::new(
                Status::CertifiedFalse {
                    witness: Witness { detail: format!("eigenvalue {} of the associated matrix", vals[0]), value, vectors, point: None },
                },
                cone,
                None,
                None,
            ));
        }
        return Ok(PositivityVerdict::new(Status::CertifiedTrue, cone, None, None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mag = scale * factorial(n);
    for _ in 0..sampler.samples {
        let vs: Vec<Vec<f64>> = (0..n - p).map(|_| unit_vector(n, &mut rng)).collect();
        let v = test_density(a, &vs)?;
        if neg(v, mag) {
            return Ok(PositivityVerdict::new(
                Status::CertifiedFalse { witness: Witness { detail: "negative sampled pairing".into(), value: v, vectors: vs, point: None } },
                cone,
                None,
                None,
            ));
        }
    }
    Ok(PositivityVerdict::new(Status::PlausiblyTrue { samples: sampler.samples }, cone, None, None))
}

/// Sampled test of the intermediate cone: `a ^ sigma_{n-p} alpha ^ J(alpha) >= 0`
/// for random `(n-p, 0)`-forms `alpha`. Never certifies membership.
pub fn form_is_positive_sampled(a: &Superform<f64>, sampler: Sampler) -> Result<PositivityVerdict> {
    symmetric_f64(a)?;
    let n = a.n();
    let p = a.bidegree().0;
    let k = n - p;
    let sigma = if (k * k.saturating_sub(1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let subsets: Vec<MultiIndex> = (0u32..(1 << n)).filter(|m| m.count_ones() as usize == k).map(MultiIndex::from_mask).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mag = a.max_abs() * factorial(n) * subsets.len() as f64;
    for _ in 0..sampler.samples {
        let mut alpha = Superform::zero(n, k, 0);
        let mut coeffs = Vec::new();
        for s in &subsets {
            let c: f64 = rng.gen_range(-1.0..1.0);
            coeffs.push(c);
            alpha.add_term(BasisElement::new(*s, MultiIndex::EMPTY), c);
        }
        let v = sigma * a.wedge(&alpha)?.wedge(&alpha.apply_j())?.top_density()?;
        if v < -SIGN_TOL * mag {
            return Ok(PositivityVerdict::new(
                Status::CertifiedFalse { witness: Witness { detail: "negative sampled pairing".into(), value: v, vectors: vec![coeffs], point: None } },
                "positive",
                None,
                None,
            ));
        }
    }
    Ok(PositivityVerdict::new(Status::PlausiblyTrue { samples: sampler.samples }, "positive", None, None))
}

/// `F_k[u](x) >= 0` for `k = 1..m` at every sample point.
pub fn is_m_convex(u: &ScalarField, points: &[Vec<f64>], m: usize) -> Result<PositivityVerdict> {
    is_m_convex_tol(u, points, m, 0.0, 0.0)
}

/// As [`is_m_convex`] with relative slack on each `F_k`, for approximate
/// (mollified or sampled) functions.
pub fn is_m_convex_tol(u: &ScalarField, points: &[Vec<f64>], m: usize, rel_tol: f64, abs_tol: f64) -> Result<PositivityVerdict> {
    let n = u.n();
    check_m(n, m)?;
    if !u.is_differentiable() {
        return Err(Error::NotDifferentiable("m-convexity needs a C^2 function; mollify first".into()));
    }
    let h = u.hessian()?;
    for x in points {
        let hx: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|c| c.eval(x)).collect::<Result<_>>()).collect::<Result<_>>()?;
        let cm = CoefficientMatrix::new(hx)?;
        if let Status::CertifiedFalse { mut witness } = matrix_is_m_positive_tol(&cm, m, rel_tol, abs_tol)? {
            witness.point = Some(x.clone());
            return Ok(PositivityVerdict::new(Status::CertifiedFalse { witness }, "m_convex", Some(m), Some(x)));
        }
    }
    Ok(PositivityVerdict::new(Status::PlausiblyTrue { samples: points.len() }, "m_convex", Some(m), None))
}

/// Uniform points in a box, optionally avoiding a ball around `avoid.0` of radius `avoid.1`.
pub fn sample_points(lo: &[f64], hi: &[f64], count: usize, seed: u64, avoid: Option<(&[f64], f64)>) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if let Some((c, r)) = avoid {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < r * r {
                continue;
            }
        }
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::beta;

    fn diag_form(d: &[f64]) -> Superform<f64> {
        let n = d.len();
        Superform::from_matrix_11(&(0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn fk_examples() {
        let n = 3;
        let half = ScalarField::norm_sq(n, &[0.0; 3]).scaled(0.5);
        for k in 1..=n {
            let f = hessian_fk(&half, k).unwrap();
            assert!((f.eval(&[0.3, -0.1, 2.0]).unwrap() - binomial(n, k)).abs() < 1e-12);
        }
        let u = Poly::parse(2, "x1^2 - x2^2").unwrap();
        assert!(hessian_fk_poly(&u, 1).unwrap().is_zero());
        assert_eq!(hessian_fk_poly(&u, 2).unwrap(), Poly::int(2, -4));
        assert!(hessian_fk(&half, 0).is_err());
        assert!(hessian_fk(&half, 4).is_err());
    }

    #[test]
    fn fk_of_phi_m_has_expected_signs() {
        let (n, m) = (3, 2);
        let phi = ScalarField::phi_m(n, m).unwrap();
        let pts = sample_points(&[-1.0; 3], &[1.0; 3], 20, 5, Some((&[0.0; 3], 0.05)));
        for s in 1..=n {
            let f = hessian_fk(&phi, s).unwrap();
            for x in &pts {
                let v = f.eval(x).unwrap();
                let r2: f64 = x.iter().map(|t| t * t).sum();
                // F_s = C(n,s) (1 - s/m) r^{-ns/m}
                let expect = binomial(n, s) * (1.0 - s as f64 / m as f64) * r2.powf(-((n * s) as f64) / (2.0 * m as f64));
                assert!((v - expect).abs() <= 1e-9 * (1.0 + expect.abs()), "s={s} {v} vs {expect}");
            }
        }
    }

    #[test]
    fn hessian_identity_on_examples() {
        for n in 1..=4 {
            let half = Poly::norm_sq(n, &vec![BigRational::from_integer(0.into()); n]).scale(&BigRational::new(1.into(), 2.into()));
            let affine = Poly::parse(n, "3*x1 - 2").unwrap();
            for k in 1..=n {
                assert!(check_eq1(&half, k).unwrap());
                assert!(check_eq1(&affine, k).unwrap());
            }
        }
    }

    #[test]
    fn constant_fixed_by_laplacian_at_k_one() {
        // dd# f ^ beta^{n-1} = (1/n) Laplacian(f) beta^n
        for n in 1..=4 {
            assert_eq!(hessian_identity_constant(n, 1), BigRational::new(1.into(), BigInt::from(n)));
        }
    }

    #[test]
    fn m_positivity_constants_match_exact_wedge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=4 {
            for _ in 0..5 {
                let mut a = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in 0..=i {
                        let v = rng.gen_range(-3i32..=3) as f64;
                        a[i][j] = v;
                        a[j][i] = v;
                    }
                }
                let f = Superform::from_matrix_11(&a);
                for j in 1..=n {
                    let lhs = f.pow(j).unwrap().wedge(&beta_power(n, n - j)).unwrap().top_density().unwrap();
                    let rhs = m_positivity_constant(n, j) * principal_minor_sum(&a, j);
                    assert_eq!(lhs, rhs.round(), "n={n} j={j}");
                }
            }
        }
    }

    #[test]
    fn two_positive_but_not_weakly_positive() {
        let a = diag_form(&[1.0, 1.0, -0.5]);
        let cm = CoefficientMatrix::from_form(&a).unwrap();
        assert_eq!(matrix_is_m_positive(&cm, 2).unwrap(), Status::CertifiedTrue);
        assert!(matches!(matrix_is_m_positive(&cm, 3).unwrap(), Status::CertifiedFalse { .. }));
        let v = form_is_weakly_positive(&a, Sampler { samples: 10, seed: 0 }).unwrap();
        let w = v.witness().unwrap();
        assert!(w.value < 0.0);
        assert!(w.detail.contains("-0.5"));
    }

    #[test]
    fn beta_is_positive_everywhere() {
        for n in 1..=4 {
            let b = beta::<ScalarField>(n);
            for m in 1..=n {
                assert!(form_is_m_positive(&b, &vec![0.1; n], m).unwrap().is_certified_true());
            }
            let neg = b.neg();
            let v = form_is_m_positive(&neg, &vec![0.0; n], 1).unwrap();
            assert_eq!(v.witness().unwrap().value, -(n as f64));
            for p in 1..=n {
                let bp = beta_power::<f64>(n, p);
                assert!(!form_is_weakly_positive(&bp, Sampler { samples: 200, seed: 1 }).unwrap().is_false());
            }
        }
    }

    #[test]
    fn asymmetric_inputs_rejected() {
        let a = Superform::term(2, &[1], &[2], ScalarField::constant(2, 1.0)).unwrap();
        assert!(form_is_m_positive(&a, &[0.0, 0.0], 1).is_err());
        let b = Superform::term(2, &[1], &[2], 1.0).unwrap();
        assert!(form_is_weakly_positive(&b, Sampler { samples: 1, seed: 0 }).is_err());
    }

    #[test]
    fn products_of_convex_hessians_are_weakly_positive() {
        let n = 3;
        let f1 = ScalarField::parse_poly(n, "x1^4 + x2^2 + x1*x3 + x3^2 + x2^4").unwrap();
        let f2 = ScalarField::parse_poly(n, "x1^2 + x2^2 + x3^2 + x1^2*x2^2").unwrap();
        let h1 = ddsharp(&Superform::scalar(n, f1)).unwrap();
        let h2 = ddsharp(&Superform::scalar(n, f2)).unwrap();
        let prod = h1.wedge(&h2).unwrap();
        let x = [0.4, -0.7, 0.2];
        let v = form_is_weakly_positive(&eval_form(&prod, &x).unwrap(), Sampler { samples: 10_000, seed: 4 }).unwrap();
        assert!(!v.is_false());
    }

    #[test]
    fn strongly_positive_forms_pass_every_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..=4 {
            for p in 1..=n {
                let a = random_strongly_positive(n, p, 3, &mut rng);
                assert!(!form_is_weakly_positive(&a, Sampler { samples: 300, seed: 9 }).unwrap().is_false());
                assert!(!form_is_positive_sampled(&a, Sampler { samples: 300, seed: 9 }).unwrap().is_false());
            }
        }
    }

    #[test]
    fn m_convexity() {
        let (n, m) = (3, 2);
        let pts = sample_points(&[-1.0; 3], &[1.0; 3], 50, 6, Some((&[0.0; 3], 0.05)));
        let phi = ScalarField::phi_m(n, m).unwrap();
        assert!(!is_m_convex(&phi, &pts, m).unwrap().is_false());
        assert!(is_m_convex(&phi, &pts, m + 1).unwrap().is_false());
        let q = ScalarField::norm_sq(n, &[0.0; 3]);
        assert!(!is_m_convex(&q, &pts, n).unwrap().is_false());
        let hinge = ScalarField::max_affine(n, vec![(vec![0.0; 3], 0.0), (vec![1.0, 0.0, 0.0], 0.0)]).unwrap();
        assert!(is_m_convex(&hinge, &pts, 1).is_err());
    }
}
