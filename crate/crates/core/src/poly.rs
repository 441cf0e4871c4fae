//! Exact multivariate polynomials over the rationals.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

/// Exponent vector of a monomial, one entry per variable.
pub type Exponents = Vec<u32>;

/// A polynomial in `n` variables with exact rational coefficients.
///
/// A floating-point copy of every coefficient is cached so that numeric
/// evaluation in quadrature loops does not touch big integers.
#[derive(Clone)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Exponents, BigRational>,
    numeric: Vec<(Exponents, f64)>,
}

impl PartialEq for Poly {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.terms == other.terms
    }
}

impl Eq for Poly {}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly[{}]({})", self.n, self)
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

impl Poly {
    fn from_map(n: usize, mut terms: BTreeMap<Exponents, BigRational>) -> Self {
        terms.retain(|_, c| !c.is_zero());
        let numeric = terms
            .iter()
            .map(|(e, c)| (e.clone(), c.to_f64().unwrap_or(f64::NAN)))
            .collect();
        Poly { n, terms, numeric }
    }

    pub fn zero(n: usize) -> Self {
        Self::from_map(n, BTreeMap::new())
    }

    pub fn constant(n: usize, c: BigRational) -> Self {
        let mut m = BTreeMap::new();
        m.insert(vec![0; n], c);
        Self::from_map(n, m)
    }

    pub fn int(n: usize, c: i64) -> Self {
        Self::constant(n, BigRational::from_integer(BigInt::from(c)))
    }

    /// The coordinate function `x_i` (zero-based axis).
    pub fn var(n: usize, i: usize) -> Self {
        assert!(i < n, "axis {i} out of range for dimension {n}");
        let mut e = vec![0; n];
        e[i] = 1;
        Self::monomial(n, e, BigRational::one())
    }

    pub fn monomial(n: usize, exps: Exponents, c: BigRational) -> Self {
        assert_eq!(exps.len(), n);
        let mut m = BTreeMap::new();
        m.insert(exps, c);
        Self::from_map(n, m)
    }

    /// `sum_i (x_i - a_i)^2` with exact center.
    pub fn norm_sq(n: usize, center: &[BigRational]) -> Self {
        let mut acc = Self::zero(n);
        for (i, a) in center.iter().enumerate() {
            let d = Self::var(n, i).sub(&Self::constant(n, a.clone()));
            acc = acc.add(&d.mul(&d));
        }
        acc
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, BigRational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Returns the value if the polynomial is constant.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&k| k == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut m = self.terms.clone();
        for (e, c) in &other.terms {
            let slot = m.entry(e.clone()).or_insert_with(BigRational::zero);
            *slot += c;
        }
        Self::from_map(self.n, m)
    }

    pub fn neg(&self) -> Self {
        let m = self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect();
        Self::from_map(self.n, m)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        let m = self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect();
        Self::from_map(self.n, m)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut m: BTreeMap<Exponents, BigRational> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let slot = m.entry(e).or_insert_with(BigRational::zero);
                *slot += ca * cb;
            }
        }
        Self::from_map(self.n, m)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::int(self.n, 1);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact partial derivative along a zero-based axis.
    pub fn partial(&self, i: usize) -> Self {
        let mut m = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            m.insert(e2, c * BigRational::from_integer(BigInt::from(e[i])));
        }
        Self::from_map(self.n, m)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let mut s = 0.0;
        for (e, c) in &self.numeric {
            let mut t = *c;
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= xi.powi(k as i32);
                }
            }
            s += t;
        }
        s
    }

    pub fn eval_exact(&self, x: &[BigRational]) -> BigRational {
        let mut s = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            s += t;
        }
        s
    }

    /// Random polynomial with small integer coefficients and total degree at most `deg`.
    pub fn random<R: Rng>(n: usize, deg: u32, n_terms: usize, rng: &mut R) -> Self {
        let mut m = BTreeMap::new();
        for _ in 0..n_terms {
            let mut e = vec![0u32; n];
            let total = rng.gen_range(0..=deg);
            for _ in 0..total {
                e[rng.gen_range(0..n)] += 1;
            }
            let c = rng.gen_range(-5i64..=5);
            let slot = m.entry(e).or_insert_with(BigRational::zero);
            *slot += BigRational::from_integer(BigInt::from(c));
        }
        Self::from_map(n, m)
    }

    /// Parses expressions such as `x1^2*x2 + 3` or `(x1 - 1/2)^2 + 0.25*x2`.
    pub fn parse(n: usize, src: &str) -> Result<Self> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, n };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(out)
    }
}

fn fmt_rational(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Highest total degree first, then lexicographic.
        let mut keys: Vec<&Exponents> = self.terms.keys().collect();
        keys.sort_by(|a, b| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            db.cmp(&da).then_with(|| b.cmp(a))
        });
        for (idx, e) in keys.into_iter().enumerate() {
            let c = &self.terms[e];
            let neg = c.is_negative();
            let a = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| if k == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, k) })
                .collect();
            if vars.is_empty() {
                write!(f, "{}", fmt_rational(&a))?;
            } else if a.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_rational(&a), vars.join("*"))?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("polynomial: {msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.factor()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    acc = acc.mul(&self.factor()?);
                }
                b'/' => {
                    self.pos += 1;
                    let d = self.factor()?;
                    let c = d.as_constant().ok_or_else(|| self.err("division by a non-constant"))?;
                    if c.is_zero() {
                        return Err(self.err("division by zero"));
                    }
                    acc = acc.scale(&c.recip());
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(self.factor()?.neg());
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let k = self.integer()?;
            let k = u32::try_from(k).map_err(|_| self.err("exponent out of range"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<u64> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected integer"));
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("bad integer"))
    }

    fn atom(&mut self) -> Result<Poly> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.pos += 1;
                let i = self.integer()? as usize;
                if i == 0 || i > self.n {
                    return Err(self.err(&format!("variable x{i} outside 1..{}", self.n)));
                }
                Ok(Poly::var(self.n, i - 1))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let lit = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                let q = parse_decimal(lit).ok_or_else(|| self.err("bad number"))?;
                Ok(Poly::constant(self.n, q))
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

/// Parses a decimal literal exactly, so `0.1` becomes `1/10`.
pub fn parse_decimal(lit: &str) -> Option<BigRational> {
    let (int, frac) = match lit.split_once('.') {
        Some((a, b)) => (a, b),
        None => (lit, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(num, den))
}
