//! Bigraded exterior algebra over `dx_1..dx_n, dxi_1..dxi_n`.
//!
//! Basis words are stored canonically: all `dx` factors in increasing order
//! followed by all `dxi` factors in increasing order. Products sort the
//! concatenated word and pick up the parity of the sorting permutation.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::poly::Poly;

/// Strictly increasing index set in `1..=n`, stored as a bit mask (bit `i-1` for index `i`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex(u32);

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    /// Builds from one-based indices; rejects repeats and non-increasing input.
    pub fn new(indices: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        let mut last = 0usize;
        for &i in indices {
            if i == 0 || i > 31 {
                return Err(Error::Invalid(format!("index {i} out of range")));
            }
            if i <= last {
                return Err(Error::Invalid(format!("indices {indices:?} not strictly increasing")));
            }
            last = i;
            mask |= 1 << (i - 1);
        }
        Ok(MultiIndex(mask))
    }

    pub fn single(i: usize) -> Self {
        MultiIndex(1 << (i - 1))
    }

    pub fn full(n: usize) -> Self {
        MultiIndex(((1u64 << n) - 1) as u32)
    }

    pub fn from_mask(mask: u32) -> Self {
        MultiIndex(mask)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << (i - 1)) != 0
    }

    /// One-based indices in increasing order.
    pub fn indices(self) -> Vec<usize> {
        (0..32).filter(|b| self.0 & (1 << b) != 0).map(|b| b + 1).collect()
    }

    pub fn max_index(self) -> usize {
        32 - self.0.leading_zeros() as usize
    }

    /// Sign of merging the sorted word `self` followed by sorted word `other`
    /// into one sorted word, or `None` if they share an index.
    fn merge_sign(self, other: MultiIndex) -> Option<i32> {
        if self.0 & other.0 != 0 {
            return None;
        }
        let mut inversions = 0u32;
        let mut rest = other.0;
        while rest != 0 {
            let b = rest.trailing_zeros();
            inversions += (self.0 >> b).count_ones();
            rest &= rest - 1;
        }
        Some(if inversions.is_multiple_of(2) { 1 } else { -1 })
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.indices())
    }
}

/// Canonical basis word `dx_K ^ dxi_L`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct BasisElement {
    pub k: MultiIndex,
    pub l: MultiIndex,
}

impl BasisElement {
    pub fn new(k: MultiIndex, l: MultiIndex) -> Self {
        BasisElement { k, l }
    }

    pub fn bidegree(self) -> (usize, usize) {
        (self.k.len(), self.l.len())
    }

    /// Product of two canonical words: `(sign, word)` or `None` when it vanishes.
    pub fn wedge(self, other: BasisElement) -> Option<(i32, BasisElement)> {
        let sk = self.k.merge_sign(other.k)?;
        let sl = self.l.merge_sign(other.l)?;
        // Move dxi_L1 across dx_K2.
        let cross = if (self.l.len() * other.k.len()).is_multiple_of(2) { 1 } else { -1 };
        Some((
            sk * sl * cross,
            BasisElement { k: MultiIndex(self.k.0 | other.k.0), l: MultiIndex(self.l.0 | other.l.0) },
        ))
    }
}

/// Canonicalizes an arbitrary word of generators. Each generator is
/// `(is_dxi, index)` with one-based index. Returns `None` for repeated generators.
pub fn canonicalize(word: &[(bool, usize)]) -> Option<(i32, BasisElement)> {
    let mut acc = (1, BasisElement::default());
    for &(is_dxi, i) in word {
        let g = if is_dxi {
            BasisElement::new(MultiIndex::EMPTY, MultiIndex::single(i))
        } else {
            BasisElement::new(MultiIndex::single(i), MultiIndex::EMPTY)
        };
        let (s, b) = acc.1.wedge(g)?;
        acc = (acc.0 * s, b);
    }
    Some(acc)
}

/// Coefficient ring for superforms.
pub trait Coeff: Clone + fmt::Debug + Send + Sync {
    fn zero_like(n: usize) -> Self;
    fn from_int(n: usize, k: i64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale_int(&self, k: i64) -> Self {
        match k {
            1 => self.clone(),
            -1 => self.neg(),
            _ => self.mul(&Self::from_int(0, k)),
        }
    }
}

impl Coeff for f64 {
    fn zero_like(_: usize) -> Self {
        0.0
    }
    fn from_int(_: usize, k: i64) -> Self {
        k as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale_int(&self, k: i64) -> Self {
        self * k as f64
    }
}

impl Coeff for Poly {
    fn zero_like(n: usize) -> Self {
        Poly::zero(n)
    }
    fn from_int(n: usize, k: i64) -> Self {
        Poly::int(n, k)
    }
    fn is_zero(&self) -> bool {
        Poly::is_zero(self)
    }
    fn add(&self, o: &Self) -> Self {
        Poly::add(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Poly::mul(self, o)
    }
    fn neg(&self) -> Self {
        Poly::neg(self)
    }
    fn scale_int(&self, k: i64) -> Self {
        self.scale(&crate::poly::rational(k, 1))
    }
}

/// Superform of bidegree `(p, q)` on `R^n x R^n` with coefficients in `C`.
#[derive(Clone, Debug)]
pub struct Superform<C> {
    n: usize,
    p: usize,
    q: usize,
    terms: BTreeMap<BasisElement, C>,
}

impl<C: Coeff + PartialEq> PartialEq for Superform<C> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.p == other.p && self.q == other.q && self.terms == other.terms
    }
}

impl<C: Coeff> Superform<C> {
    /// `sum_ij a_ij dx_i ^ dxi_j`.
    pub fn from_coeff_matrix(a: &[Vec<C>]) -> Self {
        let n = a.len();
        let mut out = Self::zero(n, 1, 1);
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.add_term(BasisElement::new(MultiIndex::single(i + 1), MultiIndex::single(j + 1)), v.clone());
            }
        }
        out
    }

    pub fn zero(n: usize, p: usize, q: usize) -> Self {
        Superform { n, p, q, terms: BTreeMap::new() }
    }

    /// The scalar form `c` of bidegree (0,0).
    pub fn scalar(n: usize, c: C) -> Self {
        let mut f = Self::zero(n, 0, 0);
        f.add_term(BasisElement::default(), c);
        f
    }

    pub fn one(n: usize) -> Self {
        Self::scalar(n, C::from_int(n, 1))
    }

    /// `c dx_K ^ dxi_L`, validating indices against `n`.
    pub fn term(n: usize, k: &[usize], l: &[usize], c: C) -> Result<Self> {
        let kk = MultiIndex::new(k)?;
        let ll = MultiIndex::new(l)?;
        if kk.max_index() > n || ll.max_index() > n {
            return Err(Error::Invalid(format!("index exceeds dimension {n}")));
        }
        let mut f = Self::zero(n, kk.len(), ll.len());
        f.add_term(BasisElement::new(kk, ll), c);
        Ok(f)
    }

    pub fn dx(n: usize, i: usize) -> Self {
        Self::term(n, &[i], &[], C::from_int(n, 1)).expect("valid index")
    }

    pub fn dxi(n: usize, i: usize) -> Self {
        Self::term(n, &[], &[i], C::from_int(n, 1)).expect("valid index")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn terms(&self) -> &BTreeMap<BasisElement, C> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, b: &BasisElement) -> Option<&C> {
        self.terms.get(b)
    }

    /// Adds `c` to the coefficient of `b` (which must have this form's bidegree).
    pub fn add_term(&mut self, b: BasisElement, c: C) {
        debug_assert_eq!(b.bidegree(), (self.p, self.q));
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&b) {
            Some(slot) => {
                let s = slot.add(&c);
                if s.is_zero() {
                    self.terms.remove(&b);
                } else {
                    *slot = s;
                }
            }
            None => {
                self.terms.insert(b, c);
            }
        }
    }

    pub fn map_coeffs<D: Coeff, F: FnMut(&C) -> D>(&self, mut f: F) -> Superform<D> {
        let mut out = Superform::zero(self.n, self.p, self.q);
        for (b, c) in &self.terms {
            out.add_term(*b, f(c));
        }
        out
    }

    pub fn try_map_coeffs<D: Coeff, F: FnMut(&C) -> Result<D>>(&self, mut f: F) -> Result<Superform<D>> {
        let mut out = Superform::zero(self.n, self.p, self.q);
        for (b, c) in &self.terms {
            out.add_term(*b, f(c)?);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("{} vs {}", self.n, other.n)));
        }
        if self.bidegree() != other.bidegree() {
            // The zero form of any bidegree is the additive identity.
            if other.is_zero() {
                return Ok(self.clone());
            }
            if self.is_zero() {
                return Ok(other.clone());
            }
            return Err(Error::Bidegree(format!("{:?} + {:?}", self.bidegree(), other.bidegree())));
        }
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.add_term(*b, c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|c| c.neg())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &C) -> Self {
        let mut out = Self::zero(self.n, self.p, self.q);
        for (b, c) in &self.terms {
            out.add_term(*b, c.mul(s));
        }
        out
    }

    pub fn scale_int(&self, k: i64) -> Self {
        let mut out = Self::zero(self.n, self.p, self.q);
        for (b, c) in &self.terms {
            out.add_term(*b, c.scale_int(k));
        }
        out
    }

    /// Exterior product with full sign bookkeeping.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("{} vs {}", self.n, other.n)));
        }
        let (p, q) = (self.p + other.p, self.q + other.q);
        let mut out = Self::zero(self.n, p, q);
        if p > self.n || q > self.n {
            return Ok(out);
        }
        for (ba, ca) in &self.terms {
            for (bb, cb) in &other.terms {
                if let Some((s, b)) = ba.wedge(*bb) {
                    out.add_term(b, ca.mul(cb).scale_int(s as i64));
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: usize) -> Result<Self> {
        let mut acc = Self::one(self.n);
        for _ in 0..k {
            acc = acc.wedge(self)?;
        }
        Ok(acc)
    }

    /// The almost complex structure `J`: `dx_i -> dxi_i`, `dxi_i -> -dx_i`.
    pub fn apply_j(&self) -> Self {
        let (p, q) = (self.p, self.q);
        let sign: i64 = if (q + p * q) % 2 == 0 { 1 } else { -1 };
        let mut out = Self::zero(self.n, q, p);
        for (b, c) in &self.terms {
            out.add_term(BasisElement::new(b.l, b.k), c.scale_int(sign));
        }
        out
    }

    /// Top-degree coefficient relative to `vol = beta^n / n!`.
    ///
    /// The raw coefficient of `dx_1..dx_n ^ dxi_1..dxi_n` differs from this
    /// density by `(-1)^{n(n-1)/2}`.
    pub fn top_density(&self) -> Result<C> {
        if self.bidegree() != (self.n, self.n) {
            return Err(Error::Bidegree(format!("expected ({0},{0}), got {1:?}", self.n, self.bidegree())));
        }
        let full = BasisElement::new(MultiIndex::full(self.n), MultiIndex::full(self.n));
        let c = self.terms.get(&full).cloned().unwrap_or_else(|| C::zero_like(self.n));
        Ok(c.scale_int(vol_sign(self.n)))
    }

    /// The form `g * beta^n / n!`.
    pub fn volume(n: usize, g: C) -> Self {
        let full = BasisElement::new(MultiIndex::full(n), MultiIndex::full(n));
        let mut out = Self::zero(n, n, n);
        out.add_term(full, g.scale_int(vol_sign(n)));
        out
    }
}

impl<C: Coeff + PartialEq> Superform<C> {
    /// `alpha_KL == alpha_LK` for every pair; only defined on square bidegree.
    pub fn is_symmetric(&self) -> Result<bool> {
        if self.p != self.q {
            return Err(Error::Bidegree(format!("symmetry needs (p,p), got {:?}", self.bidegree())));
        }
        Ok(self.terms.iter().all(|(b, c)| {
            let t = BasisElement::new(b.l, b.k);
            self.terms.get(&t) == Some(c)
        }))
    }
}

impl Superform<f64> {
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Symmetric coefficient matrix of a (1,1) form `sum a_ij dx_i ^ dxi_j`.
    pub fn matrix_11(&self) -> Result<Vec<Vec<f64>>> {
        if self.bidegree() != (1, 1) {
            return Err(Error::Bidegree(format!("expected (1,1), got {:?}", self.bidegree())));
        }
        let n = self.n;
        let mut a = vec![vec![0.0; n]; n];
        for (b, c) in &self.terms {
            let i = b.k.indices()[0] - 1;
            let j = b.l.indices()[0] - 1;
            a[i][j] = *c;
        }
        Ok(a)
    }

    pub fn from_matrix_11(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut out = Self::zero(n, 1, 1);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out.add_term(BasisElement::new(MultiIndex::single(i + 1), MultiIndex::single(j + 1)), v);
            }
        }
        out
    }
}

/// `(-1)^{n(n-1)/2}`.
pub fn vol_sign(n: usize) -> i64 {
    if (n * n.saturating_sub(1) / 2).is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `beta = sum_i dx_i ^ dxi_i`.
pub fn beta<C: Coeff>(n: usize) -> Superform<C> {
    let mut b = Superform::zero(n, 1, 1);
    for i in 1..=n {
        b.add_term(BasisElement::new(MultiIndex::single(i), MultiIndex::single(i)), C::from_int(n, 1));
    }
    b
}

/// `beta^p` with exact integer coefficients; zero of bidegree (p,p) when `p > n`.
pub fn beta_power<C: Coeff>(n: usize, p: usize) -> Superform<C> {
    if p > n {
        return Superform::zero(n, p, p);
    }
    beta::<C>(n).pow(p).expect("same dimension")
}

fn write_index(f: &mut fmt::Formatter<'_>, m: MultiIndex) -> fmt::Result {
    let s: Vec<String> = m.indices().iter().map(|i| i.to_string()).collect();
    write!(f, "[{}]", s.join(","))
}

impl<C: Coeff + fmt::Display> fmt::Display for Superform<C> {
    /// One term per line: `coeff * dx[K] ^ dxi[L]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<&BasisElement> = self.terms.keys().collect();
        keys.sort_by_key(|b| (b.k.indices(), b.l.indices()));
        for (idx, b) in keys.into_iter().enumerate() {
            if idx > 0 {
                writeln!(f)?;
            }
            write!(f, "({}) * dx", self.terms[b])?;
            write_index(f, b.k)?;
            write!(f, " ^ dxi")?;
            write_index(f, b.l)?;
        }
        Ok(())
    }
}

fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad index '{t}'"))))
        .collect()
}

/// Parses the line-oriented text format into a form of bidegree `(p, q)`,
/// with coefficients read by `coeff`. Blank lines are ignored.
pub fn parse_superform<C: Coeff, F: FnMut(&str) -> Result<C>>(
    n: usize,
    text: &str,
    mut coeff: F,
) -> Result<Superform<C>> {
    let mut out: Option<Superform<C>> = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (c_str, basis) = line
            .rsplit_once("* dx[")
            .map(|(a, b)| (a.trim(), b))
            .ok_or_else(|| Error::Parse(format!("expected 'coeff * dx[K] ^ dxi[L]' in '{line}'")))?;
        let (k_str, rest) = basis
            .split_once(']')
            .ok_or_else(|| Error::Parse(format!("unterminated dx list in '{line}'")))?;
        let rest = rest.trim();
        let l_str = rest
            .strip_prefix('^')
            .map(str::trim)
            .and_then(|r| r.strip_prefix("dxi["))
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("expected '^ dxi[L]' in '{line}'")))?;
        let c_str = c_str.strip_prefix('(').and_then(|s| s.strip_suffix(')')).unwrap_or(c_str);
        let term = Superform::term(n, &parse_index_list(k_str)?, &parse_index_list(l_str)?, coeff(c_str)?)?;
        out = Some(match out {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    out.ok_or_else(|| Error::Parse("empty superform".into()))
}
