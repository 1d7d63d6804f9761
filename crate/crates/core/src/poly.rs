//! Sparse multivariate polynomials over `f64` and graded-lex monomial bases.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// Exponent vector of a monomial.
///
/// Ordered graded-lexicographically: by total degree, then so that earlier
/// variables come first (`1, u1, u2, u1^2, u1 u2, u2^2, ...`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(k: usize) -> Self {
        MultiIndex(vec![0; k])
    }

    pub fn unit(k: usize, i: usize) -> Self {
        let mut e = vec![0; k];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `u^alpha` at `point`.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0.iter().zip(point).fold(1.0, |acc, (&e, &x)| if e == 0 { acc } else { acc * x.powi(e as i32) })
    }

    /// Places the exponents at `offset` inside a vector of length `total`.
    pub fn embed(&self, total: usize, offset: usize) -> MultiIndex {
        let mut e = vec![0; total];
        e[offset..offset + self.0.len()].copy_from_slice(&self.0);
        MultiIndex(e)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// All monomials of degree at most `degree` in `num_vars` variables.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    num_vars: usize,
    degree: usize,
    monomials: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn new(num_vars: usize, degree: usize) -> Self {
        let mut monomials = Vec::with_capacity(binomial(num_vars + degree, degree));
        for d in 0..=degree {
            let mut cur = vec![0u32; num_vars];
            push_degree(&mut monomials, &mut cur, 0, d as u32);
        }
        let index = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        MonomialBasis { num_vars, degree, monomials, index }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.monomials[i]
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.monomials.iter()
    }

    /// `[u]_d` evaluated at `point`.
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|m| m.eval(point)).collect()
    }
}

/// Graded-lex basis of all monomials of degree `<= d` in `k` variables.
pub fn monomial_basis(k: usize, d: usize) -> MonomialBasis {
    MonomialBasis::new(k, d)
}

// Emits exponent vectors of exact degree `left` over variables `pos..`,
// earliest variable taking the largest exponent first.
fn push_degree(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(MultiIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if left == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_degree(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

const DROP_REL: f64 = 1e-14;

/// Sparse polynomial in `num_vars` variables.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    num_vars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial { num_vars, terms: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zero(num_vars), c)
    }

    /// The coordinate function `u_i`.
    pub fn var(num_vars: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(num_vars, i), 1.0)
    }

    pub fn monomial(m: MultiIndex, c: f64) -> Self {
        let num_vars = m.len();
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(m, c);
        }
        Polynomial { num_vars, terms }
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, summing repeats.
    pub fn from_terms(num_vars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (m, c) in terms {
            if m.len() != num_vars {
                return Err(Error::DimensionMismatch { expected: num_vars, found: m.len() });
            }
            *map.entry(m).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Polynomial { num_vars, terms: map })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `0` for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree() as usize).max().unwrap_or(0)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn check(&self, other: &Polynomial) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::DimensionMismatch { expected: self.num_vars, found: other.num_vars });
        }
        Ok(())
    }

    fn cleaned(mut self, scale: f64) -> Self {
        let cut = DROP_REL * scale;
        self.terms.retain(|_, c| c.abs() > cut);
        self
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check(other)?;
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        Ok(Polynomial { num_vars: self.num_vars, terms }.cleaned(scale))
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check(other)?;
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        let mut raw = 0.0f64;
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let v = ca * cb;
                raw = raw.max(v.abs());
                *terms.entry(ma.add(mb)).or_insert(0.0) += v;
            }
        }
        // Cancellation is judged against the operands and the raw products.
        Ok(Polynomial { num_vars: self.num_vars, terms }.cleaned(scale.max(raw)))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.num_vars);
        }
        Polynomial { num_vars: self.num_vars, terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-1.0)
    }

    pub fn add_constant(&self, c: f64) -> Polynomial {
        self.try_add(&Polynomial::constant(self.num_vars, c)).expect("same dimension")
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.num_vars, 1.0);
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Evaluates at `point` by summing coefficient times monomial value.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.num_vars {
            return Err(Error::DimensionMismatch { expected: self.num_vars, found: point.len() });
        }
        Ok(self.eval(point))
    }

    /// Like [`evaluate`](Self::evaluate) but panics on a length mismatch.
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.num_vars, "point has wrong dimension");
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e > 0 {
                let mut n = m.0.clone();
                n[i] -= 1;
                terms.insert(MultiIndex(n), c * e as f64);
            }
        }
        Polynomial { num_vars: self.num_vars, terms }
    }

    /// Re-indexes into a space of `total` variables, shifting by `offset`.
    pub fn embed(&self, total: usize, offset: usize) -> Polynomial {
        assert!(offset + self.num_vars <= total, "embedding out of range");
        Polynomial {
            num_vars: total,
            terms: self.terms.iter().map(|(m, c)| (m.embed(total, offset), *c)).collect(),
        }
    }

    /// Replaces each variable `i` by `bindings[&i]`.  Every variable that
    /// occurs in `self` must be bound, and all bindings must share one
    /// variable count, which becomes the result's.
    pub fn substitute(&self, bindings: &BTreeMap<usize, Polynomial>) -> Result<Polynomial> {
        let target = match bindings.values().next() {
            Some(b) => b.num_vars,
            None if self.terms.keys().all(|m| m.is_zero()) => self.num_vars,
            None => return Err(Error::UnboundVariable(first_used_var(self).unwrap_or(0))),
        };
        for b in bindings.values() {
            if b.num_vars != target {
                return Err(Error::DimensionMismatch { expected: target, found: b.num_vars });
            }
        }
        let mut powers: Vec<Vec<Polynomial>> = vec![Vec::new(); self.num_vars];
        let mut out = Polynomial::zero(target);
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(target, *c);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let b = bindings.get(&i).ok_or(Error::UnboundVariable(i))?;
                let cache = &mut powers[i];
                if cache.is_empty() {
                    cache.push(Polynomial::constant(target, 1.0));
                }
                while cache.len() <= e as usize {
                    let next = cache.last().expect("nonempty").try_mul(b)?;
                    cache.push(next);
                }
                term = term.try_mul(&cache[e as usize])?;
            }
            out = out.try_add(&term)?;
        }
        Ok(out)
    }

    /// Substitutes all variables in order: `u_i -> bindings[i]`.
    pub fn compose(&self, bindings: &[Polynomial]) -> Result<Polynomial> {
        if bindings.len() != self.num_vars {
            return Err(Error::DimensionMismatch { expected: self.num_vars, found: bindings.len() });
        }
        let map: BTreeMap<usize, Polynomial> = bindings.iter().cloned().enumerate().collect();
        if map.is_empty() {
            return Ok(self.clone());
        }
        self.substitute(&map)
    }

    /// Coefficients against a basis, in basis order.  Terms outside the
    /// basis are an error.
    pub fn coefficients_in(&self, basis: &MonomialBasis) -> Result<Vec<f64>> {
        let mut v = vec![0.0; basis.len()];
        for (m, c) in &self.terms {
            let i = basis.position(m).ok_or(Error::DimensionMismatch {
                expected: basis.degree(),
                found: m.degree() as usize,
            })?;
            v[i] = *c;
        }
        Ok(v)
    }
}

fn first_used_var(p: &Polynomial) -> Option<usize> {
    p.terms.keys().flat_map(|m| m.0.iter().position(|&e| e > 0)).min()
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let a = c.abs();
            let mono: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { format!("u{}", i + 1) } else { format!("u{}^{}", i + 1, e) })
                .collect();
            if mono.is_empty() {
                write!(f, "{a}")?;
            } else if a == 1.0 {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{a}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

// Operator sugar.  These panic on a variable-count mismatch; use the
// `try_*` methods when operands come from untrusted input.
impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl std::ops::Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl std::ops::Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl std::ops::Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(k: usize, i: usize) -> Polynomial {
        Polynomial::var(k, i)
    }

    #[test]
    fn basis_sizes_and_order() {
        assert_eq!(monomial_basis(1, 2).len(), 3);
        assert_eq!(monomial_basis(2, 2).len(), 6);
        assert_eq!(monomial_basis(3, 4).len(), 35);
        let b = monomial_basis(2, 2);
        let got: Vec<Vec<u32>> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        let mut sorted = b.iter().cloned().collect::<Vec<_>>();
        sorted.sort();
        assert_eq!(sorted, b.iter().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn difference_of_squares() {
        let one = Polynomial::constant(1, 1.0);
        let p = &one + &u(1, 0);
        let q = &one - &u(1, 0);
        let r = &p * &q;
        let expect = &one - &u(1, 0).pow(2);
        assert_eq!(r, expect);
        assert!((&Polynomial::zero(1) * &p).is_zero());
    }

    #[test]
    fn mismatched_dimensions_error() {
        assert!(u(1, 0).try_add(&u(2, 0)).is_err());
        assert!(u(2, 0).evaluate(&[1.0]).is_err());
    }

    #[test]
    fn evaluate_barycentric() {
        let w = Polynomial::constant(2, 1.0) - u(2, 0) - u(2, 1);
        assert_eq!(w.eval(&[0.25, 0.25]), 0.5);
        assert_eq!(Polynomial::constant(3, 7.0).eval(&[1.0, -2.0, 3.0]), 7.0);
    }

    #[test]
    fn substitute_shift() {
        let p = u(1, 0).pow(2);
        let b: BTreeMap<usize, Polynomial> = [(0, &u(1, 0) + &Polynomial::constant(1, 1.0))].into_iter().collect();
        let r = p.substitute(&b).unwrap();
        let expect = &(&u(1, 0).pow(2) + &u(1, 0).scale(2.0)) + &Polynomial::constant(1, 1.0);
        assert_eq!(r, expect);
        let id: BTreeMap<usize, Polynomial> = [(0, u(1, 0))].into_iter().collect();
        assert_eq!(p.substitute(&id).unwrap(), p);
    }

    #[test]
    fn substitute_reports_unbound() {
        let p = &u(2, 0) * &u(2, 1);
        let b: BTreeMap<usize, Polynomial> = [(0, u(1, 0))].into_iter().collect();
        assert!(matches!(p.substitute(&b), Err(Error::UnboundVariable(1))));
    }

    #[test]
    fn derivative_and_embed() {
        let p = &u(2, 0).pow(3) * &u(2, 1);
        let d = p.derivative(0);
        assert_eq!(d, (&u(2, 0).pow(2) * &u(2, 1)).scale(3.0));
        let e = p.embed(4, 2);
        assert_eq!(e.eval(&[9.0, 9.0, 2.0, 3.0]), 24.0);
    }
}
