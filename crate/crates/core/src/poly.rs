//! Sparse multivariate polynomials over a commutative ring scalar.
//!
//! Used as the exact symbolic backbone: polynomial test functionals `F` in the
//! integration-by-parts expansions (partial derivatives must be exact), and
//! symbolic Wick products. The scalar is any [`Ring`](crate::scalar::Ring) —
//! `f64` for numeric work, `BigRational` for exact identities.

use crate::scalar::Ring;
use std::collections::BTreeMap;

/// Monomial: sorted `(variable, exponent)` pairs, exponents ≥ 1.
pub type Monomial = Vec<(usize, u32)>;

/// Sparse polynomial: monomial → nonzero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S: Ring> {
    terms: BTreeMap<Monomial, S>,
}

impl<S: Ring> Poly<S> {
    /// The zero polynomial.
    pub fn zero() -> Self {
        Poly {
            terms: BTreeMap::new(),
        }
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        Self::constant(S::one())
    }

    /// A constant polynomial.
    pub fn constant(c: S) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Vec::new(), c);
        }
        Poly { terms }
    }

    /// The variable `X_i`.
    pub fn var(i: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![(i, 1)], S::one());
        Poly { terms }
    }

    /// A single term `c · Π X_i^{e_i}` from raw (var, exp) pairs.
    pub fn term(c: S, mono: &[(usize, u32)]) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        let mut map: BTreeMap<usize, u32> = BTreeMap::new();
        for &(v, e) in mono {
            if e > 0 {
                *map.entry(v).or_insert(0) += e;
            }
        }
        let key: Monomial = map.into_iter().collect();
        let mut terms = BTreeMap::new();
        terms.insert(key, c);
        Poly { terms }
    }

    /// True if identically zero.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of stored terms.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree (0 for constants and for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().map(|&(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    /// Iterate `(monomial, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &S)> {
        self.terms.iter()
    }

    fn insert_add(&mut self, key: Monomial, c: S) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(cur) => {
                *cur += c;
                if cur.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    /// Sum.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.insert_add(k.clone(), c.clone());
        }
        out
    }

    /// Difference.
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Negation.
    pub fn neg(&self) -> Self {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.clone(), -c.clone()))
                .collect(),
        }
    }

    /// Scalar multiple.
    pub fn scale(&self, s: &S) -> Self {
        if s.is_zero() {
            return Self::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.clone(), c.clone() * s.clone()))
                .collect(),
        }
    }

    /// Product.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let mut map: BTreeMap<usize, u32> = ka.iter().copied().collect();
                for &(v, e) in kb {
                    *map.entry(v).or_insert(0) += e;
                }
                out.insert_add(map.into_iter().collect(), ca.clone() * cb.clone());
            }
        }
        out
    }

    /// Power by repeated multiplication.
    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative `∂/∂X_i` (exact).
    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero();
        for (k, c) in &self.terms {
            if let Some(pos) = k.iter().position(|&(v, _)| v == i) {
                let e = k[pos].1;
                let mut key = k.clone();
                if e == 1 {
                    key.remove(pos);
                } else {
                    key[pos].1 = e - 1;
                }
                out.insert_add(key, c.clone() * S::from_int(e as i64));
            }
        }
        out
    }

    /// Evaluate at the point `xs` (variables beyond `xs.len()` are an error in
    /// debug builds; callers size `xs` to the variable universe).
    pub fn eval(&self, xs: &[S]) -> S {
        let mut acc = S::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for &(v, e) in k {
                debug_assert!(v < xs.len(), "variable X_{v} out of range");
                for _ in 0..e {
                    t = t * xs[v].clone();
                }
            }
            acc += t;
        }
        acc
    }

    /// Largest variable index appearing, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.terms
            .keys()
            .flat_map(|m| m.iter().map(|&(v, _)| v))
            .max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigRational;

    #[test]
    fn arithmetic_and_eval() {
        // p = (X0 + 2)(X1 − X0) = X0X1 − X0² + 2X1 − 2X0
        let p = Poly::<f64>::var(0)
            .add(&Poly::constant(2.0))
            .mul(&Poly::var(1).sub(&Poly::var(0)));
        assert_eq!(p.num_terms(), 4);
        assert_eq!(p.degree(), 2);
        let v = p.eval(&[3.0, 5.0]);
        assert!((v - (3.0 + 2.0) * (5.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn cancellation_prunes_terms() {
        let p = Poly::<f64>::var(0).sub(&Poly::var(0));
        assert!(p.is_zero());
        let q = Poly::<f64>::var(0).pow(3).sub(&Poly::var(0).pow(3));
        assert!(q.is_zero());
    }

    #[test]
    fn partial_derivative_is_exact() {
        // ∂₀ (X0³X1 + 4X0) = 3X0²X1 + 4
        let p = Poly::<f64>::var(0)
            .pow(3)
            .mul(&Poly::var(1))
            .add(&Poly::var(0).scale(&4.0));
        let d = p.partial(0);
        let want = Poly::<f64>::var(0)
            .pow(2)
            .mul(&Poly::var(1))
            .scale(&3.0)
            .add(&Poly::constant(4.0));
        assert_eq!(d, want);
        // ∂₁ of the same: X0³
        assert_eq!(p.partial(1), Poly::var(0).pow(3));
        // second derivatives commute
        assert_eq!(p.partial(0).partial(1), p.partial(1).partial(0));
    }

    #[test]
    fn exact_rational_mode() {
        let half = BigRational::new(1.into(), 2.into());
        let p = Poly::<BigRational>::var(0).scale(&half).pow(2);
        // (X/2)² at X = 3 → 9/4
        let v = p.eval(&[BigRational::from_int(3)]);
        assert_eq!(v, BigRational::new(9.into(), 4.into()));
    }
}
