//! Generalized Hermite polynomials `H_N(X, C)` with explicit variance
//! parameter, defined by the recursion
//!
//! `H_0 = 1`, `H_1(X,C) = X`, `H_N = X·H_{N−1} − (N−1)·C·H_{N−2}`,
//!
//! so that `H_N(X, C)` is the Wick power of a Gaussian with variance `C`.
//! Everything is generic over a ring scalar: `f64` for numerics and
//! `BigRational` for exact identity checks.
//!
//! The binomial identity implemented (and tested against symbolic expansion)
//! is `H_N(X+Y, c+d) = Σ_n (N choose n) H_{N−n}(X,c) H_n(Y,d)`. A published
//! variant prints the summand's second factor with a fixed order `N`; index
//! consistency at `N = 2` forces the order to be the summation index `n`, and
//! that is what this module implements.

use crate::scalar::Ring;

/// `H_N(X, C)` by the three-term recursion.
pub fn hermite<S: Ring>(n: usize, x: &S, c: &S) -> S {
    if n == 0 {
        return S::one();
    }
    let mut prev = S::one();
    let mut cur = x.clone();
    for k in 2..=n {
        let next =
            x.clone() * cur.clone() - S::from_int((k - 1) as i64) * c.clone() * prev.clone();
        prev = cur;
        cur = next;
    }
    cur
}

/// Closed-form expansion `H_N(X,C) = Σ_k (−1)^k N!/(k!(N−2k)!2^k) C^k X^{N−2k}`
/// — an independent oracle for the recursion (valid for `N ≤ 20` where the
/// integer coefficients fit `i64`).
pub fn hermite_closed_form<S: Ring>(n: usize, x: &S, c: &S) -> S {
    assert!(n <= 20, "closed-form coefficients overflow beyond N = 20");
    let mut acc = S::zero();
    for k in 0..=(n / 2) {
        // N! / (k! (N−2k)! 2^k), computed exactly in integers.
        let mut num: i128 = 1;
        for j in 1..=n {
            num *= j as i128;
        }
        let mut den: i128 = 1;
        for j in 1..=k {
            den *= j as i128;
        }
        for j in 1..=(n - 2 * k) {
            den *= j as i128;
        }
        den *= 1i128 << k;
        let coeff = num / den;
        debug_assert_eq!(num % den, 0);
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let mut term = S::from_int(sign * i64::try_from(coeff).expect("fits i64"));
        for _ in 0..k {
            term = term * c.clone();
        }
        for _ in 0..(n - 2 * k) {
            term = term * x.clone();
        }
        acc += term;
    }
    acc
}

/// Binomial (two-variable splitting) identity: returns
/// `(H_N(X+Y, c+d), Σ_n (N choose n) H_{N−n}(X,c) H_n(Y,d))` for testing.
pub fn hermite_binomial_check<S: Ring>(n: usize, x: &S, y: &S, c: &S, d: &S) -> (S, S) {
    let lhs = hermite(n, &(x.clone() + y.clone()), &(c.clone() + d.clone()));
    let mut rhs = S::zero();
    for k in 0..=n {
        rhs += S::from_int(binomial(n, k)) * hermite(n - k, x, c) * hermite(k, y, d);
    }
    (lhs, rhs)
}

/// Binomial coefficient as `i64` (valid through `n = 20` everywhere we use it).
pub fn binomial(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let mut acc: i128 = 1;
    for j in 0..k.min(n - k) {
        acc = acc * (n - j) as i128 / (j + 1) as i128;
    }
    i64::try_from(acc).expect("binomial fits i64")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_order_values() {
        // H₂(3,2) = 9 − 2 = 7; H₃(2,1) = 8 − 6 = 2; H₄(2,1) = 16 − 24 + 3 = −5.
        assert_eq!(hermite(2, &3.0, &2.0), 7.0);
        assert_eq!(hermite(3, &2.0, &1.0), 2.0);
        assert_eq!(hermite(4, &2.0, &1.0), -5.0);
    }

    #[test]
    fn recursion_matches_closed_form_exactly_in_rationals() {
        for n in 0..=8 {
            for x in -3i64..=3 {
                for c in -2i64..=2 {
                    let xr = BigRational::from_int(x);
                    let cr = BigRational::from_int(c);
                    assert_eq!(
                        hermite(n, &xr, &cr),
                        hermite_closed_form(n, &xr, &cr),
                        "N={n} X={x} C={c}"
                    );
                }
            }
        }
    }

    #[test]
    fn binomial_identity_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.gen_range(0..=6usize);
            let x: f64 = rng.gen_range(-3.0..3.0);
            let y: f64 = rng.gen_range(-3.0..3.0);
            let c: f64 = rng.gen_range(-3.0..3.0);
            let d: f64 = rng.gen_range(-3.0..3.0);
            let (lhs, rhs) = hermite_binomial_check(n, &x, &y, &c, &d);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "N={n}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn binomial_identity_degenerate_edges() {
        // Y = 0, d = 0 collapses the sum to H_N(X,c).
        let (lhs, rhs) = hermite_binomial_check(5, &1.7f64, &0.0, &0.9, &0.0);
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((lhs - hermite(5, &1.7, &0.9)).abs() < 1e-12);
    }

    #[test]
    fn variance_zero_reduces_to_plain_powers() {
        for n in 0..8usize {
            let v = hermite(n, &1.3f64, &0.0);
            assert!((v - 1.3f64.powi(n as i32)).abs() < 1e-12);
        }
    }
}
