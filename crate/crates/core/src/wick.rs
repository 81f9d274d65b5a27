//! Wick products of jointly Gaussian variables and their exact identities.
//!
//! The Wick product is defined recursively:
//! `⋄(Z₁) = Z₁`,
//! `⋄(Z₁,…,Z_N) = Z_N·⋄(Z₁,…,Z_{N−1}) − Σ_ℓ E[Z_N Z_ℓ]·⋄(Z₁,…,Ẑ_ℓ,…,Z_{N−1})`,
//! evaluated here with memoization over index subsets (bitmasks), so the cost
//! is `O(2^N·N)` and the result is permutation invariant.
//!
//! Also provided: Isserlis moments (sum over pairings of covariance products),
//! Gaussian expectations of sparse polynomials, a Monte-Carlo chaos
//! orthogonality probe, and the pathwise kernel-smearing identity
//! `H_N(Σ_y K_y ξ_y, Var) = Σ_{y₁…y_N} ΠK·(ξ_{y₁}⋄···⋄ξ_{y_N})`.

use crate::grid::{Field2D, Grid2D};
use crate::hermite::hermite;
use crate::noise::sample_white_noise;
use crate::poly::Poly;
use crate::scalar::{Real, Ring};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;

/// Wick product of realized values with the given covariance, memoized over
/// index subsets. `cov(i, j) = E[Z_i Z_j]` refers to positions in `values`.
pub fn wick_product<S: Ring>(values: &[S], cov: &impl Fn(usize, usize) -> S) -> S {
    assert!(values.len() <= 24, "Wick recursion capped at 24 factors");
    let mut memo: HashMap<u32, S> = HashMap::new();
    wick_mask(((1u32 << values.len()) - 1) as u32, values, cov, &mut memo)
}

fn wick_mask<S: Ring>(
    mask: u32,
    values: &[S],
    cov: &impl Fn(usize, usize) -> S,
    memo: &mut HashMap<u32, S>,
) -> S {
    if mask == 0 {
        return S::one();
    }
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    let last = 31 - mask.leading_zeros() as usize;
    let rest = mask & !(1 << last);
    let mut acc = values[last].clone() * wick_mask(rest, values, cov, memo);
    let mut r = rest;
    while r != 0 {
        let l = r.trailing_zeros() as usize;
        r &= !(1 << l);
        acc += -S::one() * cov(last, l) * wick_mask(rest & !(1 << l), values, cov, memo);
    }
    memo.insert(mask, acc.clone());
    acc
}

/// Symbolic Wick product `⋄(X_{v₁},…,X_{v_N})` as a polynomial in the listed
/// (distinct) variables, with scalar covariances `cov(i,j)` between positions.
pub fn wick_poly<S: Ring>(vars: &[usize], cov: &impl Fn(usize, usize) -> S) -> Poly<S> {
    let values: Vec<Poly<S>> = vars.iter().map(|&v| Poly::var(v)).collect();
    assert!(values.len() <= 24);
    let mut memo: HashMap<u32, Poly<S>> = HashMap::new();
    wick_mask_poly((1u32 << values.len()) - 1, &values, cov, &mut memo)
}

fn wick_mask_poly<S: Ring>(
    mask: u32,
    values: &[Poly<S>],
    cov: &impl Fn(usize, usize) -> S,
    memo: &mut HashMap<u32, Poly<S>>,
) -> Poly<S> {
    if mask == 0 {
        return Poly::one();
    }
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    let last = 31 - mask.leading_zeros() as usize;
    let rest = mask & !(1 << last);
    let mut acc = values[last].mul(&wick_mask_poly(rest, values, cov, memo));
    let mut r = rest;
    while r != 0 {
        let l = r.trailing_zeros() as usize;
        r &= !(1 << l);
        let sub = wick_mask_poly(rest & !(1 << l), values, cov, memo);
        acc = acc.sub(&sub.scale(&cov(last, l)));
    }
    memo.insert(mask, acc.clone());
    acc
}

/// Isserlis moment `E[Z_{i₁}···Z_{i_m}]` of a centered Gaussian family: the
/// sum over perfect matchings of positions of products of covariances.
/// Odd `m` gives 0. Indices may repeat (`cov` is queried on index *labels*).
pub fn isserlis_moment<S: Ring>(indices: &[usize], cov: &impl Fn(usize, usize) -> S) -> S {
    assert!(indices.len() <= 24, "Isserlis recursion capped at 24 factors");
    if indices.len() % 2 != 0 {
        return S::zero();
    }
    let mut memo: HashMap<u32, S> = HashMap::new();
    isserlis_mask((1u32 << indices.len()) - 1, indices, cov, &mut memo)
}

fn isserlis_mask<S: Ring>(
    mask: u32,
    indices: &[usize],
    cov: &impl Fn(usize, usize) -> S,
    memo: &mut HashMap<u32, S>,
) -> S {
    if mask == 0 {
        return S::one();
    }
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    let first = mask.trailing_zeros() as usize;
    let rest = mask & !(1 << first);
    let mut acc = S::zero();
    let mut r = rest;
    while r != 0 {
        let q = r.trailing_zeros() as usize;
        r &= !(1 << q);
        acc += cov(indices[first], indices[q])
            * isserlis_mask(rest & !(1 << q), indices, cov, memo);
    }
    memo.insert(mask, acc.clone());
    acc
}

/// Expectation of a sparse polynomial in centered jointly Gaussian variables:
/// term-by-term Isserlis on the expanded monomial multisets.
pub fn gaussian_expectation<S: Ring>(p: &Poly<S>, cov: &impl Fn(usize, usize) -> S) -> S {
    let mut acc = S::zero();
    for (mono, coeff) in p.terms() {
        let mut idx = Vec::new();
        for &(v, e) in mono {
            for _ in 0..e {
                idx.push(v);
            }
        }
        acc += coeff.clone() * isserlis_moment(&idx, cov);
    }
    acc
}

/// Monte-Carlo estimate of `E[H_N(g,1)·H_M(g,1)]` for a standard Gaussian:
/// returns `(estimate, standard error)`. Chaos orthogonality predicts
/// `δ_{NM}·N!`.
pub fn wick_orthogonality_mc(n: usize, m: usize, replicas: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..replicas {
        let g: f64 = rng.sample(StandardNormal);
        let v = hermite(n, &g, &1.0) * hermite(m, &g, &1.0);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / replicas as f64;
    let var = (sumsq / replicas as f64 - mean * mean).max(0.0);
    (mean, (var / replicas as f64).sqrt())
}

/// Pathwise kernel-smearing identity check on a small grid: returns
/// `(H_N(X, C), Σ_{tuples} ΠK·⋄ξ)` where `X = Σ_y K(y)ξ(y)·cell` and
/// `C = Var X` (exact discrete covariances). The two sides agree to rounding
/// for every realization; `N ≤ 3` keeps the tuple sum affordable.
pub fn wick_hermite_identity_check<F: Real + Ring>(
    n: usize,
    grid: Grid2D,
    kernel: &Field2D<F>,
    seed: u64,
) -> (F, F)
where
    StandardNormal: Distribution<F>,
{
    assert!(n <= 3, "tuple sum is O(points^N); capped at N = 3");
    let xi = sample_white_noise::<F>(grid, seed);
    let cell = F::from_f64_lit(grid.cell_volume());
    let inv_cell = F::one() / cell;
    let npts = grid.len();
    let kv = kernel.values();
    let xv = xi.values();

    let mut x = F::zero();
    let mut c = F::zero();
    for i in 0..npts {
        x += kv[i] * xv[i] * cell;
        c += kv[i] * kv[i] * cell;
    }
    let lhs = hermite(n, &x, &c);

    // ⋄(ξ_{y₁},…,ξ_{y_N}) with cov(y, y′) = δ_{yy′}/cell, expanded per tuple.
    let rhs = match n {
        0 => F::one(),
        1 => x,
        2 => {
            let mut acc = F::zero();
            for a in 0..npts {
                for b in 0..npts {
                    let wick = xv[a] * xv[b] - if a == b { inv_cell } else { F::zero() };
                    acc += kv[a] * kv[b] * wick * cell * cell;
                }
            }
            acc
        }
        3 => {
            let mut acc = F::zero();
            for a in 0..npts {
                let ka = kv[a] * cell;
                for b in 0..npts {
                    let kb = kv[b] * cell;
                    let dab = a == b;
                    for cc in 0..npts {
                        let kc = kv[cc] * cell;
                        let mut wick = xv[a] * xv[b] * xv[cc];
                        if dab {
                            wick -= xv[cc] * inv_cell;
                        }
                        if a == cc {
                            wick -= xv[b] * inv_cell;
                        }
                        if b == cc {
                            wick -= xv[a] * inv_cell;
                        }
                        acc += ka * kb * kc * wick;
                    }
                }
            }
            acc
        }
        _ => unreachable!(),
    };
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigRational;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn wick_low_orders() {
        // N=1 → Z₁; N=2 → Z₁Z₂ − C₁₂.
        let cov = |_: usize, _: usize| 0.25f64;
        assert_eq!(wick_product(&[1.5], &cov), 1.5);
        let v = wick_product(&[2.0, 3.0], &cov);
        assert!((v - (6.0 - 0.25)).abs() < 1e-15);
        // N=3, all covariances ρ, all values z → z³ − 3ρz.
        let z = 1.3f64;
        let rho = 0.4;
        let v = wick_product(&[z, z, z], &|_, _| rho);
        assert!((v - (z * z * z - 3.0 * rho * z)).abs() < 1e-12);
    }

    #[test]
    fn permutation_symmetry_is_exact_in_rationals() {
        let vals: Vec<BigRational> = [rat(3, 2), rat(-1, 3), rat(5, 7), rat(2, 5)].to_vec();
        let c = [
            [rat(1, 1), rat(1, 2), rat(1, 3), rat(1, 5)],
            [rat(1, 2), rat(1, 1), rat(1, 7), rat(2, 7)],
            [rat(1, 3), rat(1, 7), rat(1, 1), rat(3, 11)],
            [rat(1, 5), rat(2, 7), rat(3, 11), rat(1, 1)],
        ];
        let base = wick_product(&vals, &|i, j| c[i][j].clone());
        for perm in [[1usize, 0, 2, 3], [3, 2, 1, 0], [2, 0, 3, 1]] {
            let pv: Vec<BigRational> = perm.iter().map(|&i| vals[i].clone()).collect();
            let pc = |i: usize, j: usize| c[perm[i]][perm[j]].clone();
            assert_eq!(wick_product(&pv, &pc), base, "perm {perm:?}");
        }
    }

    #[test]
    fn differential_identity_in_each_argument() {
        // ∂/∂Z_ℓ ⋄(Z₁..Z₄) = ⋄(Z with ℓ removed), by central differences.
        let vals = [0.7f64, -1.2, 0.4, 1.9];
        let cmat = [
            [1.0, 0.3, 0.2, 0.1],
            [0.3, 1.0, 0.25, 0.15],
            [0.2, 0.25, 1.0, 0.05],
            [0.1, 0.15, 0.05, 1.0],
        ];
        let cov = |i: usize, j: usize| cmat[i][j];
        let h = 1e-4;
        for l in 0..4 {
            let mut up = vals;
            up[l] += h;
            let mut dn = vals;
            dn[l] -= h;
            let num = (wick_product(&up, &cov) - wick_product(&dn, &cov)) / (2.0 * h);
            let reduced: Vec<f64> = (0..4).filter(|&i| i != l).map(|i| vals[i]).collect();
            let rcov = |i: usize, j: usize| {
                let map: Vec<usize> = (0..4).filter(|&k| k != l).collect();
                cmat[map[i]][map[j]]
            };
            let want = wick_product(&reduced, &rcov);
            assert!((num - want).abs() < 1e-6, "l={l}: {num} vs {want}");
        }
    }

    #[test]
    fn isserlis_examples() {
        // E[g⁴] = 3 for unit Gaussian.
        let one = |_: usize, _: usize| 1.0f64;
        assert_eq!(isserlis_moment(&[0, 0, 0, 0], &one), 3.0);
        // Odd moments vanish.
        assert_eq!(isserlis_moment(&[0, 1, 2], &one), 0.0);
        // Four distinct: C₁₂C₃₄ + C₁₃C₂₄ + C₁₄C₂₃.
        let cm = [
            [1.0, 0.5, 0.25, 0.125],
            [0.5, 1.0, 0.4, 0.3],
            [0.25, 0.4, 1.0, 0.6],
            [0.125, 0.3, 0.6, 1.0],
        ];
        let cov = |i: usize, j: usize| cm[i][j];
        let want: f64 = 0.5 * 0.6 + 0.25 * 0.3 + 0.125 * 0.4;
        assert!((isserlis_moment(&[0, 1, 2, 3], &cov) - want).abs() < 1e-15);
    }

    #[test]
    fn symbolic_wick_expectation_orthogonality() {
        // E[⋄(Z₁,Z₂)·⋄(Z₃,Z₄)] = C₁₃C₂₄ + C₁₄C₂₃ (exact, rationals).
        let c = |i: usize, j: usize| -> BigRational {
            let m = [
                [rat(1, 1), rat(1, 2), rat(1, 3), rat(1, 5)],
                [rat(1, 2), rat(1, 1), rat(1, 7), rat(2, 7)],
                [rat(1, 3), rat(1, 7), rat(1, 1), rat(3, 11)],
                [rat(1, 5), rat(2, 7), rat(3, 11), rat(1, 1)],
            ];
            m[i][j].clone()
        };
        let p1 = wick_poly(&[0, 1], &c);
        let p2 = wick_poly(&[2, 3], &c);
        let e = gaussian_expectation(&p1.mul(&p2), &c);
        let want = c(0, 2) * c(1, 3) + c(0, 3) * c(1, 2);
        assert_eq!(e, want);
        // Wick products are mean zero.
        assert_eq!(gaussian_expectation(&p1, &c), BigRational::from_int(0));
    }

    #[test]
    fn hermite_power_expectation_exact() {
        // X Gaussian with variance C: E[H₂(X,C)²] = 2C².
        let cval = rat(3, 4);
        let cov = |_: usize, _: usize| cval.clone();
        let h2 = Poly::<BigRational>::var(0)
            .pow(2)
            .sub(&Poly::constant(cval.clone()));
        let e = gaussian_expectation(&h2.pow(2), &cov);
        assert_eq!(e, rat(2, 1) * cval.clone() * cval.clone());
    }

    #[test]
    fn orthogonality_mc_within_four_standard_errors() {
        for (n, m, want) in [(1, 2, 0.0), (2, 3, 0.0), (2, 2, 2.0), (3, 3, 6.0)] {
            let (est, se) = wick_orthogonality_mc(n, m, 100_000, 424242);
            assert!(
                (est - want).abs() <= 4.0 * se,
                "N={n} M={m}: {est} vs {want} (se {se})"
            );
        }
    }

    #[test]
    fn kernel_smearing_identity_is_pathwise_exact() {
        let grid = Grid2D::new(8).unwrap();
        // Smooth localized kernel.
        let kernel = Field2D::from_fn(grid, |x, y| {
            let dx = x - 0.5;
            let dy = y - 0.5;
            (-20.0 * (dx * dx + dy * dy)).exp()
        });
        for n in [0usize, 1, 2, 3] {
            for seed in [1u64, 2, 3] {
                let (lhs, rhs): (f64, f64) = wick_hermite_identity_check(n, grid, &kernel, seed);
                let scale = lhs.abs().max(1.0);
                assert!(
                    ((lhs - rhs) / scale).abs() < 1e-8,
                    "N={n} seed={seed}: {lhs} vs {rhs}"
                );
            }
        }
    }
}
