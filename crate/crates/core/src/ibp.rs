//! Gaussian integration-by-parts expansions.
//!
//! For jointly centered Gaussian `(X₁,…,X_n, Z₁,…,Z_M)` and polynomial `F`,
//! expectations of the form `E[F(X)·Π(Z-products)]` expand into a sum over
//! even subsets `J ⊆ {1,…,M}`, pairings of `J` in a class determined by the
//! product structure, and assignments `k: J^c → {1,…,n}`:
//!
//! ```text
//! Σ_J Σ_{P ∈ class(J)} Π_{{i,j}∈P} E[Z_iZ_j] ·
//!     Σ_k E[(Π_{i∈J^c} ∂_{k(i)}) F] · Π_{i∈J^c} E[Z_i X_{k(i)}]
//! ```
//!
//! Three product structures are supported: the plain product `Z₁···Z_M`
//! (all pairings), centered pair products `Π(Z_{2i−1}Z_{2i} − E[·])`
//! (consecutive pairs excluded), and Wick blocks `Π(Z_{Ni+1}⋄···⋄Z_{Ni+N})`
//! (intra-block pairs excluded). For the block variant the source material
//! states the pairing class in two inequivalent ways — with and without an
//! extra consecutive-pair exclusion — so the convention is an explicit
//! parameter; the expansion is an identity only for the block-only reading
//! (see tests), which is the default.
//!
//! The left-hand side is available both exactly (symbolic expansion +
//! Isserlis) and by Monte Carlo (joint sampling through a Cholesky factor).

use crate::error::{Error, Result};
use crate::pairings::{enumerate_pairings, PairingClass};
use crate::poly::Poly;
use crate::scalar::Ring;
use crate::wick::{gaussian_expectation, wick_poly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// Joint covariance of `(X₁,…,X_{n_x}, Z₁,…,Z_{n_z})`, row-major symmetric.
#[derive(Debug, Clone)]
pub struct JointCovariance<S> {
    n_x: usize,
    n_z: usize,
    entries: Vec<S>,
}

impl<S: Ring> JointCovariance<S> {
    /// Build from a row-major `(n_x+n_z)²` symmetric matrix.
    pub fn new(n_x: usize, n_z: usize, entries: Vec<S>) -> Result<Self> {
        let d = n_x + n_z;
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "covariance needs {} entries for dimension {d}, got {}",
                d * d,
                entries.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if entries[i * d + j] != entries[j * d + i] {
                    return Err(Error::NotPsd(format!(
                        "asymmetric entries at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n_x, n_z, entries })
    }

    /// Number of `X` variables.
    pub fn num_x(&self) -> usize {
        self.n_x
    }

    /// Number of `Z` variables.
    pub fn num_z(&self) -> usize {
        self.n_z
    }

    /// Full dimension `n_x + n_z`.
    pub fn dim(&self) -> usize {
        self.n_x + self.n_z
    }

    /// Entry of the joint covariance (joint indices: `X` first, then `Z`).
    pub fn at(&self, i: usize, j: usize) -> S {
        self.entries[i * self.dim() + j].clone()
    }

    /// `E[X_i X_j]` (0-based).
    pub fn x_x(&self, i: usize, j: usize) -> S {
        self.at(i, j)
    }

    /// `E[X_i Z_k]` (0-based).
    pub fn x_z(&self, i: usize, k: usize) -> S {
        self.at(i, self.n_x + k)
    }

    /// `E[Z_k Z_l]` (0-based).
    pub fn z_z(&self, k: usize, l: usize) -> S {
        self.at(self.n_x + k, self.n_x + l)
    }
}

impl JointCovariance<f64> {
    /// A random positive-definite joint covariance: `G·Gᵀ/d + ½·I` for a
    /// standard Gaussian matrix `G`, mildly conditioned for Monte Carlo use.
    pub fn random_psd(n_x: usize, n_z: usize, seed: u64) -> Self {
        let d = n_x + n_z;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..d * d).map(|_| rng.sample(StandardNormal)).collect();
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += g[i * d + k] * g[j * d + k];
                }
                entries[i * d + j] = s / d as f64 + if i == j { 0.5 } else { 0.0 };
            }
        }
        Self { n_x, n_z, entries }
    }
}

/// Which product of `Z` variables multiplies `F` on the left-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionVariant {
    /// `Z₁···Z_M`: all pairings admitted.
    Plain {
        /// Number of plain factors `M`.
        factors: usize,
    },
    /// `Π_{i=1}^{m} (Z_{2i−1}Z_{2i} − E[Z_{2i−1}Z_{2i}])`: consecutive pairs
    /// excluded.
    WickPairs {
        /// Number of centered pair factors `m`.
        pairs: usize,
    },
    /// `Π_{i=0}^{m−1} (Z_{Ni+1} ⋄ ··· ⋄ Z_{Ni+N})`: intra-block pairs
    /// excluded; `parity_exclusion` additionally removes consecutive pairs
    /// (the stricter textual reading, which breaks the identity for odd `N`).
    WickBlocks {
        /// Block size `N`.
        block_size: usize,
        /// Number of blocks `m`.
        blocks: usize,
        /// Also exclude `{2i−1, 2i}` pairs.
        parity_exclusion: bool,
    },
}

impl ExpansionVariant {
    /// Total number of `Z` variables consumed.
    pub fn z_count(&self) -> usize {
        match *self {
            ExpansionVariant::Plain { factors } => factors,
            ExpansionVariant::WickPairs { pairs } => 2 * pairs,
            ExpansionVariant::WickBlocks {
                block_size, blocks, ..
            } => block_size * blocks,
        }
    }

    fn pairing_class(&self) -> PairingClass {
        match *self {
            ExpansionVariant::Plain { .. } => PairingClass::All,
            ExpansionVariant::WickPairs { .. } => PairingClass::NoConsecutivePairs,
            ExpansionVariant::WickBlocks {
                block_size,
                parity_exclusion,
                ..
            } => {
                if parity_exclusion {
                    PairingClass::BlockRestricted { block_size }
                } else {
                    PairingClass::BlockRestrictedNoParity { block_size }
                }
            }
        }
    }
}

fn check_shapes<S: Ring>(
    f: &Poly<S>,
    cov: &JointCovariance<S>,
    variant: ExpansionVariant,
) -> Result<()> {
    if cov.num_z() != variant.z_count() {
        return Err(Error::DimensionMismatch(format!(
            "variant consumes {} Z variables, covariance has {}",
            variant.z_count(),
            cov.num_z()
        )));
    }
    if let Some(v) = f.max_var() {
        if v >= cov.num_x() {
            return Err(Error::DimensionMismatch(format!(
                "polynomial references X_{}, covariance has only {} X variables",
                v + 1,
                cov.num_x()
            )));
        }
    }
    Ok(())
}

/// Exact right-hand side of the integration-by-parts expansion.
pub fn ibp_rhs<S: Ring>(
    f: &Poly<S>,
    cov: &JointCovariance<S>,
    variant: ExpansionVariant,
) -> Result<S> {
    check_shapes(f, cov, variant)?;
    let m = variant.z_count();
    let n_x = cov.num_x();
    let class = variant.pairing_class();
    let x_cov = |i: usize, j: usize| cov.x_x(i, j);
    // Cache E[(Π ∂_{k})F] by sorted derivative multiset.
    let mut deriv_cache: BTreeMap<Vec<usize>, S> = BTreeMap::new();
    let mut total = S::zero();

    for j_mask in 0u32..(1u32 << m) {
        if (j_mask.count_ones() as usize) % 2 != 0 {
            continue;
        }
        let j_labels: Vec<usize> = (1..=m).filter(|&i| j_mask >> (i - 1) & 1 == 1).collect();
        let complement: Vec<usize> = (1..=m).filter(|&i| j_mask >> (i - 1) & 1 == 0).collect();

        let mut pairing_sum = S::zero();
        for p in enumerate_pairings(&j_labels, class) {
            let mut prod = S::one();
            for &(a, b) in p.pairs() {
                prod = prod * cov.z_z(a - 1, b - 1);
            }
            pairing_sum += prod;
        }
        if pairing_sum.is_zero() {
            continue;
        }

        // Σ over assignments k: complement → {0..n_x−1}.
        let mut inner = S::zero();
        let r = complement.len();
        let mut assignment = vec![0usize; r];
        loop {
            let mut key: Vec<usize> = assignment.clone();
            key.sort_unstable();
            let expectation = deriv_cache
                .entry(key)
                .or_insert_with_key(|key| {
                    let mut d = f.clone();
                    for &v in key {
                        d = d.partial(v);
                    }
                    gaussian_expectation(&d, &x_cov)
                })
                .clone();
            if !expectation.is_zero() {
                let mut weight = expectation;
                for (slot, &z_label) in complement.iter().enumerate() {
                    weight = weight * cov.x_z(assignment[slot], z_label - 1);
                }
                inner += weight;
            }
            // Mixed-radix increment.
            let mut carry = true;
            for digit in assignment.iter_mut() {
                *digit += 1;
                if *digit < n_x {
                    carry = false;
                    break;
                }
                *digit = 0;
            }
            if carry || r == 0 {
                break;
            }
        }

        total += pairing_sum * inner;
    }
    Ok(total)
}

/// The left-hand side `F(X)·Π(Z-products)` as one polynomial in the joint
/// variables (`X_i ↦ i`, `Z_k ↦ n_x + k`).
pub fn lhs_polynomial<S: Ring>(
    f: &Poly<S>,
    cov: &JointCovariance<S>,
    variant: ExpansionVariant,
) -> Result<Poly<S>> {
    check_shapes(f, cov, variant)?;
    let n_x = cov.num_x();
    let mut p = f.clone();
    match variant {
        ExpansionVariant::Plain { factors } => {
            for k in 0..factors {
                p = p.mul(&Poly::var(n_x + k));
            }
        }
        ExpansionVariant::WickPairs { pairs } => {
            for i in 0..pairs {
                let a = 2 * i;
                let b = 2 * i + 1;
                let centered = Poly::var(n_x + a)
                    .mul(&Poly::var(n_x + b))
                    .sub(&Poly::constant(cov.z_z(a, b)));
                p = p.mul(&centered);
            }
        }
        ExpansionVariant::WickBlocks {
            block_size, blocks, ..
        } => {
            for i in 0..blocks {
                let vars: Vec<usize> =
                    (0..block_size).map(|r| n_x + block_size * i + r).collect();
                let zcov =
                    |a: usize, b: usize| cov.z_z(vars[a] - n_x, vars[b] - n_x);
                p = p.mul(&wick_poly(&vars, &zcov));
            }
        }
    }
    Ok(p)
}

/// Exact left-hand side via symbolic expansion and Isserlis moments.
pub fn ibp_lhs_exact<S: Ring>(
    f: &Poly<S>,
    cov: &JointCovariance<S>,
    variant: ExpansionVariant,
) -> Result<S> {
    let p = lhs_polynomial(f, cov, variant)?;
    let joint = |i: usize, j: usize| cov.at(i, j);
    Ok(gaussian_expectation(&p, &joint))
}

/// Lower Cholesky factor of a row-major symmetric `dim × dim` matrix.
/// Fails with [`Error::NotPsd`] if a pivot drops below `−1e−10` (tiny
/// negative pivots from rounding are clamped to zero).
pub fn cholesky_lower(matrix: &[f64], dim: usize) -> Result<Vec<f64>> {
    assert_eq!(matrix.len(), dim * dim);
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = matrix[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s < -1e-10 {
                    return Err(Error::NotPsd(format!(
                        "negative Cholesky pivot {s:.3e} at index {i}"
                    )));
                }
                l[i * dim + i] = s.max(0.0).sqrt();
            } else {
                let d = l[j * dim + j];
                l[i * dim + j] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
    }
    Ok(l)
}

/// Monte-Carlo left-hand side: joint Gaussian sampling through the Cholesky
/// factor, returning `(mean, standard error)` over `replicas` evaluations of
/// the expanded product polynomial.
pub fn ibp_lhs_mc(
    f: &Poly<f64>,
    cov: &JointCovariance<f64>,
    variant: ExpansionVariant,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = lhs_polynomial(f, cov, variant)?;
    let d = cov.dim();
    let l = cholesky_lower(&cov.entries, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0f64; d];
    let mut v = vec![0.0f64; d];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..replicas {
        for gi in g.iter_mut() {
            *gi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l[i * d + k] * g[k];
            }
            v[i] = acc;
        }
        let val = p.eval(&v);
        sum += val;
        sumsq += val * val;
    }
    let mean = sum / replicas as f64;
    let var = (sumsq / replicas as f64 - mean * mean).max(0.0);
    Ok((mean, (var / replicas as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, Zero as _};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// Exact PSD covariance `B·Bᵀ` from a rational matrix `B`.
    fn rational_psd(n_x: usize, n_z: usize, seed: u64) -> JointCovariance<BigRational> {
        let d = n_x + n_z;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<BigRational> = (0..d * d)
            .map(|_| rat(rng.gen_range(-6..=6), rng.gen_range(1..=4)))
            .collect();
        let mut entries = vec![BigRational::from_int(0); d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = BigRational::from_int(0);
                for k in 0..d {
                    s += b[i * d + k].clone() * b[j * d + k].clone();
                }
                entries[i * d + j] = s;
            }
        }
        JointCovariance::new(n_x, n_z, entries).unwrap()
    }

    fn sample_f(n_x: usize) -> Vec<Poly<BigRational>> {
        let x1 = Poly::<BigRational>::var(0);
        let mut fs = vec![
            Poly::constant(rat(1, 1)),
            x1.clone(),
            x1.pow(2),
            x1.pow(4).add(&x1.scale(&rat(-3, 2))),
        ];
        if n_x >= 2 {
            let x2 = Poly::<BigRational>::var(1);
            fs.push(x1.mul(&x2.pow(2)).add(&x2));
        }
        fs
    }

    #[test]
    fn plain_two_factors_with_constant_f_gives_the_covariance() {
        let cov = rational_psd(1, 2, 7);
        let f = Poly::constant(rat(1, 1));
        let rhs = ibp_rhs(&f, &cov, ExpansionVariant::Plain { factors: 2 }).unwrap();
        assert_eq!(rhs, cov.z_z(0, 1));
    }

    #[test]
    fn expansion_is_an_exact_identity_for_all_variants() {
        // LHS (symbolic + Isserlis) equals RHS (pairing expansion) exactly
        // in rational arithmetic, for the block-only convention.
        let mut variants = vec![
            ExpansionVariant::Plain { factors: 1 },
            ExpansionVariant::Plain { factors: 2 },
            ExpansionVariant::Plain { factors: 3 },
            ExpansionVariant::WickPairs { pairs: 1 },
            ExpansionVariant::WickPairs { pairs: 2 },
        ];
        for block_size in 1..=3 {
            for blocks in 1..=2 {
                variants.push(ExpansionVariant::WickBlocks {
                    block_size,
                    blocks,
                    parity_exclusion: false,
                });
            }
        }
        for (vi, &variant) in variants.iter().enumerate() {
            for n_x in [1usize, 2] {
                let cov = rational_psd(n_x, variant.z_count(), 100 + vi as u64);
                for f in sample_f(n_x) {
                    let lhs = ibp_lhs_exact(&f, &cov, variant).unwrap();
                    let rhs = ibp_rhs(&f, &cov, variant).unwrap();
                    assert_eq!(lhs, rhs, "variant {variant:?}, n_x={n_x}");
                }
            }
        }
    }

    #[test]
    fn parity_exclusion_breaks_the_identity_for_odd_blocks() {
        // With blocks of size 3 the stricter class drops the straddling pair
        // {3,4}, so the expansion no longer reproduces the expectation when
        // E[Z₃Z₄] ≠ 0.
        let cov = rational_psd(1, 6, 11);
        assert!(!cov.z_z(2, 3).is_zero(), "test needs E[Z₃Z₄] ≠ 0");
        let f = Poly::<BigRational>::var(0).pow(2);
        let strict = ExpansionVariant::WickBlocks {
            block_size: 3,
            blocks: 2,
            parity_exclusion: true,
        };
        let lax = ExpansionVariant::WickBlocks {
            block_size: 3,
            blocks: 2,
            parity_exclusion: false,
        };
        let lhs = ibp_lhs_exact(&f, &cov, lax).unwrap();
        assert_eq!(lhs, ibp_rhs(&f, &cov, lax).unwrap());
        assert_ne!(lhs, ibp_rhs(&f, &cov, strict).unwrap());
    }

    #[test]
    fn zero_cross_covariance_collapses_centered_variants_to_zero() {
        // X independent of Z, Z-blocks independent of each other: every
        // centered product has mean zero and the expansion vanishes exactly.
        let n_x = 2;
        for (variant, z) in [
            (ExpansionVariant::WickPairs { pairs: 2 }, 4usize),
            (
                ExpansionVariant::WickBlocks {
                    block_size: 3,
                    blocks: 2,
                    parity_exclusion: false,
                },
                6,
            ),
        ] {
            let d = n_x + z;
            let mut entries = vec![BigRational::from_int(0); d * d];
            // X block: identity. Z blocks: dense SPD within each block only.
            for i in 0..n_x {
                entries[i * d + i] = rat(1, 1);
            }
            let bs = match variant {
                ExpansionVariant::WickBlocks { block_size, .. } => block_size,
                _ => 2,
            };
            for k in 0..z {
                for l in 0..z {
                    if k / bs == l / bs {
                        let v = if k == l { rat(2, 1) } else { rat(1, 3) };
                        entries[(n_x + k) * d + (n_x + l)] = v;
                    }
                }
            }
            let cov = JointCovariance::new(n_x, z, entries).unwrap();
            let f = Poly::<BigRational>::var(0)
                .pow(3)
                .add(&Poly::constant(rat(5, 2)));
            assert_eq!(ibp_rhs(&f, &cov, variant).unwrap(), BigRational::from_int(0));
            assert_eq!(
                ibp_lhs_exact(&f, &cov, variant).unwrap(),
                BigRational::from_int(0)
            );
        }
    }

    #[test]
    fn monte_carlo_lhs_agrees_with_exact_rhs() {
        let f = {
            let x1 = Poly::<f64>::var(0);
            let x2 = Poly::<f64>::var(1);
            x1.pow(2).mul(&x2).add(&x1).add(&Poly::constant(0.5))
        };
        for (i, variant) in [
            ExpansionVariant::Plain { factors: 2 },
            ExpansionVariant::WickPairs { pairs: 1 },
            ExpansionVariant::WickBlocks {
                block_size: 2,
                blocks: 1,
                parity_exclusion: false,
            },
        ]
        .into_iter()
        .enumerate()
        {
            let cov = JointCovariance::random_psd(2, variant.z_count(), 900 + i as u64);
            let rhs = ibp_rhs(&f, &cov, variant).unwrap();
            let (mc, se) = ibp_lhs_mc(&f, &cov, variant, 60_000, 31 + i as u64).unwrap();
            assert!(
                (mc - rhs).abs() <= 4.0 * se.max(1e-12),
                "{variant:?}: {mc} vs {rhs} (se {se})"
            );
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrices() {
        let m = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, −1
        assert!(matches!(cholesky_lower(&m, 2), Err(Error::NotPsd(_))));
        let ok = cholesky_lower(&[4.0, 2.0, 2.0, 5.0], 2).unwrap();
        assert!((ok[0] - 2.0).abs() < 1e-12);
        assert!((ok[2] - 1.0).abs() < 1e-12);
        assert!((ok[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors_are_reported() {
        let cov = JointCovariance::random_psd(1, 2, 1);
        let f = Poly::<f64>::var(3);
        assert!(matches!(
            ibp_rhs(&f, &cov, ExpansionVariant::Plain { factors: 2 }),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            ibp_rhs(&Poly::constant(1.0), &cov, ExpansionVariant::Plain { factors: 3 }),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
