//! Seeded white-noise sampling on grids.
//!
//! Discrete white noise assigns each cell an independent centered Gaussian
//! with variance `1/cell_volume` (`1/spacing²` in space, `1/(dt·spacing²)` in
//! space-time), so that `(ξ, φ) = Σ ξ(x) φ(x) · cell_volume` has variance
//! `Σ φ(x)² · cell_volume → ‖φ‖²_{L²}`.
//!
//! Reproducibility: every sampler takes an explicit `u64` seed and uses a
//! counter-based stream cipher generator. Sub-streams (per time slice, per
//! replica) are derived by hashing `(master seed, index)`, so a single slice
//! of a space-time realization can be regenerated without sampling the rest.

use crate::grid::{Field2D, Grid2D, SpaceTimeField, SpaceTimeGrid};
use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Derive an independent child seed from a master seed and a stream index.
///
/// Hashes the pair with SHA-256 and keeps the first eight bytes, so distinct
/// indices give (cryptographically) unrelated generator states.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[0..8].try_into().expect("8 bytes"))
}

/// Deterministic generator for stream `index` of master seed `master`.
pub fn rng_for(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Sample spatial white noise: iid `N(0, 1/spacing²)` per grid point.
pub fn sample_white_noise<F: Real>(grid: Grid2D, seed: u64) -> Field2D<F>
where
    StandardNormal: Distribution<F>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = F::from_f64_lit(1.0 / grid.spacing());
    let values: Vec<F> = (0..grid.len())
        .map(|_| {
            let z: F = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Field2D::from_values(grid, values).expect("length matches grid")
}

/// Regenerate slice `k` of the space-time white noise with master seed `seed`.
///
/// Values are iid `N(0, 1/(dt·spacing²))`; slice `k` uses the derived seed
/// `derive_seed(seed, k)`, so streaming a long run never stores all slices.
pub fn white_noise_slice<F: Real>(stgrid: &SpaceTimeGrid, seed: u64, k: usize) -> Field2D<F>
where
    StandardNormal: Distribution<F>,
{
    let grid = stgrid.grid();
    let mut rng = rng_for(seed, k as u64);
    let std = F::from_f64_lit(1.0 / stgrid.cell_volume().sqrt());
    let values: Vec<F> = (0..grid.len())
        .map(|_| {
            let z: F = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Field2D::from_values(grid, values).expect("length matches grid")
}

/// Sample a full space-time white-noise realization (all slices in memory).
pub fn sample_spacetime_white_noise<F: Real>(stgrid: &SpaceTimeGrid, seed: u64) -> SpaceTimeField<F>
where
    StandardNormal: Distribution<F>,
{
    let mut out = SpaceTimeField::zeros(*stgrid);
    for k in 0..stgrid.nt() {
        let slice = white_noise_slice::<F>(stgrid, seed, k);
        out.set_slice(k, &slice).expect("same grid");
    }
    out
}
