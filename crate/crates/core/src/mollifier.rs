//! Mollifiers on the torus: compactly supported bump kernels at scale `δ`,
//! their discrete periodizations, and periodic convolution.
//!
//! Spatial kernels scale as `ρ^δ(x) = δ^{−2} ρ(x/δ)`; space-time kernels use
//! parabolic scaling `ρ^δ(t,x) = δ^{−4} ρ_t(t/δ²) ρ_s(x/δ)` as a separable
//! product. Discrete kernels are renormalized so their *discrete* integral
//! (sum times cell volume) is exactly 1, which makes convolution preserve
//! constants to rounding error.
//!
//! Space-time convolution is circular in the time direction as well as in
//! space. This keeps the operation exactly associative and translation
//! invariant on the sampled window; callers that need a causally clean
//! window should discard a burn-in margin of width `δ²` in time.

use crate::error::{Error, Result};
use crate::fft::Spectral2D;
use crate::grid::{Field2D, SpaceTimeField, SpaceTimeGrid};
use crate::scalar::Real;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Shape of the unnormalized mollifier profile (radial, support `|x| < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierShape {
    /// `exp(−1/(1−r²))` for `r < 1`: the standard smooth bump.
    StandardBump,
    /// `cos²(πr/2)` for `r < 1`: polynomial-trig bump (C¹ at the edge).
    CosineBump,
}

impl MollifierShape {
    /// Unnormalized radial profile at radius `r ≥ 0`.
    pub fn profile<F: Real>(self, r: F) -> F
    where
        StandardNormal: Distribution<F>,
    {
        let one = F::one();
        if r >= one {
            return F::zero();
        }
        match self {
            MollifierShape::StandardBump => (-(one / (one - r * r))).exp(),
            MollifierShape::CosineBump => {
                let c = (F::FRAC_PI_2() * r).cos();
                c * c
            }
        }
    }

    /// `∫_{ℝ²} profile(|x|) dx`, by fine radial quadrature (midpoint rule on
    /// `∫₀¹ profile(r)·2πr dr`).
    pub fn norm_2d<F: Real>(self) -> F
    where
        StandardNormal: Distribution<F>,
    {
        let m = 8192usize;
        let h = F::one() / F::from_f64_lit(m as f64);
        let mut acc = F::zero();
        for i in 0..m {
            let r = (F::from_f64_lit(i as f64) + F::from_f64_lit(0.5)) * h;
            acc += self.profile(r) * r;
        }
        F::from_f64_lit(2.0) * F::PI() * acc * h
    }

    /// `∫_ℝ profile(|t|) dt`, same rule in one dimension.
    pub fn norm_1d<F: Real>(self) -> F
    where
        StandardNormal: Distribution<F>,
    {
        let m = 8192usize;
        let h = F::one() / F::from_f64_lit(m as f64);
        let mut acc = F::zero();
        for i in 0..m {
            let r = (F::from_f64_lit(i as f64) + F::from_f64_lit(0.5)) * h;
            acc += self.profile(r);
        }
        F::from_f64_lit(2.0) * acc * h
    }

    /// Continuum spatial mollifier `ρ^δ(x) = ρ(x/δ)/(N δ²)` with the exact
    /// (quadrature) normalization `N`, for use in integrand evaluations.
    pub fn continuum_spatial<F: Real>(self, delta: F, x: F, y: F, norm: F) -> F
    where
        StandardNormal: Distribution<F>,
    {
        let r = (x * x + y * y).sqrt() / delta;
        self.profile(r) / (norm * delta * delta)
    }
}

/// Discrete spatial mollifier at scale `δ` on a periodic grid.
///
/// `kernel` is centered at the origin (with wraparound) and its discrete
/// integral is exactly 1; `spectrum` caches its unnormalized DFT for fast
/// convolution.
#[derive(Debug, Clone)]
pub struct Mollifier<F: Real>
where
    StandardNormal: Distribution<F>,
{
    pub shape: MollifierShape,
    pub delta: F,
    pub kernel: Field2D<F>,
    spectrum: Vec<Complex<F>>,
}

/// Build the discrete spatial mollifier, requiring `δ ≥ 2·spacing` so the
/// bump is resolved by at least a few grid cells.
pub fn make_mollifier<F: Real>(
    grid: crate::grid::Grid2D,
    delta: F,
    shape: MollifierShape,
) -> Result<Mollifier<F>>
where
    StandardNormal: Distribution<F>,
{
    let spacing = F::from_f64_lit(grid.spacing());
    if delta < F::from_f64_lit(2.0) * spacing {
        return Err(Error::UnresolvableScale {
            what: "mollifier scale delta".into(),
            value: delta.to_f64_lossy(),
            limit: 2.0 * grid.spacing(),
            context: format!("grid n={} spacing={}", grid.n(), grid.spacing()),
        });
    }
    let n = grid.n();
    let mut vals = Vec::with_capacity(grid.len());
    for iy in 0..n {
        for ix in 0..n {
            let dx = grid.signed_coord(ix);
            let dy = grid.signed_coord(iy);
            let r = F::from_f64_lit((dx * dx + dy * dy).sqrt()) / delta;
            vals.push(shape.profile(r));
        }
    }
    let mut kernel = Field2D::from_values(grid, vals)?;
    let raw_integral = kernel.integral();
    if !(raw_integral > F::zero()) {
        return Err(Error::UnresolvableScale {
            what: "mollifier discrete mass".into(),
            value: raw_integral.to_f64_lossy(),
            limit: 0.0,
            context: "no grid point falls inside the bump support".into(),
        });
    }
    let scale = F::one() / raw_integral;
    for v in kernel.values_mut() {
        *v *= scale;
    }
    let mut sp = Spectral2D::new(grid.n());
    let spectrum = sp.forward_real(kernel.values());
    Ok(Mollifier {
        shape,
        delta,
        kernel,
        spectrum,
    })
}

impl<F: Real> Mollifier<F>
where
    StandardNormal: Distribution<F>,
{
    /// Periodic convolution `(ρ^δ ∗ f)` with the volume element included.
    pub fn convolve(&self, sp: &mut Spectral2D<F>, f: &Field2D<F>) -> Result<Field2D<F>> {
        f.check_same_grid(&self.kernel)?;
        let grid = f.grid();
        let cell = F::from_f64_lit(grid.cell_volume());
        let vals = sp.convolve_real(f.values(), &self.spectrum, cell);
        Field2D::from_values(grid, vals)
    }

    /// Discrete self-convolution `(ρ ∗ ρ)^δ`: the covariance kernel of
    /// spatially mollified white noise, `E[ξ_δ(x) ξ_δ(x′)] = (ρ∗ρ)^δ(x−x′)`.
    pub fn self_convolution(&self, sp: &mut Spectral2D<F>) -> Field2D<F> {
        let grid = self.kernel.grid();
        let cell = F::from_f64_lit(grid.cell_volume());
        let vals = sp.convolve_real(self.kernel.values(), &self.spectrum, cell);
        Field2D::from_values(grid, vals).expect("same grid")
    }
}

/// Discrete space-time mollifier with parabolic scaling: a separable product
/// of a spatial kernel at scale `δ` and a time window at scale `δ²`.
///
/// Each factor is discretely normalized to unit integral, so the product has
/// exact unit space-time integral.
#[derive(Debug, Clone)]
pub struct SpaceTimeMollifier<F: Real>
where
    StandardNormal: Distribution<F>,
{
    pub shape: MollifierShape,
    pub delta: F,
    pub spatial: Mollifier<F>,
    /// Signed slice offsets of the time taps (offset `j` weights slice `k−j`).
    pub time_offsets: Vec<i64>,
    /// Tap weights; `Σ weights · dt = 1` exactly.
    pub time_weights: Vec<F>,
    dt: F,
}

/// Build the space-time mollifier, requiring `δ ≥ 2·spacing` in space and
/// `δ² ≥ 2·dt` in time.
pub fn make_spacetime_mollifier<F: Real>(
    stgrid: &SpaceTimeGrid,
    delta: F,
    shape: MollifierShape,
) -> Result<SpaceTimeMollifier<F>>
where
    StandardNormal: Distribution<F>,
{
    let dt = F::from_f64_lit(stgrid.dt());
    let delta_sq = delta * delta;
    if delta_sq < F::from_f64_lit(2.0) * dt {
        return Err(Error::UnresolvableScale {
            what: "mollifier time scale delta^2".into(),
            value: delta_sq.to_f64_lossy(),
            limit: 2.0 * stgrid.dt(),
            context: format!("time grid nt={} dt={}", stgrid.nt(), stgrid.dt()),
        });
    }
    let spatial = make_mollifier(stgrid.grid(), delta, shape)?;
    // Time taps at t = j·dt with |t| < δ².
    let max_off = (delta_sq.to_f64_lossy() / stgrid.dt()).ceil() as i64;
    let mut time_offsets = Vec::new();
    let mut time_weights: Vec<F> = Vec::new();
    for j in -max_off..=max_off {
        let t = F::from_f64_lit(j as f64) * dt;
        let w = shape.profile((t / delta_sq).abs());
        if w > F::zero() {
            time_offsets.push(j);
            time_weights.push(w);
        }
    }
    let raw: F = time_weights.iter().copied().sum::<F>() * dt;
    if !(raw > F::zero()) {
        return Err(Error::UnresolvableScale {
            what: "mollifier time mass".into(),
            value: 0.0,
            limit: 0.0,
            context: "no time slice falls inside the bump support".into(),
        });
    }
    for w in time_weights.iter_mut() {
        *w /= raw;
    }
    Ok(SpaceTimeMollifier {
        shape,
        delta,
        spatial,
        time_offsets,
        time_weights,
        dt,
    })
}

impl<F: Real> SpaceTimeMollifier<F>
where
    StandardNormal: Distribution<F>,
{
    /// Periodic space-time convolution: spatial convolution of each slice,
    /// then a circular mixture over time slices with weights `w_j · dt`.
    pub fn convolve(
        &self,
        sp: &mut Spectral2D<F>,
        f: &SpaceTimeField<F>,
    ) -> Result<SpaceTimeField<F>> {
        let st = f.stgrid();
        let nt = st.nt();
        let npts = st.grid().len();
        let mut conv_slices: Vec<Vec<F>> = Vec::with_capacity(nt);
        for k in 0..nt {
            let slice = f.slice(k);
            let field = Field2D::from_values(st.grid(), slice.to_vec())?;
            conv_slices.push(self.spatial.convolve(sp, &field)?.into_values());
        }
        let mut out = SpaceTimeField::zeros(st);
        for k in 0..nt {
            let dst = out.slice_mut(k);
            for (off, w) in self.time_offsets.iter().zip(&self.time_weights) {
                let src_idx = (k as i64 - off).rem_euclid(nt as i64) as usize;
                let wdt = *w * self.dt;
                let src = &conv_slices[src_idx];
                for i in 0..npts {
                    dst[i] += wdt * src[i];
                }
            }
        }
        Ok(out)
    }

    /// Discrete space-time self-convolution `(ρ ∗ ρ)^δ(s, y)` evaluated at
    /// slice offset `s` (time lag `s·dt`): returns the spatial field of
    /// covariances `E[ξ_δ(t,·) ξ_δ(t+s·dt, ·+y)]` for space-time white noise.
    pub fn self_convolution_at_lag(&self, sp: &mut Spectral2D<F>, s: i64) -> Field2D<F> {
        // Time factor: Σ_j w_j w_{j+s} dt ; spatial factor: (ρ∗ρ) in space.
        let mut tw = F::zero();
        for (j, w) in self.time_offsets.iter().zip(&self.time_weights) {
            if let Some(pos) = self.time_offsets.iter().position(|&o| o == j + s) {
                tw += *w * self.time_weights[pos] * self.dt;
            }
        }
        let mut spat = self.spatial.self_convolution(sp);
        for v in spat.values_mut() {
            *v *= tw;
        }
        spat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    #[test]
    fn discrete_integral_is_exactly_one() {
        let grid = Grid2D::new(64).unwrap();
        for shape in [MollifierShape::StandardBump, MollifierShape::CosineBump] {
            let m = make_mollifier::<f64>(grid, 0.125, shape).unwrap();
            assert!((m.kernel.integral() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_unresolvable_delta() {
        let grid = Grid2D::new(32).unwrap(); // spacing 1/32
        let err = make_mollifier::<f64>(grid, 0.05, MollifierShape::StandardBump).unwrap_err();
        match err {
            Error::UnresolvableScale { .. } => {}
            other => panic!("expected UnresolvableScale, got {other:?}"),
        }
    }

    #[test]
    fn convolution_preserves_constants() {
        let grid = Grid2D::new(32).unwrap();
        let m = make_mollifier::<f64>(grid, 0.25, MollifierShape::CosineBump).unwrap();
        let mut sp = Spectral2D::new(32);
        let f = Field2D::constant(grid, 3.5);
        let g = m.convolve(&mut sp, &f).unwrap();
        for &v in g.values() {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn self_convolution_peaks_at_origin_and_integrates_to_one() {
        let grid = Grid2D::new(64).unwrap();
        let m = make_mollifier::<f64>(grid, 0.125, MollifierShape::StandardBump).unwrap();
        let mut sp = Spectral2D::new(64);
        let rr = m.self_convolution(&mut sp);
        let peak = rr.at(0, 0);
        for &v in rr.values() {
            assert!(v <= peak + 1e-12);
        }
        assert!((rr.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn continuum_norm_matches_discrete_mass_scaling() {
        // For δ well resolved, the raw discrete sum × cell ≈ norm_2d · δ².
        let grid = Grid2D::new(256).unwrap();
        let shape = MollifierShape::StandardBump;
        let delta = 0.25f64;
        let mut raw = 0.0;
        for y in 0..256 {
            for x in 0..256 {
                let dx = grid.signed_coord(x);
                let dy = grid.signed_coord(y);
                raw += shape.profile((dx * dx + dy * dy).sqrt() / delta);
            }
        }
        raw *= grid.cell_volume();
        let expect = shape.norm_2d::<f64>() * delta * delta;
        assert!(
            ((raw - expect) / expect).abs() < 1e-3,
            "raw={raw} expect={expect}"
        );
    }

    #[test]
    fn spacetime_mollifier_normalizes_and_checks_resolvability() {
        let grid = SpaceTimeGrid::new(Grid2D::new(32).unwrap(), 0.0, 1.0, 256).unwrap();
        // dt = 1/256; δ² must be ≥ 2/256 = 1/128, so δ = 1/8 (δ²=1/64) passes.
        let m = make_spacetime_mollifier::<f64>(&grid, 0.125, MollifierShape::StandardBump).unwrap();
        let total: f64 = m.time_weights.iter().sum::<f64>() * grid.dt();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((m.spatial.kernel.integral() - 1.0).abs() < 1e-14);
        // δ = 1/32 gives δ² = 1/1024 < 2·dt: rejected.
        assert!(
            make_spacetime_mollifier::<f64>(&grid, 1.0 / 32.0, MollifierShape::StandardBump)
                .is_err()
        );
    }

    #[test]
    fn spacetime_convolution_preserves_constants() {
        let grid = SpaceTimeGrid::new(Grid2D::new(16).unwrap(), 0.0, 0.5, 64).unwrap();
        let m = make_spacetime_mollifier::<f64>(&grid, 0.25, MollifierShape::CosineBump).unwrap();
        let mut sp = Spectral2D::new(16);
        let mut f = SpaceTimeField::zeros(grid);
        for v in f.values_mut() {
            *v = -2.0;
        }
        let g = m.convolve(&mut sp, &f).unwrap();
        for &v in g.values() {
            assert!((v + 2.0).abs() < 1e-12);
        }
    }
}
