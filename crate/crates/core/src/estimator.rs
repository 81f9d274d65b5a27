//! Monte-Carlo scaling probes of the renormalized stochastic objects and the
//! variance blow-up experiment.
//!
//! The regularity of a random distribution `τ` is probed by smearing against
//! recentered, rescaled test functions `φ^λ_⋆(x) = λ^{−2} φ((x−⋆)/λ)`: if
//! `E|τ(φ^λ_⋆)|^q ≲ λ^{αq}` as `λ → 0`, then `τ` has (local) regularity `α`.
//! This module estimates such moments by replica Monte Carlo for the three
//! product objects whose renormalization the counterterms effect —
//!
//! - `ξ_δ·Iξ_δ − c^{⟨Ξ²⟩}_δ` (noise × its heat integral),
//! - `∂_i Iξ_δ·∂_j Iξ_δ − c^{⟨b²⟩_ij}_δ` (gradient products), and
//! - `H_N(⟨1⟩_δ, c^{⟨2⟩}_δ)` (Wick powers of the space-time convolution) —
//!
//! and fits the exponent `α̂` by weighted log-log regression over a dyadic `λ`
//! grid, with the counterterm-off ablation exposing the `|log δ|` divergence
//! the subtraction removes.
//!
//! The blow-up experiment contrasts two renormalization policies when the
//! coefficient field is correlated with the noise: a spatially constant,
//! deterministic counterterm (the best constant, the spatial average of
//! `E[ĉ_δ]`) versus the random counterterm *function* `ĉ_δ(x)` matched to the
//! realization of `a(x)`. The constant arm's variance grows like
//! `log²δ/(4π²) · Var (1/√det a, φ)` while the function arm stays bounded —
//! the dichotomy that forces function-valued renormalization.

use crate::coeff::{CoefficientField, MatrixMap, SymMat2};
use crate::error::{Error, Result};
use crate::fft::Spectral2D;
use crate::grid::{Field2D, Grid2D, SpaceTimeField, SpaceTimeGrid};
use crate::hermite::hermite;
use crate::kernels::{CountertermEngine, CountertermKind, CountertermMethod};
use crate::mollifier::{make_mollifier, make_spacetime_mollifier, MollifierShape};
use crate::noise::{derive_seed, sample_spacetime_white_noise, sample_white_noise};
use crate::scalar::{Real, Ring};
use crate::solver::{
    solve_linear_she, stochastic_convolution, CountertermMode, HeatStepper, SolverConfig,
    TrajectoryMeta,
};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Seed-branch offset separating pilot replicas from main replicas.
const PILOT_BRANCH: u64 = 1 << 48;

/// Number of pilot replicas used to estimate the best-constant counterterm.
const PILOT_REPLICAS: usize = 32;

/// Interpolation nodes for per-replica counterterm fields.
const ETA_NODES: usize = 17;

/// Recentered, rescaled spatial test function `φ^λ_⋆` with exact discrete
/// unit mass: the weights are renormalized so that `(1, φ^λ_⋆)_h = 1`.
#[derive(Debug, Clone)]
pub struct TestFunction<F: Real>
where
    StandardNormal: Distribution<F>,
{
    center: (usize, usize),
    lambda: F,
    weights: Field2D<F>,
}

impl<F: Real> TestFunction<F>
where
    StandardNormal: Distribution<F>,
{
    /// Build `φ^λ_⋆` centered at the grid point `center = (ix, iy)`.
    ///
    /// Requires `λ ≤ 1` and `λ ≥ 4·spacing` so the bump is resolved.
    pub fn new(
        grid: Grid2D,
        center: (usize, usize),
        lambda: F,
        shape: MollifierShape,
    ) -> Result<Self> {
        if center.0 >= grid.n() || center.1 >= grid.n() {
            return Err(Error::ConfigError {
                key: "center".into(),
                detail: format!(
                    "center index {:?} outside grid of side {}",
                    center,
                    grid.n()
                ),
            });
        }
        if !(lambda > F::zero()) || lambda > F::one() {
            return Err(Error::ConfigError {
                key: "lambda".into(),
                detail: format!("test-function scale must lie in (0, 1], got {lambda}"),
            });
        }
        let spacing = grid.spacing();
        if lambda.to_f64_lossy() < 4.0 * spacing {
            return Err(Error::UnresolvableScale {
                what: "test-function scale lambda".into(),
                value: lambda.to_f64_lossy(),
                limit: 4.0 * spacing,
                context: format!("grid n={} spacing={}", grid.n(), spacing),
            });
        }
        let n = grid.n();
        let mut vals = Vec::with_capacity(grid.len());
        for iy in 0..n {
            let dy = F::from_f64_lit(grid.signed_coord((iy + n - center.1) % n));
            for ix in 0..n {
                let dx = F::from_f64_lit(grid.signed_coord((ix + n - center.0) % n));
                let r = (dx * dx + dy * dy).sqrt() / lambda;
                vals.push(shape.profile(r));
            }
        }
        let mut weights = Field2D::from_values(grid, vals)?;
        let mass = weights.integral();
        if !(mass > F::zero()) {
            return Err(Error::UnresolvableScale {
                what: "test-function discrete mass".into(),
                value: mass.to_f64_lossy(),
                limit: 0.0,
                context: "no grid point falls inside the bump support".into(),
            });
        }
        let scale = mass.recip();
        for w in weights.values_mut() {
            *w *= scale;
        }
        Ok(TestFunction {
            center,
            lambda,
            weights,
        })
    }

    /// The scale `λ`.
    pub fn lambda(&self) -> F {
        self.lambda
    }

    /// The center grid indices `⋆`.
    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    /// The renormalized weight field (discrete integral exactly one).
    pub fn weights(&self) -> &Field2D<F> {
        &self.weights
    }

    /// Smeared evaluation `(field, φ^λ_⋆)_h = Σ field·w·cell`.
    pub fn pair(&self, field: &Field2D<F>) -> Result<F> {
        field.check_same_grid(&self.weights)?;
        let cell = F::from_f64_lit(field.grid().cell_volume());
        let dot: F = field
            .values()
            .iter()
            .zip(self.weights.values())
            .map(|(&f, &w)| f * w)
            .sum();
        Ok(dot * cell)
    }
}

/// Parabolically rescaled space-time test function
/// `φ^λ(t,x) = λ^{−4} φ_t((t−t⋆)/λ²) φ_s((x−⋆)/λ)` with exact discrete unit
/// mass. Separable: each factor is discretely normalized, so the product is.
#[derive(Debug, Clone)]
pub struct SpaceTimeTestFunction<F: Real>
where
    StandardNormal: Distribution<F>,
{
    center_slice: usize,
    lambda: F,
    /// `(slice index, time weight)`; time weights satisfy `Σ w·dt = 1`.
    taps: Vec<(usize, F)>,
    spatial: TestFunction<F>,
    dt: F,
}

impl<F: Real> SpaceTimeTestFunction<F>
where
    StandardNormal: Distribution<F>,
{
    /// Build the parabolic test function centered at slice `center_slice` and
    /// spatial point `center`. The time window `|t − t⋆| < λ²` must lie
    /// inside the trajectory (no periodic wrap in time) and be resolved:
    /// `λ² ≥ 2·dt`.
    pub fn new(
        stgrid: &SpaceTimeGrid,
        center_slice: usize,
        center: (usize, usize),
        lambda: F,
        shape: MollifierShape,
    ) -> Result<Self> {
        let spatial = TestFunction::new(stgrid.grid(), center, lambda, shape)?;
        let dt = stgrid.dt();
        let lambda_sq = lambda * lambda;
        if lambda_sq.to_f64_lossy() < 2.0 * dt {
            return Err(Error::UnresolvableScale {
                what: "test-function time scale lambda^2".into(),
                value: lambda_sq.to_f64_lossy(),
                limit: 2.0 * dt,
                context: format!("time grid nt={} dt={}", stgrid.nt(), dt),
            });
        }
        let reach = (lambda_sq.to_f64_lossy() / dt).ceil() as i64;
        let lo = center_slice as i64 - reach;
        let hi = center_slice as i64 + reach;
        if lo < 0 || hi >= stgrid.nt() as i64 {
            return Err(Error::ConfigError {
                key: "center_slice".into(),
                detail: format!(
                    "time window [{lo}, {hi}] leaves the trajectory of {} slices",
                    stgrid.nt()
                ),
            });
        }
        let mut taps = Vec::new();
        for k in lo..=hi {
            let t = F::from_f64_lit((k - center_slice as i64) as f64 * dt);
            let w = shape.profile((t / lambda_sq).abs());
            if w > F::zero() {
                taps.push((k as usize, w));
            }
        }
        let raw: F = taps.iter().map(|&(_, w)| w).sum::<F>() * F::from_f64_lit(dt);
        if !(raw > F::zero()) {
            return Err(Error::UnresolvableScale {
                what: "test-function time mass".into(),
                value: 0.0,
                limit: 0.0,
                context: "no time slice falls inside the bump support".into(),
            });
        }
        for (_, w) in taps.iter_mut() {
            *w /= raw;
        }
        Ok(SpaceTimeTestFunction {
            center_slice,
            lambda,
            taps,
            spatial,
            dt: F::from_f64_lit(dt),
        })
    }

    /// The scale `λ`.
    pub fn lambda(&self) -> F {
        self.lambda
    }

    /// The central time slice.
    pub fn center_slice(&self) -> usize {
        self.center_slice
    }

    /// Smeared space-time evaluation `Σ_k w_k dt (field(k,·), φ_s)_h`.
    pub fn pair(&self, field: &SpaceTimeField<F>) -> Result<F> {
        if field.stgrid().grid() != self.spatial.weights().grid() {
            return Err(Error::GridMismatch(
                "space-time field grid differs from the test-function grid".into(),
            ));
        }
        let mut acc = F::zero();
        for &(k, w) in &self.taps {
            acc += w * self.dt * self.spatial.pair(&field.slice_field(k))?;
        }
        Ok(acc)
    }
}

/// Fitted scaling exponent with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentFit<F> {
    /// Estimated exponent `α̂` (log-log slope divided by the moment order).
    pub exponent: F,
    /// 95% half-width of the exponent, in exponent units.
    pub ci_half_width: F,
    /// Intercept of the log-log fit.
    pub intercept: F,
}

/// Weighted least-squares fit of `ln E|X|^q = (αq)·ln λ + b`.
///
/// Standard errors of the moments propagate to log scale by the delta method
/// (`σ_ln ≈ SE/m`) and enter as inverse-variance weights; if any standard
/// error is zero the fit is unweighted and the interval comes from the
/// residuals instead. The returned exponent and interval are divided by `q`.
pub fn fit_exponent<F: Real>(
    lambdas: &[F],
    moments: &[F],
    std_errors: &[F],
    q: u32,
) -> Result<ExponentFit<F>>
where
    StandardNormal: Distribution<F>,
{
    if lambdas.len() < 2 || lambdas.len() != moments.len() || moments.len() != std_errors.len() {
        return Err(Error::DimensionMismatch(format!(
            "exponent fit needs ≥ 2 aligned points, got {}/{}/{}",
            lambdas.len(),
            moments.len(),
            std_errors.len()
        )));
    }
    if q == 0 {
        return Err(Error::ConfigError {
            key: "q".into(),
            detail: "moment order must be ≥ 1".into(),
        });
    }
    let mut xs = Vec::with_capacity(lambdas.len());
    let mut ys = Vec::with_capacity(lambdas.len());
    let mut sigmas = Vec::with_capacity(lambdas.len());
    for ((&l, &m), &se) in lambdas.iter().zip(moments).zip(std_errors) {
        if !(l > F::zero()) || !(m > F::zero()) {
            return Err(Error::ConfigError {
                key: "moments".into(),
                detail: format!("log-log fit needs positive λ and moments, got λ={l} m={m}"),
            });
        }
        xs.push(l.ln());
        ys.push(m.ln());
        sigmas.push(se / m);
    }
    let weighted = sigmas.iter().all(|&s| s > F::zero());
    let ws: Vec<F> = if weighted {
        sigmas.iter().map(|&s| (s * s).recip()).collect()
    } else {
        vec![F::one(); xs.len()]
    };
    let wsum: F = ws.iter().copied().sum();
    let xbar = xs.iter().zip(&ws).map(|(&x, &w)| w * x).sum::<F>() / wsum;
    let ybar = ys.iter().zip(&ws).map(|(&y, &w)| w * y).sum::<F>() / wsum;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for i in 0..xs.len() {
        let dx = xs[i] - xbar;
        sxx += ws[i] * dx * dx;
        sxy += ws[i] * dx * (ys[i] - ybar);
    }
    if !(sxx > F::zero()) {
        return Err(Error::ConfigError {
            key: "lambdas".into(),
            detail: "scaling fit needs at least two distinct λ values".into(),
        });
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let var_slope = if weighted {
        sxx.recip()
    } else if xs.len() > 2 {
        let mut rss = F::zero();
        for i in 0..xs.len() {
            let r = ys[i] - (intercept + slope * xs[i]);
            rss += r * r;
        }
        rss / F::from_usize(xs.len() - 2).unwrap() / sxx
    } else {
        F::zero()
    };
    let qf = F::from_u32(q).unwrap();
    Ok(ExponentFit {
        exponent: slope / qf,
        ci_half_width: F::from_f64_lit(1.96) * var_slope.sqrt() / qf,
        intercept,
    })
}

/// One estimated moment at a `(λ, δ)` pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentPoint<F> {
    pub lambda: F,
    pub delta: F,
    /// Monte-Carlo estimate of `E|X|^q`.
    pub moment: F,
    /// Standard error of the estimate.
    pub std_error: F,
}

/// A completed moment study: estimates over the `(λ, δ)` grid plus the
/// exponent fitted over `λ` at the smallest `δ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentStudy<F> {
    /// Which object was probed.
    pub tag: String,
    /// Moment order `q`.
    pub q: u32,
    /// Replica count behind every point.
    pub replicas: usize,
    /// All estimated points.
    pub points: Vec<MomentPoint<F>>,
    /// Exponent fit over `λ` at the smallest `δ` (absent if the fit failed).
    pub fit: Option<ExponentFit<F>>,
    /// Set when the fitted 95% interval is wider than 0.15 exponent units —
    /// an engineering threshold: the bounds being probed hold for every
    /// exponent below zero, so only a well-resolved fit is conclusive.
    pub quality_warning: bool,
}

impl<F: Real> MomentStudy<F>
where
    StandardNormal: Distribution<F>,
{
    /// Points at one mollification scale, ordered as the λ grid.
    pub fn points_at_delta(&self, delta: F) -> Vec<&MomentPoint<F>> {
        self.points.iter().filter(|p| p.delta == delta).collect()
    }

    /// The estimated moment at an exact `(λ, δ)` grid pair.
    pub fn moment_at(&self, lambda: F, delta: F) -> Option<&MomentPoint<F>> {
        self.points
            .iter()
            .find(|p| p.lambda == lambda && p.delta == delta)
    }
}

/// Correlated-coefficient regime: `h = amplitude·(ρ^ℓ ∗ ξ) + μ` built from
/// the same white noise that drives the equation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationSpec<F> {
    /// Multiplier `amplitude` (the `σ ≠ 0` switch; zero disables).
    pub amplitude: F,
    /// Fixed smoothing scale `ℓ` of the kernel.
    pub kernel_scale: F,
    /// Additive offset `μ`.
    pub mu: F,
}

/// Configuration shared by the spatial probes and the blow-up experiment.
#[derive(Debug, Clone)]
pub struct ProbeSetup<F> {
    /// Spatial grid.
    pub grid: Grid2D,
    /// Bump shape used for mollifiers, test functions, and the smoothing
    /// kernel of the correlated regime.
    pub shape: MollifierShape,
    /// Coefficient matrix map `A`.
    pub map: MatrixMap<F>,
    /// Noise-correlated coefficients when present; frozen `A(0)` otherwise.
    pub correlation: Option<CorrelationSpec<F>>,
    /// Test-function scales (dyadic, decreasing recommended).
    pub lambdas: Vec<F>,
    /// Mollification scales (dyadic, decreasing recommended).
    pub deltas: Vec<F>,
    /// Moment order.
    pub q: u32,
    /// Replica count (≥ 100).
    pub replicas: usize,
    /// Master seed of the replica seed tree.
    pub master_seed: u64,
    /// Backward-Euler steps used to integrate the heat equation to time 1.
    pub solve_nt: usize,
    /// Test-function center (grid indices).
    pub center: (usize, usize),
}

impl<F: Real> ProbeSetup<F>
where
    StandardNormal: Distribution<F>,
{
    fn validate(&self) -> Result<()> {
        if self.replicas < 100 {
            return Err(Error::ConfigError {
                key: "replicas".into(),
                detail: format!("moment studies need ≥ 100 replicas, got {}", self.replicas),
            });
        }
        if self.q == 0 {
            return Err(Error::ConfigError {
                key: "q".into(),
                detail: "moment order must be ≥ 1".into(),
            });
        }
        if self.lambdas.is_empty() || self.deltas.is_empty() {
            return Err(Error::ConfigError {
                key: "lambdas/deltas".into(),
                detail: "probe needs at least one λ and one δ".into(),
            });
        }
        if self.solve_nt == 0 {
            return Err(Error::ConfigError {
                key: "solve_nt".into(),
                detail: "heat integration needs at least one step".into(),
            });
        }
        for &d in &self.deltas {
            if d.to_f64_lossy() < 2.0 * self.grid.spacing() {
                return Err(Error::UnresolvableScale {
                    what: "mollification scale delta".into(),
                    value: d.to_f64_lossy(),
                    limit: 2.0 * self.grid.spacing(),
                    context: format!("grid n={}", self.grid.n()),
                });
            }
        }
        Ok(())
    }

    /// Whether the coefficient field varies per replica.
    fn is_correlated(&self) -> bool {
        self.correlation
            .is_some_and(|c| c.amplitude != F::zero())
    }

    /// Coefficient field for one replica's noise realization.
    fn coefficients(&self, xi: &Field2D<F>, sp: &mut Spectral2D<F>) -> Result<CoefficientField<F>> {
        match self.correlation {
            Some(c) if c.amplitude != F::zero() => CoefficientField::correlated_with_noise(
                xi,
                c.kernel_scale,
                c.amplitude,
                c.mu,
                self.shape,
                self.map,
                sp,
            ),
            _ => CoefficientField::from_h(Field2D::zeros(self.grid), self.map),
        }
    }

    fn solver_config(&self) -> Result<SolverConfig<F>> {
        let dt = F::one() / F::from_usize(self.solve_nt).unwrap();
        SolverConfig::new(dt, self.solve_nt, self.map.lambda_max_bound())
    }

    fn test_functions(&self) -> Result<Vec<TestFunction<F>>> {
        self.lambdas
            .iter()
            .map(|&l| TestFunction::new(self.grid, self.center, l, self.shape))
            .collect()
    }
}

/// Which product object a spatial probe targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpatialProbe {
    /// `u_δ·ξ_δ − c^{⟨Ξ²⟩}` with `u_δ` the heat integral of `ξ_δ` at time 1.
    NoiseProduct,
    /// `∂_i u_δ·∂_j u_δ − c^{⟨b²⟩_ij}` (axes 1-based).
    GradientProduct { i: usize, j: usize },
}

impl SpatialProbe {
    fn counterterm_kind(self) -> CountertermKind {
        match self {
            SpatialProbe::NoiseProduct => CountertermKind::NoiseSquare,
            SpatialProbe::GradientProduct { i, j } => match (i.min(j), i.max(j)) {
                (1, 1) => CountertermKind::GradSquare11,
                (1, 2) => CountertermKind::GradSquare12,
                _ => CountertermKind::GradSquare22,
            },
        }
    }

    fn tag(self, mode: CountertermMode) -> String {
        let object = match self {
            SpatialProbe::NoiseProduct => "xi-ixi".to_string(),
            SpatialProbe::GradientProduct { i, j } => format!("dixi-djxi-{i}{j}"),
        };
        let mode = match mode {
            CountertermMode::Function => "function",
            CountertermMode::Constant => "constant",
            CountertermMode::Off => "none",
        };
        format!("{object}-{mode}")
    }
}

/// Deterministic constant counterterm (spatial average of `E[ĉ_δ]`) from a
/// pilot branch of the seed tree.
fn pilot_constant<F: Real>(
    setup: &ProbeSetup<F>,
    engine: &CountertermEngine<F>,
    kind: CountertermKind,
    delta: F,
    sp: &mut Spectral2D<F>,
) -> Result<F>
where
    StandardNormal: Distribution<F>,
{
    if !setup.is_correlated() {
        let a = setup.coefficients(&Field2D::zeros(setup.grid), sp)?;
        let field = engine.field(&a, kind, delta, CountertermMethod::EtaTable { nodes: ETA_NODES })?;
        return Ok(field.field.mean());
    }
    let mut acc = F::zero();
    for p in 0..PILOT_REPLICAS {
        let seed = derive_seed(setup.master_seed, PILOT_BRANCH + p as u64);
        let xi = sample_white_noise::<F>(setup.grid, seed);
        let a = setup.coefficients(&xi, sp)?;
        let field = engine.field(&a, kind, delta, CountertermMethod::EtaTable { nodes: ETA_NODES })?;
        acc += field.field.mean();
    }
    Ok(acc / F::from_usize(PILOT_REPLICAS).unwrap())
}

/// Shared replica loop behind the two spatial probes.
fn spatial_probe_study<F: Real>(
    setup: &ProbeSetup<F>,
    probe: SpatialProbe,
    mode: CountertermMode,
) -> Result<MomentStudy<F>>
where
    StandardNormal: Distribution<F>,
{
    setup.validate()?;
    if let SpatialProbe::GradientProduct { i, j } = probe {
        if !(1..=2).contains(&i) || !(1..=2).contains(&j) {
            return Err(Error::ConfigError {
                key: "axes".into(),
                detail: format!("gradient axes must be 1 or 2, got ({i}, {j})"),
            });
        }
    }
    let engine = CountertermEngine::new(setup.shape);
    let kind = probe.counterterm_kind();
    let mut sp = Spectral2D::new(setup.grid.n());
    let tfs = setup.test_functions()?;
    let cfg = setup.solver_config()?;
    let mut stepper = HeatStepper::new(setup.grid, &cfg);
    let mollifiers: Vec<_> = setup
        .deltas
        .iter()
        .map(|&d| make_mollifier(setup.grid, d, setup.shape))
        .collect::<Result<_>>()?;

    // Counterterm data shared across replicas.
    let frozen = if setup.is_correlated() {
        None
    } else {
        Some(setup.coefficients(&Field2D::zeros(setup.grid), &mut sp)?)
    };
    let mut constants: Vec<F> = Vec::new();
    let mut frozen_fields: Vec<Field2D<F>> = Vec::new();
    for &delta in &setup.deltas {
        match mode {
            CountertermMode::Constant => {
                constants.push(pilot_constant(setup, &engine, kind, delta, &mut sp)?)
            }
            CountertermMode::Function => {
                if let Some(a) = &frozen {
                    frozen_fields.push(
                        engine
                            .field(a, kind, delta, CountertermMethod::EtaTable { nodes: ETA_NODES })?
                            .field,
                    );
                }
            }
            CountertermMode::Off => {}
        }
    }

    let nd = setup.deltas.len();
    let nl = setup.lambdas.len();
    let mut sum = vec![F::zero(); nd * nl];
    let mut sumsq = vec![F::zero(); nd * nl];
    for r in 0..setup.replicas {
        let seed = derive_seed(setup.master_seed, r as u64);
        let xi = sample_white_noise::<F>(setup.grid, seed);
        let a = match &frozen {
            Some(a) => a.clone(),
            None => setup.coefficients(&xi, &mut sp)?,
        };
        for (d, moll) in mollifiers.iter().enumerate() {
            let delta = setup.deltas[d];
            let xi_d = moll.convolve(&mut sp, &xi)?;
            let meta = TrajectoryMeta::new("heat-integral", delta.to_f64_lossy(), seed, mode);
            let traj = solve_linear_she(&a, &xi_d, &cfg, meta)?;
            let u = traj.final_field();
            let counter = match mode {
                CountertermMode::Off => None,
                CountertermMode::Constant => Some(Field2D::constant(setup.grid, constants[d])),
                CountertermMode::Function => Some(match &frozen {
                    Some(_) => frozen_fields[d].clone(),
                    None => {
                        engine
                            .field(&a, kind, delta, CountertermMethod::EtaTable {
                                nodes: ETA_NODES,
                            })?
                            .field
                    }
                }),
            };
            let product = match probe {
                SpatialProbe::NoiseProduct => u.zip_map(&xi_d, |uv, xv| uv * xv)?,
                SpatialProbe::GradientProduct { i, j } => {
                    let (gx, gy) = stepper.gradient(u);
                    let gi = if i == 1 { &gx } else { &gy };
                    let gj = if j == 1 { &gx } else { &gy };
                    gi.zip_map(gj, |p, q| p * q)?
                }
            };
            let probe_field = match &counter {
                Some(c) => product.zip_map(c, |p, cv| p - cv)?,
                None => product,
            };
            for (l, tf) in tfs.iter().enumerate() {
                let x = tf.pair(&probe_field)?.abs().powi(setup.q as i32);
                sum[d * nl + l] += x;
                sumsq[d * nl + l] += x * x;
            }
        }
    }

    Ok(finish_study(
        probe.tag(mode),
        setup.q,
        setup.replicas,
        &setup.lambdas,
        &setup.deltas,
        &sum,
        &sumsq,
    ))
}

/// Assemble points, standard errors, and the λ-fit at the smallest δ.
fn finish_study<F: Real>(
    tag: String,
    q: u32,
    replicas: usize,
    lambdas: &[F],
    deltas: &[F],
    sum: &[F],
    sumsq: &[F],
) -> MomentStudy<F>
where
    StandardNormal: Distribution<F>,
{
    let rf = F::from_usize(replicas).unwrap();
    let nl = lambdas.len();
    let mut points = Vec::with_capacity(sum.len());
    for (d, &delta) in deltas.iter().enumerate() {
        for (l, &lambda) in lambdas.iter().enumerate() {
            let m = sum[d * nl + l] / rf;
            let var = (sumsq[d * nl + l] / rf - m * m).max(F::zero());
            points.push(MomentPoint {
                lambda,
                delta,
                moment: m,
                std_error: (var / rf).sqrt(),
            });
        }
    }
    let d_min = deltas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let ms: Vec<F> = (0..nl).map(|l| points[d_min * nl + l].moment).collect();
    let ses: Vec<F> = (0..nl).map(|l| points[d_min * nl + l].std_error).collect();
    let fit = fit_exponent(lambdas, &ms, &ses, q).ok();
    let quality_warning = fit.is_none_or(|f| {
        F::from_f64_lit(2.0) * f.ci_half_width > F::from_f64_lit(0.15)
    });
    MomentStudy {
        tag,
        q,
        replicas,
        points,
        fit,
        quality_warning,
    }
}

/// Moment study of the renormalized noise product `u_δ·ξ_δ − c`, with
/// `u_δ` the heat integral of the mollified noise at time 1 and `c` chosen by
/// `mode`: the counterterm function `c^{⟨Ξ²⟩}_δ(x)`, its best deterministic
/// constant, or nothing (the ablation exhibiting the `|log δ|` divergence).
pub fn estimate_xi_ixi_moments<F: Real>(
    setup: &ProbeSetup<F>,
    mode: CountertermMode,
) -> Result<MomentStudy<F>>
where
    StandardNormal: Distribution<F>,
{
    spatial_probe_study(setup, SpatialProbe::NoiseProduct, mode)
}

/// Moment study of the renormalized gradient product
/// `∂_i u_δ·∂_j u_δ − c^{⟨b²⟩_ij}` (axes 1-based).
pub fn estimate_gradient_product_moments<F: Real>(
    setup: &ProbeSetup<F>,
    i: usize,
    j: usize,
    mode: CountertermMode,
) -> Result<MomentStudy<F>>
where
    StandardNormal: Distribution<F>,
{
    spatial_probe_study(setup, SpatialProbe::GradientProduct { i, j }, mode)
}

/// Configuration for the Wick-power probe on a space-time grid.
///
/// The coefficient matrix is frozen (deterministic) here: the correlated
/// regime is exercised by the spatial probes and the blow-up experiment.
#[derive(Debug, Clone)]
pub struct SpaceTimeProbeSetup<F> {
    /// Spatial grid.
    pub grid: Grid2D,
    /// Time horizon of the stochastic convolution.
    pub horizon: f64,
    /// Number of time steps (sets `dt = horizon/nt`).
    pub nt: usize,
    /// Bump shape for mollifiers and test functions.
    pub shape: MollifierShape,
    /// Frozen coefficient matrix.
    pub matrix: SymMat2<F>,
    /// Test-function scales.
    pub lambdas: Vec<F>,
    /// Mollification scales.
    pub deltas: Vec<F>,
    /// Moment order.
    pub q: u32,
    /// Replica count (≥ 100).
    pub replicas: usize,
    /// Master seed.
    pub master_seed: u64,
    /// Probe center: fraction of the horizon (time) and grid indices (space).
    pub center_time_fraction: f64,
    /// Spatial center.
    pub center: (usize, usize),
    /// Wick-power degree `N`.
    pub degree: usize,
}

/// Moment study of the Wick power `H_N(⟨1⟩_δ, c^{⟨2⟩}_δ)` of the space-time
/// stochastic convolution, smeared with parabolic test functions.
///
/// `⟨1⟩_δ` is integrated from zero initial data; the counterterm is the
/// stationary unit-horizon Wick constant, so a finite-horizon `O(1)` variance
/// offset remains — it does not affect the λ-scaling or the `|log δ|`
/// ablation, which are the quantities probed. `Function` and `Constant`
/// modes coincide because the matrix is frozen; `Off` disables subtraction.
pub fn hermite_power_moment_study<F: Real + Ring>(
    setup: &SpaceTimeProbeSetup<F>,
    mode: CountertermMode,
) -> Result<MomentStudy<F>>
where
    StandardNormal: Distribution<F>,
{
    if setup.replicas < 100 {
        return Err(Error::ConfigError {
            key: "replicas".into(),
            detail: format!("moment studies need ≥ 100 replicas, got {}", setup.replicas),
        });
    }
    if setup.degree == 0 {
        return Err(Error::ConfigError {
            key: "degree".into(),
            detail: "Wick-power degree must be ≥ 1".into(),
        });
    }
    if !(0.0..=1.0).contains(&setup.center_time_fraction) {
        return Err(Error::ConfigError {
            key: "center_time_fraction".into(),
            detail: format!("must lie in [0, 1], got {}", setup.center_time_fraction),
        });
    }
    let stgrid = SpaceTimeGrid::new(setup.grid, 0.0, setup.horizon, setup.nt)?;
    let center_slice = stgrid.slice_at(setup.center_time_fraction * setup.horizon);
    let tfs: Vec<SpaceTimeTestFunction<F>> = setup
        .lambdas
        .iter()
        .map(|&l| SpaceTimeTestFunction::new(&stgrid, center_slice, setup.center, l, setup.shape))
        .collect::<Result<_>>()?;
    let a_field = CoefficientField::constant(setup.grid, setup.matrix)?;
    let lambda_split = setup.matrix.eigenvalues().1;
    let engine = CountertermEngine::new(setup.shape);
    let mut sp = Spectral2D::new(setup.grid.n());
    let mollifiers: Vec<_> = setup
        .deltas
        .iter()
        .map(|&d| make_spacetime_mollifier(&stgrid, d, setup.shape))
        .collect::<Result<_>>()?;
    let wick_constants: Vec<F> = setup
        .deltas
        .iter()
        .map(|&d| match mode {
            CountertermMode::Off => Ok(F::zero()),
            _ => engine.wick_pair_at(d, &setup.matrix),
        })
        .collect::<Result<_>>()?;

    let nd = setup.deltas.len();
    let nl = setup.lambdas.len();
    let mut sum = vec![F::zero(); nd * nl];
    let mut sumsq = vec![F::zero(); nd * nl];
    for r in 0..setup.replicas {
        let seed = derive_seed(setup.master_seed, r as u64);
        let xi = sample_spacetime_white_noise::<F>(&stgrid, seed);
        for (d, moll) in mollifiers.iter().enumerate() {
            let xi_d = moll.convolve(&mut sp, &xi)?;
            let conv = stochastic_convolution(&a_field, &xi_d, lambda_split, false)?;
            let c = wick_constants[d];
            let probe = SpaceTimeField::from_values(
                stgrid,
                conv.values()
                    .iter()
                    .map(|&v| hermite(setup.degree, &v, &c))
                    .collect(),
            )?;
            for (l, tf) in tfs.iter().enumerate() {
                let x = tf.pair(&probe)?.abs().powi(setup.q as i32);
                sum[d * nl + l] += x;
                sumsq[d * nl + l] += x * x;
            }
        }
    }

    Ok(finish_study(
        format!(
            "hermite-power-{}-{}",
            setup.degree,
            match mode {
                CountertermMode::Off => "none",
                _ => "wick",
            }
        ),
        setup.q,
        setup.replicas,
        &setup.lambdas,
        &setup.deltas,
        &sum,
        &sumsq,
    ))
}

/// Per-(δ, λ) replica statistics of one renormalization policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupArm<F> {
    /// Mean of the smeared observable, indexed `[delta][lambda]`.
    pub mean: Vec<Vec<F>>,
    /// Replica variance of the smeared observable.
    pub variance: Vec<Vec<F>>,
    /// Standard error of the variance estimate (normal approximation
    /// `V·√(2/(R−1))`).
    pub variance_se: Vec<Vec<F>>,
}

/// Output of the variance blow-up experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupReport<F> {
    /// Mollification scales, as configured.
    pub deltas: Vec<F>,
    /// Test-function scales, as configured.
    pub lambdas: Vec<F>,
    /// Replica count.
    pub replicas: usize,
    /// Best-constant deterministic counterterm arm: `(u_δξ_δ − c̄_δ, φ^λ)`.
    pub constant_arm: BlowupArm<F>,
    /// Matched counterterm-function arm: `(u_δξ_δ − ĉ_δ(·), φ^λ)`.
    pub function_arm: BlowupArm<F>,
    /// Replica variance of the counterterm pairing `(ĉ_δ, φ^λ)` itself,
    /// indexed `[delta][lambda]` — the directly measured mismatch variance.
    pub counterterm_variance: Vec<Vec<F>>,
    /// Replica variance of `(1/√det a, φ^λ)` per λ (δ-independent).
    pub amplitude_variance: Vec<F>,
    /// Leading-order prediction `log²δ/(4π²) · amplitude_variance`,
    /// indexed `[delta][lambda]`.
    pub quadratic_target: Vec<Vec<F>>,
    /// The best constants `c̄_δ` used by the constant arm.
    pub constant_counterterms: Vec<F>,
}

/// Predicted constant-arm variance ratio between two mollification scales:
/// `(log δ_to / log δ_from)²`.
pub fn predicted_blowup_ratio<F: Real>(delta_from: F, delta_to: F) -> F
where
    StandardNormal: Distribution<F>,
{
    let r = delta_to.ln() / delta_from.ln();
    r * r
}

/// The variance blow-up experiment.
///
/// For each replica the noise builds both the equation data and the
/// coefficient field; the smeared renormalized product is evaluated under
/// the best deterministic constant counterterm and under the matched
/// counterterm function. In the correlated regime, constant-arm variances
/// grow quadratically in `log δ`; the report carries the directly measured
/// counterterm-pairing variance and the leading-order prediction from the
/// covariance of `1/√det a` so the growth law can be cross-checked two
/// ways. With uncorrelated coefficients the counterterm is deterministic,
/// the two arms coincide, and the targets vanish — a useful control.
pub fn blowup_experiment<F: Real>(setup: &ProbeSetup<F>) -> Result<BlowupReport<F>>
where
    StandardNormal: Distribution<F>,
{
    setup.validate()?;
    let engine = CountertermEngine::new(setup.shape);
    let kind = CountertermKind::NoiseSquare;
    let mut sp = Spectral2D::new(setup.grid.n());
    let tfs = setup.test_functions()?;
    let cfg = setup.solver_config()?;
    let mollifiers: Vec<_> = setup
        .deltas
        .iter()
        .map(|&d| make_mollifier(setup.grid, d, setup.shape))
        .collect::<Result<_>>()?;
    let mut constants = Vec::with_capacity(setup.deltas.len());
    for &delta in &setup.deltas {
        constants.push(pilot_constant(setup, &engine, kind, delta, &mut sp)?);
    }

    let nd = setup.deltas.len();
    let nl = setup.lambdas.len();
    let mut raw_sum = vec![F::zero(); nd * nl];
    let mut raw_sumsq = vec![F::zero(); nd * nl];
    let mut func_sum = vec![F::zero(); nd * nl];
    let mut func_sumsq = vec![F::zero(); nd * nl];
    let mut chat_sum = vec![F::zero(); nd * nl];
    let mut chat_sumsq = vec![F::zero(); nd * nl];
    let mut amp_sum = vec![F::zero(); nl];
    let mut amp_sumsq = vec![F::zero(); nl];
    for r in 0..setup.replicas {
        let seed = derive_seed(setup.master_seed, r as u64);
        let xi = sample_white_noise::<F>(setup.grid, seed);
        let a = setup.coefficients(&xi, &mut sp)?;
        let s_field = a.inv_sqrt_det_field();
        for (l, tf) in tfs.iter().enumerate() {
            let y = tf.pair(&s_field)?;
            amp_sum[l] += y;
            amp_sumsq[l] += y * y;
        }
        for (d, moll) in mollifiers.iter().enumerate() {
            let delta = setup.deltas[d];
            let xi_d = moll.convolve(&mut sp, &xi)?;
            let meta = TrajectoryMeta::new(
                "blowup-probe",
                delta.to_f64_lossy(),
                seed,
                CountertermMode::Function,
            );
            let traj = solve_linear_she(&a, &xi_d, &cfg, meta)?;
            let product = traj.final_field().zip_map(&xi_d, |uv, xv| uv * xv)?;
            let chat = engine
                .field(&a, kind, delta, CountertermMethod::EtaTable { nodes: ETA_NODES })?
                .field;
            for (l, tf) in tfs.iter().enumerate() {
                let x_raw = tf.pair(&product)?;
                let x_chat = tf.pair(&chat)?;
                let x_func = x_raw - x_chat;
                let i = d * nl + l;
                raw_sum[i] += x_raw;
                raw_sumsq[i] += x_raw * x_raw;
                func_sum[i] += x_func;
                func_sumsq[i] += x_func * x_func;
                chat_sum[i] += x_chat;
                chat_sumsq[i] += x_chat * x_chat;
            }
        }
    }

    let rf = F::from_usize(setup.replicas).unwrap();
    let se_factor = (F::from_f64_lit(2.0) / F::from_usize(setup.replicas - 1).unwrap()).sqrt();
    let stats = |sum: &[F], sumsq: &[F]| {
        let mut mean = vec![vec![F::zero(); nl]; nd];
        let mut var = vec![vec![F::zero(); nl]; nd];
        let mut se = vec![vec![F::zero(); nl]; nd];
        for d in 0..nd {
            for l in 0..nl {
                let i = d * nl + l;
                let m = sum[i] / rf;
                let v = (sumsq[i] / rf - m * m).max(F::zero());
                mean[d][l] = m;
                var[d][l] = v;
                se[d][l] = v * se_factor;
            }
        }
        (mean, var, se)
    };

    let (raw_mean, raw_var, raw_se) = stats(&raw_sum, &raw_sumsq);
    let (func_mean, func_var, func_se) = stats(&func_sum, &func_sumsq);
    let (_, chat_var, _) = stats(&chat_sum, &chat_sumsq);

    // The constant arm shifts the raw observable by c̄_δ: identical variance,
    // mean lowered by the constant (the test functions have unit mass).
    let mut const_mean = raw_mean;
    for (d, row) in const_mean.iter_mut().enumerate() {
        for m in row.iter_mut() {
            *m -= constants[d];
        }
    }

    let amplitude_variance: Vec<F> = (0..nl)
        .map(|l| {
            let m = amp_sum[l] / rf;
            (amp_sumsq[l] / rf - m * m).max(F::zero())
        })
        .collect();
    let four_pi_sq = F::from_f64_lit(4.0) * F::PI() * F::PI();
    let quadratic_target: Vec<Vec<F>> = setup
        .deltas
        .iter()
        .map(|&delta| {
            let lg = delta.ln();
            amplitude_variance
                .iter()
                .map(|&v| lg * lg / four_pi_sq * v)
                .collect()
        })
        .collect();

    Ok(BlowupReport {
        deltas: setup.deltas.clone(),
        lambdas: setup.lambdas.clone(),
        replicas: setup.replicas,
        constant_arm: BlowupArm {
            mean: const_mean,
            variance: raw_var,
            variance_se: raw_se,
        },
        function_arm: BlowupArm {
            mean: func_mean,
            variance: func_var,
            variance_se: func_se,
        },
        counterterm_variance: chat_var,
        amplitude_variance,
        quadratic_target,
        constant_counterterms: constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tanh_map() -> MatrixMap<f64> {
        MatrixMap::TanhFamily {
            lambda0: 1.0,
            gain: 0.6,
            beta: 0.4,
            theta: 0.3,
        }
    }

    #[test]
    fn test_function_mass_translation_and_resolution() {
        let grid = Grid2D::new(64).unwrap();
        let tf = TestFunction::new(grid, (10, 20), 0.25, MollifierShape::StandardBump).unwrap();
        // Exact unit mass.
        let one = Field2D::constant(grid, 3.7_f64);
        assert_relative_eq!(tf.pair(&one).unwrap(), 3.7, max_relative = 1e-12);
        // Translation equivariance: shifting field and center by whole cells
        // reproduces the pairing to machine precision.
        let field = Field2D::from_fn(grid, |x, y| {
            (2.0 * std::f64::consts::PI * x).sin() + 0.5 * (4.0 * std::f64::consts::PI * y).cos()
        });
        let (sx, sy) = (13usize, 5usize);
        let mut shifted = Field2D::zeros(grid);
        for iy in 0..grid.n() {
            for ix in 0..grid.n() {
                shifted.set(ix, iy, field.at((ix + grid.n() - sx) % grid.n(), (iy + grid.n() - sy) % grid.n()));
            }
        }
        let tf2 = TestFunction::new(grid, ((10 + sx) % grid.n(), (20 + sy) % grid.n()), 0.25, MollifierShape::StandardBump)
            .unwrap();
        let p1 = tf.pair(&field).unwrap();
        let p2 = tf2.pair(&shifted).unwrap();
        assert!((p1 - p2).abs() < 1e-13, "equivariance broken: {p1} vs {p2}");
        // Resolution limit.
        assert!(matches!(
            TestFunction::new(grid, (0, 0), 0.03, MollifierShape::StandardBump),
            Err(Error::UnresolvableScale { .. })
        ));
        assert!(matches!(
            TestFunction::new(grid, (0, 0), 1.5, MollifierShape::StandardBump),
            Err(Error::ConfigError { .. })
        ));
    }

    #[test]
    fn self_pairing_matches_continuum_quadrature() {
        // (φ^λ, φ^λ) = λ^{−2}‖φ̂‖²_{L²} for the unit-mass continuum profile
        // φ̂ = profile/∫profile; radial quadrature supplies the oracle.
        let shape = MollifierShape::StandardBump;
        let m = 20_000;
        let (mut num, mut den) = (0.0_f64, 0.0_f64);
        for k in 0..m {
            let r = (k as f64 + 0.5) / m as f64;
            let p: f64 = shape.profile(r);
            num += p * p * r;
            den += p * r;
        }
        let norm_sq = (2.0 * std::f64::consts::PI * num / m as f64)
            / (2.0 * std::f64::consts::PI * den / m as f64).powi(2);
        let grid = Grid2D::new(128).unwrap();
        let lambda = 0.25_f64;
        let tf = TestFunction::new(grid, (64, 64), lambda, shape).unwrap();
        let self_pair = tf.pair(tf.weights()).unwrap();
        assert_relative_eq!(self_pair, norm_sq / (lambda * lambda), max_relative = 0.01);
    }

    #[test]
    fn exponent_regression_recovers_synthetic_slope() {
        let beta = -0.37_f64;
        let q = 2u32;
        let lambdas = [0.25, 0.125, 0.0625, 0.03125];
        let moments: Vec<f64> = lambdas
            .iter()
            .map(|&l: &f64| 1.9 * l.powf(beta * q as f64))
            .collect();
        let fit = fit_exponent(&lambdas, &moments, &[0.0; 4], q).unwrap();
        assert!((fit.exponent - beta).abs() < 1e-12);
        // With standard errors the interval is positive and the estimate is
        // unchanged on exact power-law data.
        let ses: Vec<f64> = moments.iter().map(|m| 0.05 * m).collect();
        let fit = fit_exponent(&lambdas, &moments, &ses, q).unwrap();
        assert!((fit.exponent - beta).abs() < 1e-12);
        assert!(fit.ci_half_width > 0.0);
        assert!(fit_exponent(&lambdas[..1], &moments[..1], &[0.0], q).is_err());
    }

    fn small_setup(correlated: bool) -> ProbeSetup<f64> {
        ProbeSetup {
            grid: Grid2D::new(32).unwrap(),
            shape: MollifierShape::StandardBump,
            map: tanh_map(),
            correlation: correlated.then(|| CorrelationSpec {
                amplitude: 1.0,
                kernel_scale: 0.25,
                mu: 0.0,
            }),
            lambdas: vec![0.25, 0.125],
            deltas: vec![0.25, 0.0625],
            q: 2,
            replicas: 100,
            master_seed: 2024,
            solve_nt: 16,
            center: (16, 16),
        }
    }

    #[test]
    fn noise_probe_counterterm_off_diverges_and_function_mode_is_tamer() {
        let setup = small_setup(false);
        let with = estimate_xi_ixi_moments(&setup, CountertermMode::Function).unwrap();
        let without = estimate_xi_ixi_moments(&setup, CountertermMode::Off).unwrap();
        assert_eq!(with.points.len(), 4);
        let lam = setup.lambdas[0];
        let growth = |s: &MomentStudy<f64>| {
            s.moment_at(lam, setup.deltas[1]).unwrap().moment
                / s.moment_at(lam, setup.deltas[0]).unwrap().moment
        };
        // Shrinking δ fourfold inflates the unrenormalized second moment
        // markedly. Both studies share the replica samples (the probe values
        // differ exactly by the counterterm shift), so the subtracted object
        // must sit strictly below the ablation in level and growth.
        assert!(
            growth(&without) > 1.15,
            "no-counterterm ratio {} not divergent",
            growth(&without)
        );
        assert!(
            growth(&without) > growth(&with),
            "ablation ratio {} vs function ratio {}",
            growth(&without),
            growth(&with)
        );
        let level = |s: &MomentStudy<f64>| s.moment_at(lam, setup.deltas[1]).unwrap().moment;
        assert!(
            level(&without) > level(&with),
            "ablation moment {} not above renormalized moment {}",
            level(&without),
            level(&with)
        );
        assert!(with.fit.is_some());
    }

    #[test]
    fn constant_and_function_modes_coincide_for_frozen_coefficients() {
        // With deterministic coefficients the counterterm field is spatially
        // constant, so the best constant equals the function values and the
        // two studies agree replica by replica.
        let setup = small_setup(false);
        let f = estimate_xi_ixi_moments(&setup, CountertermMode::Function).unwrap();
        let c = estimate_xi_ixi_moments(&setup, CountertermMode::Constant).unwrap();
        for (pf, pc) in f.points.iter().zip(&c.points) {
            assert_relative_eq!(pf.moment, pc.moment, max_relative = 1e-10);
        }
    }

    #[test]
    fn gradient_probe_offdiagonal_counterterm_is_negligible_for_identity() {
        let engine = CountertermEngine::<f64>::new(MollifierShape::StandardBump);
        let eye = SymMat2 {
            a11: 1.0,
            a12: 0.0,
            a22: 1.0,
        };
        let c12 = engine.grad_square_at(0.0625, &eye).unwrap();
        assert!(
            c12.a12.abs() < 0.05 * c12.a11.abs(),
            "off-diagonal {} vs diagonal {}",
            c12.a12,
            c12.a11
        );
        let mut setup = small_setup(false);
        setup.deltas = vec![0.125];
        let study =
            estimate_gradient_product_moments(&setup, 1, 2, CountertermMode::Function).unwrap();
        assert!(study.fit.is_some());
        assert!(study.points.iter().all(|p| p.moment.is_finite()));
        assert!(matches!(
            estimate_gradient_product_moments(&setup, 0, 1, CountertermMode::Function),
            Err(Error::ConfigError { .. })
        ));
    }

    #[test]
    fn blowup_constant_arm_grows_and_function_arm_does_not() {
        let mut setup = small_setup(true);
        setup.replicas = 160;
        setup.lambdas = vec![0.25];
        let report = blowup_experiment(&setup).unwrap();
        let vc0 = report.constant_arm.variance[0][0];
        let vc1 = report.constant_arm.variance[1][0];
        let vf0 = report.function_arm.variance[0][0];
        let vf1 = report.function_arm.variance[1][0];
        // Constant-arm variance increases under δ-halving and exceeds the
        // function arm's; the function arm stays comparatively flat.
        assert!(vc1 > vc0, "constant arm did not grow: {vc0} → {vc1}");
        assert!(vc1 > vf1, "constant arm {vc1} not above function arm {vf1}");
        let growth_c = vc1 / vc0;
        let growth_f = vf1 / vf0;
        assert!(
            growth_c > growth_f,
            "constant growth {growth_c} vs function growth {growth_f}"
        );
        // The measured counterterm-pairing variance and the leading-order
        // prediction agree in order of magnitude at the smallest δ.
        let measured = report.counterterm_variance[1][0];
        let target = report.quadratic_target[1][0];
        assert!(
            measured > 0.3 * target && measured < 3.0 * target,
            "mismatch variance {measured} vs quadratic target {target}"
        );
        // With uncorrelated coefficients the counterterm is deterministic:
        // the two arms coincide and the quadratic target vanishes.
        let mut frozen = small_setup(false);
        frozen.lambdas = vec![0.25];
        let control = blowup_experiment(&frozen).unwrap();
        for d in 0..2 {
            assert_relative_eq!(
                control.constant_arm.variance[d][0],
                control.function_arm.variance[d][0],
                max_relative = 1e-10
            );
            assert_relative_eq!(
                control.constant_arm.mean[d][0],
                control.function_arm.mean[d][0],
                epsilon = 1e-10
            );
            assert!(control.quadratic_target[d][0].abs() < 1e-12);
        }
    }

    #[test]
    fn wick_power_probe_runs_and_ablation_diverges() {
        let grid = Grid2D::new(32).unwrap();
        let setup = SpaceTimeProbeSetup {
            grid,
            horizon: 0.4,
            nt: 128,
            shape: MollifierShape::StandardBump,
            matrix: SymMat2 {
                a11: 1.0,
                a12: 0.0,
                a22: 1.0,
            },
            lambdas: vec![0.25, 0.176776695],
            deltas: vec![0.125, 0.0883883476],
            q: 2,
            replicas: 100,
            master_seed: 77,
            center_time_fraction: 0.5,
            center: (16, 16),
            degree: 2,
        };
        let s2 = setup;
        let with = hermite_power_moment_study(&s2, CountertermMode::Function).unwrap();
        let without = hermite_power_moment_study(&s2, CountertermMode::Off).unwrap();
        let lam = s2.lambdas[0];
        let g_with = with.moment_at(lam, s2.deltas[1]).unwrap().moment
            / with.moment_at(lam, s2.deltas[0]).unwrap().moment;
        let g_without = without.moment_at(lam, s2.deltas[1]).unwrap().moment
            / without.moment_at(lam, s2.deltas[0]).unwrap().moment;
        assert!(
            g_without > g_with,
            "ablation growth {g_without} not above renormalized growth {g_with}"
        );
        assert!(with.fit.is_some());
    }

    #[test]
    fn setup_validation_rejects_bad_configurations() {
        let mut setup = small_setup(false);
        setup.replicas = 50;
        assert!(matches!(
            estimate_xi_ixi_moments(&setup, CountertermMode::Off),
            Err(Error::ConfigError { .. })
        ));
        let mut setup = small_setup(false);
        setup.deltas = vec![0.01];
        assert!(matches!(
            estimate_xi_ixi_moments(&setup, CountertermMode::Off),
            Err(Error::UnresolvableScale { .. })
        ));
    }
}
