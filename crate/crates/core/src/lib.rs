//! Numerical and combinatorial laboratory for renormalized singular SPDEs whose
//! elliptic coefficient field is correlated with the driving noise.
//!
//! The crate provides, as composable libraries:
//!
//! - periodic grids, white-noise sampling and mollification on the unit torus
//!   ([`grid`], [`noise`], [`mollifier`]);
//! - random elliptic coefficient fields `a = A(σ∗ξ + μ)` ([`coeff`]);
//! - frozen (constant-coefficient) heat kernels, their time-integrated Green
//!   functions, and the log-divergent renormalization functions built from them
//!   ([`kernels`], [`special`]);
//! - generalized Hermite polynomials, Wick products and their exact identities
//!   ([`hermite`], [`wick`], [`poly`]);
//! - restricted pairing enumeration and Gaussian integration-by-parts
//!   expansions ([`pairings`], [`ibp`]);
//! - semi-implicit spectral solvers for the linear stochastic heat equation and
//!   the renormalized equations ([`solver`]);
//! - Monte-Carlo probes of smeared stochastic objects, including the
//!   deterministic-vs-function counterterm variance dichotomy ([`estimator`]);
//! - an exact-rational power-counting checker for labelled directed multigraphs
//!   ([`graphs`]);
//! - deterministic experiment plumbing: seed derivation, config hashing, CSV
//!   and JSON emission ([`report`]).
//!
//! Floating-point numerics are generic over the [`scalar::Real`] trait
//! (`f32`/`f64`); combinatorial and polynomial algebra is generic over a ring
//! scalar so it also runs in exact rational arithmetic. The type aliases below
//! fix the `f64` instantiation used by the command-line tools.

pub mod coeff;
pub mod error;
pub mod estimator;
pub mod fft;
pub mod graphs;
pub mod grid;
pub mod hermite;
pub mod ibp;
pub mod kernels;
pub mod mollifier;
pub mod noise;
pub mod pairings;
pub mod poly;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod special;
pub mod wick;

pub use error::{Error, Result};

/// Default floating-point scalar used by the command-line tools.
pub type Real = f64;
/// Spatial field over [`Real`].
pub type Field2 = grid::Field2D<Real>;
/// Space-time field over [`Real`].
pub type SpaceTimeField2 = grid::SpaceTimeField<Real>;
/// Coefficient field over [`Real`].
pub type CoeffField2 = coeff::CoefficientField<Real>;
/// Counterterm field over [`Real`].
pub type CountertermField2 = kernels::CountertermField<Real>;
/// Solution trajectory over [`Real`].
pub type Trajectory2 = solver::SolutionTrajectory<Real>;
/// Moment study over [`Real`].
pub type MomentStudy2 = estimator::MomentStudy<Real>;
/// Exact rational scalar used by the graph checker and exact algebra modes.
pub type Rational = num::BigRational;
