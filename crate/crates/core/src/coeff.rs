//! Random elliptic coefficient fields correlated with the driving noise.
//!
//! The coefficient field is `a(x) = A(h(x))` where `h = amplitude·(ρ^ℓ ∗ ξ) + μ`
//! smooths the *same* white noise that drives the equation (at a fixed scale
//! `ℓ` independent of the mollification scale `δ`), and `A` is a smooth map
//! from ℝ into symmetric positive-definite 2×2 matrices with uniform
//! ellipticity bounds.
//!
//! The built-in family is
//! `A(η) = λ₀·I + g·s(η)·R(φ(η)) diag(1, 1+β) R(φ(η))ᵀ` with
//! `s(η) = (1+tanh η)/2` and rotation angle `φ(η) = θ·tanh η`; its eigenvalues
//! are `λ₀ + g·s` and `λ₀ + g·s(1+β)`, so `λ₀ ≤ λ ≤ λ₀ + g(1+β)` uniformly.
//! Setting `g = 0` recovers the constant isotropic case `a ≡ λ₀ I`; a fixed
//! anisotropic matrix is available via [`MatrixMap::Constant`].

use crate::error::{Error, Result};
use crate::fft::Spectral2D;
use crate::grid::{Field2D, Grid2D};
use crate::mollifier::{make_mollifier, MollifierShape};
use crate::scalar::Real;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Symmetric 2×2 matrix, stored by its three independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2<F> {
    pub a11: F,
    pub a12: F,
    pub a22: F,
}

impl<F: Real> SymMat2<F>
where
    StandardNormal: Distribution<F>,
{
    /// `c · I`.
    pub fn scaled_identity(c: F) -> Self {
        SymMat2 {
            a11: c,
            a12: F::zero(),
            a22: c,
        }
    }

    /// Determinant.
    pub fn det(&self) -> F {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// Trace.
    pub fn trace(&self) -> F {
        self.a11 + self.a22
    }

    /// True if symmetric positive definite.
    pub fn is_spd(&self) -> bool {
        self.a11 > F::zero() && self.det() > F::zero()
    }

    /// Inverse; errors if not positive definite.
    pub fn inverse(&self) -> Result<SymMat2<F>> {
        let d = self.det();
        if !self.is_spd() {
            return Err(Error::EllipticityViolation {
                context: "matrix inverse".into(),
                detail: format!(
                    "matrix [[{}, {}], [{}, {}]] is not positive definite (det = {})",
                    self.a11, self.a12, self.a12, self.a22, d
                ),
            });
        }
        Ok(SymMat2 {
            a11: self.a22 / d,
            a12: -self.a12 / d,
            a22: self.a11 / d,
        })
    }

    /// Quadratic form `y · M y`.
    pub fn quad_form(&self, y: [F; 2]) -> F {
        self.a11 * y[0] * y[0]
            + F::from_f64_lit(2.0) * self.a12 * y[0] * y[1]
            + self.a22 * y[1] * y[1]
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, y: [F; 2]) -> [F; 2] {
        [
            self.a11 * y[0] + self.a12 * y[1],
            self.a12 * y[0] + self.a22 * y[1],
        ]
    }

    /// Eigenvalues `(λ_min, λ_max)`.
    pub fn eigenvalues(&self) -> (F, F) {
        let half = F::from_f64_lit(0.5);
        let m = self.trace() * half;
        let d = ((self.a11 - self.a22) * (self.a11 - self.a22) * half * half
            + self.a12 * self.a12)
            .sqrt();
        (m - d, m + d)
    }

    /// Frobenius distance to another matrix.
    pub fn distance(&self, other: &Self) -> F {
        let d11 = self.a11 - other.a11;
        let d12 = self.a12 - other.a12;
        let d22 = self.a22 - other.a22;
        (d11 * d11 + F::from_f64_lit(2.0) * d12 * d12 + d22 * d22).sqrt()
    }
}

/// Smooth map `η ↦ A(η)` into symmetric positive-definite matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatrixMap<F> {
    /// Fixed matrix, independent of `η`.
    Constant { matrix: SymMat2<F> },
    /// `λ₀ I + gain·s(η)·R(θ tanh η) diag(1, 1+β) R(θ tanh η)ᵀ`, `s = (1+tanh η)/2`.
    TanhFamily {
        lambda0: F,
        gain: F,
        beta: F,
        theta: F,
    },
}

impl<F: Real> MatrixMap<F>
where
    StandardNormal: Distribution<F>,
{
    /// Evaluate the map at `η`.
    pub fn eval(&self, eta: F) -> SymMat2<F> {
        match *self {
            MatrixMap::Constant { matrix } => matrix,
            MatrixMap::TanhFamily {
                lambda0,
                gain,
                beta,
                theta,
            } => {
                let th = eta.tanh();
                let s = (F::one() + th) * F::from_f64_lit(0.5);
                let amp = gain * s;
                let phi = theta * th;
                let (c, sn) = (phi.cos(), phi.sin());
                let opb = F::one() + beta;
                SymMat2 {
                    a11: lambda0 + amp * (c * c + opb * sn * sn),
                    a12: -amp * beta * c * sn,
                    a22: lambda0 + amp * (sn * sn + opb * c * c),
                }
            }
        }
    }

    /// Uniform upper bound on the largest eigenvalue over all `η`.
    pub fn lambda_max_bound(&self) -> F {
        match *self {
            MatrixMap::Constant { matrix } => matrix.eigenvalues().1,
            MatrixMap::TanhFamily {
                lambda0,
                gain,
                beta,
                ..
            } => lambda0 + gain * (F::one() + beta),
        }
    }

    /// Uniform lower bound on the smallest eigenvalue over all `η`.
    pub fn lambda_min_bound(&self) -> F {
        match *self {
            MatrixMap::Constant { matrix } => matrix.eigenvalues().0,
            MatrixMap::TanhFamily { lambda0, .. } => lambda0,
        }
    }

    /// True if the map does not actually depend on `η`.
    pub fn is_constant(&self) -> bool {
        match *self {
            MatrixMap::Constant { .. } => true,
            MatrixMap::TanhFamily { gain, .. } => gain == F::zero(),
        }
    }
}

/// A coefficient field `a(x) = A(h(x))` with cached entries and determinant.
#[derive(Debug, Clone)]
pub struct CoefficientField<F: Real>
where
    StandardNormal: Distribution<F>,
{
    grid: Grid2D,
    map: MatrixMap<F>,
    h: Field2D<F>,
    a11: Field2D<F>,
    a12: Field2D<F>,
    a22: Field2D<F>,
    det: Field2D<F>,
    lambda_max: F,
}

impl<F: Real> CoefficientField<F>
where
    StandardNormal: Distribution<F>,
{
    /// Build from an explicit driver field `h` (checks positive definiteness
    /// at every grid point).
    pub fn from_h(h: Field2D<F>, map: MatrixMap<F>) -> Result<Self> {
        let grid = h.grid();
        let n = grid.n();
        let mut a11 = Field2D::zeros(grid);
        let mut a12 = Field2D::zeros(grid);
        let mut a22 = Field2D::zeros(grid);
        let mut det = Field2D::zeros(grid);
        let mut lambda_max = F::zero();
        for iy in 0..n {
            for ix in 0..n {
                let m = map.eval(h.at(ix, iy));
                if !m.is_spd() {
                    return Err(Error::EllipticityViolation {
                        context: format!("grid point ({ix}, {iy})"),
                        detail: format!("A(h) with h = {} has det = {}", h.at(ix, iy), m.det()),
                    });
                }
                a11.set(ix, iy, m.a11);
                a12.set(ix, iy, m.a12);
                a22.set(ix, iy, m.a22);
                det.set(ix, iy, m.det());
                let lm = m.eigenvalues().1;
                if lm > lambda_max {
                    lambda_max = lm;
                }
            }
        }
        Ok(CoefficientField {
            grid,
            map,
            h,
            a11,
            a12,
            a22,
            det,
            lambda_max,
        })
    }

    /// Build a constant field `a ≡ M`.
    pub fn constant(grid: Grid2D, matrix: SymMat2<F>) -> Result<Self> {
        Self::from_h(Field2D::zeros(grid), MatrixMap::Constant { matrix })
    }

    /// Build the noise-correlated field `h = amplitude·(ρ^ℓ ∗ ξ) + μ`,
    /// `a = A(h)`, from the *same* white-noise realization `ξ` that drives the
    /// equation. `kernel_scale` is the fixed smoothing scale `ℓ`.
    pub fn correlated_with_noise(
        xi: &Field2D<F>,
        kernel_scale: F,
        amplitude: F,
        mu: F,
        shape: MollifierShape,
        map: MatrixMap<F>,
        sp: &mut Spectral2D<F>,
    ) -> Result<Self> {
        let moll = make_mollifier(xi.grid(), kernel_scale, shape)?;
        let smoothed = moll.convolve(sp, xi)?;
        let h = smoothed.map(|v| amplitude * v + mu);
        Self::from_h(h, map)
    }

    /// The spatial grid.
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// The matrix map.
    pub fn map(&self) -> &MatrixMap<F> {
        &self.map
    }

    /// The scalar driver field `h`.
    pub fn h(&self) -> &Field2D<F> {
        &self.h
    }

    /// Matrix at a grid point.
    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> SymMat2<F> {
        SymMat2 {
            a11: self.a11.at(ix, iy),
            a12: self.a12.at(ix, iy),
            a22: self.a22.at(ix, iy),
        }
    }

    /// Determinant at a grid point.
    #[inline]
    pub fn det_at(&self, ix: usize, iy: usize) -> F {
        self.det.at(ix, iy)
    }

    /// Cached entry fields `(a₁₁, a₁₂, a₂₂)`.
    pub fn entries(&self) -> (&Field2D<F>, &Field2D<F>, &Field2D<F>) {
        (&self.a11, &self.a12, &self.a22)
    }

    /// Field of `1/√det a(x)` (enters the blow-up constants pointwise).
    pub fn inv_sqrt_det_field(&self) -> Field2D<F> {
        self.det.map(|d| F::one() / d.sqrt())
    }

    /// Largest eigenvalue over the grid (the solver's splitting constant).
    pub fn lambda_max(&self) -> F {
        self.lambda_max
    }

    /// True if `a` is the same matrix at every point.
    pub fn is_constant(&self) -> bool {
        self.map.is_constant()
    }

    /// Range `(min, max)` of the driver field `h` over the grid.
    pub fn h_range(&self) -> (F, F) {
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for &v in self.h.values() {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;

    #[test]
    fn tanh_family_eigenvalues_match_closed_form() {
        let map = MatrixMap::TanhFamily {
            lambda0: 1.0f64,
            gain: 2.0,
            beta: 0.5,
            theta: 0.7,
        };
        for eta in [-3.0, -0.5, 0.0, 0.4, 2.0] {
            let m = map.eval(eta);
            assert!(m.is_spd());
            let s = (1.0 + eta.tanh()) / 2.0;
            let (lo, hi) = m.eigenvalues();
            assert!((lo - (1.0 + 2.0 * s)).abs() < 1e-12, "eta={eta}");
            assert!((hi - (1.0 + 2.0 * s * 1.5)).abs() < 1e-12, "eta={eta}");
            assert!(lo >= map.lambda_min_bound() - 1e-12);
            assert!(hi <= map.lambda_max_bound() + 1e-12);
        }
    }

    #[test]
    fn inverse_and_quad_form_are_consistent() {
        let m = SymMat2 {
            a11: 2.0f64,
            a12: 0.3,
            a22: 1.5,
        };
        let inv = m.inverse().unwrap();
        // M · M⁻¹ = I via the quadratic form on basis vectors.
        let e1 = m.mul_vec([inv.a11, inv.a12]);
        assert!((e1[0] - 1.0).abs() < 1e-14 && e1[1].abs() < 1e-14);
        // q(y) = y·My for a diagonal check.
        assert!((m.quad_form([1.0, 0.0]) - 2.0).abs() < 1e-14);
        assert!((m.quad_form([1.0, 1.0]) - (2.0 + 0.6 + 1.5)).abs() < 1e-14);
    }

    #[test]
    fn non_spd_matrix_is_rejected() {
        let m = SymMat2 {
            a11: 1.0f64,
            a12: 2.0,
            a22: 1.0,
        };
        assert!(!m.is_spd());
        assert!(m.inverse().is_err());
    }

    #[test]
    fn gain_zero_gives_constant_isotropic_field() {
        let grid = Grid2D::new(16).unwrap();
        let xi = sample_white_noise::<f64>(grid, 5);
        let mut sp = Spectral2D::new(16);
        let map = MatrixMap::TanhFamily {
            lambda0: 1.8,
            gain: 0.0,
            beta: 0.5,
            theta: 0.7,
        };
        let cf = CoefficientField::correlated_with_noise(
            &xi,
            0.25,
            1.0,
            0.0,
            MollifierShape::StandardBump,
            map,
            &mut sp,
        )
        .unwrap();
        assert!(cf.is_constant());
        for iy in 0..16 {
            for ix in 0..16 {
                let m = cf.at(ix, iy);
                assert!((m.a11 - 1.8).abs() < 1e-14);
                assert!(m.a12.abs() < 1e-14);
                assert!((m.det() - 1.8 * 1.8).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlated_field_tracks_the_noise() {
        // h is a smoothing of ξ: at matching seeds the field is deterministic
        // and nonconstant when gain > 0.
        let grid = Grid2D::new(32).unwrap();
        let xi = sample_white_noise::<f64>(grid, 11);
        let mut sp = Spectral2D::new(32);
        let map = MatrixMap::TanhFamily {
            lambda0: 1.0,
            gain: 1.0,
            beta: 0.5,
            theta: 0.7,
        };
        let cf = CoefficientField::correlated_with_noise(
            &xi,
            0.25,
            0.5,
            0.0,
            MollifierShape::StandardBump,
            map,
            &mut sp,
        )
        .unwrap();
        let (lo, hi) = cf.h_range();
        assert!(hi > lo, "driver field should be nonconstant");
        assert!(!cf.is_constant());
        // Every point is elliptic within the family bounds.
        for iy in 0..32 {
            for ix in 0..32 {
                let (l, u) = cf.at(ix, iy).eigenvalues();
                assert!(l >= 1.0 - 1e-12 && u <= 1.0 + 1.5 + 1e-12);
            }
        }
    }
}
