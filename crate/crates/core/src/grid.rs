//! Periodic grids on the unit torus and the field containers living on them.
//!
//! The spatial domain is the two-dimensional unit torus, discretized by an
//! `n × n` grid with `n` a power of two (so spectral transforms apply). The
//! space-time domain is a time interval `[t0, t1]` sliced uniformly, carrying
//! the same spatial grid; white noise lives per cell, fields per slice.
//!
//! Grid geometry is kept in `f64`; field values are generic over the
//! [`Real`](crate::scalar::Real) scalar.

use crate::error::{Error, Result};
use crate::scalar::Real;
use rand_distr::{Distribution, StandardNormal};

/// Uniform periodic grid on the unit torus `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n: usize,
    extent: f64,
}

impl Grid2D {
    /// Create a grid with `n` points per axis on the unit torus.
    ///
    /// `n` must be a power of two and at least 8.
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and ≥ 8"
            )));
        }
        Ok(Grid2D { n, extent: 1.0 })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Physical side length (fixed to 1, the unit torus).
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Mesh width `extent / n`.
    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Cell area `spacing²`, the discrete volume element.
    pub fn cell_volume(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// Total number of grid points `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// Whether the grid is empty (never, for a valid grid).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the point `(ix, iy)` (row-major in `iy`).
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.n && iy < self.n);
        iy * self.n + ix
    }

    /// Flat index with periodic wrapping of possibly negative coordinates.
    #[inline]
    pub fn idx_wrap(&self, ix: isize, iy: isize) -> usize {
        let n = self.n as isize;
        let ix = ix.rem_euclid(n) as usize;
        let iy = iy.rem_euclid(n) as usize;
        iy * self.n + ix
    }

    /// Physical coordinate of index `i` along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Signed periodic displacement of index `i`, in `[-extent/2, extent/2)`.
    ///
    /// Used to center kernels at the origin: index `i` represents the physical
    /// offset `i·spacing` wrapped to the symmetric interval.
    #[inline]
    pub fn signed_coord(&self, i: usize) -> f64 {
        let x = self.coord(i);
        if x >= self.extent / 2.0 {
            x - self.extent
        } else {
            x
        }
    }
}

/// Space-time grid: a time interval sliced uniformly over a spatial [`Grid2D`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    grid: Grid2D,
    t0: f64,
    t1: f64,
    nt: usize,
}

impl SpaceTimeGrid {
    /// Create a space-time grid with `nt` uniform slices of `[t0, t1]`.
    pub fn new(grid: Grid2D, t0: f64, t1: f64, nt: usize) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::InvalidGrid(format!(
                "time interval [{t0}, {t1}] is empty"
            )));
        }
        if nt < 2 {
            return Err(Error::InvalidGrid(format!("nt = {nt} must be ≥ 2")));
        }
        Ok(SpaceTimeGrid { grid, t0, t1, nt })
    }

    /// Underlying spatial grid.
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Start of the time interval.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// End of the time interval.
    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Number of time slices.
    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Time step `(t1 − t0)/nt`.
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.nt as f64
    }

    /// Time of slice `k` (left endpoint convention).
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    /// Index of the slice whose time is closest to `t`.
    pub fn slice_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt()).round() as isize;
        k.clamp(0, self.nt as isize - 1) as usize
    }

    /// Ratio `dt / spacing²`, the parabolic-consistency diagnostic recorded in
    /// experiment configs (≈ 1 means the grid is parabolically balanced).
    pub fn parabolic_ratio(&self) -> f64 {
        self.dt() / self.grid.cell_volume()
    }

    /// Cell volume `dt · spacing²`.
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.grid.cell_volume()
    }

    /// Total number of space-time points.
    pub fn len(&self) -> usize {
        self.nt * self.grid.len()
    }

    /// Whether the grid is empty (never, for a valid grid).
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Real-valued samples on a [`Grid2D`]: noises, solutions, counterterms.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D<F> {
    grid: Grid2D,
    values: Vec<F>,
}

impl<F: Real> Field2D<F>
where
    StandardNormal: Distribution<F>,
{
    /// Zero field.
    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![F::zero(); grid.len()],
        }
    }

    /// Constant field.
    pub fn constant(grid: Grid2D, c: F) -> Self {
        Field2D {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Field from a function of the physical coordinates `(x, y) ∈ [0,1)²`.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> F) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..n {
            for ix in 0..n {
                values.push(f(grid.coord(ix), grid.coord(iy)));
            }
        }
        Field2D { grid, values }
    }

    /// Field from raw values (row-major, length `n²`).
    pub fn from_values(grid: Grid2D, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field2D { grid, values })
    }

    /// The grid this field lives on.
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Raw values, row-major.
    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Mutable raw values.
    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    /// Consume into raw values.
    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    /// Value at `(ix, iy)`.
    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> F {
        self.values[self.grid.idx(ix, iy)]
    }

    /// Set the value at `(ix, iy)`.
    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: F) {
        let i = self.grid.idx(ix, iy);
        self.values[i] = v;
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(F) -> F + Sync) -> Self {
        Field2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Field2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Spatial mean (plain average over grid points).
    pub fn mean(&self) -> F {
        let sum: F = self.values.iter().copied().sum();
        sum / F::from_f64_lit(self.grid.len() as f64)
    }

    /// Discrete integral `Σ v · spacing²`.
    pub fn integral(&self) -> F {
        let sum: F = self.values.iter().copied().sum();
        sum * F::from_f64_lit(self.grid.cell_volume())
    }

    /// Sup norm.
    pub fn sup_norm(&self) -> F {
        self.values
            .iter()
            .fold(F::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Discrete `L²` norm `(Σ v² · spacing²)^{1/2}`.
    pub fn l2_norm(&self) -> F {
        let s: F = self.values.iter().map(|&v| v * v).sum();
        (s * F::from_f64_lit(self.grid.cell_volume())).sqrt()
    }

    /// True if every value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Error unless both fields share a grid.
    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{}×{} vs {}×{}",
                self.grid.n(),
                self.grid.n(),
                other.grid.n(),
                other.grid.n()
            )));
        }
        Ok(())
    }

    /// In-place scaled addition `self += c · other`.
    pub fn axpy(&mut self, c: F, other: &Self) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }
}

/// Real-valued samples on a [`SpaceTimeGrid`], stored slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<F> {
    stgrid: SpaceTimeGrid,
    values: Vec<F>,
}

impl<F: Real> SpaceTimeField<F>
where
    StandardNormal: Distribution<F>,
{
    /// Zero field.
    pub fn zeros(stgrid: SpaceTimeGrid) -> Self {
        SpaceTimeField {
            stgrid,
            values: vec![F::zero(); stgrid.len()],
        }
    }

    /// Field from raw values (slice-major, each slice row-major, length `nt·n²`).
    pub fn from_values(stgrid: SpaceTimeGrid, values: Vec<F>) -> Result<Self> {
        if values.len() != stgrid.len() {
            return Err(Error::DimensionMismatch(format!(
                "space-time field has {} values, grid needs {}",
                values.len(),
                stgrid.len()
            )));
        }
        Ok(SpaceTimeField { stgrid, values })
    }

    /// The space-time grid.
    pub fn stgrid(&self) -> SpaceTimeGrid {
        self.stgrid
    }

    /// All values, slice-major.
    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Mutable values.
    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    /// Borrow slice `k` as a flat spatial array.
    pub fn slice(&self, k: usize) -> &[F] {
        let m = self.stgrid.grid().len();
        &self.values[k * m..(k + 1) * m]
    }

    /// Mutable borrow of slice `k`.
    pub fn slice_mut(&mut self, k: usize) -> &mut [F] {
        let m = self.stgrid.grid().len();
        &mut self.values[k * m..(k + 1) * m]
    }

    /// Copy slice `k` out as a [`Field2D`].
    pub fn slice_field(&self, k: usize) -> Field2D<F> {
        Field2D {
            grid: self.stgrid.grid(),
            values: self.slice(k).to_vec(),
        }
    }

    /// Overwrite slice `k` from a spatial field.
    pub fn set_slice(&mut self, k: usize, f: &Field2D<F>) -> Result<()> {
        if f.grid() != self.stgrid.grid() {
            return Err(Error::GridMismatch(
                "slice grid differs from space-time grid".into(),
            ));
        }
        self.slice_mut(k).copy_from_slice(f.values());
        Ok(())
    }

    /// True if every value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Value at `(k, ix, iy)`.
    #[inline]
    pub fn at(&self, k: usize, ix: usize, iy: usize) -> F {
        self.values[k * self.stgrid.grid().len() + self.stgrid.grid().idx(ix, iy)]
    }
}
