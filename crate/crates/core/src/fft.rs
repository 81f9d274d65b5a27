//! Two-dimensional FFT plumbing for periodic fields.
//!
//! Wraps `rustfft` plans for one grid size and provides row-column 2D
//! transforms, real↔complex packing (including the two-reals-in-one-pass
//! trick used by the solver's derivative evaluations), and spectral
//! multipliers for derivatives on the unit torus.
//!
//! Conventions: forward transform is the unnormalized DFT; the inverse divides
//! by `n²`. Mode `k ∈ {0..n−1}` represents the integer frequency `k` for
//! `k ≤ n/2` and `k − n` above. A field `e^{2πi k·x}` has all mass on mode `k`.

use crate::scalar::Real;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Cached 2D FFT plans and scratch space for an `n × n` grid.
pub struct Spectral2D<F: Real>
where
    StandardNormal: Distribution<F>,
{
    n: usize,
    fwd: Arc<dyn Fft<F>>,
    inv: Arc<dyn Fft<F>>,
    scratch: Vec<Complex<F>>,
    tmp: Vec<Complex<F>>,
}

impl<F: Real> Spectral2D<F>
where
    StandardNormal: Distribution<F>,
{
    /// Build plans for an `n × n` grid (`n` a power of two).
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Spectral2D {
            n,
            fwd,
            inv,
            scratch: vec![Complex::new(F::zero(), F::zero()); scratch_len],
            tmp: vec![Complex::new(F::zero(), F::zero()); n * n],
        }
    }

    /// Grid size per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    fn transpose(&mut self, data: &mut [Complex<F>]) {
        let n = self.n;
        for iy in 0..n {
            for ix in 0..n {
                self.tmp[ix * n + iy] = data[iy * n + ix];
            }
        }
        data.copy_from_slice(&self.tmp);
    }

    /// In-place unnormalized 2D forward transform of a row-major buffer.
    pub fn forward2d(&mut self, data: &mut [Complex<F>]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        let fwd = self.fwd.clone();
        fwd.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
        fwd.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
    }

    /// In-place 2D inverse transform, normalized by `1/n²`.
    pub fn inverse2d(&mut self, data: &mut [Complex<F>]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        let inv = self.inv.clone();
        inv.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
        inv.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
        let norm = F::one() / F::from_f64_lit((self.n * self.n) as f64);
        for v in data.iter_mut() {
            *v = *v * norm;
        }
    }

    /// Forward transform of a real field into a fresh complex spectrum.
    pub fn forward_real(&mut self, values: &[F]) -> Vec<Complex<F>> {
        let mut buf: Vec<Complex<F>> = values
            .iter()
            .map(|&v| Complex::new(v, F::zero()))
            .collect();
        self.forward2d(&mut buf);
        buf
    }

    /// Inverse transform of a Hermitian spectrum, keeping the real part.
    pub fn inverse_to_real(&mut self, spectrum: &[Complex<F>]) -> Vec<F> {
        let mut buf = spectrum.to_vec();
        self.inverse2d(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Inverse-transform two Hermitian spectra in a single complex pass.
    ///
    /// For real target fields `p, q` the spectrum of `p + i q` is
    /// `P + i Q`, so one inverse transform recovers both: `p = Re`, `q = Im`.
    pub fn inverse_pair_to_real(
        &mut self,
        spec_p: &[Complex<F>],
        spec_q: &[Complex<F>],
        out_p: &mut [F],
        out_q: &mut [F],
    ) {
        debug_assert_eq!(spec_p.len(), spec_q.len());
        let mut buf: Vec<Complex<F>> = spec_p
            .iter()
            .zip(spec_q)
            .map(|(&p, &q)| Complex::new(p.re - q.im, p.im + q.re))
            .collect();
        self.inverse2d(&mut buf);
        for ((b, op), oq) in buf.iter().zip(out_p.iter_mut()).zip(out_q.iter_mut()) {
            *op = b.re;
            *oq = b.im;
        }
    }

    /// Circular convolution of two real fields with the grid volume element:
    /// `(f ∗ k)(x) = Σ_z f(z) k(x−z) · spacing²`.
    pub fn convolve_real(&mut self, f: &[F], kernel_spectrum: &[Complex<F>], cell_volume: F) -> Vec<F> {
        let mut spec = self.forward_real(f);
        for (s, &k) in spec.iter_mut().zip(kernel_spectrum) {
            *s = *s * k * cell_volume;
        }
        self.inverse_to_real(&spec)
    }
}

/// Signed integer frequency of mode `k` on an `n`-grid (`k − n` above `n/2`).
#[inline]
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
