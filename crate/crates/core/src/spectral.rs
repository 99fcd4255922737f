//! Fourier collocation machinery on the periodic joint grid: axis-wise FFTs,
//! spectral derivatives, mode truncation and filtering.
//!
//! Differentiation is exact (to rounding) for every resolved mode. The
//! Nyquist mode is zeroed in odd derivatives, which keeps derivatives of real
//! fields real; even derivatives keep it with its full `k^2` weight.
//!
//! All routines are pure with respect to the operator object: `SpectralOps`
//! holds only FFT plans and wavenumber tables and may be shared across
//! threads. Reductions run sequentially so results do not depend on any
//! threading configuration.

use std::ops::Range;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::LatticeGrid;

pub struct SpectralOps {
    grid: LatticeGrid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl SpectralOps {
    pub fn new(grid: &LatticeGrid) -> Self {
        let mut planner = FftPlanner::new();
        let mut forward = Vec::with_capacity(grid.rank());
        let mut inverse = Vec::with_capacity(grid.rank());
        let mut wavenumbers = Vec::with_capacity(grid.rank());
        for axis in 0..grid.rank() {
            let n = grid.shape()[axis];
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
            wavenumbers.push(grid.wavenumbers(axis));
        }
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// In-place FFT along one axis of a row-major flat buffer. The inverse
    /// direction carries the 1/N normalization.
    fn transform_axis(&self, data: &mut [Complex64], axis: usize, inv: bool) {
        let shape = self.grid.shape();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let fft = if inv {
            &self.inverse[axis]
        } else {
            &self.forward[axis]
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let norm = 1.0 / n as f64;

        if inner == 1 {
            // Last axis: lanes are contiguous.
            for lane in data.chunks_exact_mut(n) {
                fft.process_with_scratch(lane, &mut scratch);
                if inv {
                    for v in lane.iter_mut() {
                        *v *= norm;
                    }
                }
            }
            return;
        }

        let mut lane = vec![Complex64::default(); n];
        for o in 0..outer {
            let base_o = o * n * inner;
            for i in 0..inner {
                let base = base_o + i;
                for (j, v) in lane.iter_mut().enumerate() {
                    *v = data[base + j * inner];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (j, v) in lane.iter().enumerate() {
                    data[base + j * inner] = if inv { *v * norm } else { *v };
                }
            }
        }
    }

    /// Forward transform along every axis, in place.
    pub fn forward(&self, field: &mut ArrayD<Complex64>) {
        let data = flat_mut(field);
        for axis in 0..self.grid.rank() {
            self.transform_axis(data, axis, false);
        }
    }

    /// Inverse transform along every axis, in place (normalized).
    pub fn inverse(&self, field: &mut ArrayD<Complex64>) {
        let data = flat_mut(field);
        for axis in 0..self.grid.rank() {
            self.transform_axis(data, axis, true);
        }
    }

    /// First derivative of a complex field along one axis.
    pub fn gradient_axis_complex(
        &self,
        field: &ArrayD<Complex64>,
        axis: usize,
    ) -> ArrayD<Complex64> {
        let mut out = field.clone();
        let shape = self.grid.shape();
        let n = shape[axis];
        {
            let data = flat_mut(&mut out);
            self.transform_axis(data, axis, false);
            let inner: usize = shape[axis + 1..].iter().product();
            let k = &self.wavenumbers[axis];
            for (flat, v) in data.iter_mut().enumerate() {
                let j = (flat / inner) % n;
                // Zero the Nyquist mode: an odd derivative has no consistent
                // sign for it and dropping it keeps real fields real.
                let kj = if j == n / 2 { 0.0 } else { k[j] };
                *v *= Complex64::new(0.0, kj);
            }
            self.transform_axis(data, axis, true);
        }
        out
    }

    /// First derivative of a real field along one axis.
    pub fn gradient_axis(&self, field: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
        let complex = lift(field);
        let d = self.gradient_axis_complex(&complex, axis);
        d.mapv(|z| z.re)
    }

    /// Gradient of a real field: one component per axis.
    pub fn gradient(&self, field: &ArrayD<f64>) -> Vec<ArrayD<f64>> {
        (0..self.grid.rank())
            .map(|axis| self.gradient_axis(field, axis))
            .collect()
    }

    /// Second derivative of a real field along one axis (Nyquist retained).
    pub fn second_derivative_axis(&self, field: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
        let mut work = lift(field);
        let shape = self.grid.shape();
        let n = shape[axis];
        {
            let data = flat_mut(&mut work);
            self.transform_axis(data, axis, false);
            let inner: usize = shape[axis + 1..].iter().product();
            let k = &self.wavenumbers[axis];
            for (flat, v) in data.iter_mut().enumerate() {
                let j = (flat / inner) % n;
                *v *= -k[j] * k[j];
            }
            self.transform_axis(data, axis, true);
        }
        work.mapv(|z| z.re)
    }

    /// Laplacian restricted to a contiguous set of axes, as the ordered sum
    /// of per-axis second derivatives. `laplacian_axes(f, 0..D)` is the full
    /// Laplacian; a particle block uses its own axis range, and the full
    /// operator is the sum of the block operators by construction.
    pub fn laplacian_axes(&self, field: &ArrayD<f64>, axes: Range<usize>) -> ArrayD<f64> {
        let mut out = ArrayD::<f64>::zeros(IxDyn(self.grid.shape()));
        for axis in axes {
            out += &self.second_derivative_axis(field, axis);
        }
        out
    }

    pub fn laplacian(&self, field: &ArrayD<f64>) -> ArrayD<f64> {
        self.laplacian_axes(field, 0..self.grid.rank())
    }

    /// `sum_a k_a^2` over the given axes, tabulated on the full grid in FFT
    /// ordering. Used to build kinetic phase factors.
    pub fn ksq(&self, axes: Range<usize>) -> ArrayD<f64> {
        let shape = self.grid.shape().to_vec();
        let wavenumbers = &self.wavenumbers;
        ArrayD::from_shape_fn(IxDyn(&shape), |idx| {
            axes.clone()
                .map(|a| {
                    let k = wavenumbers[a][idx[a]];
                    k * k
                })
                .sum()
        })
    }

    /// Zero every mode whose index on some axis lies beyond two thirds of the
    /// Nyquist index. Standard truncation for quadratic products.
    pub fn dealias_two_thirds(&self, field: &mut ArrayD<f64>) {
        let mut work = lift(field);
        self.forward(&mut work);
        self.zero_truncated(&mut work);
        self.inverse(&mut work);
        for (dst, src) in field.iter_mut().zip(work.iter()) {
            *dst = src.re;
        }
    }

    fn zero_truncated(&self, spectrum: &mut ArrayD<Complex64>) {
        let shape = self.grid.shape().to_vec();
        let rank = shape.len();
        let data = flat_mut(spectrum);
        let mut inner = vec![1usize; rank];
        for a in (0..rank.saturating_sub(1)).rev() {
            inner[a] = inner[a + 1] * shape[a + 1];
        }
        for (flat, v) in data.iter_mut().enumerate() {
            for a in 0..rank {
                let n = shape[a];
                let j = (flat / inner[a]) % n;
                let f = if j <= n / 2 { j } else { n - j };
                if 3 * f > n {
                    *v = Complex64::default();
                    break;
                }
            }
        }
    }

    /// Mild exponential damping of the top `fraction` of modes on each axis
    /// (`exp(-36 t^8)` ramp). Off by default in the engines; intended for
    /// long runs only.
    pub fn exponential_filter(&self, field: &mut ArrayD<f64>, fraction: f64) {
        let mut work = lift(field);
        self.forward(&mut work);
        let shape = self.grid.shape().to_vec();
        let rank = shape.len();
        let data = flat_mut(&mut work);
        let mut inner = vec![1usize; rank];
        for a in (0..rank.saturating_sub(1)).rev() {
            inner[a] = inner[a + 1] * shape[a + 1];
        }
        let cutoff = 1.0 - fraction;
        for (flat, v) in data.iter_mut().enumerate() {
            let mut factor = 1.0;
            for a in 0..rank {
                let n = shape[a];
                let j = (flat / inner[a]) % n;
                let f = if j <= n / 2 { j } else { n - j };
                let rel = f as f64 / (n / 2) as f64;
                if rel > cutoff {
                    let t = (rel - cutoff) / fraction;
                    factor *= (-36.0 * t.powi(8)).exp();
                }
            }
            *v *= factor;
        }
        self.inverse(&mut work);
        for (dst, src) in field.iter_mut().zip(work.iter()) {
            *dst = src.re;
        }
    }
}

/// View a standard-layout array as a flat mutable slice.
pub(crate) fn flat_mut<T>(arr: &mut ArrayD<T>) -> &mut [T] {
    arr.as_slice_mut()
        .expect("fields are constructed in standard row-major layout")
}

pub(crate) fn flat<T>(arr: &ArrayD<T>) -> &[T] {
    arr.as_slice()
        .expect("fields are constructed in standard row-major layout")
}

/// Copy a real field into a complex one.
pub(crate) fn lift(field: &ArrayD<f64>) -> ArrayD<Complex64> {
    field.mapv(|x| Complex64::new(x, 0.0))
}
